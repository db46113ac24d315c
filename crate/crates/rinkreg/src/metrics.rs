//! Evaluation: per-class IOU on rasters and IOU_part on homographies.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clip::{clip_halfplane_coeffs, clip_polygon, polygon_area};
use crate::error::{Error, Result};
use crate::homography::{Homography, Pt};
use crate::rink::{metres_to_px, RinkSpec, SegClass, SegMap};
use crate::synth::ManifestEntry;

/// Per-class intersection-over-union. Classes absent from both rasters
/// carry `None` and are excluded from the mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassIou {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

/// IOU per class between two rasters of identical dimensions.
pub fn class_iou(a: &SegMap, b: &SegMap) -> Result<ClassIou> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Dimension(a.width, a.height, b.width, b.height));
    }
    let n = SegClass::all().len();
    let mut inter = vec![0u64; n];
    let mut union = vec![0u64; n];
    for (&pa, &pb) in a.data.iter().zip(b.data.iter()) {
        if pa == pb {
            inter[pa as usize] += 1;
            union[pa as usize] += 1;
        } else {
            union[pa as usize] += 1;
            union[pb as usize] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = (0..n)
        .map(|c| (union[c] > 0).then(|| inter[c] as f64 / union[c] as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().filter_map(|v| *v).collect();
    let mean = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(ClassIou { per_class, mean })
}

/// Which region the frame footprints are clipped against before comparing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipMode {
    /// The rink boundary (rounded rectangle). Default.
    Rink,
    /// The full template raster rectangle.
    Template,
}

impl std::str::FromStr for ClipMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rink" => Ok(ClipMode::Rink),
            "template" => Ok(ClipMode::Template),
            other => Err(format!("unknown clip mode `{other}` (rink|template)")),
        }
    }
}

/// Segments per corner arc when polygonizing the rink boundary for clipping.
pub const BOUNDARY_ARC_SEGMENTS: usize = 32;

/// The clip region in template-pixel coordinates.
fn clip_region(spec: &RinkSpec, template_size: (u32, u32), mode: ClipMode) -> Vec<[f64; 2]> {
    let (tw, th) = template_size;
    match mode {
        ClipMode::Template => vec![
            [0.0, 0.0],
            [tw as f64, 0.0],
            [tw as f64, th as f64],
            [0.0, th as f64],
        ],
        ClipMode::Rink => spec
            .boundary_polygon(BOUNDARY_ARC_SEGMENTS)
            .iter()
            .map(|p| metres_to_px(spec, tw, th, p[0], p[1]))
            .collect(),
    }
}

/// Portion of `region` (template space) visible through `h`: the region is
/// clipped to the camera-facing half-plane, mapped to frame space, clipped
/// to the frame rectangle, and mapped back. Handles views whose frame
/// corners cross the horizon; returns an empty polygon when nothing of the
/// region is in view.
fn clipped_footprint(
    h: &Homography,
    frame_size: (u32, u32),
    region: &[[f64; 2]],
) -> Result<Vec<[f64; 2]>> {
    let inv = h.invert()?;
    let (fw, fh) = (frame_size.0 as f64, frame_size.1 as f64);

    // the template point under the frame centre fixes the in-front w sign
    let centre = Pt::new(fw / 2.0, fh / 2.0);
    let Ok(p0) = inv.apply(centre) else {
        return Ok(Vec::new());
    };
    let e = h.entries();
    let w_of = |x: f64, y: f64| e[6] * x + e[7] * y + e[8];
    let s = w_of(p0.x, p0.y).signum();

    // clip the region to s*w(p) >= delta so every kept vertex maps finitely
    let wmax = region
        .iter()
        .map(|p| w_of(p[0], p[1]).abs())
        .fold(0.0, f64::max);
    let delta = 1e-8 * wmax.max(1e-9);
    let front = clip_halfplane_coeffs(region, s * e[6], s * e[7], s * e[8] - delta);
    if front.len() < 3 {
        return Ok(Vec::new());
    }

    let img: Vec<[f64; 2]> = front
        .iter()
        .map(|p| {
            let q = h.apply(Pt::new(p[0], p[1]))?;
            Ok([q.x, q.y])
        })
        .collect::<Result<_>>()?;
    let frame_rect = [[0.0, 0.0], [fw, 0.0], [fw, fh], [0.0, fh]];
    let visible = clip_polygon(&img, &frame_rect);
    if visible.len() < 3 {
        return Ok(Vec::new());
    }

    visible
        .iter()
        .map(|p| {
            let q = inv.apply(Pt::new(p[0], p[1]))?;
            Ok([q.x, q.y])
        })
        .collect()
}

/// IOU_part with explicit template size and clip mode.
pub fn iou_part_with(
    h_pred: &Homography,
    h_gt: &Homography,
    frame_size: (u32, u32),
    spec: &RinkSpec,
    template_size: (u32, u32),
    mode: ClipMode,
) -> Result<f64> {
    if h_pred.entries() == h_gt.entries() {
        // identical views score 1 by definition of the metric
        h_pred.invert()?;
        return Ok(1.0);
    }
    let region = clip_region(spec, template_size, mode);
    let a = clipped_footprint(h_pred, frame_size, &region)?;
    let b = clipped_footprint(h_gt, frame_size, &region)?;
    let area_a = polygon_area(&a);
    let area_b = polygon_area(&b);
    // both footprints are convex; averaging the two clip orders keeps the
    // result exactly symmetric in its arguments
    let inter = if a.len() >= 3 && b.len() >= 3 {
        0.5 * (polygon_area(&clip_polygon(&a, &b)) + polygon_area(&clip_polygon(&b, &a)))
    } else {
        0.0
    };
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

/// IOU over the rink portion visible in the frame: both footprints are
/// mapped to template space and clipped to the rink boundary before their
/// areas are compared.
pub fn iou_part(
    h_pred: &Homography,
    h_gt: &Homography,
    frame_size: (u32, u32),
    spec: &RinkSpec,
) -> Result<f64> {
    iou_part_with(
        h_pred,
        h_gt,
        frame_size,
        spec,
        crate::rink::TEMPLATE_SIZE,
        ClipMode::Rink,
    )
}

/// One estimated homography keyed to a manifest entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub h: Homography,
    pub status: String,
}

/// Settings that shape an evaluation run; hashed into the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub frame_size: (u32, u32),
    pub template_size: (u32, u32),
    pub clip: ClipMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            frame_size: (1280, 720),
            template_size: crate::rink::TEMPLATE_SIZE,
            clip: ClipMode::Rink,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleResult {
    pub id: String,
    pub iou_part: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    pub frac_ge_090: f64,
    pub frac_ge_095: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: Vec<SampleResult>,
    pub aggregate: Aggregate,
    pub config_hash: String,
}

/// Median of a slice (average of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn aggregate(per_sample: &[SampleResult]) -> Aggregate {
    let vals: Vec<f64> = per_sample.iter().map(|s| s.iou_part).collect();
    let n = vals.len().max(1) as f64;
    Aggregate {
        mean: vals.iter().sum::<f64>() / n,
        median: median(&vals),
        frac_ge_090: vals.iter().filter(|v| **v >= 0.9).count() as f64 / n,
        frac_ge_095: vals.iter().filter(|v| **v >= 0.95).count() as f64 / n,
    }
}

/// Score every manifest entry against its prediction.
///
/// `specs` maps each manifest `spec_file` to its loaded [`RinkSpec`].
pub fn evaluate(
    manifest: &[ManifestEntry],
    predictions: &[Prediction],
    specs: &HashMap<String, RinkSpec>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &Prediction> =
        predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let missing: Vec<String> = manifest
        .iter()
        .filter(|m| !by_id.contains_key(m.id.as_str()))
        .map(|m| m.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPrediction(missing));
    }

    let mut per_sample = Vec::with_capacity(manifest.len());
    for m in manifest {
        let spec = specs
            .get(&m.spec_file)
            .ok_or_else(|| Error::Range(format!("no spec loaded for `{}`", m.spec_file)))?;
        let pred = by_id[m.id.as_str()];
        let iou = iou_part_with(
            &pred.h,
            &m.h_gt,
            cfg.frame_size,
            spec,
            cfg.template_size,
            cfg.clip,
        )?;
        per_sample.push(SampleResult {
            id: m.id.clone(),
            iou_part: iou,
        });
    }

    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(cfg)?);
    let config_hash = format!("{:x}", hasher.finalize());

    let agg = aggregate(&per_sample);
    Ok(EvalReport {
        per_sample,
        aggregate: agg,
        config_hash,
    })
}

impl EvalReport {
    /// Plain-text table with one row per sample plus an aggregate footer.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>10}\n", "id", "IOU_part"));
        out.push_str(&format!("{:-<12} {:->10}\n", "", ""));
        for s in &self.per_sample {
            out.push_str(&format!("{:<12} {:>10.4}\n", s.id, s.iou_part));
        }
        out.push_str(&format!("{:-<12} {:->10}\n", "", ""));
        out.push_str(&format!("{:<12} {:>10.4}\n", "mean", self.aggregate.mean));
        out.push_str(&format!(
            "{:<12} {:>10.4}\n",
            "median", self.aggregate.median
        ));
        out.push_str(&format!(
            "{:<12} {:>10.4}\n",
            ">=0.90", self.aggregate.frac_ge_090
        ));
        out.push_str(&format!(
            "{:<12} {:>10.4}\n",
            ">=0.95", self.aggregate.frac_ge_095
        ));
        out.push_str(&format!("config {}\n", self.config_hash));
        out
    }
}
