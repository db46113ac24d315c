//! Synthetic registration data: ground-truth homography augmentation,
//! 4-corner perturbation pairs for refinement, and segmentation-corruption
//! operators that stress the estimators the way occlusion and sloppy
//! segmentation would.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::components::connected_components;
use crate::error::{Error, Result};
use crate::homography::{from_four_points, Homography, Pt};
use crate::rink::{RinkSpec, SegClass, SegMap, NUM_CLASSES};
use crate::warp::{warp_raster, Sampling};

/// Splitmix64; used to derive independent child seeds so parallel and serial
/// generation agree.
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Ground-truth homography augmentation: flips, zooms, corner jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HAugmentConfig {
    /// Max per-coordinate corner jitter in frame px.
    pub perturb_px: f64,
    /// Multiplicative zoom interval about the frame centre.
    pub zoom_range: (f64, f64),
    /// Probability of a horizontal flip composed on the frame side.
    ///
    /// Symmetric templates make flipped views indistinguishable from views
    /// of the opposite rink end, so datasets meant for registration
    /// evaluation keep this at 0.
    pub flip_prob: f64,
    pub frame_size: (u32, u32),
}

impl Default for HAugmentConfig {
    fn default() -> Self {
        Self {
            perturb_px: 8.0,
            zoom_range: (0.9, 1.1),
            flip_prob: 0.0,
            frame_size: (1280, 720),
        }
    }
}

impl HAugmentConfig {
    fn validate(&self) -> Result<()> {
        if self.perturb_px < 0.0
            || self.zoom_range.0 <= 0.0
            || self.zoom_range.0 > self.zoom_range.1
            || !(0.0..=1.0).contains(&self.flip_prob)
        {
            return Err(Error::Range("invalid augmentation config".into()));
        }
        Ok(())
    }
}

fn frame_rect(w: u32, h: u32) -> [Pt; 4] {
    [
        Pt::new(0.0, 0.0),
        Pt::new(w as f64, 0.0),
        Pt::new(w as f64, h as f64),
        Pt::new(0.0, h as f64),
    ]
}

/// Apply flip, zoom and corner jitter (in that order, all on the frame side)
/// to a base homography. Deterministic per seed.
pub fn augment_homography(base: &Homography, cfg: &HAugmentConfig, seed: u64) -> Result<Homography> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fw, fh) = cfg.frame_size;
    let mut h = *base;

    if cfg.flip_prob > 0.0 && rng.gen_bool(cfg.flip_prob) {
        let flip = Homography::from_entries([-1.0, 0.0, fw as f64, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])?;
        h = flip.compose(&h)?;
    }

    let z = rng.gen_range(cfg.zoom_range.0..=cfg.zoom_range.1);
    if z != 1.0 {
        let cx = fw as f64 / 2.0;
        let cy = fh as f64 / 2.0;
        let zoom = Homography::from_entries([
            z,
            0.0,
            (1.0 - z) * cx,
            0.0,
            z,
            (1.0 - z) * cy,
            0.0,
            0.0,
            1.0,
        ])?;
        h = zoom.compose(&h)?;
    }

    if cfg.perturb_px > 0.0 {
        let rect = frame_rect(fw, fh);
        let mut last_err = None;
        for _ in 0..16 {
            let p = cfg.perturb_px;
            let displaced = rect.map(|c| {
                Pt::new(c.x + rng.gen_range(-p..=p), c.y + rng.gen_range(-p..=p))
            });
            match from_four_points(&rect, &displaced).and_then(|j| j.compose(&h)) {
                Ok(out) => return Ok(out),
                Err(e) => last_err = Some(e),
            }
        }
        return Err(last_err.unwrap_or_else(|| Error::Degenerate("corner jitter failed".into())));
    }
    Ok(h)
}

/// Rectangle + shift bound for refinement-pair perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerPerturbConfig {
    pub rect: [[f64; 2]; 4],
    pub max_shift: f64,
}

impl CornerPerturbConfig {
    /// Default: the full frame rectangle, shifts up to 5% of frame width.
    pub fn for_frame(w: u32, h: u32) -> Self {
        Self {
            rect: [
                [0.0, 0.0],
                [w as f64, 0.0],
                [w as f64, h as f64],
                [0.0, h as f64],
            ],
            max_shift: 0.05 * w as f64,
        }
    }
}

/// Perturb the rect corners of `h` by uniform shifts; returns the perturbed
/// homography and the exact shifts (the refinement ground truth).
pub fn perturb_corners(
    h: &Homography,
    cfg: &CornerPerturbConfig,
    seed: u64,
) -> Result<(Homography, [[f64; 2]; 4])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rect = [
        Pt::new(cfg.rect[0][0], cfg.rect[0][1]),
        Pt::new(cfg.rect[1][0], cfg.rect[1][1]),
        Pt::new(cfg.rect[2][0], cfg.rect[2][1]),
        Pt::new(cfg.rect[3][0], cfg.rect[3][1]),
    ];
    let s = cfg.max_shift;
    let mut delta = [[0.0f64; 2]; 4];
    for d in delta.iter_mut() {
        if s > 0.0 {
            d[0] = rng.gen_range(-s..=s);
            d[1] = rng.gen_range(-s..=s);
        }
    }
    let displaced = [
        Pt::new(rect[0].x + delta[0][0], rect[0].y + delta[0][1]),
        Pt::new(rect[1].x + delta[1][0], rect[1].y + delta[1][1]),
        Pt::new(rect[2].x + delta[2][0], rect[2].y + delta[2][1]),
        Pt::new(rect[3].x + delta[3][0], rect[3].y + delta[3][1]),
    ];
    let refine = from_four_points(&rect, &displaced)?;
    Ok((refine.compose(h)?, delta))
}

/// Stamp `n_blobs` upright Background ellipses (player-silhouette aspect
/// 1:2.5) at uniform positions over the non-Background region.
pub fn corrupt_occlusion(
    seg: &SegMap,
    n_blobs: u32,
    size_range_px: (f64, f64),
    seed: u64,
) -> SegMap {
    let mut out = seg.clone();
    if n_blobs == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_rink: Vec<usize> = seg
        .data
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, _)| i)
        .collect();
    if in_rink.is_empty() {
        return out;
    }
    for _ in 0..n_blobs {
        let at = in_rink[rng.gen_range(0..in_rink.len())];
        let cx = (at as u32 % seg.width) as f64 + 0.5;
        let cy = (at as u32 / seg.width) as f64 + 0.5;
        let height = rng.gen_range(size_range_px.0..=size_range_px.1);
        let b = height / 2.0; // vertical semi-axis
        let a = b / 2.5;
        stamp_ellipse(&mut out, cx, cy, a, b);
    }
    out
}

fn stamp_ellipse(seg: &mut SegMap, cx: f64, cy: f64, a: f64, b: f64) {
    let x0 = ((cx - a).floor().max(0.0)) as u32;
    let x1 = ((cx + a).ceil().min(seg.width as f64 - 1.0)) as u32;
    let y0 = ((cy - b).floor().max(0.0)) as u32;
    let y1 = ((cy + b).ceil().min(seg.height as f64 - 1.0)) as u32;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = (x as f64 + 0.5 - cx) / a;
            let dy = (y as f64 + 0.5 - cy) / b;
            if dx * dx + dy * dy <= 1.0 {
                seg.set(x, y, SegClass::Background);
            }
        }
    }
}

/// Reassign each pixel with probability `rate` to a class drawn uniformly
/// from all 11 (the original included).
pub fn corrupt_speckle(seg: &SegMap, rate: f64, seed: u64) -> SegMap {
    let mut out = seg.clone();
    if rate <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.data.iter_mut() {
        if rng.gen_bool(rate.min(1.0)) {
            *v = rng.gen_range(0..NUM_CLASSES as u8);
        }
    }
    out
}

/// Displace class boundaries by a smooth random field of magnitude
/// `max_shift_px`, optionally deleting small spot components (probability
/// 0.1 each).
pub fn corrupt_edges(seg: &SegMap, max_shift_px: f64, delete_spots: bool, seed: u64) -> SegMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = if max_shift_px > 0.0 {
        // coarse random vector grid, bilinearly upsampled
        let cell = 32u32;
        let gw = seg.width / cell + 2;
        let gh = seg.height / cell + 2;
        let mut field = Vec::with_capacity((gw * gh) as usize);
        for _ in 0..gw * gh {
            field.push([
                rng.gen_range(-max_shift_px..=max_shift_px),
                rng.gen_range(-max_shift_px..=max_shift_px),
            ]);
        }
        let sample_field = |x: f64, y: f64| -> [f64; 2] {
            let gx = (x / cell as f64).min(gw as f64 - 1.001).max(0.0);
            let gy = (y / cell as f64).min(gh as f64 - 1.001).max(0.0);
            let x0 = gx.floor() as u32;
            let y0 = gy.floor() as u32;
            let tx = gx - x0 as f64;
            let ty = gy - y0 as f64;
            let f = |xx: u32, yy: u32| field[(yy * gw + xx) as usize];
            let a = f(x0, y0);
            let b = f(x0 + 1, y0);
            let c = f(x0, y0 + 1);
            let d = f(x0 + 1, y0 + 1);
            [
                (a[0] * (1.0 - tx) + b[0] * tx) * (1.0 - ty) + (c[0] * (1.0 - tx) + d[0] * tx) * ty,
                (a[1] * (1.0 - tx) + b[1] * tx) * (1.0 - ty) + (c[1] * (1.0 - tx) + d[1] * tx) * ty,
            ]
        };
        let mut warped = seg.clone();
        for y in 0..seg.height {
            for x in 0..seg.width {
                let d = sample_field(x as f64 + 0.5, y as f64 + 0.5);
                let sx = ((x as f64 + 0.5 + d[0]).floor() as i64).clamp(0, seg.width as i64 - 1);
                let sy = ((y as f64 + 0.5 + d[1]).floor() as i64).clamp(0, seg.height as i64 - 1);
                warped.set(x, y, seg.get(sx as u32, sy as u32));
            }
        }
        warped
    } else {
        seg.clone()
    };

    if delete_spots {
        for class in [SegClass::OuterFaceoffSpots, SegClass::InnerFaceoffSpots] {
            for comp in connected_components(&out, class) {
                if comp.area < 2000 && rng.gen_bool(0.1) {
                    let fill = surrounding_class(&out, &comp.pixels);
                    for &(x, y) in &comp.pixels {
                        out.set(x, y, fill);
                    }
                }
            }
        }
    }
    out
}

/// Most frequent class among the 4-neighbours just outside a pixel set.
fn surrounding_class(seg: &SegMap, pixels: &[(u32, u32)]) -> SegClass {
    let inside: std::collections::HashSet<(u32, u32)> = pixels.iter().copied().collect();
    let mut counts = [0u64; NUM_CLASSES];
    for &(x, y) in pixels {
        for (nx, ny) in [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ] {
            if nx < seg.width && ny < seg.height && !inside.contains(&(nx, ny)) {
                counts[seg.get(nx, ny).index() as usize] += 1;
            }
        }
    }
    let best = (0..NUM_CLASSES).max_by_key(|&i| counts[i]).unwrap();
    SegClass::from_index(best as u8).unwrap()
}

/// Named corruption intensity used by the dataset builder and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionProfile {
    Clean,
    Mild,
    Heavy,
}

impl std::str::FromStr for CorruptionProfile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "clean" => Ok(Self::Clean),
            "mild" => Ok(Self::Mild),
            "heavy" => Ok(Self::Heavy),
            other => Err(format!("unknown profile '{other}' (clean|mild|heavy)")),
        }
    }
}

/// One applied corruption op, recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CorruptionOp {
    Occlusion {
        n_blobs: u32,
        size_range_px: (f64, f64),
        seed: u64,
    },
    Speckle {
        rate: f64,
        seed: u64,
    },
    Edges {
        max_shift_px: f64,
        delete_spots: bool,
        seed: u64,
    },
}

impl CorruptionProfile {
    /// Apply this profile to a frame raster; returns the corrupted raster
    /// and the log of applied ops.
    pub fn apply(&self, seg: &SegMap, seed: u64) -> (SegMap, Vec<CorruptionOp>) {
        let (n_blobs, rate, shift, delete) = match self {
            CorruptionProfile::Clean => return (seg.clone(), Vec::new()),
            CorruptionProfile::Mild => (5u32, 0.005, 2.0, false),
            CorruptionProfile::Heavy => (15u32, 0.02, 4.0, true),
        };
        let size_range = (20.0, 60.0);
        let s0 = child_seed(seed, 1);
        let s1 = child_seed(seed, 2);
        let s2 = child_seed(seed, 3);
        let mut out = corrupt_occlusion(seg, n_blobs, size_range, s0);
        out = corrupt_speckle(&out, rate, s1);
        out = corrupt_edges(&out, shift, delete, s2);
        let log = vec![
            CorruptionOp::Occlusion {
                n_blobs,
                size_range_px: size_range,
                seed: s0,
            },
            CorruptionOp::Speckle { rate, seed: s1 },
            CorruptionOp::Edges {
                max_shift_px: shift,
                delete_spots: delete,
                seed: s2,
            },
        ];
        (out, log)
    }
}

/// One synthetic registration sample.
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub spec_id: String,
    pub gt_h: Homography,
    pub frame_seg: SegMap,
    pub corruption_log: Vec<CorruptionOp>,
    pub seed: u64,
}

/// Manifest line describing a stored sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub spec_file: String,
    pub h_gt: Homography,
    pub seg_png: String,
    pub corruption_log: Vec<CorruptionOp>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub n_per_spec: u32,
    pub h_cfg: HAugmentConfig,
    pub profile: CorruptionProfile,
    pub template_size: (u32, u32),
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_per_spec: 10,
            h_cfg: HAugmentConfig::default(),
            profile: CorruptionProfile::Clean,
            template_size: crate::rink::TEMPLATE_SIZE,
            seed: 0,
        }
    }
}

/// Generate one sample in memory. `sample_seed` fully determines the output
/// given the same spec, template and pool.
pub fn generate_sample(
    spec_id: &str,
    template: &SegMap,
    pool: &[Homography],
    cfg: &DatasetConfig,
    sample_seed: u64,
) -> Result<SyntheticSample> {
    let (fw, fh) = cfg.h_cfg.frame_size;
    for attempt in 0..8u64 {
        let seed = child_seed(sample_seed, attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = &pool[rng.gen_range(0..pool.len())];
        let gt_h = augment_homography(base, &cfg.h_cfg, child_seed(seed, 10))?;
        let warped = warp_raster(template, &gt_h, fw, fh, Sampling::Nearest)?;
        let (frame_seg, corruption_log) = cfg.profile.apply(&warped, child_seed(seed, 11));
        if frame_seg.count_non_background() == 0 {
            log::warn!("sample {spec_id}/{sample_seed} all background, resampling");
            continue;
        }
        return Ok(SyntheticSample {
            spec_id: spec_id.to_string(),
            gt_h,
            frame_seg,
            corruption_log,
            seed,
        });
    }
    Err(Error::Degenerate(
        "could not draw a non-degenerate sample in 8 attempts".into(),
    ))
}

/// Generate the full dataset for a list of specs. Returns manifest entries
/// and samples in manifest order; writing to disk is the caller's business
/// (see [`crate::io`]).
pub fn make_dataset(
    specs: &[(String, RinkSpec)],
    pool: &[Homography],
    cfg: &DatasetConfig,
) -> Result<Vec<(ManifestEntry, SyntheticSample)>> {
    use rayon::prelude::*;
    if specs.is_empty() {
        return Err(Error::Range("no specs given".into()));
    }
    if pool.is_empty() {
        return Err(Error::Range("empty base homography pool".into()));
    }
    let (tw, th) = cfg.template_size;
    let templates: Vec<SegMap> = specs
        .par_iter()
        .map(|(_, s)| crate::rink::rasterize(s, tw, th))
        .collect();

    let jobs: Vec<(usize, u64)> = (0..specs.len())
        .flat_map(|si| (0..cfg.n_per_spec as u64).map(move |k| (si, k)))
        .collect();

    jobs.par_iter()
        .enumerate()
        .map(|(i, &(si, k))| {
            let (spec_id, _) = &specs[si];
            let sample_seed = child_seed(cfg.seed, (si as u64) << 20 | k);
            let sample = generate_sample(spec_id, &templates[si], pool, cfg, sample_seed)?;
            let id = format!("s{i:05}");
            let entry = ManifestEntry {
                id: id.clone(),
                spec_file: format!("specs/{spec_id}.json"),
                h_gt: sample.gt_h,
                seg_png: format!("segs/{id}.png"),
                corruption_log: sample.corruption_log.clone(),
                seed: sample.seed,
            };
            Ok((entry, sample))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{generate_pool, CameraModel};
    use crate::rink::{preset_spec, rasterize, RinkPreset};

    fn pool3() -> Vec<Homography> {
        generate_pool(&CameraModel::default(), 1, 3)
    }

    #[test]
    fn augment_neutral_is_identity_on_base() {
        let base = pool3()[0];
        let cfg = HAugmentConfig {
            perturb_px: 0.0,
            zoom_range: (1.0, 1.0),
            flip_prob: 0.0,
            frame_size: (1280, 720),
        };
        let out = augment_homography(&base, &cfg, 5).unwrap();
        assert_eq!(out.entries(), base.entries());
    }

    #[test]
    fn augment_flip_only_mirrors_frame() {
        let base = pool3()[0];
        let cfg = HAugmentConfig {
            perturb_px: 0.0,
            zoom_range: (1.0, 1.0),
            flip_prob: 1.0,
            frame_size: (1280, 720),
        };
        let out = augment_homography(&base, &cfg, 5).unwrap();
        let p = Pt::new(200.0, 85.0);
        let a = base.apply(p).unwrap();
        let b = out.apply(p).unwrap();
        assert!((b.x - (1280.0 - a.x)).abs() < 1e-9);
        assert!((b.y - a.y).abs() < 1e-9);
    }

    #[test]
    fn augment_corner_displacement_bounded() {
        let pool = pool3();
        let cfg = HAugmentConfig {
            perturb_px: 8.0,
            zoom_range: (0.95, 1.05),
            flip_prob: 0.0,
            frame_size: (1280, 720),
        };
        let bound = 8.0 * (1.0 + cfg.zoom_range.1);
        let corners = frame_rect(1280, 720);
        let mut max_d = 0.0f64;
        for seed in 0..1000u64 {
            let base = &pool[(seed % 3) as usize];
            let aug = augment_homography(base, &cfg, seed).unwrap();
            // zoom applied this draw
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: f64 = rng.gen_range(cfg.zoom_range.0..=cfg.zoom_range.1);
            for c in corners {
                let x = base.invert().unwrap().apply(c).unwrap();
                let after = aug.apply(x).unwrap();
                let zc = Pt::new(
                    z * c.x + (1.0 - z) * 640.0,
                    z * c.y + (1.0 - z) * 360.0,
                );
                max_d = max_d.max((after - zc).norm());
            }
        }
        assert!(max_d <= bound, "max displacement {max_d} > {bound}");
    }

    #[test]
    fn perturb_corners_zero_shift_is_identity() {
        let h = pool3()[0];
        let cfg = CornerPerturbConfig {
            rect: [[0.0, 0.0], [1280.0, 0.0], [1280.0, 720.0], [0.0, 720.0]],
            max_shift: 0.0,
        };
        let (hp, delta) = perturb_corners(&h, &cfg, 3).unwrap();
        assert_eq!(delta, [[0.0; 2]; 4]);
        for (a, b) in hp.entries().iter().zip(h.entries().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn perturb_corners_recoverable_via_four_point_form() {
        let h = pool3()[1];
        let cfg = CornerPerturbConfig::for_frame(1280, 720);
        let (hp, delta) = perturb_corners(&h, &cfg, 17).unwrap();
        // recover the refinement homography and read its corner shifts
        let refine = hp.compose(&h.invert().unwrap()).unwrap();
        let rect = frame_rect(1280, 720);
        let moved = refine.four_point_form(&rect).unwrap();
        for (i, m) in moved.iter().enumerate() {
            let expect = Pt::new(rect[i].x + delta[i][0], rect[i].y + delta[i][1]);
            assert!((m - expect).norm() < 1e-6, "corner {i}");
        }
    }

    #[test]
    fn single_corner_shift_maps_exactly() {
        let rect = frame_rect(100, 100);
        let mut displaced = rect;
        displaced[2] = Pt::new(rect[2].x + 7.0, rect[2].y);
        let h = from_four_points(&rect, &displaced).unwrap();
        for (r, d) in rect.iter().zip(displaced.iter()) {
            assert!((h.apply(*r).unwrap() - d).norm() < 1e-9);
        }
    }

    #[test]
    fn occlusion_zero_blobs_is_identity_and_area_bounded() {
        let seg = rasterize(&preset_spec(RinkPreset::Nhl), 400, 170);
        assert_eq!(corrupt_occlusion(&seg, 0, (20.0, 50.0), 1).data, seg.data);

        let one = corrupt_occlusion(&seg, 1, (50.0, 50.0), 1);
        let changed = seg
            .data
            .iter()
            .zip(one.data.iter())
            .filter(|(a, b)| a != b)
            .count();
        // 20x50 blob: semi-axes 10 and 25
        let bound = (std::f64::consts::PI * 10.0 * 25.0).ceil() as usize;
        assert!(changed <= bound, "changed {changed} > {bound}");
    }

    #[test]
    fn occlusion_matches_ellipse_containment_oracle() {
        let seg = rasterize(&preset_spec(RinkPreset::Nhl), 400, 170);
        let seed = 9;
        let out = corrupt_occlusion(&seg, 10, (20.0, 60.0), seed);
        // replay the sampling to learn the ellipse parameters
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_rink: Vec<usize> = seg
            .data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
            .collect();
        let mut ellipses = Vec::new();
        for _ in 0..10 {
            let at = in_rink[rng.gen_range(0..in_rink.len())];
            let cx = (at as u32 % 400) as f64 + 0.5;
            let cy = (at as u32 / 400) as f64 + 0.5;
            let height: f64 = rng.gen_range(20.0..=60.0);
            ellipses.push((cx, cy, height / 5.0, height / 2.0));
        }
        // independent per-pixel scan
        for y in 0..170u32 {
            for x in 0..400u32 {
                let covered = ellipses.iter().any(|&(cx, cy, a, b)| {
                    let dx = (x as f64 + 0.5 - cx) / a;
                    let dy = (y as f64 + 0.5 - cy) / b;
                    dx * dx + dy * dy <= 1.0
                });
                let expect = if covered {
                    SegClass::Background
                } else {
                    seg.get(x, y)
                };
                assert_eq!(out.get(x, y), expect, "at ({x},{y})");
            }
        }
    }

    #[test]
    fn speckle_identity_and_full_rate_expectation() {
        let seg = rasterize(&preset_spec(RinkPreset::Nhl), 400, 170);
        assert_eq!(corrupt_speckle(&seg, 0.0, 4).data, seg.data);

        let noisy = corrupt_speckle(&seg, 1.0, 4);
        let same = seg
            .data
            .iter()
            .zip(noisy.data.iter())
            .filter(|(a, b)| a == b)
            .count() as f64;
        let frac = same / (400.0 * 170.0);
        assert!((frac - 1.0 / 11.0).abs() < 0.01, "retained {frac}");
    }

    #[test]
    fn edges_identity_and_count_preservation() {
        let seg = rasterize(&preset_spec(RinkPreset::Nhl), 400, 170);
        assert_eq!(corrupt_edges(&seg, 0.0, false, 2).data, seg.data);

        let shifted = corrupt_edges(&seg, 3.0, false, 2);
        let total: u64 = shifted.histogram().iter().sum();
        assert_eq!(total, 400 * 170);
    }

    #[test]
    fn dataset_determinism_and_counts() {
        let specs = vec![
            ("nhl".to_string(), preset_spec(RinkPreset::Nhl)),
            ("iihf".to_string(), preset_spec(RinkPreset::Iihf)),
        ];
        let pool = pool3();
        let cfg = DatasetConfig {
            n_per_spec: 3,
            profile: CorruptionProfile::Mild,
            seed: 42,
            ..Default::default()
        };
        let a = make_dataset(&specs, &pool, &cfg).unwrap();
        let b = make_dataset(&specs, &pool, &cfg).unwrap();
        assert_eq!(a.len(), 6);
        for ((ea, sa), (eb, sb)) in a.iter().zip(b.iter()) {
            assert_eq!(ea, eb);
            assert_eq!(sa.frame_seg.data, sb.frame_seg.data);
            assert!(sa.frame_seg.count_non_background() >= 1);
            assert!(!ea.corruption_log.is_empty());
        }
        // distinct per-sample seeds
        let mut seeds: Vec<u64> = a.iter().map(|(e, _)| e.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 6);
    }

    #[test]
    fn neutral_augmentation_sample_equals_plain_warp() {
        let spec = preset_spec(RinkPreset::Nhl);
        let template = rasterize(&spec, 400, 170);
        let pool = vec![pool3()[0]];
        let cfg = DatasetConfig {
            n_per_spec: 1,
            h_cfg: HAugmentConfig {
                perturb_px: 0.0,
                zoom_range: (1.0, 1.0),
                flip_prob: 0.0,
                frame_size: (1280, 720),
            },
            profile: CorruptionProfile::Clean,
            ..Default::default()
        };
        let sample = generate_sample("nhl", &template, &pool, &cfg, 0).unwrap();
        assert_eq!(sample.gt_h.entries(), pool[0].entries());
        let direct = warp_raster(&template, &pool[0], 1280, 720, Sampling::Nearest).unwrap();
        assert_eq!(sample.frame_seg.data, direct.data);
    }
}
