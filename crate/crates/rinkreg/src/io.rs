//! File formats: class rasters as 8-bit PNG with a pixel-scale sidecar,
//! rink specs as JSON, manifests and predictions as JSON lines.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Prediction;
use crate::rink::{RinkSpec, SegMap, NUM_CLASSES};
use crate::synth::ManifestEntry;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegSidecar {
    pixel_scale: f64,
}

/// Path of the JSON sidecar belonging to a raster file.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

/// Write a class raster as an 8-bit single-channel PNG (pixel value =
/// class index) plus its pixel-scale sidecar.
pub fn save_seg_png(seg: &SegMap, path: &Path) -> Result<()> {
    let img = image::GrayImage::from_raw(seg.width, seg.height, seg.data.clone())
        .ok_or_else(|| Error::Degenerate("raster buffer size mismatch".into()))?;
    let mut buf = Vec::new();
    img.write_to(
        &mut std::io::Cursor::new(&mut buf),
        image::ImageFormat::Png,
    )?;
    atomic_write(path, &buf)?;
    let sidecar = serde_json::to_string_pretty(&SegSidecar {
        pixel_scale: seg.pixel_scale,
    })?;
    atomic_write(&sidecar_path(path), sidecar.as_bytes())
}

/// Read a class raster and its sidecar back; rejects out-of-range class
/// values.
pub fn load_seg_png(path: &Path) -> Result<SegMap> {
    let img = image::open(path)?.into_luma8();
    let sidecar: SegSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let data = img.into_raw();
    if let Some(bad) = data.iter().find(|&&v| v as usize >= NUM_CLASSES) {
        return Err(Error::Degenerate(format!(
            "class index {bad} out of range in {}",
            path.display()
        )));
    }
    let (w, h) = {
        let dims = image::image_dimensions(path)?;
        (dims.0, dims.1)
    };
    Ok(SegMap {
        width: w,
        height: h,
        data,
        pixel_scale: sidecar.pixel_scale,
    })
}

/// Serialize a spec as pretty JSON.
pub fn save_spec(spec: &RinkSpec, path: &Path) -> Result<()> {
    spec.validate()?;
    atomic_write(path, serde_json::to_string_pretty(spec)?.as_bytes())
}

/// Load and validate a spec.
pub fn load_spec(path: &Path) -> Result<RinkSpec> {
    let spec: RinkSpec = serde_json::from_str(&fs::read_to_string(path)?)?;
    spec.validate()?;
    Ok(spec)
}

/// Write one JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    atomic_write(path, &buf)
}

/// Read a JSON-lines file, skipping blank lines.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    write_jsonl(path, entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    read_jsonl(path)
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    write_jsonl(path, preds)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    read_jsonl(path)
}

/// Write through a temp file and rename, so readers never see partial
/// output.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
