//! Raster warping by inverse grid sampling.

use crate::error::Result;
use crate::homography::Homography;
use crate::rink::{SegClass, SegMap, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Nearest-neighbour class lookup; the default for class rasters.
    Nearest,
    /// Interpolate per-class indicators bilinearly, then take the argmax.
    BilinearOnehot,
}

/// Warp `src` through `h` (src -> output space): output pixel (x, y) samples
/// `src` at `h^-1 (x, y)`. Out-of-bounds samples are Background.
pub fn warp_raster(
    src: &SegMap,
    h: &Homography,
    out_w: u32,
    out_h: u32,
    sampling: Sampling,
) -> Result<SegMap> {
    let inv = h.invert()?;
    let mut out = SegMap::new(out_w, out_h, src.pixel_scale);
    let m = inv.matrix();
    let (sw, sh) = (src.width as i64, src.height as i64);
    for y in 0..out_h {
        for x in 0..out_w {
            let fx = x as f64 + 0.5;
            let fy = y as f64 + 0.5;
            let w = m[(2, 0)] * fx + m[(2, 1)] * fy + m[(2, 2)];
            if w.abs() <= 1e-12 {
                continue; // Background
            }
            let sx = (m[(0, 0)] * fx + m[(0, 1)] * fy + m[(0, 2)]) / w;
            let sy = (m[(1, 0)] * fx + m[(1, 1)] * fy + m[(1, 2)]) / w;
            let cls = match sampling {
                Sampling::Nearest => {
                    let ix = sx.floor() as i64;
                    let iy = sy.floor() as i64;
                    if ix < 0 || iy < 0 || ix >= sw || iy >= sh {
                        SegClass::Background
                    } else {
                        src.get(ix as u32, iy as u32)
                    }
                }
                Sampling::BilinearOnehot => sample_onehot_argmax(src, sx, sy),
            };
            out.set(x, y, cls);
        }
    }
    Ok(out)
}

/// Bilinear interpolation of the per-class one-hot field at (sx, sy),
/// returning the class with the largest interpolated weight. Samples past
/// the raster edge contribute Background.
fn sample_onehot_argmax(src: &SegMap, sx: f64, sy: f64) -> SegClass {
    let gx = sx - 0.5;
    let gy = sy - 0.5;
    let x0 = gx.floor();
    let y0 = gy.floor();
    let tx = gx - x0;
    let ty = gy - y0;
    let mut weights = [0.0f64; NUM_CLASSES];
    for (dx, dy, w) in [
        (0i64, 0i64, (1.0 - tx) * (1.0 - ty)),
        (1, 0, tx * (1.0 - ty)),
        (0, 1, (1.0 - tx) * ty),
        (1, 1, tx * ty),
    ] {
        let ix = x0 as i64 + dx;
        let iy = y0 as i64 + dy;
        let cls = if ix < 0 || iy < 0 || ix >= src.width as i64 || iy >= src.height as i64 {
            SegClass::Background
        } else {
            src.get(ix as u32, iy as u32)
        };
        weights[cls.index() as usize] += w;
    }
    let best = (0..NUM_CLASSES)
        .max_by(|&a, &b| weights[a].total_cmp(&weights[b]))
        .unwrap();
    SegClass::from_index(best as u8).unwrap()
}

/// Dense f32 channel image, row-major.
#[derive(Debug, Clone)]
pub struct ChannelImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl ChannelImage {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
        }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f32 {
        self.data[(y * self.width + x) as usize]
    }

    /// Bilinear sample at continuous pixel coordinates; out of bounds clamps
    /// to `fill`.
    #[inline]
    pub fn sample(&self, sx: f64, sy: f64, fill: f32) -> f32 {
        let gx = sx - 0.5;
        let gy = sy - 0.5;
        let x0 = gx.floor();
        let y0 = gy.floor();
        let tx = (gx - x0) as f32;
        let ty = (gy - y0) as f32;
        let fetch = |ix: i64, iy: i64| -> f32 {
            if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
                fill
            } else {
                self.data[(iy as u32 * self.width + ix as u32) as usize]
            }
        };
        let x0 = x0 as i64;
        let y0 = y0 as i64;
        let a = fetch(x0, y0) * (1.0 - tx) + fetch(x0 + 1, y0) * tx;
        let b = fetch(x0, y0 + 1) * (1.0 - tx) + fetch(x0 + 1, y0 + 1) * tx;
        a * (1.0 - ty) + b * ty
    }
}

/// One-hot indicator image for `class`.
pub fn onehot(seg: &SegMap, class: SegClass) -> ChannelImage {
    let mut img = ChannelImage::zeros(seg.width, seg.height);
    let idx = class.index();
    for (o, &v) in img.data.iter_mut().zip(seg.data.iter()) {
        if v == idx {
            *o = 1.0;
        }
    }
    img
}

/// Separable box blur with an odd kernel of `size` pixels (clamped borders).
pub fn box_blur(img: &ChannelImage, size: u32) -> ChannelImage {
    assert!(size % 2 == 1, "box blur kernel must be odd");
    let r = (size / 2) as i64;
    let w = img.width as i64;
    let h = img.height as i64;
    let norm = 1.0 / size as f32;

    let mut tmp = ChannelImage::zeros(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for k in -r..=r {
                let xi = (x + k).clamp(0, w - 1);
                acc += img.data[(y * w + xi) as usize];
            }
            tmp.data[(y * w + x) as usize] = acc * norm;
        }
    }
    let mut out = ChannelImage::zeros(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for k in -r..=r {
                let yi = (y + k).clamp(0, h - 1);
                acc += tmp.data[(yi * w + x) as usize];
            }
            out.data[(y * w + x) as usize] = acc * norm;
        }
    }
    out
}

/// Nearest-neighbour downsample of a class raster.
pub fn downsample_nearest(seg: &SegMap, out_w: u32, out_h: u32) -> SegMap {
    let mut out = SegMap::new(out_w, out_h, seg.pixel_scale);
    for y in 0..out_h {
        let sy = ((y as f64 + 0.5) * seg.height as f64 / out_h as f64) as u32;
        let sy = sy.min(seg.height - 1);
        for x in 0..out_w {
            let sx = ((x as f64 + 0.5) * seg.width as f64 / out_w as f64) as u32;
            let sx = sx.min(seg.width - 1);
            out.set(x, y, seg.get(sx, sy));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rink::{preset_spec, rasterize, RinkPreset};

    #[test]
    fn identity_warp_is_noop() {
        let map = rasterize(&preset_spec(RinkPreset::Nhl), 200, 85);
        let out = warp_raster(&map, &Homography::identity(), 200, 85, Sampling::Nearest).unwrap();
        assert_eq!(out.data, map.data);
    }

    #[test]
    fn translation_shifts_pixels() {
        let map = rasterize(&preset_spec(RinkPreset::Nhl), 200, 85);
        let t =
            Homography::from_entries([1.0, 0.0, 10.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let out = warp_raster(&map, &t, 220, 85, Sampling::Nearest).unwrap();
        for y in 0..85 {
            for x in 0..200 {
                assert_eq!(out.get(x + 10, y), map.get(x, y));
            }
        }
    }

    #[test]
    fn warp_round_trip_recovers_most_pixels() {
        let map = rasterize(&preset_spec(RinkPreset::Nhl), 400, 170);
        let h = Homography::from_entries([
            1.8, 0.12, 30.0, -0.08, 1.7, 12.0, 1e-4, 2e-4, 1.0,
        ])
        .unwrap();
        let warped = warp_raster(&map, &h, 1280, 720, Sampling::Nearest).unwrap();
        let back = warp_raster(&warped, &h.invert().unwrap(), 400, 170, Sampling::Nearest).unwrap();
        let mut total = 0u64;
        let mut kept = 0u64;
        for y in 0..170 {
            for x in 0..400 {
                if map.get(x, y) != SegClass::Background {
                    total += 1;
                    if back.get(x, y) == map.get(x, y) {
                        kept += 1;
                    }
                }
            }
        }
        let frac = kept as f64 / total as f64;
        assert!(frac >= 0.97, "recovered {frac}");
    }

    #[test]
    fn nearest_never_invents_classes() {
        let map = rasterize(&preset_spec(RinkPreset::Iihf), 400, 170);
        let src_hist = map.histogram();
        let h = Homography::from_entries([
            0.9, 0.2, 5.0, -0.1, 1.1, 3.0, 5e-4, -2e-4, 1.0,
        ])
        .unwrap();
        let out = warp_raster(&map, &h, 300, 200, Sampling::Nearest).unwrap();
        for (i, &n) in out.histogram().iter().enumerate() {
            if n > 0 && i != 0 {
                assert!(src_hist[i] > 0, "class {i} invented");
            }
        }
    }

    #[test]
    fn bilinear_onehot_matches_nearest_away_from_edges() {
        let map = rasterize(&preset_spec(RinkPreset::Nhl), 400, 170);
        let t = Homography::from_entries([1.0, 0.0, 7.0, 0.0, 1.0, 3.0, 0.0, 0.0, 1.0]).unwrap();
        let a = warp_raster(&map, &t, 400, 170, Sampling::Nearest).unwrap();
        let b = warp_raster(&map, &t, 400, 170, Sampling::BilinearOnehot).unwrap();
        // integer translation: both samplers hit pixel centres exactly
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn box_blur_preserves_mass_in_interior() {
        let mut img = ChannelImage::zeros(21, 21);
        img.data[(10 * 21 + 10) as usize] = 1.0;
        let blurred = box_blur(&img, 5);
        let total: f32 = blurred.data.iter().sum();
        assert!((total - 1.0).abs() < 1e-5);
        assert!((blurred.at(10, 10) - 1.0 / 25.0).abs() < 1e-6);
    }
}
