//! Broadcast-camera model over template space.
//!
//! A centre-ice elevated camera looks across the rink; its pose induces a
//! homography from the template plane (z = 0, pixel units) to the frame.
//! The frozen pool in `data/camera_pool.json` is sampled from this model and
//! stands in for the ground-truth homography distribution of real broadcast
//! footage.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clip::{intersection_area, is_convex, polygon_area};
use crate::error::{Error, Result};
use crate::homography::{Homography, Pt};

/// Camera pose over the template plane. Angles in degrees, positions in
/// template pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    /// Left/right rotation of the view axis.
    pub pan_deg: f64,
    /// Downward angle of the view axis from horizontal.
    pub tilt_deg: f64,
    /// Fraction of the template length visible across the frame at the
    /// look-at distance.
    pub width_frac: f64,
    /// Camera height above the ice, template px units.
    pub height_px: f64,
    /// Lateral offset of the camera position along the boards.
    pub x_offset_px: f64,
}

/// Sampling ranges for the broadcast camera model.
#[derive(Debug, Clone, Copy)]
pub struct CameraModel {
    pub pan_deg: (f64, f64),
    pub tilt_deg: (f64, f64),
    pub width_frac: (f64, f64),
    pub height_px: (f64, f64),
    pub x_offset_px: (f64, f64),
    pub template_size: (u32, u32),
    pub frame_size: (u32, u32),
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            pan_deg: (-35.0, 35.0),
            tilt_deg: (8.0, 20.0),
            width_frac: (0.3, 0.9),
            height_px: (50.0, 100.0),
            x_offset_px: (-40.0, 40.0),
            template_size: (400, 170),
            frame_size: (1280, 720),
        }
    }
}

impl CameraModel {
    /// Template -> frame homography for a pose. The camera sits past the
    /// high-y boards looking across the ice, so larger template y appears
    /// toward the bottom of the frame.
    pub fn homography(&self, pose: &CameraPose) -> Result<Homography> {
        let (tw, th) = self.template_size;
        let (fw, fh) = self.frame_size;
        let cx = tw as f64 / 2.0;
        let cy = th as f64 / 2.0;

        let tilt = pose.tilt_deg.to_radians();
        let pan = pose.pan_deg.to_radians();
        let h = pose.height_px;
        let dist_ground = h / tilt.tan();
        let cam = Vector3::new(cx + pose.x_offset_px, cy + dist_ground, h);

        // forward: toward the point on the ice straight ahead, then panned
        // about the vertical axis
        let f0 = (Vector3::new(cam.x, cy, 0.0) - cam).normalize();
        let (s, c) = (pan.sin(), pan.cos());
        let fwd = Vector3::new(c * f0.x - s * f0.y, s * f0.x + c * f0.y, f0.z).normalize();
        let up = Vector3::new(0.0, 0.0, 1.0);
        let right = up.cross(&fwd).normalize();
        let down = right.cross(&fwd);

        let depth = (Vector3::new(cx, cy, 0.0) - cam).norm();
        let focal = fw as f64 * depth / (pose.width_frac * tw as f64);
        let k = Matrix3::new(
            focal,
            0.0,
            fw as f64 / 2.0,
            0.0,
            focal,
            fh as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        );
        // rows: world -> camera
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
        let t = -r * cam;
        let plane = Matrix3::from_columns(&[r.column(0).into(), r.column(1).into(), t]);
        Homography::from_matrix(k * plane)
    }

    pub fn sample_pose<R: Rng>(&self, rng: &mut R) -> CameraPose {
        let u = |rng: &mut R, (a, b): (f64, f64)| rng.gen_range(a..=b);
        CameraPose {
            pan_deg: u(rng, self.pan_deg),
            tilt_deg: u(rng, self.tilt_deg),
            width_frac: u(rng, self.width_frac),
            height_px: u(rng, self.height_px),
            x_offset_px: u(rng, self.x_offset_px),
        }
    }

    /// Footprint of the frame rectangle on the template plane, or None when
    /// any corner sits on the wrong side of the horizon or the footprint is
    /// not convex.
    pub fn footprint(&self, h: &Homography) -> Option<Vec<[f64; 2]>> {
        let (fw, fh) = self.frame_size;
        frame_footprint(h, fw, fh)
    }

    /// True when `h` is a plausible broadcast view: convex footprint covering
    /// at least `min_cover` of the template area.
    pub fn plausible(&self, h: &Homography, min_cover: f64) -> bool {
        let Some(fp) = self.footprint(h) else {
            return false;
        };
        let (tw, th) = self.template_size;
        let template_rect = [
            [0.0, 0.0],
            [tw as f64, 0.0],
            [tw as f64, th as f64],
            [0.0, th as f64],
        ];
        let covered = intersection_area(&fp, &template_rect);
        covered >= min_cover * (tw as f64 * th as f64)
    }
}

/// Map the frame rectangle corners into template space through `h^-1`.
/// Returns None when a corner maps across the horizon or the quad is not
/// convex.
pub fn frame_footprint(h: &Homography, frame_w: u32, frame_h: u32) -> Option<Vec<[f64; 2]>> {
    let inv = h.invert().ok()?;
    let corners = [
        Pt::new(0.0, 0.0),
        Pt::new(frame_w as f64, 0.0),
        Pt::new(frame_w as f64, frame_h as f64),
        Pt::new(0.0, frame_h as f64),
    ];
    let mut sign = 0.0;
    let mut fp = Vec::with_capacity(4);
    for c in corners {
        let w = inv.apply_w(c);
        if w.abs() <= 1e-12 {
            return None;
        }
        if sign == 0.0 {
            sign = w.signum();
        } else if w.signum() != sign {
            return None;
        }
        let p = inv.apply(c).ok()?;
        fp.push([p.x, p.y]);
    }
    if !is_convex(&fp) || polygon_area(&fp) < 1.0 {
        return None;
    }
    Some(fp)
}

/// Number of homographies in the frozen pool.
pub const POOL_SIZE: usize = 500;
/// Seed used to freeze the shipped pool.
pub const POOL_SEED: u64 = 0x52494e4b; // "RINK"

/// Deterministically sample a pool of plausible broadcast homographies.
pub fn generate_pool(model: &CameraModel, seed: u64, n: usize) -> Vec<Homography> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = Vec::with_capacity(n);
    while pool.len() < n {
        let pose = model.sample_pose(&mut rng);
        if let Ok(h) = model.homography(&pose) {
            if model.plausible(&h, 0.08) {
                pool.push(h);
            }
        }
    }
    pool
}

/// The frozen default pool shipped with the crate.
pub fn default_pool() -> Result<Vec<Homography>> {
    let raw = include_str!("../data/camera_pool.json");
    let pool: Vec<Homography> = serde_json::from_str(raw)?;
    if pool.len() != POOL_SIZE {
        return Err(Error::Degenerate(format!(
            "camera pool has {} entries, expected {POOL_SIZE}",
            pool.len()
        )));
    }
    Ok(pool)
}
