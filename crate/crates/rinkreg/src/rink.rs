//! Parametric rink specifications and overhead segmentation templates.
//!
//! A [`RinkSpec`] describes a rink in metres in a frame centred on the ice:
//! `x` runs along the length, `y` along the width (positive toward the
//! bottom of the rasterized template). [`rasterize`] turns a spec into a
//! class-labelled [`SegMap`]; [`template_keypoints`] names the landmarks the
//! classical estimator matches against.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 11 segmentation classes, indices fixed across all file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum SegClass {
    Background = 0,
    BehindGoal = 1,
    BlueLines = 2,
    CenterFaceoffCircle = 3,
    CenterLine = 4,
    OuterFaceoffCircles = 5,
    OuterFaceoffSpots = 6,
    GoalCreases = 7,
    NeutralZone = 8,
    InnerFaceoffSpots = 9,
    DefenseZones = 10,
}

pub const NUM_CLASSES: usize = 11;

impl SegClass {
    pub fn from_index(i: u8) -> Option<SegClass> {
        use SegClass::*;
        Some(match i {
            0 => Background,
            1 => BehindGoal,
            2 => BlueLines,
            3 => CenterFaceoffCircle,
            4 => CenterLine,
            5 => OuterFaceoffCircles,
            6 => OuterFaceoffSpots,
            7 => GoalCreases,
            8 => NeutralZone,
            9 => InnerFaceoffSpots,
            10 => DefenseZones,
            _ => return None,
        })
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn all() -> [SegClass; NUM_CLASSES] {
        use SegClass::*;
        [
            Background,
            BehindGoal,
            BlueLines,
            CenterFaceoffCircle,
            CenterLine,
            OuterFaceoffCircles,
            OuterFaceoffSpots,
            GoalCreases,
            NeutralZone,
            InnerFaceoffSpots,
            DefenseZones,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreaseKind {
    Semicircle,
    TruncatedSemicircle,
}

/// Goal crease geometry: a semicircle in front of the goal line, optionally
/// truncated to a maximum depth (NHL style).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreaseShape {
    pub kind: CreaseKind,
    pub radius: f64,
}

/// Maximum crease depth in front of the goal line for the truncated shape
/// (4.5 ft).
const CREASE_TRUNCATION_DEPTH: f64 = 1.3716;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineThicknessMap {
    pub blue_lines: f64,
    pub center_line: f64,
}

/// Parametric rink description, all lengths in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RinkSpec {
    pub length: f64,
    pub width: f64,
    pub corner_radius: f64,
    /// Distance from the end boards to each goal line.
    pub goal_line_offset: f64,
    /// Distance from the centre line to each blue line.
    pub blue_line_offset: f64,
    pub centre_circle_radius: f64,
    pub outer_faceoff_circle_radius: f64,
    /// Centres of the four end-zone faceoff circles, rink frame.
    pub outer_faceoff_centres: [[f64; 2]; 4],
    /// The four neutral-zone faceoff spots.
    pub inner_faceoff_spots: [[f64; 2]; 4],
    pub outer_faceoff_spot_radius: f64,
    pub crease_shape: CreaseShape,
    pub goal_width: f64,
    pub line_thickness_map: LineThicknessMap,
}

impl RinkSpec {
    /// Check all structural invariants; Err describes the first violation.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Range(msg));
        if !(self.width > 0.0 && self.width < self.length) {
            return fail(format!("need 0 < width < length, got {}x{}", self.width, self.length));
        }
        if self.corner_radius > self.width / 2.0 || self.corner_radius < 0.0 {
            return fail(format!("corner radius {} outside [0, width/2]", self.corner_radius));
        }
        let goal_x = self.length / 2.0 - self.goal_line_offset;
        if !(self.goal_line_offset > 0.0 && self.blue_line_offset > 0.0 && goal_x > self.blue_line_offset)
        {
            return fail("goal lines must lie between end boards and blue lines".into());
        }
        for p in self.outer_faceoff_centres.iter().chain(self.inner_faceoff_spots.iter()) {
            if !self.contains_point(p[0], p[1]) {
                return fail(format!("faceoff centre ({}, {}) outside boundary", p[0], p[1]));
            }
        }
        if self.centre_circle_radius <= 0.0
            || self.outer_faceoff_circle_radius <= 0.0
            || self.outer_faceoff_spot_radius <= 0.0
            || self.crease_shape.radius <= 0.0
            || self.goal_width <= 0.0
            || self.line_thickness_map.blue_lines <= 0.0
            || self.line_thickness_map.center_line <= 0.0
        {
            return fail("all radii and thicknesses must be positive".into());
        }
        // Bilateral symmetry: the centre sets must be invariant under
        // reflection about both axes.
        for set in [&self.outer_faceoff_centres, &self.inner_faceoff_spots] {
            for p in set.iter() {
                for refl in [[-p[0], p[1]], [p[0], -p[1]], [-p[0], -p[1]]] {
                    if !set
                        .iter()
                        .any(|q| (q[0] - refl[0]).abs() < 1e-9 && (q[1] - refl[1]).abs() < 1e-9)
                    {
                        return fail("faceoff centres are not bilaterally symmetric".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// True when (x, y) in metres lies inside the rounded-rectangle boundary.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        let hx = self.length / 2.0;
        let hy = self.width / 2.0;
        let ax = x.abs();
        let ay = y.abs();
        if ax > hx || ay > hy {
            return false;
        }
        let cx = hx - self.corner_radius;
        let cy = hy - self.corner_radius;
        if ax > cx && ay > cy {
            let dx = ax - cx;
            let dy = ay - cy;
            return dx * dx + dy * dy <= self.corner_radius * self.corner_radius;
        }
        true
    }

    /// Topmost class at a point, z-order: spots > circles > lines > creases >
    /// zones > behind-goal; outside the boundary is Background.
    pub fn classify_point(&self, x: f64, y: f64) -> SegClass {
        if !self.contains_point(x, y) {
            return SegClass::Background;
        }
        let sq = |v: f64| v * v;
        let r_spot2 = sq(self.outer_faceoff_spot_radius);
        for p in &self.outer_faceoff_centres {
            if sq(x - p[0]) + sq(y - p[1]) <= r_spot2 {
                return SegClass::OuterFaceoffSpots;
            }
        }
        for p in &self.inner_faceoff_spots {
            if sq(x - p[0]) + sq(y - p[1]) <= r_spot2 {
                return SegClass::InnerFaceoffSpots;
            }
        }
        if sq(x) + sq(y) <= sq(self.centre_circle_radius) {
            return SegClass::CenterFaceoffCircle;
        }
        let r_circ2 = sq(self.outer_faceoff_circle_radius);
        for p in &self.outer_faceoff_centres {
            if sq(x - p[0]) + sq(y - p[1]) <= r_circ2 {
                return SegClass::OuterFaceoffCircles;
            }
        }
        let ax = x.abs();
        if ax <= self.line_thickness_map.center_line / 2.0 {
            return SegClass::CenterLine;
        }
        if (ax - self.blue_line_offset).abs() <= self.line_thickness_map.blue_lines / 2.0 {
            return SegClass::BlueLines;
        }
        let goal_x = self.length / 2.0 - self.goal_line_offset;
        let depth = goal_x - ax; // >= 0 on the centre side of the goal line
        if depth >= 0.0 && sq(ax - goal_x) + sq(y) <= sq(self.crease_shape.radius) {
            let within = match self.crease_shape.kind {
                CreaseKind::Semicircle => true,
                CreaseKind::TruncatedSemicircle => depth <= CREASE_TRUNCATION_DEPTH,
            };
            if within {
                return SegClass::GoalCreases;
            }
        }
        if ax >= goal_x {
            return SegClass::BehindGoal;
        }
        if ax >= self.blue_line_offset {
            return SegClass::DefenseZones;
        }
        SegClass::NeutralZone
    }

    /// Half-width of the in-bounds region at longitudinal position x
    /// (distance from centre line to the boards, accounting for corners).
    pub fn boundary_half_width(&self, x: f64) -> f64 {
        let hx = self.length / 2.0;
        let hy = self.width / 2.0;
        let ax = x.abs();
        if ax > hx {
            return 0.0;
        }
        let cx = hx - self.corner_radius;
        if ax <= cx {
            hy
        } else {
            let dx = ax - cx;
            (hy - self.corner_radius) + (self.corner_radius * self.corner_radius - dx * dx).sqrt()
        }
    }

    /// Boundary as a polygon (counter-clockwise in the y-down frame), corner
    /// arcs sampled with `arc_segments` edges each.
    pub fn boundary_polygon(&self, arc_segments: usize) -> Vec<[f64; 2]> {
        let hx = self.length / 2.0;
        let hy = self.width / 2.0;
        let r = self.corner_radius;
        let cx = hx - r;
        let cy = hy - r;
        let n = arc_segments.max(1);
        let mut pts = Vec::with_capacity(4 * (n + 1));
        // corner arc centres and start angles, walking the boundary once
        let corners = [
            ([cx, cy], 0.0),                            // +x,+y
            ([-cx, cy], std::f64::consts::FRAC_PI_2),   // -x,+y
            ([-cx, -cy], std::f64::consts::PI),         // -x,-y
            ([cx, -cy], 1.5 * std::f64::consts::PI),    // +x,-y
        ];
        for (c, a0) in corners {
            for i in 0..=n {
                let a = a0 + std::f64::consts::FRAC_PI_2 * (i as f64) / (n as f64);
                pts.push([c[0] + r * a.cos(), c[1] + r * a.sin()]);
            }
        }
        pts
    }
}

/// Fixed rink presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RinkPreset {
    Nhl,
    Iihf,
}

/// Published rule-book dimensions for the two standard rink formats.
pub fn preset_spec(kind: RinkPreset) -> RinkSpec {
    let spec = match kind {
        RinkPreset::Nhl => RinkSpec {
            length: 60.96,
            width: 25.91,
            corner_radius: 8.5344,
            goal_line_offset: 3.3528,
            blue_line_offset: 7.62,
            centre_circle_radius: 4.572,
            outer_faceoff_circle_radius: 4.572,
            outer_faceoff_centres: [
                [21.0312, 6.7056],
                [-21.0312, 6.7056],
                [-21.0312, -6.7056],
                [21.0312, -6.7056],
            ],
            inner_faceoff_spots: [
                [6.096, 6.7056],
                [-6.096, 6.7056],
                [-6.096, -6.7056],
                [6.096, -6.7056],
            ],
            outer_faceoff_spot_radius: 0.3048,
            crease_shape: CreaseShape {
                kind: CreaseKind::TruncatedSemicircle,
                radius: 1.8288,
            },
            goal_width: 1.8288,
            line_thickness_map: LineThicknessMap {
                blue_lines: 0.3048,
                center_line: 0.3048,
            },
        },
        RinkPreset::Iihf => RinkSpec {
            length: 60.0,
            width: 30.0,
            corner_radius: 8.5,
            goal_line_offset: 4.0,
            blue_line_offset: 7.14,
            centre_circle_radius: 4.5,
            outer_faceoff_circle_radius: 4.5,
            outer_faceoff_centres: [
                [20.0, 7.0],
                [-20.0, 7.0],
                [-20.0, -7.0],
                [20.0, -7.0],
            ],
            inner_faceoff_spots: [
                [5.64, 7.0],
                [-5.64, 7.0],
                [-5.64, -7.0],
                [5.64, -7.0],
            ],
            outer_faceoff_spot_radius: 0.3,
            crease_shape: CreaseShape {
                kind: CreaseKind::Semicircle,
                radius: 1.83,
            },
            goal_width: 1.83,
            line_thickness_map: LineThicknessMap {
                blue_lines: 0.3,
                center_line: 0.3,
            },
        },
    };
    debug_assert!(spec.validate().is_ok());
    spec
}

/// Min/max bounds for the varied parameters of [`random_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomizationRanges {
    pub width: (f64, f64),
    pub length: (f64, f64),
    /// Relative jitter applied to line offsets and feature positions.
    pub offset_jitter: f64,
    /// Relative jitter applied to circle and spot radii.
    pub radius_jitter: f64,
    /// Pick the crease shape uniformly instead of keeping the preset one.
    pub vary_crease: bool,
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        Self {
            width: (24.5, 31.5),
            length: (56.0, 64.0),
            offset_jitter: 0.10,
            radius_jitter: 0.10,
            vary_crease: true,
        }
    }
}

impl RandomizationRanges {
    fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Range(m.into()));
        if !(self.width.0 > 0.0 && self.width.0 <= self.width.1) {
            return fail("width range must be positive and ordered");
        }
        if !(self.length.0 > self.width.1 && self.length.0 <= self.length.1) {
            return fail("length range must be ordered and exceed the max width");
        }
        if !(0.0..1.0).contains(&self.offset_jitter) || !(0.0..1.0).contains(&self.radius_jitter) {
            return fail("jitters must be in [0, 1)");
        }
        // Worst case: widest circles at the tightest width still need their
        // centres inside the boundary with some clearance.
        let base = preset_spec(RinkPreset::Nhl);
        let max_r = base.outer_faceoff_circle_radius * (1.0 + self.radius_jitter);
        if max_r * 2.0 >= self.width.0 {
            return fail("circle radii can exceed the rink half-width");
        }
        Ok(())
    }
}

/// Deterministic randomized rink: feature types and rough positions follow
/// the NHL layout scaled to the drawn dimensions, with per-parameter jitter.
/// The emitted spec is always bilaterally symmetric.
pub fn random_spec(seed: u64, ranges: &RandomizationRanges) -> Result<RinkSpec> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = preset_spec(RinkPreset::Nhl);

    for _attempt in 0..32 {
        let length = rng.gen_range(ranges.length.0..=ranges.length.1);
        let width = rng.gen_range(ranges.width.0..=ranges.width.1);
        let sx = length / base.length;
        let sy = width / base.width;
        let jo = ranges.offset_jitter;
        let jr = ranges.radius_jitter;
        let j = |r: &mut ChaCha8Rng, x: f64, amt: f64| x * r.gen_range(1.0 - amt..=1.0 + amt);

        let outer_x = j(&mut rng, base.outer_faceoff_centres[0][0] * sx, jo);
        let outer_y = j(&mut rng, base.outer_faceoff_centres[0][1] * sy, jo);
        let inner_x = j(&mut rng, base.inner_faceoff_spots[0][0] * sx, jo);
        let inner_y = j(&mut rng, base.inner_faceoff_spots[0][1] * sy, jo);
        let crease_kind = if ranges.vary_crease {
            if rng.gen_bool(0.5) {
                CreaseKind::Semicircle
            } else {
                CreaseKind::TruncatedSemicircle
            }
        } else {
            base.crease_shape.kind
        };

        let spec = RinkSpec {
            length,
            width,
            corner_radius: (j(&mut rng, base.corner_radius * sy.min(sx), jr)).min(width / 2.0),
            goal_line_offset: j(&mut rng, base.goal_line_offset * sx, jo),
            blue_line_offset: j(&mut rng, base.blue_line_offset * sx, jo),
            centre_circle_radius: j(&mut rng, base.centre_circle_radius, jr),
            outer_faceoff_circle_radius: j(&mut rng, base.outer_faceoff_circle_radius, jr),
            outer_faceoff_centres: [
                [outer_x, outer_y],
                [-outer_x, outer_y],
                [-outer_x, -outer_y],
                [outer_x, -outer_y],
            ],
            inner_faceoff_spots: [
                [inner_x, inner_y],
                [-inner_x, inner_y],
                [-inner_x, -inner_y],
                [inner_x, -inner_y],
            ],
            outer_faceoff_spot_radius: j(&mut rng, base.outer_faceoff_spot_radius, jr),
            crease_shape: CreaseShape {
                kind: crease_kind,
                radius: j(&mut rng, base.crease_shape.radius, jr),
            },
            goal_width: j(&mut rng, base.goal_width, jr),
            line_thickness_map: base.line_thickness_map,
        };
        if spec.validate().is_ok() {
            return Ok(spec);
        }
    }
    Err(Error::Range(
        "ranges kept producing invariant-violating geometry".into(),
    ))
}

/// Class-indexed raster: one class per pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SegMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
    /// Metres per pixel of the template space this raster was built in.
    pub pixel_scale: f64,
}

impl SegMap {
    pub fn new(width: u32, height: u32, pixel_scale: f64) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            data: vec![0; (width * height) as usize],
            pixel_scale,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> SegClass {
        SegClass::from_index(self.data[(y * self.width + x) as usize]).expect("valid class index")
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: SegClass) {
        self.data[(y * self.width + x) as usize] = c.index();
    }

    /// Per-class pixel counts.
    pub fn histogram(&self) -> [u64; NUM_CLASSES] {
        let mut h = [0u64; NUM_CLASSES];
        for &v in &self.data {
            h[v as usize] += 1;
        }
        h
    }

    pub fn count_non_background(&self) -> u64 {
        self.data.iter().filter(|&&v| v != 0).count() as u64
    }

    /// Horizontal mirror, used by symmetry tests and flips.
    pub fn flip_horizontal(&self) -> SegMap {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> SegMap {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(x, self.height - 1 - y, self.get(x, y));
            }
        }
        out
    }
}

/// Default template raster size used across the toolkit.
pub const TEMPLATE_SIZE: (u32, u32) = (400, 170);

/// Metres-per-pixel placing the rink centred and as large as possible in a
/// `w` x `h` template.
pub fn template_scale(spec: &RinkSpec, w: u32, h: u32) -> f64 {
    (spec.length / w as f64).max(spec.width / h as f64)
}

/// Template pixel coordinates of a rink-frame point in metres.
pub fn metres_to_px(spec: &RinkSpec, w: u32, h: u32, x: f64, y: f64) -> [f64; 2] {
    let s = template_scale(spec, w, h);
    [w as f64 / 2.0 + x / s, h as f64 / 2.0 + y / s]
}

pub fn px_to_metres(spec: &RinkSpec, w: u32, h: u32, px: f64, py: f64) -> [f64; 2] {
    let s = template_scale(spec, w, h);
    [(px - w as f64 / 2.0) * s, (py - h as f64 / 2.0) * s]
}

/// Rasterize by pixel-centre containment; no anti-aliasing.
pub fn rasterize(spec: &RinkSpec, width: u32, height: u32) -> SegMap {
    let s = template_scale(spec, width, height);
    let mut map = SegMap::new(width, height, s);
    let cx = width as f64 / 2.0;
    let cy = height as f64 / 2.0;
    for y in 0..height {
        let my = (y as f64 + 0.5 - cy) * s;
        for x in 0..width {
            let mx = (x as f64 + 0.5 - cx) * s;
            map.set(x, y, spec.classify_point(mx, my));
        }
    }
    map
}

/// Landmark roles used to match template and frame keypoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeypointTag {
    OuterFaceoffCentre,
    InnerSpot,
    CentreCircle,
    BlueLineEnd,
    CentreLineEnd,
    GoalLineEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Template pixel coordinates.
    pub point: [f64; 2],
    pub class: SegClass,
    pub tag: KeypointTag,
}

/// Named landmarks of a spec in template pixel space.
///
/// Boundary landmarks are pulled 0.6 px inside their region so the pixel
/// containing each keypoint carries the keypoint's class.
pub fn template_keypoints(spec: &RinkSpec, width: u32, height: u32) -> Vec<Keypoint> {
    let s = template_scale(spec, width, height);
    let nudge = 0.6 * s;
    let mut kps = Vec::new();
    let mut push = |x: f64, y: f64, tag: KeypointTag| {
        kps.push(Keypoint {
            point: metres_to_px(spec, width, height, x, y),
            class: spec.classify_point(x, y),
            tag,
        });
    };

    for p in &spec.outer_faceoff_centres {
        push(p[0], p[1], KeypointTag::OuterFaceoffCentre);
    }
    for p in &spec.inner_faceoff_spots {
        push(p[0], p[1], KeypointTag::InnerSpot);
    }
    push(0.0, 0.0, KeypointTag::CentreCircle);

    for sx in [1.0, -1.0] {
        let bx = sx * spec.blue_line_offset;
        let by = spec.boundary_half_width(bx) - nudge;
        push(bx, by, KeypointTag::BlueLineEnd);
        push(bx, -by, KeypointTag::BlueLineEnd);
    }
    let cy = spec.boundary_half_width(0.0) - nudge;
    push(0.0, cy, KeypointTag::CentreLineEnd);
    push(0.0, -cy, KeypointTag::CentreLineEnd);

    for sx in [1.0, -1.0] {
        let gx = spec.length / 2.0 - spec.goal_line_offset;
        let gy = spec.boundary_half_width(gx) - nudge;
        // nudged past the goal line so the landmark sits in BehindGoal
        let x = sx * (gx + nudge);
        push(x, gy, KeypointTag::GoalLineEnd);
        push(x, -gy, KeypointTag::GoalLineEnd);
    }
    kps
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn presets_match_published_dimensions() {
        let nhl = preset_spec(RinkPreset::Nhl);
        assert_eq!(nhl.width, 25.91);
        assert_eq!(nhl.length, 60.96);
        assert!(nhl.validate().is_ok());

        let iihf = preset_spec(RinkPreset::Iihf);
        assert_eq!(iihf.width, 30.0);
        assert!(iihf.validate().is_ok());
    }

    #[test]
    fn random_spec_deterministic_and_varied() {
        let r = RandomizationRanges::default();
        let a = random_spec(7, &r).unwrap();
        let b = random_spec(7, &r).unwrap();
        assert_eq!(a, b);
        let c = random_spec(8, &r).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_spec_two_hundred_draws_all_valid() {
        let r = RandomizationRanges::default();
        let mut min_w = f64::INFINITY;
        let mut max_w = 0.0f64;
        for seed in 0..200 {
            let spec = random_spec(seed, &r).unwrap();
            spec.validate().unwrap();
            min_w = min_w.min(spec.width);
            max_w = max_w.max(spec.width);
        }
        // coverage spans both presets
        assert!(min_w <= 25.91 + 0.5, "min width {min_w}");
        assert!(max_w >= 30.0 - 0.5, "max width {max_w}");
    }

    #[test]
    fn bad_ranges_rejected() {
        let r = RandomizationRanges {
            width: (5.0, 8.0),
            ..Default::default()
        };
        assert!(matches!(random_spec(0, &r), Err(Error::Range(_))));
    }

    #[test]
    fn rasterize_centre_and_corner() {
        let nhl = preset_spec(RinkPreset::Nhl);
        let map = rasterize(&nhl, 400, 170);
        let centre = map.get(200, 85);
        assert!(
            centre == SegClass::CenterFaceoffCircle || centre == SegClass::CenterLine,
            "{centre:?}"
        );
        assert_eq!(map.get(0, 0), SegClass::Background);
    }

    /// Independent point classifier: straightforward region checks written
    /// without the z-order dispatch, used as a brute-force oracle.
    fn oracle_class(spec: &RinkSpec, x: f64, y: f64) -> SegClass {
        let hx = spec.length / 2.0;
        let hy = spec.width / 2.0;
        let inside = if x.abs() > hx || y.abs() > hy {
            false
        } else {
            let ccx = hx - spec.corner_radius;
            let ccy = hy - spec.corner_radius;
            !(x.abs() > ccx
                && y.abs() > ccy
                && (x.abs() - ccx).hypot(y.abs() - ccy) > spec.corner_radius)
        };
        if !inside {
            return SegClass::Background;
        }
        let d = |p: &[f64; 2]| (x - p[0]).hypot(y - p[1]);
        if spec.outer_faceoff_centres.iter().any(|p| d(p) <= spec.outer_faceoff_spot_radius) {
            return SegClass::OuterFaceoffSpots;
        }
        if spec.inner_faceoff_spots.iter().any(|p| d(p) <= spec.outer_faceoff_spot_radius) {
            return SegClass::InnerFaceoffSpots;
        }
        if x.hypot(y) <= spec.centre_circle_radius {
            return SegClass::CenterFaceoffCircle;
        }
        if spec
            .outer_faceoff_centres
            .iter()
            .any(|p| d(p) <= spec.outer_faceoff_circle_radius)
        {
            return SegClass::OuterFaceoffCircles;
        }
        if x.abs() <= spec.line_thickness_map.center_line / 2.0 {
            return SegClass::CenterLine;
        }
        if (x.abs() - spec.blue_line_offset).abs() <= spec.line_thickness_map.blue_lines / 2.0 {
            return SegClass::BlueLines;
        }
        let gx = hx - spec.goal_line_offset;
        let crease_centre = [gx * x.signum(), 0.0];
        if d(&crease_centre) <= spec.crease_shape.radius && x.abs() <= gx {
            let deep_enough = match spec.crease_shape.kind {
                CreaseKind::Semicircle => true,
                CreaseKind::TruncatedSemicircle => gx - x.abs() <= 1.3716,
            };
            if deep_enough {
                return SegClass::GoalCreases;
            }
        }
        if x.abs() >= gx {
            SegClass::BehindGoal
        } else if x.abs() >= spec.blue_line_offset {
            SegClass::DefenseZones
        } else {
            SegClass::NeutralZone
        }
    }

    #[test]
    fn rasterize_matches_point_in_shape_oracle() {
        let nhl = preset_spec(RinkPreset::Nhl);
        let map = rasterize(&nhl, 400, 170);
        let s = map.pixel_scale;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut mismatches = 0;
        for _ in 0..10_000 {
            let px = rng.next_u32() % 400;
            let py = rng.next_u32() % 170;
            let mx = (px as f64 + 0.5 - 200.0) * s;
            let my = (py as f64 + 0.5 - 85.0) * s;
            if map.get(px, py) != oracle_class(&nhl, mx, my) {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn rasterize_reflection_symmetry_exact() {
        for spec in [
            preset_spec(RinkPreset::Nhl),
            preset_spec(RinkPreset::Iihf),
            random_spec(5, &RandomizationRanges::default()).unwrap(),
        ] {
            let map = rasterize(&spec, 400, 170);
            assert_eq!(map, map.flip_horizontal(), "horizontal symmetry");
            assert_eq!(map, map.flip_vertical(), "vertical symmetry");
        }
    }

    #[test]
    fn rasterize_resolution_consistency() {
        let nhl = preset_spec(RinkPreset::Nhl);
        let lo = rasterize(&nhl, 400, 170);
        let hi = rasterize(&nhl, 800, 340);
        let mut agree = 0u64;
        for y in 0..170u32 {
            for x in 0..400u32 {
                // majority vote over the 2x2 children
                let mut counts = [0u8; NUM_CLASSES];
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    counts[hi.get(2 * x + dx, 2 * y + dy).index() as usize] += 1;
                }
                let maj = (0..NUM_CLASSES).max_by_key(|&i| counts[i]).unwrap() as u8;
                if maj == lo.get(x, y).index() {
                    agree += 1;
                }
            }
        }
        let frac = agree as f64 / (400.0 * 170.0);
        assert!(frac >= 0.99, "agreement {frac}");
    }

    #[test]
    fn keypoints_land_on_matching_pixels() {
        for spec in [
            preset_spec(RinkPreset::Nhl),
            random_spec(21, &RandomizationRanges::default()).unwrap(),
        ] {
            let (w, h) = TEMPLATE_SIZE;
            let map = rasterize(&spec, w, h);
            let kps = template_keypoints(&spec, w, h);
            let outer = kps
                .iter()
                .filter(|k| k.tag == KeypointTag::OuterFaceoffCentre)
                .count();
            assert_eq!(outer, 4);
            for kp in &kps {
                let px = kp.point[0].floor() as i64;
                let py = kp.point[1].floor() as i64;
                assert!(px >= 0 && py >= 0 && (px as u32) < w && (py as u32) < h, "{kp:?}");
                assert_eq!(map.get(px as u32, py as u32), kp.class, "{kp:?}");
            }
        }
    }

    #[test]
    fn centre_keypoint_is_template_centre() {
        let nhl = preset_spec(RinkPreset::Nhl);
        let kps = template_keypoints(&nhl, 400, 170);
        let c = kps.iter().find(|k| k.tag == KeypointTag::CentreCircle).unwrap();
        assert_eq!(c.point, [200.0, 85.0]);
    }
}
