//! Planar homography representation and estimation.
//!
//! A [`Homography`] maps **template pixels** to **frame pixels** (`x' ~ H x`)
//! unless stated otherwise. Matrices are scale-fixed so that `m[2][2] == 1`,
//! which leaves the 8 free parameters used by the normalized vector form.

use nalgebra::{DMatrix, Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Pt = Point2<f64>;

/// Geometric tolerance for point mapping checks (pixels).
pub const TOL_GEOM: f64 = 1e-6;
/// Algebraic tolerance for entrywise matrix comparisons.
pub const TOL_ALG: f64 = 1e-9;
/// Round-trip tolerance for normalization.
pub const TOL_ROUNDTRIP: f64 = 1e-12;

/// Scale-fixed 3x3 projective transform, `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    /// Build from an arbitrary 3x3 matrix, fixing scale so `m[2][2] == 1`.
    ///
    /// Fails when the matrix is singular (|det| of the scale-fixed matrix
    /// below 1e-9) or `m[2][2]` is too small to divide by.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let s = m[(2, 2)];
        if s.abs() < 1e-12 {
            return Err(Error::Degenerate(format!("m22 too small: {s}")));
        }
        let fixed = m / s;
        if !fixed.iter().all(|v| v.is_finite()) {
            return Err(Error::Degenerate("non-finite entries".into()));
        }
        let det = fixed.determinant();
        if det.abs() < 1e-9 {
            return Err(Error::Degenerate(format!("determinant {det} near zero")));
        }
        Ok(Self { m: fixed })
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    /// Row-major entries as a flat array.
    pub fn entries(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_entries(e: [f64; 9]) -> Result<Self> {
        Self::from_matrix(Matrix3::new(
            e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8],
        ))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Map a point, dehomogenizing. Errors when the point lies on the
    /// horizon (|w| <= 1e-12).
    pub fn apply(&self, p: Pt) -> Result<Pt> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        if v.z.abs() <= 1e-12 {
            return Err(Error::Horizon(v.z));
        }
        Ok(Pt::new(v.x / v.z, v.y / v.z))
    }

    /// Homogeneous w component of the mapped point; used for horizon checks.
    pub fn apply_w(&self, p: Pt) -> f64 {
        self.m[(2, 0)] * p.x + self.m[(2, 1)] * p.y + self.m[(2, 2)]
    }

    /// `self` after `other`: (a.compose(b)).apply(p) == a.apply(b.apply(p)).
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Homography::from_matrix(self.m * other.m)
    }

    pub fn invert(&self) -> Result<Homography> {
        let inv = self
            .m
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("singular matrix in invert".into()))?;
        Homography::from_matrix(inv)
    }

    /// Displacements of `rect` corners under this homography (the 4-point
    /// parameterization).
    pub fn four_point_form(&self, rect: &[Pt; 4]) -> Result<[Pt; 4]> {
        Ok([
            self.apply(rect[0])?,
            self.apply(rect[1])?,
            self.apply(rect[2])?,
            self.apply(rect[3])?,
        ])
    }

    /// Sign of the local orientation (Jacobian determinant) at `p`.
    pub fn orientation_at(&self, p: Pt) -> f64 {
        let m = &self.m;
        let w = self.apply_w(p);
        let u = m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)];
        let v = m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)];
        // d(u/w)/dx etc., common positive factor 1/w^4 dropped except sign
        let j00 = m[(0, 0)] * w - u * m[(2, 0)];
        let j01 = m[(0, 1)] * w - u * m[(2, 1)];
        let j10 = m[(1, 0)] * w - v * m[(2, 0)];
        let j11 = m[(1, 1)] * w - v * m[(2, 1)];
        (j00 * j11 - j01 * j10).signum() * w.powi(4).signum()
    }
}

impl Serialize for Homography {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let e = <[f64; 9]>::deserialize(d)?;
        Homography::from_entries(e).map_err(serde::de::Error::custom)
    }
}

/// Point correspondences for DLT, `src -> dst`.
#[derive(Debug, Clone)]
pub struct CorrespondenceSet {
    pairs: Vec<(Pt, Pt)>,
}

impl CorrespondenceSet {
    /// Requires >= 4 pairs and pairwise-distinct source points (1e-6 px).
    pub fn new(pairs: Vec<(Pt, Pt)>) -> Result<Self> {
        if pairs.len() < 4 {
            return Err(Error::Degenerate(format!(
                "need >= 4 correspondences, got {}",
                pairs.len()
            )));
        }
        for i in 0..pairs.len() {
            for j in (i + 1)..pairs.len() {
                if (pairs[i].0 - pairs[j].0).norm() < 1e-6 {
                    return Err(Error::Degenerate(format!(
                        "coincident source points {i} and {j}"
                    )));
                }
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(Pt, Pt)] {
        &self.pairs
    }
}

/// Hartley isotropic normalization: translate to centroid, scale to mean
/// distance sqrt(2). Returns the similarity transform and mapped points.
fn hartley_normalize(pts: &[Pt]) -> Result<(Matrix3<f64>, Vec<Pt>)> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_d = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_d < 1e-12 {
        return Err(Error::Degenerate("all points coincident".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_d;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let mapped = pts
        .iter()
        .map(|p| Pt::new(s * (p.x - cx), s * (p.y - cy)))
        .collect();
    Ok((t, mapped))
}

/// Direct Linear Transform with Hartley normalization.
///
/// Exact for 4 pairs, least squares for more; the null space of the stacked
/// design matrix is taken from the SVD.
pub fn dlt_solve(c: &CorrespondenceSet) -> Result<Homography> {
    let src: Vec<Pt> = c.pairs().iter().map(|p| p.0).collect();
    let dst: Vec<Pt> = c.pairs().iter().map(|p| p.1).collect();
    let (t_src, src_n) = hartley_normalize(&src)?;
    let (t_dst, dst_n) = hartley_normalize(&dst)?;

    let n = src_n.len();
    let mut a = DMatrix::<f64>::zeros((2 * n).max(9), 9);
    for i in 0..n {
        let (x, y) = (src_n[i].x, src_n[i].y);
        let (u, v) = (dst_n[i].x, dst_n[i].y);
        let r0 = 2 * i;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        let r1 = r0 + 1;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Degenerate("svd failed".into()))?;
    // Rank check: second-smallest singular value must clearly dominate the
    // smallest for the null space to be one-dimensional.
    let sv = &svd.singular_values;
    let smallest_idx = (0..sv.len()).min_by(|&i, &j| sv[i].total_cmp(&sv[j])).unwrap();
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted[1] < 1e-9 * sorted[sorted.len() - 1].max(1.0) {
        return Err(Error::Degenerate(
            "rank-deficient DLT system (collinear or coincident points)".into(),
        ));
    }
    let h_vec = v_t.row(smallest_idx);
    let h_n = Matrix3::new(
        h_vec[0], h_vec[1], h_vec[2], h_vec[3], h_vec[4], h_vec[5], h_vec[6], h_vec[7], h_vec[8],
    );

    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("normalization not invertible".into()))?;
    Homography::from_matrix(t_dst_inv * h_n * t_src)
}

/// Homography sending `rect[i] -> displaced[i]`; delegates to [`dlt_solve`].
pub fn from_four_points(rect: &[Pt; 4], displaced: &[Pt; 4]) -> Result<Homography> {
    let pairs = rect.iter().copied().zip(displaced.iter().copied()).collect();
    dlt_solve(&CorrespondenceSet::new(pairs)?)
}

/// 8-parameter vector form of a homography: the entries excluding `m[2][2]`,
/// each divided by a fixed positive per-entry scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedH {
    pub v: [f64; 8],
    pub scales: [f64; 8],
}

/// Per-entry scales frozen from the empirical standard deviation of each
/// entry over 10,000 ground-truth homographies drawn from the default
/// synthetic camera pool with default augmentation.
pub const DEFAULT_H_SCALES: [f64; 8] = [
    2.3773154782,
    1.8460122697,
    1165.3093430013,
    0.2329762063,
    0.4144569122,
    104.2679727103,
    0.0009892261,
    0.0008330774,
];

/// Entrywise normalization `v_i = m_i / s_i`.
pub fn normalize(h: &Homography, scales: &[f64; 8]) -> NormalizedH {
    let e = h.entries();
    let mut v = [0.0; 8];
    for i in 0..8 {
        v[i] = e[i] / scales[i];
    }
    NormalizedH { v, scales: *scales }
}

pub fn denormalize(n: &NormalizedH) -> Result<Homography> {
    let mut e = [0.0; 9];
    for (i, ei) in e.iter_mut().take(8).enumerate() {
        *ei = n.v[i] * n.scales[i];
    }
    e[8] = 1.0;
    Homography::from_entries(e)
}

/// Exponential-moving-average state over the 8-parameter vector form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaState {
    pub phi: [f64; 8],
    pub alpha: f64,
    pub t: u64,
}

impl EmaState {
    pub fn new(phi: [f64; 8], alpha: f64) -> Self {
        assert!((0.0..=1.0).contains(&alpha), "alpha must be in [0,1]");
        Self { phi, alpha, t: 0 }
    }
}

/// One smoothing step: `phi' = alpha*phi + (1-alpha)*theta`.
pub fn ema_update(state: &EmaState, theta: &[f64; 8]) -> EmaState {
    let mut phi = [0.0; 8];
    for i in 0..8 {
        phi[i] = state.alpha * state.phi[i] + (1.0 - state.alpha) * theta[i];
    }
    EmaState {
        phi,
        alpha: state.alpha,
        t: state.t + 1,
    }
}
