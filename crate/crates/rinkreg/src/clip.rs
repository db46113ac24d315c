//! Convex polygon clipping and area computation (Sutherland–Hodgman).

/// Signed area via the shoelace formula; positive for counter-clockwise
/// order in a y-down frame.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    (acc * 0.5).abs()
}

fn cross_edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// True when the vertices wind consistently (convex polygon, either order).
pub fn is_convex(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0.0f64;
    for i in 0..n {
        let c = cross_edge(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        if c != 0.0 {
            if sign != 0.0 && c.signum() != sign {
                return false;
            }
            sign = c.signum();
        }
    }
    true
}

/// Clip `subject` against one half-plane (the side of a->b where `inside`
/// holds for the reference winding).
fn clip_halfplane(subject: &[[f64; 2]], a: [f64; 2], b: [f64; 2], keep_sign: f64) -> Vec<[f64; 2]> {
    let n = subject.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let s = subject[i];
        let e = subject[(i + 1) % n];
        let sc = cross_edge(a, b, s) * keep_sign;
        let ec = cross_edge(a, b, e) * keep_sign;
        let s_in = sc >= 0.0;
        let e_in = ec >= 0.0;
        let intersect = |out: &mut Vec<[f64; 2]>| {
            let denom = sc - ec;
            if denom.abs() > 1e-30 {
                let t = sc / denom;
                out.push([s[0] + (e[0] - s[0]) * t, s[1] + (e[1] - s[1]) * t]);
            }
        };
        match (s_in, e_in) {
            (true, true) => out.push(e),
            (true, false) => intersect(&mut out),
            (false, true) => {
                intersect(&mut out);
                out.push(e);
            }
            (false, false) => {}
        }
    }
    out
}

/// Clip `subject` against the half-plane `a*x + b*y + c >= 0`.
pub fn clip_halfplane_coeffs(subject: &[[f64; 2]], a: f64, b: f64, c: f64) -> Vec<[f64; 2]> {
    let n = subject.len();
    if n == 0 {
        return Vec::new();
    }
    let f = |p: [f64; 2]| a * p[0] + b * p[1] + c;
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let s = subject[i];
        let e = subject[(i + 1) % n];
        let sc = f(s);
        let ec = f(e);
        let intersect = |out: &mut Vec<[f64; 2]>| {
            let denom = sc - ec;
            if denom.abs() > 1e-30 {
                let t = sc / denom;
                out.push([s[0] + (e[0] - s[0]) * t, s[1] + (e[1] - s[1]) * t]);
            }
        };
        match (sc >= 0.0, ec >= 0.0) {
            (true, true) => out.push(e),
            (true, false) => intersect(&mut out),
            (false, true) => {
                intersect(&mut out);
                out.push(e);
            }
            (false, false) => {}
        }
    }
    out
}

/// Clip `subject` (any polygon) against a convex `clip` polygon.
pub fn clip_polygon(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    if subject.is_empty() || clip.len() < 3 {
        return Vec::new();
    }
    // orient the clip edges: keep points on the interior side
    let mut sign = 0.0;
    for i in 0..clip.len() {
        let c = cross_edge(
            clip[i],
            clip[(i + 1) % clip.len()],
            clip[(i + 2) % clip.len()],
        );
        if c != 0.0 {
            sign = c.signum();
            break;
        }
    }
    if sign == 0.0 {
        return Vec::new();
    }
    let mut poly = subject.to_vec();
    for i in 0..clip.len() {
        poly = clip_halfplane(&poly, clip[i], clip[(i + 1) % clip.len()], sign);
        if poly.is_empty() {
            break;
        }
    }
    poly
}

/// Area of the intersection of a polygon with a convex polygon.
pub fn intersection_area(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> f64 {
    polygon_area(&clip_polygon(subject, clip))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, s: f64) -> Vec<[f64; 2]> {
        vec![[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]]
    }

    #[test]
    fn area_unit_square() {
        assert_eq!(polygon_area(&square(0.0, 0.0, 1.0)), 1.0);
    }

    #[test]
    fn self_intersection_is_identity() {
        let sq = square(2.0, 3.0, 4.0);
        assert!((intersection_area(&sq, &sq) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn half_overlap() {
        let a = square(0.0, 0.0, 2.0);
        let b = square(1.0, 0.0, 2.0);
        assert!((intersection_area(&a, &b) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_zero() {
        let a = square(0.0, 0.0, 1.0);
        let b = square(5.0, 5.0, 1.0);
        assert_eq!(intersection_area(&a, &b), 0.0);
    }

    #[test]
    fn winding_order_irrelevant() {
        let a = square(0.0, 0.0, 2.0);
        let mut b = square(1.0, 1.0, 2.0);
        b.reverse();
        assert!((intersection_area(&a, &b) - 1.0).abs() < 1e-12);
        let mut a_rev = a.clone();
        a_rev.reverse();
        assert!((intersection_area(&a_rev, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn halfplane_coeffs_keeps_the_positive_side() {
        // keep x >= 1 of the unit-origin 2x2 square: area 2 remains
        let sq = square(0.0, 0.0, 2.0);
        let cut = clip_halfplane_coeffs(&sq, 1.0, 0.0, -1.0);
        assert!((polygon_area(&cut) - 2.0).abs() < 1e-12);
        for p in &cut {
            assert!(p[0] >= 1.0 - 1e-12);
        }
        // a half-plane missing the square entirely clips to nothing
        assert!(clip_halfplane_coeffs(&sq, 1.0, 0.0, -5.0).is_empty());
    }

    #[test]
    fn convexity_check() {
        assert!(is_convex(&square(0.0, 0.0, 1.0)));
        let concave = vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.5], [2.0, 2.0], [0.0, 2.0]];
        assert!(!is_convex(&concave));
    }

    #[test]
    fn triangle_clip_monte_carlo_cross_check() {
        let tri = vec![[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
        let sq = square(1.0, 1.0, 2.0);
        let exact = intersection_area(&tri, &sq);
        // deterministic grid estimate
        let mut hits = 0u64;
        let n = 400;
        for i in 0..n {
            for j in 0..n {
                let x = 1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
                let y = 1.0 + 2.0 * (j as f64 + 0.5) / n as f64;
                if x + y <= 4.0 {
                    hits += 1;
                }
            }
        }
        let approx = 4.0 * hits as f64 / (n * n) as f64;
        assert!((exact - approx).abs() < 0.01, "{exact} vs {approx}");
    }
}
