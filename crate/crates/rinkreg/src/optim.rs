//! Derivative-free minimization (Nelder–Mead) used by homography refinement.

/// Stopping and shape parameters for [`nelder_mead`].
#[derive(Debug, Clone)]
pub struct NmConfig {
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
    /// Budget on objective evaluations.
    pub max_evals: usize,
    /// Stop when the simplex value spread falls below this.
    pub f_tol: f64,
    /// Stop when the simplex extent falls below this.
    pub x_tol: f64,
}

impl Default for NmConfig {
    fn default() -> Self {
        NmConfig {
            initial_step: 1.0,
            max_evals: 400,
            f_tol: 1e-6,
            x_tol: 1e-4,
        }
    }
}

/// Result of a [`nelder_mead`] run.
#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

/// Minimize `f` from `x0` with the standard Nelder–Mead coefficients
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2). Fully
/// deterministic: ties resolve by index order.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], cfg: &NmConfig) -> NmResult {
    let n = x0.len();
    assert!(n > 0, "empty parameter vector");

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // initial simplex: x0 plus one step along each axis
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut xi = x0.to_vec();
        xi[i] += cfg.initial_step;
        let fi = eval(&xi, &mut evals);
        simplex.push((xi, fi));
    }

    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    };
    order(&mut simplex);

    while evals < cfg.max_evals {
        let spread = simplex[n].1 - simplex[0].1;
        let extent = (0..n)
            .map(|j| {
                let lo = simplex.iter().map(|(x, _)| x[j]).fold(f64::INFINITY, f64::min);
                let hi = simplex
                    .iter()
                    .map(|(x, _)| x[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0, f64::max);
        if spread <= cfg.f_tol && extent <= cfg.x_tol {
            break;
        }

        // centroid of all but the worst vertex
        let mut c = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for j in 0..n {
                c[j] += x[j] / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let at = |alpha: f64| -> Vec<f64> {
            (0..n)
                .map(|j| c[j] + alpha * (c[j] - worst.0[j]))
                .collect()
        };

        let xr = at(1.0);
        let fr = eval(&xr, &mut evals);

        if fr < simplex[0].1 {
            // try to expand further along the same direction
            let xe = at(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            // contract toward the better of worst/reflected
            let (xc, fc) = if fr < worst.1 {
                let x = at(0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = at(-0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                // shrink everything toward the best vertex
                let best = simplex[0].0.clone();
                for vtx in simplex.iter_mut().skip(1) {
                    for (v, b) in vtx.0.iter_mut().zip(&best) {
                        *v = b + 0.5 * (*v - b);
                    }
                    vtx.1 = eval(&vtx.0, &mut evals);
                    if evals >= cfg.max_evals {
                        break;
                    }
                }
            }
        }
        order(&mut simplex);
    }

    NmResult {
        x: simplex[0].0.clone(),
        f: simplex[0].1,
        evals,
    }
}
