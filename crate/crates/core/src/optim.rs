//! Derivative-free minimizers used by curve fitting and calibration.

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Stop once every vertex is within this distance of the best one...
    pub xtol: f64,
    /// ...and the objective spread across vertices is below this.
    pub ftol: f64,
    /// Stop immediately at or below this objective value.
    pub f_target: f64,
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 400,
            xtol: 1e-7,
            ftol: 1e-10,
            f_target: 0.0,
            initial_step: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
}

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Nelder-Mead simplex search; trial points are clamped into `[lower, upper]`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &SimplexOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    clamp_into(&mut start, lower, upper);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut v = start.clone();
        // step away from the nearer bound
        let up = v[i] + opts.initial_step;
        v[i] = if up <= upper[i] { up } else { v[i] - opts.initial_step };
        clamp_into(&mut v, lower, upper);
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread_x = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if best <= opts.f_target
            || evals >= opts.max_evals
            || (spread_x <= opts.xtol && (worst - best) <= opts.ftol)
            || spread_x <= opts.xtol * 1e-3
        {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let towards = |t: f64, from: &[f64]| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(from).map(|(c, w)| c + t * (c - w)).collect();
            clamp_into(&mut p, lower, upper);
            p
        };

        let worst_x = simplex[n].0.clone();
        let xr = towards(1.0, &worst_x);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = towards(2.0, &worst_x);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = towards(0.5, &worst_x);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = towards(-0.5, &worst_x);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < worst.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink towards the best vertex
        let best_x = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut v: Vec<f64> = best_x.iter().zip(&vertex.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
            clamp_into(&mut v, lower, upper);
            let fv = eval(&v, &mut evals);
            *vertex = (v, fv);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum {
        x,
        f,
        evals,
        iterations,
    }
}

/// One-dimensional minimum on `[lo, hi]`: an even scan of `n_scan + 1`
/// points, then golden-section refinement inside the best scan bracket.
pub fn scan_golden<F>(mut f: F, lo: f64, hi: f64, n_scan: usize, tol: f64) -> (f64, f64, usize)
where
    F: FnMut(f64) -> f64,
{
    let n_scan = n_scan.max(2);
    let mut evals = 0;
    let mut g = |x: f64, evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let h = (hi - lo) / n_scan as f64;
    let scan: Vec<(f64, f64)> = (0..=n_scan)
        .map(|i| {
            let x = if i == n_scan { hi } else { lo + i as f64 * h };
            (x, g(x, &mut evals))
        })
        .collect();
    let (i_best, &(mut x_best, mut f_best)) = scan
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .unwrap();
    let mut a = scan[i_best.saturating_sub(1)].0;
    let mut b = scan[(i_best + 1).min(n_scan)].0;

    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = g(c, &mut evals);
    let mut fd = g(d, &mut evals);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = g(c, &mut evals);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = g(d, &mut evals);
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v < f_best {
            x_best = x;
            f_best = v;
        }
    }
    (x_best, f_best, evals)
}

/// Root of an increasing `f` on `[lo, hi]`, started from `x0`.
///
/// Steps outward from `x0` (doubling `step`) until the sign changes, then
/// runs Illinois false position until the bracket is narrower than `tol`.
/// Without a sign change the bound in the search direction is returned.
/// Otherwise the result is the bracket end with the smaller `|f|`. The
/// evaluation count comes back alongside.
pub fn increasing_root<F>(mut f: F, lo: f64, hi: f64, x0: f64, step: f64, tol: f64, max_evals: usize) -> (f64, usize)
where
    F: FnMut(f64) -> f64,
{
    let mut evals = 1;
    let x0 = x0.clamp(lo, hi);
    let f0 = f(x0);
    if f0 == 0.0 || f0.is_nan() {
        return (x0, evals);
    }
    let dir = if f0 > 0.0 { -1.0 } else { 1.0 };
    let (mut a, mut fa) = (x0, f0);
    let mut h = step;
    let (mut b, mut fb) = loop {
        let x = (a + dir * h).clamp(lo, hi);
        let fx = f(x);
        evals += 1;
        if fx.is_nan() || (fx > 0.0) != (f0 > 0.0) || fx == 0.0 {
            break (x, fx);
        }
        if x == lo || x == hi || evals >= max_evals {
            return (x, evals);
        }
        (a, fa) = (x, fx);
        h *= 2.0;
    };
    if fb.is_nan() || fb == 0.0 {
        return (b, evals);
    }
    let mut side = 0i8;
    while (b - a).abs() > tol && evals < max_evals {
        let x = (a * fb - b * fa) / (fb - fa);
        let fx = f(x);
        evals += 1;
        if fx == 0.0 || fx.is_nan() {
            return (x, evals);
        }
        if (fx > 0.0) == (fb > 0.0) {
            (b, fb) = (x, fx);
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            (a, fa) = (x, fx);
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
    }
    (if fa.abs() <= fb.abs() { a } else { b }, evals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = SimplexOptions {
            max_evals: 5000,
            xtol: 1e-10,
            ftol: 1e-16,
            ..Default::default()
        };
        let m = nelder_mead(rosen, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{m:?}");
    }

    #[test]
    fn simplex_respects_bounds() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2) + (x[1] - 0.5).powi(2);
        let m = nelder_mead(f, &[0.5, 0.0], &[0.0, 0.0], &[1.0, 1.0], &SimplexOptions::default());
        assert!(m.x[0].abs() < 1e-6);
        assert!((m.x[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn minimax_objective() {
        // kinked objective, as in worst-of-three-tenors calibration
        let f = |x: &[f64]| (x[0] - 0.3).abs().max((x[1] - 0.7).abs() * 2.0);
        let m = nelder_mead(f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &SimplexOptions::default());
        assert!(m.f < 1e-6, "{m:?}");
    }

    #[test]
    fn golden_section() {
        let (x, fx, _) = scan_golden(|x| (x - 1.234).powi(2) + 2.0, 0.0, 3.0, 10, 1e-10);
        assert!((x - 1.234).abs() < 1e-6);
        assert!((fx - 2.0).abs() < 1e-12);
        // minimum at the boundary
        let (x, _, _) = scan_golden(|x| x, 0.5, 3.0, 10, 1e-10);
        assert!((x - 0.5).abs() < 1e-9);
    }

    #[test]
    fn increasing_root_brackets_and_clamps() {
        let (x, n) = increasing_root(|x| x * x * x - 2.0, 0.0, 4.0, 0.3, 0.1, 1e-12, 100);
        assert!((x - 2f64.cbrt()).abs() < 1e-10, "{x} after {n}");
        assert!(n < 40);
        // no sign change: nearest bound
        let (x, _) = increasing_root(|x| x + 10.0, -1.0, 1.0, 0.5, 0.1, 1e-9, 100);
        assert_eq!(x, -1.0);
        let (x, _) = increasing_root(|x| x - 10.0, -1.0, 1.0, 0.5, 0.1, 1e-9, 100);
        assert_eq!(x, 1.0);
    }

    proptest! {
        #[test]
        fn increasing_root_finds_step_edges(edge in -0.9f64..0.9, x0 in -1.0f64..1.0) {
            let (x, _) = increasing_root(|x| if x < edge { -1.0 } else { 1.0 }, -1.0, 1.0, x0, 0.05, 1e-9, 200);
            prop_assert!((x - edge).abs() < 1e-8);
        }
    }
}
