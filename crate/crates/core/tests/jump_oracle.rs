//! Jump-driven defaults against a quadrature oracle.
//!
//! With negligible volatility the firm value drifts up at `mu` and defaults
//! only at a jump. Jumps are exponential with mean `xi`, so the chance of
//! defaulting exactly at the k-th jump is a closed-form integrand over the
//! jump times. Sums of one to three jumps are integrated numerically; the
//! probability of four or more jumps by `t` bounds the remainder.

use emftd::{
    diffusion_first_passage_cdf, estimate_default_curve, simulate_crossings, Entity, PathConfig, ProcessParams,
};

const LAMBDA: f64 = 1.0;
const XI: f64 = 0.5;
const SIGMA: f64 = 1e-3;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// P(default by t) from defaults at the first, second or third jump.
fn oracle(t: f64, mu: f64) -> f64 {
    let d = |s: f64| (1.0 + mu * s) / XI;
    let n = 40;
    let first = simpson(|s| LAMBDA * (-LAMBDA * s).exp() * (-d(s)).exp(), 0.0, t, 200);
    let second = simpson(
        |s2| {
            let inner = simpson(d, 0.0, s2, n);
            LAMBDA.powi(2) * (-LAMBDA * s2).exp() * inner * (-d(s2)).exp()
        },
        0.0,
        t,
        n,
    );
    let third = simpson(
        |s3| {
            let inner = simpson(
                |s2| simpson(|s1| d(s1) * d(s2) - 0.5 * d(s1).powi(2), 0.0, s2, n),
                0.0,
                s3,
                n,
            );
            LAMBDA.powi(3) * (-LAMBDA * s3).exp() * inner * (-d(s3)).exp()
        },
        0.0,
        t,
        n,
    );
    first + second + third
}

fn four_or_more_jumps(t: f64) -> f64 {
    let m = LAMBDA * t;
    1.0 - (-m).exp() * (1.0 + m + m * m / 2.0 + m.powi(3) / 6.0)
}

#[test]
fn jump_defaults_match_quadrature() {
    let p = ProcessParams::new(SIGMA, LAMBDA, XI).unwrap();
    let n = 200_000;
    let cfg = PathConfig::new(0.5, 1.0 / 250.0, n, 11).unwrap();
    let rec = simulate_crossings(&p, &[1.0], &cfg, Entity::Custom(9)).unwrap();
    let grid = [0.1, 0.25, 0.5];
    let curve = estimate_default_curve(&rec, 1.0, &grid).unwrap();
    // volatility this small cannot reach the barrier on its own
    assert!(diffusion_first_passage_cdf(SIGMA, p.drift(), 0.05, 0.5).unwrap() < 1e-12);
    for (i, &t) in grid.iter().enumerate() {
        let exact = oracle(t, p.drift());
        let tol = 3.0 * curve.se[i] + four_or_more_jumps(t);
        assert!(
            (curve.p[i] - exact).abs() <= tol,
            "t={t}: mc {} oracle {exact} tol {tol}",
            curve.p[i]
        );
    }
}

#[test]
fn quadrature_matches_single_jump_limit() {
    // first-jump term alone with no drift: lambda (1 - e^{-lambda t}) e^{-1/xi} / lambda
    let t = 0.3;
    let d0 = (-1.0 / XI).exp();
    let first = simpson(|s| LAMBDA * (-LAMBDA * s).exp() * d0, 0.0, t, 200);
    assert!((first - (1.0 - (-LAMBDA * t).exp()) * d0).abs() < 1e-12);
}
