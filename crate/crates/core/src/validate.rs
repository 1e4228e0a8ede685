//! Self-check report over the engine's invariants.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::barrier::{
    count_jumps, diffusion_first_passage_cdf, simulate_crossings, terminal_values_with_drift, Entity, PathConfig,
    ProcessParams,
};
use crate::basket::{em_corporate_curve, BasketConfig, PricingSetup};
use crate::curve_fit::{fit_sector, interpolate_grade_spread, ParametricSpreadCurve, Quote};
use crate::default_curve::{estimate_default_curve, spread_curve, DiscountCurve, Recovery};
use crate::error::Result;
use crate::rating::{Broad, RatingGrade, RatingSchemes};
use crate::rng::pair_units;

/// Sample size below which the precision check is not meaningful.
pub const PRECISION_MIN_PATHS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub status: Status,
    pub measured: f64,
    pub threshold: f64,
}

impl CheckResult {
    fn at_most(check: &str, measured: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            status: if measured <= threshold {
                Status::Pass
            } else {
                Status::Fail
            },
            measured,
            threshold,
        }
    }

    fn skipped(check: &str, threshold: f64) -> Self {
        Self {
            check: check.into(),
            status: Status::Skipped,
            measured: f64::NAN,
            threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidateOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    /// Added to the martingale drift in the martingale check only.
    pub drift_bias: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            seed: 1,
            dt: crate::barrier::DEFAULT_DT,
            drift_bias: 0.0,
        }
    }
}

fn brazil() -> ProcessParams {
    ProcessParams::new(0.32, 0.5, 0.25).expect("valid")
}

/// Largest `|mean(e^X_T) - 1|` in standard errors over `T` in {1, 5, 10}.
pub fn martingale_z(params: &ProcessParams, opts: &ValidateOptions) -> Result<f64> {
    let times = [1.0, 5.0, 10.0];
    let cfg = PathConfig::new(1.0, opts.dt, opts.n_paths, opts.seed)?.with_horizon(10.0);
    let mu = params.drift() + opts.drift_bias;
    let x = terminal_values_with_drift(params, mu, &cfg, Entity::Country, &times)?;
    let mut worst: f64 = 0.0;
    for j in 0..times.len() {
        let v: Vec<f64> = x.iter().skip(j).step_by(times.len()).map(|x| x.exp()).collect();
        let (mean, se) = pair_units(&v);
        worst = worst.max((mean - 1.0).abs() / se);
    }
    Ok(worst)
}

fn oracle_check(opts: &ValidateOptions) -> Result<CheckResult> {
    let p = ProcessParams::new(0.2, 0.0, 0.25)?;
    let cfg = PathConfig::new(1.0, opts.dt, opts.n_paths, opts.seed)?.with_horizon(10.0);
    let rec = simulate_crossings(&p, &[1.0], &cfg, Entity::Custom(1))?;
    let grid: Vec<f64> = (1..=10).map(f64::from).collect();
    let curve = estimate_default_curve(&rec, 1.0, &grid)?;
    let mut worst: f64 = 0.0;
    for (i, &t) in grid.iter().enumerate() {
        let exact = diffusion_first_passage_cdf(0.2, p.drift(), 1.0, t)?;
        // With no sampled default the sample SE is zero; fall back to the
        // binomial SE at the exact probability.
        let se = if curve.se[i] > 0.0 {
            curve.se[i]
        } else {
            (exact * (1.0 - exact) / opts.n_paths as f64).sqrt()
        };
        let tol = (3.0 * se).max(0.01 * exact);
        worst = worst.max((curve.p[i] - exact).abs() / tol);
    }
    Ok(CheckResult::at_most("oracle_lambda0", worst, 1.0))
}

fn monotone_check(opts: &ValidateOptions) -> Result<CheckResult> {
    let p = ProcessParams::new(0.16, 0.5, 0.27)?;
    let cfg = PathConfig::new(1.0, opts.dt, opts.n_paths.min(20_000), opts.seed)?.with_horizon(10.0);
    let rec = simulate_crossings(&p, &[0.85, 1.0, 1.2, 1.45], &cfg, Entity::Corporate)?;
    let violations = (0..rec.n_paths())
        .filter(|&i| rec.path(i).windows(2).any(|w| w[0] > w[1]))
        .count();
    Ok(CheckResult::at_most("barrier_monotonicity", violations as f64, 0.0))
}

fn jump_check(opts: &ValidateOptions) -> Result<CheckResult> {
    let lambda = 0.25;
    let horizon = 10.0;
    let p = ProcessParams::new(0.16, lambda, 0.27)?;
    let cfg = PathConfig::new(1.0, opts.dt, opts.n_paths, opts.seed)?.with_horizon(horizon);
    let counts = count_jumps(&p, &cfg, Entity::Corporate)?;
    let per_year: Vec<f64> = counts.iter().map(|&c| f64::from(c) / horizon).collect();
    let (rate, se) = pair_units(&per_year);
    Ok(CheckResult::at_most("jump_frequency", (rate - lambda).abs() / se, 3.0))
}

fn determinism_check(opts: &ValidateOptions) -> Result<CheckResult> {
    let p = brazil();
    let cfg = PathConfig::new(1.0, opts.dt, opts.n_paths.min(20_000), opts.seed)?.with_horizon(2.0);
    let run = |threads: usize| -> Result<crate::barrier::CrossingRecord> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::error::Error::InvalidInput(e.to_string()))?;
        pool.install(|| simulate_crossings(&p, &[1.0, 1.2], &cfg, Entity::Country))
    };
    let same = run(1)? == run(3)? && run(1)? == simulate_crossings(&p, &[1.0, 1.2], &cfg, Entity::Country)?;
    Ok(CheckResult::at_most("determinism", if same { 0.0 } else { 1.0 }, 0.0))
}

fn precision_check(opts: &ValidateOptions) -> Result<CheckResult> {
    let threshold = 0.005;
    if opts.n_paths < PRECISION_MIN_PATHS {
        return Ok(CheckResult::skipped("precision_5y", threshold));
    }
    let cfg = PathConfig::new(1.0, opts.dt, opts.n_paths, opts.seed)?.with_horizon(5.0);
    let rec = simulate_crossings(&brazil(), &[1.0], &cfg, Entity::Country)?;
    let curve = spread_curve(
        &rec.times_for(1.0)?,
        &DiscountCurve::default(),
        Recovery::default(),
        &[5.0],
    )?;
    Ok(CheckResult::at_most(
        "precision_5y",
        curve.stderr[0] / curve.spreads[0],
        threshold,
    ))
}

/// Fig. 1 row parameters: the Food sector against Brazil.
pub fn table1_row1_sectors() -> BTreeMap<RatingGrade, ProcessParams> {
    let schemes = RatingSchemes::default();
    [
        (Broad::A, 0.18),
        (Broad::Bbb, 0.16),
        (Broad::Bb, 0.16),
        (Broad::B, 0.15),
    ]
    .into_iter()
    .map(|(b, sigma)| {
        let g = RatingGrade::broad_grade(b);
        (g, ProcessParams::new(sigma, schemes.lambda(g), 0.27).expect("valid"))
    })
    .collect()
}

fn basket_checks(opts: &ValidateOptions) -> Result<Vec<CheckResult>> {
    let tenors = [0.5, 1.0, 2.0, 5.0, 10.0];
    let cfg = PathConfig::new(1.0, opts.dt, opts.n_paths, opts.seed)?;
    let disc = DiscountCurve::default();
    let curves = em_corporate_curve(
        &brazil(),
        &table1_row1_sectors(),
        &[],
        &RatingSchemes::default(),
        &BasketConfig::default(),
        PricingSetup {
            cfg: &cfg,
            disc: &disc,
            rec: Recovery::default(),
            tenors: &tenors,
        },
    )?;
    let mut violations = 0usize;
    for g in &curves.grades {
        for i in 0..tenors.len() {
            if !(g.standalone.spreads[i] <= g.em.spreads[i] && g.em.spreads[i] <= g.ftd.spreads[i]) {
                violations += 1;
            }
        }
    }
    let five: Vec<f64> = curves
        .grades
        .iter()
        .map(|g| g.em.at(5.0).map_or(f64::NAN, |s| s.0))
        .collect();
    let disorder = five.windows(2).filter(|w| !(w[0] < w[1])).count();
    Ok(vec![
        CheckResult::at_most("mftd_ordering", violations as f64, 0.0),
        CheckResult::at_most("rating_order_5y", disorder as f64, 0.0),
    ])
}

fn curve_fit_check() -> Result<CheckResult> {
    let params = [
        (Broad::A, (0.008f64.ln(), 0.004f64.ln())),
        (Broad::Bbb, (0.015f64.ln(), 0.006f64.ln())),
        (Broad::Bb, (0.03f64.ln(), 0.015f64.ln())),
        (Broad::B, (0.05f64.ln(), 0.03f64.ln())),
    ];
    let truth = ParametricSpreadCurve::new(0.35, params.into_iter().collect())?;
    let mut quotes = Vec::new();
    for g in RatingGrade::all() {
        for t in [1.0, 2.0, 3.0, 5.0, 7.0, 10.0] {
            quotes.push(Quote::new(t, interpolate_grade_spread(&truth, g, t)?, g)?);
        }
    }
    let fit = fit_sector(&quotes)?;
    let worst = fit.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(CheckResult::at_most("curve_fit_round_trip", worst, 1e-6))
}

/// Runs every check. Failures are report content, not errors; an error
/// means a check could not run at all.
pub fn run_checks(opts: &ValidateOptions) -> Result<Vec<CheckResult>> {
    let mut out = vec![CheckResult::at_most("martingale", martingale_z(&brazil(), opts)?, 3.0)];
    out.push(oracle_check(opts)?);
    out.push(monotone_check(opts)?);
    out.push(jump_check(opts)?);
    out.push(determinism_check(opts)?);
    out.push(precision_check(opts)?);
    out.extend(basket_checks(opts)?);
    out.push(curve_fit_check()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_fault_is_detected() {
        let opts = ValidateOptions {
            n_paths: 20_000,
            dt: 1.0 / 50.0,
            ..Default::default()
        };
        let clean = martingale_z(&brazil(), &opts).unwrap();
        let biased = martingale_z(
            &brazil(),
            &ValidateOptions {
                drift_bias: 0.01,
                ..opts.clone()
            },
        )
        .unwrap();
        assert!(clean <= 3.0, "{clean}");
        assert!(biased > 3.0, "{biased}");
    }

    #[test]
    fn precision_is_skipped_for_small_samples() {
        let opts = ValidateOptions {
            n_paths: 1000,
            ..Default::default()
        };
        assert_eq!(precision_check(&opts).unwrap().status, Status::Skipped);
    }

    #[test]
    fn curve_fit_check_passes() {
        assert_eq!(curve_fit_check().unwrap().status, Status::Pass);
    }
}
