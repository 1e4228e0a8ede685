//! Cumulative default probabilities and par CDS spreads.

use crate::barrier::CrossingRecord;
use crate::error::{domain, Error, Result};

pub const DEFAULT_RECOVERY: f64 = 0.40;
pub const DEFAULT_DISCOUNT_RATE: f64 = 0.02;
/// Pricing-grid spacing: monthly, independent of the simulation step.
pub const PRICING_STEP: f64 = 1.0 / 12.0;

pub(crate) const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Recovery(f64);

impl Recovery {
    pub fn new(r: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&r) {
            return domain(format!("recovery must lie in [0, 1) (got {r})"));
        }
        Ok(Self(r))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for Recovery {
    fn default() -> Self {
        Self(DEFAULT_RECOVERY)
    }
}

/// Riskfree discounting, continuously compounded.
#[derive(Clone, Debug, PartialEq)]
pub enum DiscountCurve {
    Flat(f64),
    /// Forward rate `rates[i]` applies up to `tenors[i]`; the last rate
    /// extends beyond the last tenor.
    PiecewiseForward {
        tenors: Vec<f64>,
        rates: Vec<f64>,
    },
}

impl Default for DiscountCurve {
    fn default() -> Self {
        DiscountCurve::Flat(DEFAULT_DISCOUNT_RATE)
    }
}

impl DiscountCurve {
    pub fn piecewise(tenors: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if tenors.is_empty() || tenors.len() != rates.len() {
            return domain("piecewise discount curve needs one rate per tenor");
        }
        if tenors[0] <= 0.0 || tenors.windows(2).any(|w| w[0] >= w[1]) {
            return domain("discount tenors must be positive and increasing");
        }
        Ok(DiscountCurve::PiecewiseForward { tenors, rates })
    }

    pub fn df(&self, t: f64) -> f64 {
        match self {
            DiscountCurve::Flat(r) => (-r * t).exp(),
            DiscountCurve::PiecewiseForward { tenors, rates } => {
                let mut integral = 0.0;
                let mut prev = 0.0;
                for (&end, &r) in tenors.iter().zip(rates) {
                    if t <= end {
                        return (-(integral + r * (t - prev))).exp();
                    }
                    integral += r * (end - prev);
                    prev = end;
                }
                let last = *rates.last().unwrap();
                (-(integral + last * (t - prev))).exp()
            }
        }
    }
}

/// Monthly grid `1/12, 2/12, ...` reaching at least `max_tenor`.
pub fn pricing_grid(max_tenor: f64) -> Vec<f64> {
    let n = (max_tenor / PRICING_STEP - TIME_EPS).ceil().max(1.0) as usize;
    (1..=n).map(|i| i as f64 / 12.0).collect()
}

/// Cumulative default probability on a tenor grid.
///
/// Standard errors treat paths `{2k, 2k + 1}` as one sampling unit, which
/// matches the simulator's antithetic pairing and stays valid for
/// independent samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DefaultCurve {
    pub grid: Vec<f64>,
    pub p: Vec<f64>,
    pub se: Vec<f64>,
    pub n_paths: usize,
    /// Per path, the index of the first grid point at or after its default
    /// time (`grid.len()` if it survives the grid). Empty for curves not
    /// built from a sample.
    pub cells: Vec<u32>,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return domain("tenor grid must be non-empty, positive and strictly increasing");
    }
    Ok(())
}

/// Standard error of a path mean whose per-path value is `f(cell)`, with
/// paths grouped in consecutive pairs.
fn paired_se(cells: &[u32], f: impl Fn(u32) -> f64) -> f64 {
    let n = cells.len();
    let units = cells.chunks(2).len();
    if units < 2 {
        return 0.0;
    }
    let mean = cells.iter().map(|&c| f(c)).sum::<f64>() / n as f64;
    let ss: f64 = cells
        .chunks(2)
        .map(|u| u.iter().map(|&c| f(c) - mean).sum::<f64>().powi(2))
        .sum();
    (ss * units as f64 / (units - 1) as f64).sqrt() / n as f64
}

/// Pair-unit standard errors of every `1{cell <= k}` at once.
///
/// The sum of squares expands into cumulative sums of `s^2` and `size * s`
/// per unit, which step only at the unit's cells.
fn indicator_se(cells: &[u32], p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let n = cells.len() as f64;
    let units = cells.chunks(2).len();
    if units < 2 {
        return vec![0.0; m];
    }
    let (mut sq, mut cross) = (vec![0.0; m + 1], vec![0.0; m + 1]);
    let mut size_sq = 0.0;
    for u in cells.chunks(2) {
        if let [a, b] = *u {
            let (lo, hi) = (a.min(b) as usize, a.max(b) as usize);
            sq[lo] += 1.0;
            sq[hi] += 3.0;
            cross[lo] += 2.0;
            cross[hi] += 2.0;
            size_sq += 4.0;
        } else {
            sq[u[0] as usize] += 1.0;
            cross[u[0] as usize] += 1.0;
            size_sq += 1.0;
        }
    }
    let scale = units as f64 / (units - 1) as f64;
    let (mut s2, mut sx) = (0.0, 0.0);
    (0..m)
        .map(|k| {
            s2 += sq[k];
            sx += cross[k];
            let q = p[k];
            if q == 0.0 || q == 1.0 {
                return 0.0;
            }
            let ss = (s2 - 2.0 * q * sx + q * q * size_sq).max(0.0);
            (ss * scale).sqrt() / n
        })
        .collect()
}

impl DefaultCurve {
    /// Empirical curve from one default time per path (`inf` = survived).
    pub fn estimate(times: &[f64], grid: &[f64]) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptySample);
        }
        validate_grid(grid)?;
        let m = grid.len();
        let cells: Vec<u32> = times
            .iter()
            .map(|&t| grid.partition_point(|&g| g + TIME_EPS < t) as u32)
            .collect();
        let mut counts = vec![0usize; m + 1];
        for &c in &cells {
            counts[c as usize] += 1;
        }
        let n = times.len() as f64;
        let mut hit = 0usize;
        let mut p = Vec::with_capacity(m);
        for &c in &counts[..m] {
            hit += c;
            p.push(hit as f64 / n);
        }
        let se = indicator_se(&cells, &p);
        Ok(Self {
            grid: grid.to_vec(),
            p,
            se,
            n_paths: times.len(),
            cells,
        })
    }

    /// Curve from known probabilities (zero standard error).
    pub fn from_probabilities(grid: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        validate_grid(&grid)?;
        if grid.len() != p.len() {
            return domain("grid and probabilities differ in length");
        }
        if p.iter().any(|q| !(0.0..=1.0).contains(q)) || p.windows(2).any(|w| w[0] > w[1]) {
            return domain("probabilities must be in [0, 1] and non-decreasing");
        }
        let se = vec![0.0; p.len()];
        Ok(Self {
            grid,
            p,
            se,
            n_paths: 0,
            cells: Vec::new(),
        })
    }

    pub fn max_tenor(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }
}

/// Cumulative default probability through `level` from a crossing record.
pub fn estimate_default_curve(record: &CrossingRecord, level: f64, grid: &[f64]) -> Result<DefaultCurve> {
    DefaultCurve::estimate(&record.times_for(level)?, grid)
}

fn spread_on(grid: &[f64], p: &[f64], disc: &DiscountCurve, rec: Recovery, maturity: f64) -> Result<f64> {
    let max = grid[grid.len() - 1];
    if !(maturity > 0.0) || maturity > max + TIME_EPS {
        return Err(Error::OutOfRange { tenor: maturity, max });
    }
    if p.iter().all(|&q| q >= 1.0) {
        return Err(Error::DegenerateCredit);
    }
    let (protection, annuity) = legs(grid, p, disc, maturity);
    if !(annuity > 0.0) {
        return Err(Error::DegenerateCredit);
    }
    Ok((1.0 - rec.value()) * protection / annuity)
}

/// Protection leg per unit loss and risky annuity up to `maturity`. Both are
/// affine in `p`.
fn legs(grid: &[f64], p: &[f64], disc: &DiscountCurve, maturity: f64) -> (f64, f64) {
    let (mut t0, mut p0, mut df0) = (0.0, 0.0, 1.0);
    let mut protection = 0.0;
    let mut annuity = 0.0;
    for (&t, &q) in grid.iter().zip(p) {
        let (t1, p1) = if t >= maturity - TIME_EPS {
            (maturity, p0 + (q - p0) * (maturity - t0) / (t - t0))
        } else {
            (t, q)
        };
        let df1 = disc.df(t1);
        protection += disc.df(0.5 * (t0 + t1)) * (p1 - p0);
        annuity += 0.5 * (t1 - t0) * (df0 * (1.0 - p0) + df1 * (1.0 - p1));
        if t1 >= maturity {
            break;
        }
        (t0, p0, df0) = (t1, p1, df1);
    }
    (protection, annuity)
}

/// Delta-method standard error of the par spread estimator.
///
/// The estimated spread is `(1-R) mean(f) / mean(g)` where `f` and `g` are a
/// path's contributions to the two legs. Both depend on the path only through
/// the grid cell its default falls in, so one leg evaluation per cell gives
/// every path's linearised contribution `(f - s g) / mean(g)`.
fn spread_stderr(curve: &DefaultCurve, disc: &DiscountCurve, rec: Recovery, maturity: f64) -> f64 {
    if curve.cells.is_empty() {
        return 0.0;
    }
    let m = curve.grid.len();
    let (f, g) = legs(&curve.grid, &curve.p, disc, maturity);
    if !(g > 0.0) {
        return 0.0;
    }
    let ratio = f / g;
    // A path defaulting in cell j has the step path p = 1 on grid[j..].
    let mut step = vec![0.0; m];
    let mut h = vec![0.0; m + 1];
    h[m] = -ratio * legs(&curve.grid, &step, disc, maturity).1 / g;
    for j in (0..m).rev() {
        step[j] = 1.0;
        let (fj, gj) = legs(&curve.grid, &step, disc, maturity);
        h[j] = (fj - ratio * gj) / g;
    }
    (1.0 - rec.value()) * paired_se(&curve.cells, |c| h[c as usize])
}

/// Par spread (decimal per year) with a continuous premium leg.
///
/// Protection leg: `sum B(mid) * dP` over grid intervals. Risky annuity:
/// trapezoid rule on `B(t) * (1 - P(t))`. A maturity between grid points
/// interpolates `P` linearly.
pub fn par_spread(curve: &DefaultCurve, disc: &DiscountCurve, rec: Recovery, maturity: f64) -> Result<f64> {
    spread_on(&curve.grid, &curve.p, disc, rec, maturity)
}

/// Spreads at several tenors with a Monte Carlo standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct SpreadCurve {
    pub tenors: Vec<f64>,
    pub spreads: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl SpreadCurve {
    pub fn at(&self, tenor: f64) -> Option<(f64, f64)> {
        self.tenors
            .iter()
            .position(|&t| (t - tenor).abs() < TIME_EPS)
            .map(|i| (self.spreads[i], self.stderr[i]))
    }
}

/// Prices every tenor off one curve, with the delta-method Monte Carlo
/// standard error of each spread.
pub fn price_curve(curve: &DefaultCurve, disc: &DiscountCurve, rec: Recovery, tenors: &[f64]) -> Result<SpreadCurve> {
    let mut spreads = Vec::with_capacity(tenors.len());
    let mut stderr = Vec::with_capacity(tenors.len());
    for &t in tenors {
        spreads.push(par_spread(curve, disc, rec, t)?);
        stderr.push(spread_stderr(curve, disc, rec, t));
    }
    Ok(SpreadCurve {
        tenors: tenors.to_vec(),
        spreads,
        stderr,
    })
}

/// Default-time sample to spread curve on the monthly pricing grid.
pub fn spread_curve(default_times: &[f64], disc: &DiscountCurve, rec: Recovery, tenors: &[f64]) -> Result<SpreadCurve> {
    let max = tenors.iter().copied().fold(0.0, f64::max);
    let grid = pricing_grid(max);
    let curve = DefaultCurve::estimate(default_times, &grid)?;
    price_curve(&curve, disc, rec, tenors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn cumulative_se_matches_direct(cells in prop::collection::vec(0u32..6, 2..60)) {
            let m = 5;
            let n = cells.len() as f64;
            let p: Vec<f64> = (0..m as u32)
                .map(|k| cells.iter().filter(|&&c| c <= k).count() as f64 / n)
                .collect();
            let fast = indicator_se(&cells, &p);
            for k in 0..m as u32 {
                let q = p[k as usize];
                let direct = if q == 0.0 || q == 1.0 {
                    0.0
                } else {
                    paired_se(&cells, |c| f64::from(u8::from(c <= k)))
                };
                prop_assert!((fast[k as usize] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn estimate_edge_cases() {
        let grid = [1.0, 2.0, 3.0];
        let none = DefaultCurve::estimate(&[f64::INFINITY; 10], &grid).unwrap();
        assert_eq!(none.p, vec![0.0; 3]);
        assert_eq!(none.se, vec![0.0; 3]);
        let all = DefaultCurve::estimate(&[0.5; 10], &grid).unwrap();
        assert_eq!(all.p, vec![1.0; 3]);
        let mixed = DefaultCurve::estimate(&[0.5, 1.5, 2.0, 9.0], &grid).unwrap();
        assert_eq!(mixed.p, vec![0.25, 0.75, 0.75]);
        assert!(DefaultCurve::estimate(&[], &grid).is_err());
        assert!(DefaultCurve::estimate(&[1.0], &[2.0, 1.0]).is_err());
        assert!(DefaultCurve::estimate(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_probability_zero_spread() {
        let grid = pricing_grid(10.0);
        let c = DefaultCurve::from_probabilities(grid.clone(), vec![0.0; grid.len()]).unwrap();
        for t in [0.5, 5.0, 10.0] {
            assert_eq!(
                par_spread(&c, &DiscountCurve::default(), Recovery::default(), t).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn constant_hazard_identity() {
        let h = 0.02;
        let grid = pricing_grid(10.0);
        let p = grid.iter().map(|t| 1.0 - (-h * t).exp()).collect();
        let c = DefaultCurve::from_probabilities(grid, p).unwrap();
        let rec = Recovery::new(0.4).unwrap();
        for t in [0.5, 1.0, 2.0, 5.0, 7.5, 10.0] {
            let s = par_spread(&c, &DiscountCurve::Flat(0.0), rec, t).unwrap();
            assert_abs_diff_eq!(s, 0.012, epsilon = 1e-4);
        }
    }

    #[test]
    fn certain_default_is_degenerate() {
        let grid = pricing_grid(2.0);
        let c = DefaultCurve::from_probabilities(grid.clone(), vec![1.0; grid.len()]).unwrap();
        assert!(matches!(
            par_spread(&c, &DiscountCurve::default(), Recovery::default(), 1.0),
            Err(Error::DegenerateCredit)
        ));
    }

    #[test]
    fn maturity_outside_grid() {
        let grid = pricing_grid(2.0);
        let c = DefaultCurve::from_probabilities(grid.clone(), vec![0.1; grid.len()]).unwrap();
        let d = DiscountCurve::default();
        assert!(matches!(
            par_spread(&c, &d, Recovery::default(), 2.5),
            Err(Error::OutOfRange { .. })
        ));
        assert!(par_spread(&c, &d, Recovery::default(), 0.0).is_err());
        assert!(par_spread(&c, &d, Recovery::default(), 2.0).is_ok());
    }

    #[test]
    fn zero_rate_annuity_is_survival_integral() {
        let grid = vec![0.5, 1.0];
        let c = DefaultCurve::from_probabilities(grid, vec![0.1, 0.3]).unwrap();
        // protection 0.3, annuity 0.25*(1+0.9) + 0.25*(0.9+0.7) = 0.875
        let s = par_spread(&c, &DiscountCurve::Flat(0.0), Recovery::new(0.0).unwrap(), 1.0).unwrap();
        assert_abs_diff_eq!(s, 0.3 / 0.875, epsilon = 1e-15);
    }

    #[test]
    fn piecewise_discount() {
        let d = DiscountCurve::piecewise(vec![1.0, 2.0], vec![0.01, 0.03]).unwrap();
        assert_abs_diff_eq!(d.df(0.0), 1.0);
        assert_abs_diff_eq!(d.df(1.5), (-(0.01 + 0.015f64)).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.df(3.0), (-(0.01 + 0.03 + 0.03f64)).exp(), epsilon = 1e-15);
        assert!(DiscountCurve::piecewise(vec![2.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn pricing_grid_is_monthly() {
        let g = pricing_grid(10.0);
        assert_eq!(g.len(), 120);
        assert_eq!(g[119], 10.0);
        assert_eq!(pricing_grid(0.5).len(), 6);
    }

    proptest! {
        #[test]
        fn spread_nonnegative_and_monotone_in_earlier_default(
            times in proptest::collection::vec(0.01f64..20.0, 1..200),
            shift in 0.0f64..2.0,
            r in 0.0f64..0.08,
        ) {
            let tenors = [1.0, 3.0, 5.0, 10.0];
            let disc = DiscountCurve::Flat(r);
            let rec = Recovery::default();
            let base = spread_curve(&times, &disc, rec, &tenors);
            let earlier: Vec<f64> = times.iter().map(|t| (t - shift).max(1e-3)).collect();
            let early = spread_curve(&earlier, &disc, rec, &tenors);
            if let (Ok(b), Ok(e)) = (base, early) {
                for ((&bs, &es), &tenor) in b.spreads.iter().zip(&e.spreads).zip(&tenors) {
                    prop_assert!(bs >= 0.0);
                    prop_assert!(es >= bs - 1e-12);
                    let any = times.iter().any(|&t| t <= tenor + 1e-9);
                    prop_assert_eq!(bs > 0.0, any);
                }
            }
        }

        #[test]
        fn estimated_curve_is_bounded_and_monotone(
            times in proptest::collection::vec(prop_oneof![Just(f64::INFINITY), 0.0f64..12.0], 1..300)
        ) {
            let c = DefaultCurve::estimate(&times, &pricing_grid(10.0)).unwrap();
            prop_assert!(c.p.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!(c.p.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.se.iter().all(|s| *s >= 0.0));
        }
    }
}
