//! Nine-parameter sector curve `s_k(T) = e^{a_k} + e^{b_k - theta T}`.
//!
//! For a fixed `theta` every quote is linear in `(e^{a_k}, e^{b_k})`, so the
//! fit is a weighted linear least-squares problem in those eight amplitudes
//! nested inside a one-dimensional search over `theta`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::optim::scan_golden;
use crate::rating::{Broad, RatingGrade};

pub const THETA_MIN: f64 = 0.05;
pub const THETA_MAX: f64 = 2.0;
pub const MAX_QUOTE_TENOR: f64 = 30.0;
pub const MAX_QUOTE_SPREAD: f64 = 0.5;

/// Smallest amplitude a fitted `e^a` or `e^b` may take.
const AMPLITUDE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Quote {
    pub tenor: f64,
    pub spread: f64,
    pub grade: RatingGrade,
    pub weight: f64,
}

impl Quote {
    pub fn new(tenor: f64, spread: f64, grade: RatingGrade) -> Result<Self> {
        Self::weighted(tenor, spread, grade, 1.0)
    }

    pub fn weighted(tenor: f64, spread: f64, grade: RatingGrade, weight: f64) -> Result<Self> {
        if !(tenor > 0.0 && tenor <= MAX_QUOTE_TENOR) {
            return Err(Error::InvalidInput(format!("quote tenor {tenor} outside (0, 30]")));
        }
        if !(spread > 0.0 && spread < MAX_QUOTE_SPREAD) {
            return Err(Error::InvalidInput(format!("quote spread {spread} outside (0, 0.5)")));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidInput(format!("quote weight {weight} must be positive")));
        }
        Ok(Self {
            tenor,
            spread,
            grade,
            weight,
        })
    }
}

pub fn eval_parametric(a: f64, b: f64, theta: f64, t: f64) -> f64 {
    a.exp() + (b - theta * t).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricSpreadCurve {
    pub theta: f64,
    /// `(a, b)` per fitted broad rating.
    pub params: BTreeMap<Broad, (f64, f64)>,
}

impl ParametricSpreadCurve {
    pub fn new(theta: f64, params: BTreeMap<Broad, (f64, f64)>) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidInput(format!("theta must be positive (got {theta})")));
        }
        Ok(Self { theta, params })
    }

    pub fn broad_spread(&self, broad: Broad, t: f64) -> Option<f64> {
        self.params
            .get(&broad)
            .map(|&(a, b)| eval_parametric(a, b, self.theta, t))
    }
}

/// Spread for any grade, mixing adjacent broad curves notch-linearly.
pub fn interpolate_grade_spread(curve: &ParametricSpreadCurve, grade: RatingGrade, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("tenor {t} must be non-negative")));
    }
    let weights = grade.broad_weights_with(|b| curve.params.contains_key(&b));
    let mut s = 0.0;
    for (b, w) in weights {
        let v = curve
            .broad_spread(b, t)
            .ok_or_else(|| Error::MissingParameters(format!("no fitted {} curve for grade {grade}", b.as_str())))?;
        s += w * v;
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectorFit {
    pub curve: ParametricSpreadCurve,
    /// Relative error `(model - quote) / quote` per input quote; NaN where the
    /// quote was not used.
    pub residuals: Vec<f64>,
    /// Weighted root-mean-square relative error over the quotes used.
    pub rms_relative_error: f64,
    pub excluded: Vec<Broad>,
    pub diagnostics: Vec<String>,
}

struct Design<'a> {
    quotes: Vec<&'a Quote>,
    /// Per used quote: `(column pair index, weight)`.
    mix: Vec<Vec<(usize, f64)>>,
    n_cols: usize,
}

impl Design<'_> {
    fn matrix(&self, theta: f64) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.quotes.len();
        let mut m = DMatrix::zeros(n, self.n_cols);
        let mut y = DVector::zeros(n);
        for (i, (q, mix)) in self.quotes.iter().zip(&self.mix).enumerate() {
            let sw = q.weight.sqrt();
            let decay = (-theta * q.tenor).exp();
            for &(k, w) in mix {
                m[(i, 2 * k)] += sw * w / q.spread;
                m[(i, 2 * k + 1)] += sw * w * decay / q.spread;
            }
            y[i] = sw;
        }
        (m, y)
    }

    /// Least-squares amplitudes with non-negativity by active-set clamping,
    /// and the weighted sum of squared relative errors.
    fn solve(&self, theta: f64) -> (Vec<f64>, f64) {
        let (m, y) = self.matrix(theta);
        let mut fixed = vec![false; self.n_cols];
        let mut x = vec![AMPLITUDE_FLOOR; self.n_cols];
        for _ in 0..=self.n_cols {
            let free: Vec<usize> = (0..self.n_cols).filter(|&j| !fixed[j]).collect();
            if free.is_empty() {
                break;
            }
            let mut rhs = y.clone();
            for j in (0..self.n_cols).filter(|&j| fixed[j]) {
                rhs -= m.column(j) * AMPLITUDE_FLOOR;
            }
            let sub = m.select_columns(&free);
            let sol = match sub.svd(true, true).solve(&rhs, 1e-13) {
                Ok(s) => s,
                Err(_) => break,
            };
            let mut any_neg = false;
            for (&j, &v) in free.iter().zip(sol.iter()) {
                if v <= AMPLITUDE_FLOOR {
                    fixed[j] = true;
                    any_neg = true;
                }
                x[j] = v.max(AMPLITUDE_FLOOR);
            }
            if !any_neg {
                break;
            }
        }
        let xv = DVector::from_column_slice(&x);
        let sse = (&m * xv - &y).norm_squared();
        (x, sse)
    }

    fn rank(&self, theta: f64) -> usize {
        let (m, _) = self.matrix(theta);
        let sv = m.singular_values();
        let top = sv.iter().copied().fold(0.0, f64::max);
        sv.iter().filter(|&&s| s > top * 1e-10).count()
    }
}

/// Fits the sector curve to quotes by weighted least squares on relative error.
///
/// A broad rating is fitted when quotes carrying its letter span at least two
/// distinct tenors; other ratings are excluded with a diagnostic, and quotes
/// that need an excluded rating are dropped.
pub fn fit_sector(quotes: &[Quote]) -> Result<SectorFit> {
    if quotes.is_empty() {
        return Err(Error::Underdetermined("no quotes to fit".into()));
    }
    let tenors_of = |b: Broad| -> BTreeSet<u64> {
        quotes
            .iter()
            .filter(|q| q.grade.broad() == b)
            .map(|q| q.tenor.to_bits())
            .collect()
    };
    let all_tenors: BTreeSet<u64> = quotes.iter().map(|q| q.tenor.to_bits()).collect();
    if all_tenors.len() < 2 {
        return Err(Error::Underdetermined(
            "all quotes share one tenor; theta is unidentifiable".into(),
        ));
    }

    let mut diagnostics = Vec::new();
    let mut fitted = Vec::new();
    let mut excluded = Vec::new();
    for b in Broad::ALL {
        let n = tenors_of(b).len();
        if n >= 2 {
            fitted.push(b);
        } else if n == 1 {
            excluded.push(b);
            diagnostics.push(format!(
                "rating {} excluded: quotes at a single tenor cannot fix its curve",
                b.as_str()
            ));
        }
    }
    if fitted.is_empty() {
        return Err(Error::Underdetermined(
            "no rating has quotes at two distinct tenors".into(),
        ));
    }
    let col = |b: Broad| fitted.iter().position(|&f| f == b);

    let mut used = Vec::new();
    let mut mix = Vec::new();
    let mut used_idx = Vec::new();
    for (i, q) in quotes.iter().enumerate() {
        if col(q.grade.broad()).is_none() {
            continue;
        }
        let weights = q.grade.broad_weights_with(|b| col(b).is_some());
        used.push(q);
        used_idx.push(i);
        mix.push(weights.into_iter().map(|(b, w)| (col(b).unwrap(), w)).collect());
    }
    let dropped = quotes.len() - used.len();
    if dropped > 0 {
        diagnostics.push(format!("{dropped} quote(s) dropped with their excluded rating"));
    }
    let design = Design {
        quotes: used,
        mix,
        n_cols: 2 * fitted.len(),
    };

    let (theta, _, _) = scan_golden(|theta| design.solve(theta).1, THETA_MIN, THETA_MAX, 40, 1e-12);
    if design.rank(theta) < design.n_cols {
        return Err(Error::Underdetermined(format!(
            "design matrix is rank deficient at theta={theta:.4}"
        )));
    }
    let (amps, sse) = design.solve(theta);
    let params: BTreeMap<Broad, (f64, f64)> = fitted
        .iter()
        .enumerate()
        .map(|(k, &b)| (b, (amps[2 * k].ln(), amps[2 * k + 1].ln())))
        .collect();
    let curve = ParametricSpreadCurve::new(theta, params)?;

    let mut residuals = vec![f64::NAN; quotes.len()];
    for (&i, q) in used_idx.iter().zip(&design.quotes) {
        residuals[i] = interpolate_grade_spread(&curve, q.grade, q.tenor)? / q.spread - 1.0;
    }
    let wsum: f64 = design.quotes.iter().map(|q| q.weight).sum();
    let rms = (sse / wsum).sqrt();

    for w in fitted.windows(2) {
        let (hi, lo) = (curve.broad_spread(w[0], 5.0), curve.broad_spread(w[1], 5.0));
        if let (Some(hi), Some(lo)) = (hi, lo) {
            if lo < hi {
                diagnostics.push(format!(
                    "warning: {} curve below {} at 5y ({:.6} < {:.6})",
                    w[1].as_str(),
                    w[0].as_str(),
                    lo,
                    hi
                ));
            }
        }
    }
    Ok(SectorFit {
        curve,
        residuals,
        rms_relative_error: rms,
        excluded,
        diagnostics,
    })
}
