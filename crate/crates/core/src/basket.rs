//! Two-barrier basket default time and EM corporate curves.
//!
//! The basket defaults at `min(tau_a(L*_a), tau_c(L*_c))`: the corporate
//! crossing its own barrier at depth `L*_a`, or the country crossing a deeper
//! barrier `L*_c`. Plain first-to-default is `L*_a = L*_c = 1`; the modified
//! form keeps `L*_a = 1` and takes `L*_c` from the rating table; the
//! quasi-sovereign form uses `L*_c = 1`; `L*_a < 1` moves the corporate
//! barrier closer. `L*_c = inf` switches the country off.

use std::collections::BTreeMap;

use crate::barrier::{simulate_crossings, CrossingRecord, Entity, PathConfig, ProcessParams, NEVER};
use crate::default_curve::{price_curve, pricing_grid, DefaultCurve, DiscountCurve, Recovery, SpreadCurve};
use crate::error::{domain, Error, Result};
use crate::rating::{RatingGrade, RatingSchemes};

pub const DEFAULT_RHO: f64 = 0.80;
/// Corporate barrier depth used for sectors flagged for repricing.
pub const EXTENSION1_LSTAR_A: f64 = 0.85;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasketSpec {
    pub lstar_a: f64,
    pub lstar_c: f64,
    pub rho: f64,
}

impl BasketSpec {
    pub fn new(lstar_a: f64, lstar_c: f64, rho: f64) -> Result<Self> {
        let spec = Self { lstar_a, lstar_c, rho };
        spec.validate()?;
        Ok(spec)
    }

    /// Modified first-to-default with the default correlation.
    pub fn mftd(lstar_c: f64) -> Self {
        Self {
            lstar_a: 1.0,
            lstar_c,
            rho: DEFAULT_RHO,
        }
    }

    pub fn plain_ftd() -> Self {
        Self::mftd(1.0)
    }

    /// Country at the single-name barrier, corporate pushed deeper.
    pub fn quasi_sovereign(lstar_a: f64) -> Self {
        Self {
            lstar_a,
            lstar_c: 1.0,
            rho: DEFAULT_RHO,
        }
    }

    /// The country never triggers.
    pub fn standalone() -> Self {
        Self::mftd(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lstar_a > 0.0 && self.lstar_a.is_finite()) {
            return domain(format!("L*_a must be positive and finite (got {})", self.lstar_a));
        }
        if !(self.lstar_c > 0.0) {
            return domain(format!("L*_c must be positive (got {})", self.lstar_c));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return domain(format!("rho={} outside [-1, 1]", self.rho));
        }
        Ok(())
    }
}

/// Per-path basket default time from joint corporate and country records.
///
/// Both records must come from the same joint scenario (same path count).
/// The country record is not consulted when `L*_c` is infinite.
pub fn basket_default_samples(
    corporate: &CrossingRecord,
    country: &CrossingRecord,
    spec: &BasketSpec,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let tau_a = corporate.times_for(spec.lstar_a)?;
    if spec.lstar_c.is_infinite() {
        return Ok(tau_a);
    }
    if corporate.n_paths() != country.n_paths() {
        return Err(Error::InvalidInput(format!(
            "corporate and country records differ in path count ({} vs {})",
            corporate.n_paths(),
            country.n_paths()
        )));
    }
    let tau_c = country.times_for(spec.lstar_c)?;
    Ok(tau_a.iter().zip(&tau_c).map(|(a, c)| a.min(*c)).collect())
}

/// How the basket is assembled for each rating.
#[derive(Clone, Debug, PartialEq)]
pub struct BasketConfig {
    pub rho: f64,
    /// Corporate barrier depth for ratings without the extension applied.
    pub lstar_a: f64,
    pub extension1: bool,
    /// Ratings the extension applies to; `None` means all.
    pub extension1_grades: Option<Vec<RatingGrade>>,
    /// Country barrier at 1 for every rating instead of the table.
    pub quasi_sovereign: bool,
}

impl Default for BasketConfig {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            lstar_a: 1.0,
            extension1: false,
            extension1_grades: None,
            quasi_sovereign: false,
        }
    }
}

impl BasketConfig {
    pub fn spec_for(&self, grade: RatingGrade, schemes: &RatingSchemes) -> BasketSpec {
        let extended = self.extension1 && self.extension1_grades.as_ref().is_none_or(|gs| gs.contains(&grade));
        BasketSpec {
            lstar_a: if extended { EXTENSION1_LSTAR_A } else { self.lstar_a },
            lstar_c: if self.quasi_sovereign {
                1.0
            } else {
                schemes.lstar_c(grade)
            },
            rho: self.rho,
        }
    }
}

/// Curves for one rating on common random numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct GradeCurves {
    pub grade: RatingGrade,
    pub spec: BasketSpec,
    /// Corporate alone at barrier 1.
    pub standalone: SpreadCurve,
    /// Plain first-to-default with the country.
    pub ftd: SpreadCurve,
    /// The configured basket.
    pub em: SpreadCurve,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmCurves {
    pub tenors: Vec<f64>,
    pub country: SpreadCurve,
    pub grades: Vec<GradeCurves>,
}

/// Pricing inputs shared by every rating.
#[derive(Clone, Copy, Debug)]
pub struct PricingSetup<'a> {
    pub cfg: &'a PathConfig,
    pub disc: &'a DiscountCurve,
    pub rec: Recovery,
    pub tenors: &'a [f64],
}

fn sorted_levels(levels: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = levels.into_iter().filter(|l| l.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    v
}

/// Rating-indexed EM corporate curves over one country.
///
/// The country leg is simulated once with every barrier any rating needs,
/// mixed with the corporate Brownian drivers at `rho`; each rating then
/// simulates its corporate on the same corporate streams, so all ratings and
/// all three curve families share common random numbers. The reported country
/// curve is the country on its own streams, which does not depend on `rho`.
pub fn em_corporate_curve(
    country: &ProcessParams,
    sectors: &BTreeMap<RatingGrade, ProcessParams>,
    grades: &[RatingGrade],
    schemes: &RatingSchemes,
    basket: &BasketConfig,
    setup: PricingSetup<'_>,
) -> Result<EmCurves> {
    let grades: Vec<RatingGrade> = if grades.is_empty() {
        sectors.keys().copied().collect()
    } else {
        grades.to_vec()
    };
    if grades.is_empty() {
        return Err(Error::MissingParameters("no rating parameters supplied".into()));
    }
    for g in &grades {
        if !sectors.contains_key(g) {
            return Err(Error::MissingParameters(format!("no sector parameters for {g}")));
        }
    }
    let max_tenor = setup.tenors.iter().copied().fold(0.0, f64::max);
    if !(max_tenor > 0.0) {
        return domain("at least one positive tenor is required");
    }
    let cfg = setup.cfg.with_horizon(max_tenor);
    let grid = pricing_grid(max_tenor);
    let price = |times: &[f64]| -> Result<SpreadCurve> {
        price_curve(
            &DefaultCurve::estimate(times, &grid)?,
            setup.disc,
            setup.rec,
            setup.tenors,
        )
    };

    let specs: Vec<BasketSpec> = grades.iter().map(|g| basket.spec_for(*g, schemes)).collect();
    for s in &specs {
        s.validate()?;
    }

    let own_country = simulate_crossings(country, &[1.0], &cfg, Entity::Country)?;
    let country_curve = price(&own_country.times_for(1.0)?)?;

    let country_levels = sorted_levels(std::iter::once(1.0).chain(specs.iter().map(|s| s.lstar_c)));
    let country_leg = crate::barrier::simulate_country_leg(country, basket.rho, &country_levels, &cfg)?;
    let country_at_1 = country_leg.times_for(1.0)?;

    let mut out = Vec::with_capacity(grades.len());
    for (grade, spec) in grades.iter().zip(&specs) {
        let corp_levels = sorted_levels([1.0, spec.lstar_a]);
        let corp = simulate_crossings(&sectors[grade], &corp_levels, &cfg, Entity::Corporate)?;
        let tau_a = corp.times_for(1.0)?;
        let ftd: Vec<f64> = tau_a.iter().zip(&country_at_1).map(|(a, c)| a.min(*c)).collect();
        let em = basket_default_samples(&corp, &country_leg, spec)?;
        out.push(GradeCurves {
            grade: *grade,
            spec: *spec,
            standalone: price(&tau_a)?,
            ftd: price(&ftd)?,
            em: price(&em)?,
        });
    }
    Ok(EmCurves {
        tenors: setup.tenors.to_vec(),
        country: country_curve,
        grades: out,
    })
}

/// Whether any path in `times` defaults within the horizon.
pub fn any_default(times: &[f64]) -> bool {
    times.iter().any(|&t| t != NEVER)
}
