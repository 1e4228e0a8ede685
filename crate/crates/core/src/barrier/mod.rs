//! Jump-diffusion log-firm-value paths and first-passage times.
//!
//! Each entity follows `dX = sigma dW - xi dJ + mu dt` with `X_0 = 0`, where
//! `J` is a compound Poisson process of rate `lambda` with unit-mean
//! exponential marks, so jumps are downward with mean size `xi`. The drift
//! `mu` makes `exp(X)` a martingale. Default is the first time `X` drops
//! strictly below `-L`.
//!
//! Simulation is exact in law for a single name: Brownian values are drawn
//! on a fixed grid, jump times are exact exponential arrivals bridged into
//! the grid, and barrier crossings between observed points use the
//! Brownian-bridge crossing probability.

mod crossing;
mod path;

pub use crossing::{
    count_jumps, pair_terminal_values, simulate_crossings, simulate_pair_crossings, terminal_values, CrossingRecord,
    PairCrossings, PairTerminals, NEVER,
};
pub(crate) use crossing::{simulate_country_leg, terminal_values_with_drift};
pub use path::DriverSet;

use crate::error::{domain, Result};
use libm::erfc;

pub const SIGMA_MAX: f64 = 2.0;
pub const XI_MAX: f64 = 2.0;
pub const LAMBDA_MAX: f64 = 4.0;

/// Diffusion grid step used unless configured otherwise.
pub const DEFAULT_DT: f64 = 1.0 / 250.0;

/// Drift making `exp(X)` a martingale: `-sigma^2/2 + lambda*xi/(1+xi)`.
pub fn martingale_drift(sigma: f64, lambda: f64, xi: f64) -> Result<f64> {
    if !(sigma >= 0.0) || !(lambda >= 0.0) {
        return domain(format!(
            "sigma and lambda must be non-negative (sigma={sigma}, lambda={lambda})"
        ));
    }
    if !(xi > 0.0) {
        if lambda > 0.0 {
            return domain(format!("xi must be positive when lambda > 0 (xi={xi})"));
        }
        return Ok(-0.5 * sigma * sigma);
    }
    Ok(-0.5 * sigma * sigma + lambda * xi / (1.0 + xi))
}

/// Parameters of one entity's log-firm-value process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessParams {
    sigma: f64,
    lambda: f64,
    xi: f64,
}

impl ProcessParams {
    pub fn new(sigma: f64, lambda: f64, xi: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma <= SIGMA_MAX) {
            return domain(format!("sigma={sigma} outside (0, {SIGMA_MAX}]"));
        }
        if !(xi > 0.0 && xi <= XI_MAX) {
            return domain(format!("xi={xi} outside (0, {XI_MAX}]"));
        }
        if !(0.0..=LAMBDA_MAX).contains(&lambda) {
            return domain(format!("lambda={lambda} outside [0, {LAMBDA_MAX}]"));
        }
        Ok(Self { sigma, lambda, xi })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn drift(&self) -> f64 {
        -0.5 * self.sigma * self.sigma + self.lambda * self.xi / (1.0 + self.xi)
    }

    pub fn with_sigma_xi(&self, sigma: f64, xi: f64) -> Result<Self> {
        Self::new(sigma, self.lambda, xi)
    }
}

/// Simulation grid and sample size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl PathConfig {
    pub fn new(horizon: f64, dt: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            horizon,
            dt,
            n_paths,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return domain(format!("dt must be positive (dt={})", self.dt));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return domain(format!("horizon must be positive (horizon={})", self.horizon));
        }
        let steps = (self.horizon / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return domain(format!("horizon {} is not a multiple of dt {}", self.horizon, self.dt));
        }
        if self.n_paths == 0 {
            return domain("n_paths must be at least 1");
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Same sample with a different horizon, rounded up to the grid.
    pub fn with_horizon(&self, horizon: f64) -> Self {
        let steps = (horizon / self.dt - 1e-9).ceil().max(1.0);
        Self {
            horizon: steps * self.dt,
            ..*self
        }
    }
}

/// Which independent family of random streams an entity draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Entity {
    Corporate,
    Country,
    Custom(u64),
}

impl Entity {
    pub fn id(self) -> u64 {
        match self {
            Entity::Corporate => 0xC0,
            Entity::Country => 0xCC,
            Entity::Custom(id) => 0x1_0000 + id,
        }
    }
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

fn ln_std_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        std_normal_cdf(z).ln()
    } else {
        // asymptotic tail
        -0.5 * z * z - (-z).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (-1.0 / (z * z)).ln_1p()
    }
}

/// Probability that `mu*t + sigma*W_t` has gone below `-level` by time `t`.
pub fn diffusion_first_passage_cdf(sigma: f64, mu: f64, level: f64, t: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return domain(format!("sigma must be positive (sigma={sigma})"));
    }
    if !(level > 0.0) || !(t >= 0.0) {
        return domain(format!("need level > 0 and t >= 0 (level={level}, t={t})"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let sd = sigma * t.sqrt();
    let first = std_normal_cdf((-level - mu * t) / sd);
    let log_second = -2.0 * mu * level / (sigma * sigma) + ln_std_normal_cdf((-level + mu * t) / sd);
    Ok((first + log_second.exp()).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn drift_examples() {
        assert_eq!(martingale_drift(0.0, 0.0, 0.25).unwrap(), 0.0);
        assert_abs_diff_eq!(martingale_drift(0.2, 0.5, 0.25).unwrap(), 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(martingale_drift(0.32, 0.5, 0.25).unwrap(), 0.0488, epsilon = 1e-15);
        assert!(martingale_drift(0.2, 0.5, 0.0).is_err());
        assert!(martingale_drift(0.2, 0.5, -0.1).is_err());
    }

    #[test]
    fn params_box() {
        assert!(ProcessParams::new(0.0, 0.5, 0.25).is_err());
        assert!(ProcessParams::new(2.01, 0.5, 0.25).is_err());
        assert!(ProcessParams::new(0.2, 4.5, 0.25).is_err());
        assert!(ProcessParams::new(0.2, -0.1, 0.25).is_err());
        assert!(ProcessParams::new(0.2, 0.5, 0.0).is_err());
        assert!(ProcessParams::new(0.2, 0.5, 2.5).is_err());
        let p = ProcessParams::new(2.0, 4.0, 2.0).unwrap();
        assert_eq!(p.drift(), martingale_drift(2.0, 4.0, 2.0).unwrap());
    }

    #[test]
    fn path_config_rejects_off_grid_horizon() {
        assert!(PathConfig::new(10.0, 1.0 / 250.0, 10, 0).is_ok());
        assert!(PathConfig::new(10.0, 0.3, 10, 0).is_err());
        assert!(PathConfig::new(10.0, 0.0, 10, 0).is_err());
        assert!(PathConfig::new(10.0, 0.5, 0, 0).is_err());
        let c = PathConfig::new(1.0, 1.0 / 12.0, 1, 0).unwrap().with_horizon(2.05);
        assert_eq!(c.n_steps(), 25);
    }

    #[test]
    fn first_passage_cdf_examples() {
        assert_eq!(diffusion_first_passage_cdf(0.2, 0.08, 1.0, 0.0).unwrap(), 0.0);
        // reflection principle: 2*Phi(-1)
        assert_abs_diff_eq!(
            diffusion_first_passage_cdf(0.2, 0.0, 1.0, 25.0).unwrap(),
            0.317_310_507_862_914_1,
            epsilon = 1e-12
        );
        assert!(diffusion_first_passage_cdf(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(diffusion_first_passage_cdf(-0.1, 0.0, 1.0, 1.0).is_err());
    }

    /// First-passage density integrated by composite Simpson, independent of the
    /// closed form.
    fn density_quadrature(sigma: f64, mu: f64, level: f64, t: f64) -> f64 {
        let dens = |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            level / (sigma * (2.0 * std::f64::consts::PI * s.powi(3)).sqrt())
                * (-(level + mu * s).powi(2) / (2.0 * sigma * sigma * s)).exp()
        };
        let n = 200_000;
        let h = t / n as f64;
        let mut acc = dens(0.0) + dens(t);
        for i in 1..n {
            acc += dens(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn first_passage_cdf_matches_density_quadrature() {
        // frozen from high-precision quadrature of the density
        let frozen = 0.002_518_333_929_763_081;
        let q = density_quadrature(0.2, 0.08, 1.0, 5.0);
        assert_abs_diff_eq!(q, frozen, epsilon = 1e-10);
        let cf = diffusion_first_passage_cdf(0.2, 0.08, 1.0, 5.0).unwrap();
        assert_abs_diff_eq!(cf, frozen, epsilon = 1e-12);
        for &(mu, t) in &[(-0.02, 25.0), (0.05, 3.0), (-0.3, 2.0)] {
            let cf = diffusion_first_passage_cdf(0.2, mu, 1.0, t).unwrap();
            assert_abs_diff_eq!(cf, density_quadrature(0.2, mu, 1.0, t), epsilon = 1e-8);
        }
    }

    #[test]
    fn first_passage_cdf_extreme_drift_is_finite() {
        let p = diffusion_first_passage_cdf(0.01, -2.0, 1.0, 10.0).unwrap();
        assert!((p - 1.0).abs() < 1e-9);
        let p = diffusion_first_passage_cdf(0.01, 2.0, 1.0, 10.0).unwrap();
        assert!((0.0..1e-12).contains(&p));
    }
}
