use rayon::prelude::*;

use super::path::{DriverSet, SegmentSource, SegmentStream};
use super::{Entity, PathConfig, ProcessParams};
use crate::error::{domain, Error, Result};
use crate::rng::{Noise, Stream};

/// Crossing time of a barrier that was not reached within the horizon.
pub const NEVER: f64 = f64::INFINITY;

/// Above this exponent the bridge crossing probability is below 2e-22 and the
/// crossing variate is not drawn.
const BRIDGE_ARG_CUTOFF: f64 = 50.0;

/// First-passage times of every path through every barrier level.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossingRecord {
    barriers: Vec<f64>,
    horizon: f64,
    n_paths: usize,
    /// Path-major: `times[path * barriers.len() + j]`.
    times: Vec<f64>,
}

impl CrossingRecord {
    /// Builds a record from explicit per-path times.
    pub fn from_times(barriers: Vec<f64>, horizon: f64, times: Vec<f64>) -> Result<Self> {
        validate_barriers(&barriers)?;
        if times.is_empty() || !times.len().is_multiple_of(barriers.len()) {
            return Err(Error::InvalidInput(format!(
                "{} times do not tile {} barriers",
                times.len(),
                barriers.len()
            )));
        }
        Ok(Self {
            n_paths: times.len() / barriers.len(),
            barriers,
            horizon,
            times,
        })
    }

    pub fn barriers(&self) -> &[f64] {
        &self.barriers
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Crossing times of one path, one per barrier level.
    pub fn path(&self, p: usize) -> &[f64] {
        let nb = self.barriers.len();
        &self.times[p * nb..(p + 1) * nb]
    }

    pub fn level_index(&self, level: f64) -> Option<usize> {
        self.barriers
            .iter()
            .position(|&b| (b - level).abs() <= 1e-12 * level.abs().max(1.0))
    }

    /// Crossing times of every path through `level`.
    pub fn times_for(&self, level: f64) -> Result<Vec<f64>> {
        let j = self.level_index(level).ok_or(Error::MissingBarrier(level))?;
        let nb = self.barriers.len();
        Ok(self.times.iter().skip(j).step_by(nb).copied().collect())
    }

    /// Deeper barriers are never crossed earlier on any path.
    pub fn is_monotone(&self) -> bool {
        self.times
            .chunks(self.barriers.len())
            .all(|c| c.windows(2).all(|w| w[0] <= w[1]))
    }

    /// Fraction of paths that crossed `level` by time `t`.
    pub fn crossing_fraction(&self, level: f64, t: f64) -> Result<f64> {
        let times = self.times_for(level)?;
        let n = times.iter().filter(|&&s| s <= t + 1e-9).count();
        Ok(n as f64 / self.n_paths as f64)
    }
}

fn validate_barriers(barriers: &[f64]) -> Result<()> {
    if barriers.is_empty() {
        return domain("at least one barrier level is required");
    }
    if barriers.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
        return domain(format!("barrier levels must be positive and finite: {barriers:?}"));
    }
    if barriers.windows(2).any(|w| w[0] >= w[1]) {
        return domain(format!("barrier levels must be strictly increasing: {barriers:?}"));
    }
    Ok(())
}

/// Walks one path, writing the first crossing time of each barrier into `out`.
#[inline]
pub(crate) fn walk<S: SegmentSource>(src: &mut S, params: &ProcessParams, barriers: &[f64], out: &mut [f64]) {
    out.fill(NEVER);
    let sigma = params.sigma();
    let xi = params.xi();
    let mu = params.drift();
    let two_over_var = 2.0 / (sigma * sigma);
    let nb = barriers.len();
    let mut crossed = 0;
    let (mut t_prev, mut x_prev, mut jumps) = (0.0_f64, 0.0_f64, 0.0_f64);

    while let Some(seg) = src.next_segment() {
        let x = sigma * seg.w + mu * seg.t - xi * jumps;
        let h = seg.t - t_prev;
        let mut e = f64::NAN;
        while crossed < nb {
            let level = barriers[crossed];
            let d1 = x + level;
            let hit = if d1 < 0.0 {
                true
            } else if h > 0.0 {
                let arg = two_over_var * (x_prev + level) * d1 / h;
                if arg < BRIDGE_ARG_CUTOFF {
                    if e.is_nan() {
                        e = src.crossing_variate(&seg);
                    }
                    arg < e
                } else {
                    false
                }
            } else {
                false
            };
            if !hit {
                break;
            }
            out[crossed] = seg.t;
            crossed += 1;
        }
        let mut x_end = x;
        if seg.mark > 0.0 {
            jumps += seg.mark;
            x_end = sigma * seg.w + mu * seg.t - xi * jumps;
            while crossed < nb && x_end < -barriers[crossed] {
                out[crossed] = seg.t;
                crossed += 1;
            }
        }
        if crossed == nb {
            break;
        }
        t_prev = seg.t;
        x_prev = x_end;
    }
}

fn run_paths<F>(n_paths: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut times = vec![NEVER; n_paths * width];
    times.par_chunks_mut(width).enumerate().for_each(|(p, out)| f(p, out));
    times
}

/// First-passage times through each of `barriers` for one entity.
pub fn simulate_crossings(
    params: &ProcessParams,
    barriers: &[f64],
    cfg: &PathConfig,
    entity: Entity,
) -> Result<CrossingRecord> {
    cfg.validate()?;
    validate_barriers(barriers)?;
    let noise = Noise::Own(Stream::new(cfg.seed, entity.id()));
    Ok(simulate_with_noise(params, barriers, cfg, &noise))
}

fn simulate_with_noise(params: &ProcessParams, barriers: &[f64], cfg: &PathConfig, noise: &Noise) -> CrossingRecord {
    let times = run_paths(cfg.n_paths, barriers.len(), |p, out| {
        let mut src = SegmentStream::new(noise, p as u64, params.lambda(), cfg);
        walk(&mut src, params, barriers, out);
    });
    CrossingRecord {
        barriers: barriers.to_vec(),
        horizon: cfg.horizon,
        n_paths: cfg.n_paths,
        times,
    }
}

impl DriverSet {
    /// Crossing record for `params` (whose `lambda` must match the drivers).
    pub fn crossings(&self, params: &ProcessParams, barriers: &[f64]) -> Result<CrossingRecord> {
        self.crossings_prefix(params, barriers, self.n_paths())
    }

    /// As [`DriverSet::crossings`] on the first `n_paths` paths only.
    pub fn crossings_prefix(&self, params: &ProcessParams, barriers: &[f64], n_paths: usize) -> Result<CrossingRecord> {
        self.check_params(params)?;
        validate_barriers(barriers)?;
        if n_paths == 0 || n_paths > self.n_paths() {
            return domain(format!("prefix of {n_paths} paths from a set of {}", self.n_paths()));
        }
        let times = run_paths(n_paths, barriers.len(), |p, out| {
            walk(&mut self.source(p), params, barriers, out);
        });
        Ok(CrossingRecord {
            barriers: barriers.to_vec(),
            horizon: self.config().horizon,
            n_paths,
            times,
        })
    }
}

/// Crossing records of a corporate and its country on shared scenarios.
#[derive(Clone, Debug, PartialEq)]
pub struct PairCrossings {
    pub corporate: CrossingRecord,
    pub country: CrossingRecord,
}

/// Joint simulation: Brownian drivers correlated at `rho`, jumps independent.
///
/// The corporate path uses its own stream exactly as [`simulate_crossings`]
/// with [`Entity::Corporate`] would; the country mixes the corporate normals
/// into its own at `rho`.
pub fn simulate_pair_crossings(
    corporate: &ProcessParams,
    country: &ProcessParams,
    rho: f64,
    barriers_corporate: &[f64],
    barriers_country: &[f64],
    cfg: &PathConfig,
) -> Result<PairCrossings> {
    if !(-1.0..=1.0).contains(&rho) {
        return domain(format!("rho={rho} outside [-1, 1]"));
    }
    cfg.validate()?;
    validate_barriers(barriers_corporate)?;
    validate_barriers(barriers_country)?;
    let anchor = Stream::new(cfg.seed, Entity::Corporate.id());
    let own = Stream::new(cfg.seed, Entity::Country.id());
    Ok(PairCrossings {
        corporate: simulate_with_noise(corporate, barriers_corporate, cfg, &Noise::Own(anchor)),
        country: simulate_with_noise(country, barriers_country, cfg, &Noise::mixed(anchor, own, rho)),
    })
}

/// Country leg of a pair simulation on its own, for reuse across corporates.
pub(crate) fn simulate_country_leg(
    country: &ProcessParams,
    rho: f64,
    barriers: &[f64],
    cfg: &PathConfig,
) -> Result<CrossingRecord> {
    if !(-1.0..=1.0).contains(&rho) {
        return domain(format!("rho={rho} outside [-1, 1]"));
    }
    cfg.validate()?;
    validate_barriers(barriers)?;
    let anchor = Stream::new(cfg.seed, Entity::Corporate.id());
    let own = Stream::new(cfg.seed, Entity::Country.id());
    Ok(simulate_with_noise(
        country,
        barriers,
        cfg,
        &Noise::mixed(anchor, own, rho),
    ))
}

fn grid_indices(cfg: &PathConfig, times: &[f64]) -> Result<Vec<u32>> {
    times
        .iter()
        .map(|&t| {
            let k = (t / cfg.dt).round();
            if k < 1.0 || k as usize > cfg.n_steps() || (k * cfg.dt - t).abs() > 1e-9 * t.max(1.0) {
                domain(format!("time {t} is not a grid point within the horizon"))
            } else {
                Ok(k as u32)
            }
        })
        .collect()
}

/// `X_t` on every path at each grid time in `times` (path-major).
pub fn terminal_values(params: &ProcessParams, cfg: &PathConfig, entity: Entity, times: &[f64]) -> Result<Vec<f64>> {
    terminal_values_with_drift(params, params.drift(), cfg, entity, times)
}

/// As [`terminal_values`] with an explicit drift, for fault injection.
pub(crate) fn terminal_values_with_drift(
    params: &ProcessParams,
    mu: f64,
    cfg: &PathConfig,
    entity: Entity,
    times: &[f64],
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let idx = grid_indices(cfg, times)?;
    let noise = Noise::Own(Stream::new(cfg.seed, entity.id()));
    let parts = terminal_parts(params.lambda(), cfg, &noise, &idx);
    Ok(assemble(&parts, params.sigma(), mu, params.xi(), &idx, cfg.dt))
}

/// Standard Brownian value and accumulated unit-scale jump marks at each
/// grid index in `idx`, two entries per index, path-major.
fn terminal_parts(lambda: f64, cfg: &PathConfig, noise: &Noise, idx: &[u32]) -> Vec<f64> {
    let last = idx.iter().copied().max().unwrap_or(0);
    run_paths(cfg.n_paths, 2 * idx.len(), |p, out| {
        let mut src = SegmentStream::new(noise, p as u64, lambda, cfg);
        let mut jumps = 0.0;
        while let Some(seg) = src.next_segment() {
            jumps += seg.mark;
            if seg.mark == 0.0 {
                let k = seg.step + 1;
                for (o, &i) in out.chunks_mut(2).zip(idx) {
                    if i == k {
                        o[0] = seg.w;
                        o[1] = jumps;
                    }
                }
                if k >= last {
                    break;
                }
            }
        }
    })
}

fn assemble(parts: &[f64], sigma: f64, mu: f64, xi: f64, idx: &[u32], dt: f64) -> Vec<f64> {
    parts
        .chunks(2)
        .zip(idx.iter().cycle())
        .map(|(wj, &k)| sigma * wj[0] + mu * f64::from(k) * dt - xi * wj[1])
        .collect()
}

/// Terminal values of a jointly simulated corporate and country.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTerminals {
    /// `X_t` of each entity, path-major over the requested times.
    pub corporate: Vec<f64>,
    pub country: Vec<f64>,
    /// The standard Brownian components `W_t` in the same layout.
    pub corporate_w: Vec<f64>,
    pub country_w: Vec<f64>,
}

/// `X_t` and `W_t` for both legs of [`simulate_pair_crossings`] on the same
/// scenarios.
pub fn pair_terminal_values(
    corporate: &ProcessParams,
    country: &ProcessParams,
    rho: f64,
    cfg: &PathConfig,
    times: &[f64],
) -> Result<PairTerminals> {
    if !(-1.0..=1.0).contains(&rho) {
        return domain(format!("rho={rho} outside [-1, 1]"));
    }
    cfg.validate()?;
    let idx = grid_indices(cfg, times)?;
    let anchor = Stream::new(cfg.seed, Entity::Corporate.id());
    let own = Stream::new(cfg.seed, Entity::Country.id());
    let a = terminal_parts(corporate.lambda(), cfg, &Noise::Own(anchor), &idx);
    let c = terminal_parts(country.lambda(), cfg, &Noise::mixed(anchor, own, rho), &idx);
    let w = |v: &[f64]| v.chunks(2).map(|x| x[0]).collect();
    Ok(PairTerminals {
        corporate: assemble(&a, corporate.sigma(), corporate.drift(), corporate.xi(), &idx, cfg.dt),
        country: assemble(&c, country.sigma(), country.drift(), country.xi(), &idx, cfg.dt),
        corporate_w: w(&a),
        country_w: w(&c),
    })
}

/// Number of jumps on each path within the horizon.
pub fn count_jumps(params: &ProcessParams, cfg: &PathConfig, entity: Entity) -> Result<Vec<u32>> {
    cfg.validate()?;
    let noise = Noise::Own(Stream::new(cfg.seed, entity.id()));
    let counts = run_paths(cfg.n_paths, 1, |p, out| {
        let mut src = SegmentStream::new(&noise, p as u64, params.lambda(), cfg);
        let mut n = 0u32;
        while let Some(seg) = src.next_segment() {
            if seg.mark > 0.0 {
                n += 1;
            }
        }
        out[0] = f64::from(n);
    });
    Ok(counts.into_iter().map(|c| c as u32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::diffusion_first_passage_cdf;
    use crate::default_curve::DefaultCurve;

    fn cfg(horizon: f64, dt: f64, n: usize) -> PathConfig {
        PathConfig::new(horizon, dt, n, 20160101).unwrap()
    }

    #[test]
    fn tiny_volatility_never_crosses() {
        let p = ProcessParams::new(0.01, 0.0, 0.25).unwrap();
        let rec = simulate_crossings(&p, &[1.0], &cfg(5.0, 1.0 / 250.0, 2000), Entity::Corporate).unwrap();
        assert_eq!(rec.crossing_fraction(1.0, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_across_runs() {
        let p = ProcessParams::new(0.3, 1.0, 0.3).unwrap();
        let c = cfg(5.0, 1.0 / 50.0, 3000);
        let a = simulate_crossings(&p, &[0.8, 1.0, 1.3], &c, Entity::Country).unwrap();
        let b = simulate_crossings(&p, &[0.8, 1.0, 1.3], &c, Entity::Country).unwrap();
        assert_eq!(a, b);
        assert!(a.is_monotone());
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let p = ProcessParams::new(0.3, 1.0, 0.3).unwrap();
        let c = cfg(5.0, 1.0 / 50.0, 3000);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_crossings(&p, &[1.0, 1.2], &c, Entity::Custom(3)).unwrap());
        let b = four.install(|| simulate_crossings(&p, &[1.0, 1.2], &c, Entity::Custom(3)).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_barriers() {
        let p = ProcessParams::new(0.3, 1.0, 0.3).unwrap();
        let c = cfg(1.0, 0.1, 10);
        assert!(simulate_crossings(&p, &[], &c, Entity::Corporate).is_err());
        assert!(simulate_crossings(&p, &[1.0, 1.0], &c, Entity::Corporate).is_err());
        assert!(simulate_crossings(&p, &[1.2, 1.0], &c, Entity::Corporate).is_err());
        assert!(simulate_crossings(&p, &[0.0, 1.0], &c, Entity::Corporate).is_err());
        assert!(simulate_pair_crossings(&p, &p, 1.5, &[1.0], &[1.0], &c).is_err());
    }

    #[test]
    fn pure_diffusion_matches_closed_form() {
        let p = ProcessParams::new(0.2, 0.0, 0.25).unwrap();
        let n = 20_000;
        let rec = simulate_crossings(&p, &[1.0], &cfg(25.0, 1.0 / 50.0, n), Entity::Corporate).unwrap();
        let grid = [5.0, 10.0, 25.0];
        let curve = DefaultCurve::estimate(&rec.times_for(1.0).unwrap(), &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = diffusion_first_passage_cdf(0.2, p.drift(), 1.0, t).unwrap();
            let (mc, se) = (curve.p[i], curve.se[i]);
            assert!((mc - exact).abs() < 3.0 * se, "t={t} mc={mc} exact={exact} se={se}");
        }
    }

    #[test]
    fn bridge_makes_coarse_grid_unbiased() {
        // Without the bridge test a yearly grid would miss most crossings.
        let p = ProcessParams::new(0.3, 0.0, 0.25).unwrap();
        let n = 20_000;
        let rec = simulate_crossings(&p, &[1.0], &cfg(10.0, 1.0, n), Entity::Corporate).unwrap();
        let curve = DefaultCurve::estimate(&rec.times_for(1.0).unwrap(), &[10.0]).unwrap();
        let exact = diffusion_first_passage_cdf(0.3, p.drift(), 1.0, 10.0).unwrap();
        let (mc, se) = (curve.p[0], curve.se[0]);
        assert!((mc - exact).abs() < 3.0 * se, "mc={mc} exact={exact} se={se}");
    }

    #[test]
    fn driver_set_reproduces_streaming_simulation() {
        let c = cfg(10.0, 1.0 / 12.0, 2000);
        let drivers = DriverSet::build(&c, 0.5, Entity::Corporate).unwrap();
        for &(s, x) in &[(0.25, 0.3), (0.6, 0.15), (0.1, 0.9)] {
            let p = ProcessParams::new(s, 0.5, x).unwrap();
            let a = drivers.crossings(&p, &[0.85, 1.0]).unwrap();
            let b = simulate_crossings(&p, &[0.85, 1.0], &c, Entity::Corporate).unwrap();
            assert_eq!(a, b);
        }
        let wrong = ProcessParams::new(0.2, 0.25, 0.3).unwrap();
        assert!(drivers.crossings(&wrong, &[1.0]).is_err());
    }

    #[test]
    fn pair_corporate_leg_equals_standalone() {
        let a = ProcessParams::new(0.16, 0.5, 0.27).unwrap();
        let c = ProcessParams::new(0.32, 0.5, 0.25).unwrap();
        let conf = cfg(5.0, 1.0 / 50.0, 2000);
        let pair = simulate_pair_crossings(&a, &c, 0.8, &[1.0], &[1.0, 1.2], &conf).unwrap();
        let alone = simulate_crossings(&a, &[1.0], &conf, Entity::Corporate).unwrap();
        assert_eq!(pair.corporate, alone);
        let pair0 = simulate_pair_crossings(&a, &c, 0.0, &[1.0], &[1.0], &conf).unwrap();
        let country_alone = simulate_crossings(&c, &[1.0], &conf, Entity::Country).unwrap();
        assert_eq!(pair0.country, country_alone);
    }

    #[test]
    fn perfect_correlation_identical_entities() {
        let p = ProcessParams::new(0.3, 0.0, 0.25).unwrap();
        let conf = cfg(10.0, 1.0 / 50.0, 3000);
        let pair = simulate_pair_crossings(&p, &p, 1.0, &[1.0, 1.2], &[1.0, 1.2], &conf).unwrap();
        assert_eq!(pair.corporate.times, pair.country.times);
    }

    #[test]
    fn terminal_values_reject_off_grid_times() {
        let p = ProcessParams::new(0.3, 0.5, 0.25).unwrap();
        let c = cfg(2.0, 0.25, 10);
        assert!(terminal_values(&p, &c, Entity::Corporate, &[0.3]).is_err());
        assert!(terminal_values(&p, &c, Entity::Corporate, &[3.0]).is_err());
        assert_eq!(
            terminal_values(&p, &c, Entity::Corporate, &[1.0, 2.0]).unwrap().len(),
            20
        );
    }
}
