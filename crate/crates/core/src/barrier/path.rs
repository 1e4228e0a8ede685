use rayon::prelude::*;

use super::{std_normal_cdf, Entity, PathConfig, ProcessParams};
use crate::error::{domain, Result};
use crate::rng::{Noise, Stream};

/// One observed point of a path: the interval from the previous point ends
/// here, then a jump of `mark` (unit-mean scale) is applied. `mark == 0`
/// marks a diffusion grid point.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Segment {
    pub t: f64,
    pub w: f64,
    pub mark: f64,
    pub step: u32,
    pub piece: u32,
    /// Exp(1) crossing variate if already known, NaN otherwise.
    pub cross: f64,
}

pub(crate) trait SegmentSource {
    fn next_segment(&mut self) -> Option<Segment>;
    fn crossing_variate(&self, seg: &Segment) -> f64;
}

/// `-ln Phi(g)`: an Exp(1) variate built from a standard normal.
#[inline]
fn exp_from_normal(g: f64) -> f64 {
    if g > 0.0 {
        -(-std_normal_cdf(-g)).ln_1p()
    } else {
        -std_normal_cdf(g).ln()
    }
}

/// Lazily generated standard-Brownian path with exact jump times.
pub(crate) struct SegmentStream<'a> {
    noise: &'a Noise,
    path: u64,
    lambda: f64,
    dt: f64,
    sqrt_dt: f64,
    n_steps: u32,
    step: u32,
    w_grid: f64,
    in_step: bool,
    t_end: f64,
    w_end: f64,
    piece: u32,
    t_left: f64,
    w_left: f64,
    next_jump_t: f64,
    next_jump_mark: f64,
    jump_idx: u64,
    block_idx: u64,
    block: [f64; 4],
}

impl<'a> SegmentStream<'a> {
    pub fn new(noise: &'a Noise, path: u64, lambda: f64, cfg: &PathConfig) -> Self {
        let mut s = Self {
            noise,
            path,
            lambda,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            n_steps: cfg.n_steps() as u32,
            step: 0,
            w_grid: 0.0,
            in_step: false,
            t_end: 0.0,
            w_end: 0.0,
            piece: 0,
            t_left: 0.0,
            w_left: 0.0,
            next_jump_t: f64::INFINITY,
            next_jump_mark: 0.0,
            jump_idx: 0,
            block_idx: u64::MAX,
            block: [0.0; 4],
        };
        s.advance_jump(0.0);
        s
    }

    fn advance_jump(&mut self, from: f64) {
        if self.lambda > 0.0 {
            let (gap, mark) = self.noise.jump_stream().jump(self.path, self.jump_idx);
            self.jump_idx += 1;
            self.next_jump_t = from + gap / self.lambda;
            self.next_jump_mark = mark;
        }
    }

    #[inline]
    fn grid_normal(&mut self, step: u32) -> f64 {
        let b = u64::from(step >> 2);
        if b != self.block_idx {
            self.block = self.noise.grid_block(self.path, b);
            self.block_idx = b;
        }
        self.block[(step & 3) as usize]
    }
}

impl SegmentSource for SegmentStream<'_> {
    #[inline]
    fn next_segment(&mut self) -> Option<Segment> {
        if !self.in_step {
            if self.step >= self.n_steps {
                return None;
            }
            let z = self.grid_normal(self.step);
            self.t_left = f64::from(self.step) * self.dt;
            self.w_left = self.w_grid;
            self.t_end = f64::from(self.step + 1) * self.dt;
            self.w_end = self.w_grid + self.sqrt_dt * z;
            self.piece = 0;
            self.in_step = true;
        }
        if self.next_jump_t < self.t_end {
            let s = self.next_jump_t.max(self.t_left);
            let span = self.t_end - self.t_left;
            let a = s - self.t_left;
            let mean = self.w_left + a / span * (self.w_end - self.w_left);
            let var = a * (self.t_end - s) / span;
            let w = if var > 0.0 {
                mean + var.sqrt() * self.noise.bridge_normal(self.path, self.step.into(), self.piece.into())
            } else {
                mean
            };
            let seg = Segment {
                t: s,
                w,
                mark: self.next_jump_mark,
                step: self.step,
                piece: self.piece,
                cross: f64::NAN,
            };
            self.piece += 1;
            self.t_left = s;
            self.w_left = w;
            self.advance_jump(s);
            return Some(seg);
        }
        let seg = Segment {
            t: self.t_end,
            w: self.w_end,
            mark: 0.0,
            step: self.step,
            piece: self.piece,
            cross: f64::NAN,
        };
        self.w_grid = self.w_end;
        self.step += 1;
        self.in_step = false;
        Some(seg)
    }

    #[inline]
    fn crossing_variate(&self, seg: &Segment) -> f64 {
        exp_from_normal(self.noise.cross_normal(self.path, seg.step.into(), seg.piece.into()))
    }
}

#[derive(Clone, Copy, Debug)]
struct CachedSegment {
    t: f64,
    w: f64,
    mark: f64,
    cross: f64,
}

struct CachedSource<'a> {
    segs: std::slice::Iter<'a, CachedSegment>,
}

impl SegmentSource for CachedSource<'_> {
    #[inline]
    fn next_segment(&mut self) -> Option<Segment> {
        self.segs.next().map(|c| Segment {
            t: c.t,
            w: c.w,
            mark: c.mark,
            step: 0,
            piece: 0,
            cross: c.cross,
        })
    }

    #[inline]
    fn crossing_variate(&self, seg: &Segment) -> f64 {
        seg.cross
    }
}

/// Materialized single-name drivers for one `(seed, config, lambda, entity)`.
///
/// Paths are linear in `sigma` and in the jump scale `xi` once the Brownian
/// values, jump times, jump marks and crossing variates are fixed, so a
/// `DriverSet` can be re-priced for any `(sigma, xi)` without re-simulation.
/// Crossing records obtained from it are bit-identical to
/// [`simulate_crossings`](super::simulate_crossings) with the same inputs.
pub struct DriverSet {
    cfg: PathConfig,
    lambda: f64,
    offsets: Vec<usize>,
    segs: Vec<CachedSegment>,
}

impl DriverSet {
    pub fn build(cfg: &PathConfig, lambda: f64, entity: Entity) -> Result<Self> {
        cfg.validate()?;
        if !(0.0..=super::LAMBDA_MAX).contains(&lambda) {
            return domain(format!("lambda={lambda} outside [0, {}]", super::LAMBDA_MAX));
        }
        let noise = Noise::Own(Stream::new(cfg.seed, entity.id()));
        let per_path: Vec<Vec<CachedSegment>> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|p| {
                let mut src = SegmentStream::new(&noise, p as u64, lambda, cfg);
                let mut v = Vec::with_capacity(cfg.n_steps() + 4);
                while let Some(seg) = src.next_segment() {
                    v.push(CachedSegment {
                        t: seg.t,
                        w: seg.w,
                        mark: seg.mark,
                        cross: src.crossing_variate(&seg),
                    });
                }
                v
            })
            .collect();
        let mut offsets = Vec::with_capacity(cfg.n_paths + 1);
        offsets.push(0);
        let total: usize = per_path.iter().map(Vec::len).sum();
        let mut segs = Vec::with_capacity(total);
        for v in per_path {
            segs.extend_from_slice(&v);
            offsets.push(segs.len());
        }
        Ok(Self {
            cfg: *cfg,
            lambda,
            offsets,
            segs,
        })
    }

    pub fn config(&self) -> &PathConfig {
        &self.cfg
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_paths(&self) -> usize {
        self.cfg.n_paths
    }

    pub(crate) fn check_params(&self, params: &ProcessParams) -> Result<()> {
        if params.lambda() != self.lambda {
            return domain(format!(
                "drivers built for lambda={} cannot price lambda={}",
                self.lambda,
                params.lambda()
            ));
        }
        Ok(())
    }

    pub(crate) fn source(&self, path: usize) -> impl SegmentSource + '_ {
        CachedSource {
            segs: self.segs[self.offsets[path]..self.offsets[path + 1]].iter(),
        }
    }
}
