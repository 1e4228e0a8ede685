//! Counter-based random streams.
//!
//! Every random number used by the path simulator is a pure function of
//! `(seed, entity, path, driver, index, piece)`. Paths can therefore be
//! simulated in any order, on any number of workers, and a draw that is
//! skipped (e.g. a barrier-crossing variate far from the barrier) never
//! shifts any other draw.
//!
//! The block function is Philox-4x64 with 10 rounds.
//!
//! Paths come in antithetic pairs: path `2k + 1` reuses the counters of path
//! `2k` with every normal negated and every jump uniform reflected
//! (`u -> 1 - u`). Each path on its own has the right law; sample statistics
//! over paths should treat `{2k, 2k + 1}` as one unit (see [`pair_units`]).

use std::f64::consts::TAU;

const M0: u64 = 0xD2E7_470E_E14C_6C93;
const M1: u64 = 0xCA5A_8263_9512_1157;
const W0: u64 = 0x9E37_79B9_7F4A_7C15;
const W1: u64 = 0xBB67_AE85_84CA_A73B;

/// Philox-4x64-10 keyed block function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Philox {
    key: [u64; 2],
}

#[inline(always)]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = u128::from(a) * u128::from(b);
    ((p >> 64) as u64, p as u64)
}

impl Philox {
    pub fn new(key: [u64; 2]) -> Self {
        Self { key }
    }

    #[inline]
    pub fn block(&self, mut ctr: [u64; 4]) -> [u64; 4] {
        let mut k = self.key;
        for round in 0..10 {
            if round > 0 {
                k[0] = k[0].wrapping_add(W0);
                k[1] = k[1].wrapping_add(W1);
            }
            let (hi0, lo0) = mulhilo(M0, ctr[0]);
            let (hi1, lo1) = mulhilo(M1, ctr[2]);
            ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
        }
        ctr
    }
}

/// Uniform on the open interval (0, 1).
#[inline(always)]
pub fn open_unit(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[inline(always)]
fn box_muller(u1: u64, u2: u64) -> (f64, f64) {
    let r = (-2.0 * open_unit(u1).ln()).sqrt();
    let (s, c) = (TAU * open_unit(u2)).sin_cos();
    (r * c, r * s)
}

/// Four standard normals from one block.
#[inline]
pub fn normals4(b: [u64; 4]) -> [f64; 4] {
    let (a, c) = box_muller(b[0], b[1]);
    let (d, e) = box_muller(b[2], b[3]);
    [a, c, d, e]
}

/// Identifies which stochastic ingredient a draw feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Driver {
    /// Brownian increments on the diffusion grid, four steps per block.
    Grid = 1,
    /// Brownian-bridge interpolation at jump times inside a grid step.
    Bridge = 2,
    /// Barrier-crossing variate for one sub-interval.
    Cross = 3,
    /// Jump inter-arrival time and jump mark.
    Jump = 4,
}

#[inline]
fn flip(path: u64, z: f64) -> f64 {
    if path & 1 == 1 {
        -z
    } else {
        z
    }
}

/// Splits per-path values into antithetic units and returns
/// `(mean, standard error)` of the path mean.
///
/// The variance estimate sums squared deviations of unit totals, so it is
/// right for paired and for independent samples alike. Returns a zero
/// standard error for fewer than two units.
pub fn pair_units(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let units = values.chunks(2).len();
    if units < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values
        .chunks(2)
        .map(|u| u.iter().map(|v| v - mean).sum::<f64>().powi(2))
        .sum();
    let var = ss * units as f64 / (units - 1) as f64;
    (mean, var.sqrt() / n as f64)
}

/// Seeded stream for one entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stream {
    philox: Philox,
}

impl Stream {
    pub fn new(seed: u64, entity: u64) -> Self {
        Self {
            philox: Philox::new([seed, entity]),
        }
    }

    /// Raw block for `path` itself, without antithetic pairing.
    #[inline]
    pub fn raw(&self, path: u64, driver: Driver, index: u64, piece: u64) -> [u64; 4] {
        self.philox.block([path, driver as u64, index, piece])
    }

    #[inline]
    fn paired(&self, path: u64, driver: Driver, index: u64, piece: u64) -> [u64; 4] {
        self.raw(path & !1, driver, index, piece)
    }

    /// Grid normals for steps `4*block .. 4*block+4`.
    #[inline]
    pub fn grid_block(&self, path: u64, block: u64) -> [f64; 4] {
        let z = normals4(self.paired(path, Driver::Grid, block, 0));
        z.map(|v| flip(path, v))
    }

    #[inline]
    pub fn bridge_normal(&self, path: u64, step: u64, piece: u64) -> f64 {
        let b = self.paired(path, Driver::Bridge, step, piece);
        flip(path, box_muller(b[0], b[1]).0)
    }

    #[inline]
    pub fn cross_normal(&self, path: u64, step: u64, piece: u64) -> f64 {
        let b = self.paired(path, Driver::Cross, step, piece);
        flip(path, box_muller(b[0], b[1]).0)
    }

    /// Unit-mean exponential pair `(inter-arrival, mark)` for the `i`-th jump.
    #[inline]
    pub fn jump(&self, path: u64, i: u64) -> (f64, f64) {
        let mut b = self.paired(path, Driver::Jump, i, 0);
        if path & 1 == 1 {
            // open_unit(!x) == 1 - open_unit(x) exactly
            b = b.map(|x| !x);
        }
        (-open_unit(b[0]).ln(), -open_unit(b[1]).ln())
    }
}

/// Source of Gaussian noise for one entity's path.
///
/// `Mixed` builds the entity's normals as `rho * anchor + sqrt(1 - rho^2) * own`
/// draw by draw, so the anchor entity's path is unchanged by `rho`.
#[derive(Clone, Copy, Debug)]
pub enum Noise {
    Own(Stream),
    Mixed {
        anchor: Stream,
        own: Stream,
        rho: f64,
        rho_perp: f64,
    },
}

impl Noise {
    pub fn mixed(anchor: Stream, own: Stream, rho: f64) -> Self {
        Noise::Mixed {
            anchor,
            own,
            rho,
            rho_perp: (1.0 - rho * rho).max(0.0).sqrt(),
        }
    }

    /// Stream that owns the jump drivers.
    pub fn jump_stream(&self) -> &Stream {
        match self {
            Noise::Own(s) => s,
            Noise::Mixed { own, .. } => own,
        }
    }

    #[inline]
    pub fn grid_block(&self, path: u64, block: u64) -> [f64; 4] {
        match self {
            Noise::Own(s) => s.grid_block(path, block),
            Noise::Mixed {
                anchor,
                own,
                rho,
                rho_perp,
            } => {
                let a = anchor.grid_block(path, block);
                let o = own.grid_block(path, block);
                [
                    rho * a[0] + rho_perp * o[0],
                    rho * a[1] + rho_perp * o[1],
                    rho * a[2] + rho_perp * o[2],
                    rho * a[3] + rho_perp * o[3],
                ]
            }
        }
    }

    #[inline]
    pub fn bridge_normal(&self, path: u64, step: u64, piece: u64) -> f64 {
        match self {
            Noise::Own(s) => s.bridge_normal(path, step, piece),
            Noise::Mixed {
                anchor,
                own,
                rho,
                rho_perp,
            } => rho * anchor.bridge_normal(path, step, piece) + rho_perp * own.bridge_normal(path, step, piece),
        }
    }

    #[inline]
    pub fn cross_normal(&self, path: u64, step: u64, piece: u64) -> f64 {
        match self {
            Noise::Own(s) => s.cross_normal(path, step, piece),
            Noise::Mixed {
                anchor,
                own,
                rho,
                rho_perp,
            } => rho * anchor.cross_normal(path, step, piece) + rho_perp * own.cross_normal(path, step, piece),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors, cross-checked against numpy's Philox (4x64, 10 rounds).
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            Philox::new([0, 0]).block([0; 4]),
            [
                0x16554d9eca36314c,
                0xdb20fe9d672d0fdc,
                0xd7e772cee186176b,
                0x7e68b68aec7ba23b
            ]
        );
        assert_eq!(
            Philox::new([u64::MAX; 2]).block([u64::MAX; 4]),
            [
                0x87b092c3013fe90b,
                0x438c3c67be8d0224,
                0x9cc7d7c69cd777b6,
                0xa09caebf594f0ba0
            ]
        );
        assert_eq!(
            Philox::new([0xa4093822299f31d0, 0x082efa98ec4e6c89]).block([
                0x243f6a8885a308d3,
                0x13198a2e03707344,
                0xa4093822299f31d0,
                0x082efa98ec4e6c89
            ]),
            [
                0xfce6a8bfe859012c,
                0x6be516c32423d059,
                0xab8e08a5250a0ee7,
                0xef2fe36f811c1805
            ]
        );
    }

    #[test]
    fn open_unit_excludes_endpoints() {
        assert!(open_unit(0) > 0.0);
        assert!(open_unit(u64::MAX) < 1.0);
    }

    #[test]
    fn grid_normals_have_unit_moments() {
        let s = Stream::new(7, 1);
        let n = 50_000u64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for b in 0..n {
            for z in s.grid_block(3, b) {
                m1 += z;
                m2 += z * z;
            }
        }
        let cnt = (4 * n) as f64;
        let mean = m1 / cnt;
        let var = m2 / cnt - mean * mean;
        assert!(mean.abs() < 4.0 / cnt.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 4.0 * (2.0 / cnt).sqrt(), "var {var}");
    }

    #[test]
    fn mixed_noise_correlation() {
        let a = Stream::new(1, 10);
        let o = Stream::new(1, 11);
        let mixed = Noise::mixed(a, o, 0.8);
        let own = Noise::Own(a);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for b in 0..25_000 {
            let x = own.grid_block(0, b);
            let y = mixed.grid_block(0, b);
            for i in 0..4 {
                sxy += x[i] * y[i];
                sxx += x[i] * x[i];
                syy += y[i] * y[i];
            }
        }
        let r = sxy / (sxx * syy).sqrt();
        // SE of a correlation estimate ~ (1 - r^2)/sqrt(n)
        assert!((r - 0.8).abs() < 3.0 * 0.36 / 100_000f64.sqrt(), "r {r}");
    }

    #[test]
    fn antithetic_partner_mirrors_draws() {
        let s = Stream::new(5, 2);
        for path in [0u64, 6, 1000] {
            let (a, b) = (s.grid_block(path, 3), s.grid_block(path + 1, 3));
            assert_eq!(a.map(|v| -v), b);
            assert_eq!(s.bridge_normal(path, 4, 1), -s.bridge_normal(path + 1, 4, 1));
            assert_eq!(s.cross_normal(path, 4, 0), -s.cross_normal(path + 1, 4, 0));
            let raw = s.raw(path, Driver::Jump, 2, 0);
            let (g, m) = s.jump(path + 1, 2);
            assert_eq!(g, -(1.0 - open_unit(raw[0])).ln());
            assert_eq!(m, -(1.0 - open_unit(raw[1])).ln());
        }
        assert_ne!(s.grid_block(2, 0), s.grid_block(0, 0).map(|v| -v));
    }

    #[test]
    fn reflected_uniform_is_exact() {
        for x in [0u64, 1, 4095, 4096, 1 << 40, u64::MAX - 7, u64::MAX] {
            assert_eq!(open_unit(!x), 1.0 - open_unit(x));
        }
    }

    #[test]
    fn pair_units_statistics() {
        let (m, se) = pair_units(&[1.0, -1.0, 2.0, -2.0]);
        assert_eq!((m, se), (0.0, 0.0));
        let (m, se) = pair_units(&[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(m, 0.5);
        // unit totals 2 and 0 around 2 * 0.5: ss = 2, var = 4, se = 2 / 4
        assert!((se - 0.5).abs() < 1e-15);
        assert_eq!(pair_units(&[3.0]).1, 0.0);
        assert!(pair_units(&[]).0.is_nan());
    }
}
