//! Reproducible random streams for path simulation.
//!
//! Each path owns two ChaCha8 streams selected by `(seed, path index)`:
//!
//! * the noise stream, which yields exactly two words per grid step (the
//!   Gaussian increment and the vertex-crossing uniform), so step `k` always
//!   reads the same words whatever happened at earlier steps;
//! * the edge stream, whose `n`-th word picks the edge entered at the `n`-th
//!   vertex visit (`n = 0` is the initial edge).
//!
//! ChaCha is a counter-mode generator, so a path's draws depend only on its
//! key and stream number and never on scheduling. Two runs sharing a seed but
//! differing in `delta` see the same Brownian increments step for step.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

const NOISE_DOMAIN: u64 = 0x6a75_6e63_6e6f_6973;
const EDGE_DOMAIN: u64 = 0x6a75_6e63_6564_6765;

/// Identifies the streams of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub path: u64,
}

impl StreamId {
    pub fn new(seed: u64, path: u64) -> Self {
        Self { seed, path }
    }

    pub fn noise(&self) -> NoiseStream {
        NoiseStream {
            rng: keyed(self.seed, NOISE_DOMAIN, self.path),
        }
    }

    pub fn edges(&self) -> UniformStream {
        UniformStream {
            rng: keyed(self.seed, EDGE_DOMAIN, self.path),
        }
    }
}

fn keyed(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain);
    rng.set_stream(stream);
    rng
}

/// Maps 52 random bits onto the open interval (0, 1), midpoints of a
/// `2^-52` lattice.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Variates consumed by one grid step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepVariates {
    /// Standard normal, obtained by inverting the normal CDF.
    pub normal: f64,
    /// Uniform on (0, 1) used by the bridge crossing test.
    pub uniform: f64,
}

pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    #[inline]
    pub fn next_step(&mut self) -> StepVariates {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        StepVariates {
            normal: normal_quantile(open_unit(a)),
            uniform: open_unit(b),
        }
    }

    /// Jump to the variates of step `step`.
    pub fn seek_step(&mut self, step: u64) {
        // Two u64 draws = four 32-bit words per step.
        self.rng.set_word_pos(4 * step as u128);
    }
}

pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl UniformStream {
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        open_unit(self.rng.next_u64())
    }
}

/// Standard normal quantile, Wichura's AS 241 (PPND16).
///
/// Relative accuracy is about 1e-16 over (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "p = {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let z = if r <= 5.0 {
        r -= 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}
