//! Counter-based seeding.
//!
//! Every random quantity in the crate is a pure function of a 64-bit seed and
//! an integer counter, obtained from the SplitMix64 finalizer. The mixing
//! constants are fixed here so that realizations are reproducible across
//! platforms, worker counts and crate versions:
//!
//! ```text
//! mix64(seed, k) = finalize(seed + (k + 1) * 0x9E3779B97F4A7C15)
//! finalize(z)    = h(h(z, 30, 0xBF58476D1CE4E5B9), 27, 0x94D049BB133111EB) ^ … >> 31
//! h(z, s, m)     = (z ^ (z >> s)) * m
//! ```
//!
//! Independent sub-streams (per realization, per tensor axis) are obtained by
//! xoring the parent seed with a fixed salt before mixing, so that e.g. the
//! cell stream of realization 0 never aliases the cell stream of axis 0.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_MUL_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_MUL_2: u64 = 0x94D0_49BB_1331_11EB;

/// Salt for deriving one seed per Monte Carlo realization from a master seed.
pub const SALT_REALIZATION: u64 = 0x5245_414C_495A_4531;

/// Salt for deriving one seed per tensor axis from a realization seed.
pub const SALT_AXIS: u64 = 0x4158_4953_4158_4953;

/// Stateless SplitMix64 finalizer of `(seed, counter)`.
#[inline]
pub fn mix64(seed: u64, counter: i64) -> u64 {
    let mut z = seed.wrapping_add((counter as u64).wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(MIX_MUL_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_MUL_2);
    z ^ (z >> 31)
}

/// Derives a child seed for a salted sub-stream.
#[inline]
pub fn child_seed(seed: u64, salt: u64, index: i64) -> u64 {
    mix64(seed ^ salt, index)
}

/// Maps 64 random bits to a double in `[0, 1)` using the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Small sequential generator for synthetic test data (SplitMix64 stream).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 {
            state: seed,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(MIX_MUL_1);
        z = (z ^ (z >> 27)).wrapping_mul(MIX_MUL_2);
        z ^ (z >> 31)
    }

    /// Uniform double in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }

    /// Standard normal via Box-Muller (second value cached).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(v) = self.spare_normal.take() {
            return v;
        }
        // u1 in (0, 1] so the log is finite
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}
