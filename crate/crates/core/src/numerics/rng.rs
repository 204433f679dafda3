//! Seeded pseudo-random generator used by every experiment.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood 2014):
//!
//! ```text
//! state = state + 0x9E3779B97F4A7C15            (wrapping)
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9      (wrapping)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB      (wrapping)
//! output z ^ (z >> 31)
//! ```
//!
//! The initial state is the seed itself. Derived streams
//! ([`Rng::derive`]) start from `mix(seed ^ mix(tag))` where `mix` is the
//! output function above applied to `tag + 0x9E3779B97F4A7C15`.
//!
//! * `uniform`: `(next_u64() >> 11) * 2^-53`, in `[0, 1)`.
//! * `gaussian`: Box–Muller on two fresh uniforms `u1, u2` (drawn in that
//!   order), `sqrt(-2 ln(1 - u1)) * cos(2π u2)`. The sine branch is
//!   discarded, so every normal draw consumes exactly two `u64` outputs.
//!
//! Any reimplementation of these four rules reproduces the same streams
//! bit for bit.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Independent stream keyed by `(seed, tag)`.
    pub fn derive(seed: u64, tag: u64) -> Self {
        Rng::new(mix64(seed ^ mix64(tag.wrapping_add(GOLDEN_GAMMA))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
        radius * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift reduction; bias is below 2^-53 for desk-scale n.
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}
