//! Seeded deterministic random number generation.
//!
//! Every stochastic operation in this crate draws from [`Rng`], a SplitMix64
//! generator. The recurrence is fixed by its constants, so identical seeds
//! and identical draw sequences produce bit-identical results on every
//! platform:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! output = z ^ (z >> 31)
//! ```
//!
//! Uniform reals use the top 53 bits of the output, so `uniform(a, b)` is
//! `a + (b - a) * u` with `u = (output >> 11) * 2^-53` in `[0, 1)`.
//!
//! Parallel work never shares an `Rng`; it derives independent child seeds
//! with [`derive_seed`], which mixes `(parent seed, purpose tag, index)`
//! through the same finalizer. This is what makes parallel and serial runs
//! bit-identical.

/// Deterministic 64-bit generator (SplitMix64).
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform real in `[0, 1)` with a full 53-bit mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform real in `[a, b)`: `a + (b - a) * u`. Returns `a` when `a == b`.
    pub fn uniform(&mut self, a: f64, b: f64) -> f64 {
        a + (b - a) * self.next_f64()
    }

    /// Uniform integer in `[0, n)` via the multiply-shift range reduction.
    ///
    /// Panics when `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is undefined");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            slice.swap(i, j);
        }
    }
}

/// Derive an independent child seed from `(parent, tag, index)`.
///
/// The tag is hashed with FNV-1a (offset `0xcbf29ce484222325`, prime
/// `0x100000001b3`), then parent, tag hash and index are folded through the
/// SplitMix64 finalizer in sequence.
pub fn derive_seed(parent: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x1_0000_0000_01b3);
    }
    let s = mix64(parent ^ h);
    mix64(s ^ index.wrapping_mul(GOLDEN_GAMMA))
}
