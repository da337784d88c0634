//! Deterministic random-number utilities.
//!
//! Every stochastic component of the crate (map entries, splits, manifold
//! samples, Monte-Carlo trials) draws from the pipeline defined here, so a
//! run is reproducible bit-for-bit from its seeds on any platform, and a
//! port to another language can reproduce the same streams. The pipeline:
//!
//! 1. A `u64` seed is expanded to a 32-byte ChaCha8 key with four rounds of
//!    SplitMix64 (constants below). ChaCha8 is a counter-based stream
//!    cipher with a public specification; the byte stream is consumed as
//!    little-endian `u64` words.
//! 2. Uniform doubles in `[0, 1)` take the top 53 bits of a word:
//!    `(w >> 11) as f64 * 2^-53`.
//! 3. Normal deviates use the Box-Muller transform on consecutive uniform
//!    pairs: `r = sqrt(-2 ln(1 - u1))`, `z0 = r cos(2π u2)`,
//!    `z1 = r sin(2π u2)`, with `ln`/`cos`/`sin` from the software `libm`
//!    port so results do not depend on the platform's math library.
//! 4. Independent streams come from [`derive_seed`], which hashes
//!    `(master, role, index)` with FNV-1a over the role string followed by
//!    SplitMix64 mixing. Parallel workers each derive their own stream, so
//!    scheduling order never affects output.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// SplitMix64 step: advances the state and returns the mixed output.
/// Constants are Steele/Lea/Flood's published ones.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a byte string, used only to fold role labels into seeds.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives an independent stream seed from a master seed, a role label,
/// and an index. Distinct (role, index) pairs give unrelated streams;
/// the derivation is pure arithmetic so any port can reproduce it.
pub fn derive_seed(master: u64, role: &str, index: u64) -> u64 {
    let mut state = master ^ fnv1a(role.as_bytes());
    let a = splitmix64(&mut state);
    state ^= index;
    let b = splitmix64(&mut state);
    a ^ b.rotate_left(32)
}

/// ChaCha8 stream keyed from a `u64` seed via SplitMix64 expansion.
pub fn chacha_from_seed(seed: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform double in `[0, 1)` from the top 53 bits of one stream word.
pub fn uniform_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard-normal source: Box-Muller over a ChaCha8 stream.
///
/// Deviates are produced in pairs; the second of each pair is cached so a
/// stream of `k` draws consumes exactly `2 * ceil(k / 2)` uniforms.
pub struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        GaussianSource { rng: chacha_from_seed(seed), spare: None }
    }

    /// Next standard-normal deviate.
    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = uniform_f64(&mut self.rng);
        let u2 = uniform_f64(&mut self.rng);
        // 1 - u1 lies in (0, 1], so the log argument is never zero.
        let r = (-2.0 * libm::log(1.0 - u1)).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    /// Fills a slice with deviates.
    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next();
        }
    }

    /// Access to the underlying uniform stream (for non-normal draws that
    /// must stay in lockstep with this source's consumption).
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Uniform integer in `[0, n)` by rejection on the top bits, bias-free.
pub fn uniform_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    assert!(n > 0, "uniform_index over empty range");
    let n = n as u64;
    // Zone rejection: accept w % n only when w falls below the largest
    // multiple of n, so every residue is equally likely.
    let zone = u64::MAX - (u64::MAX % n + 1) % n;
    loop {
        let w = rng.next_u64();
        if w <= zone {
            return (w % n) as usize;
        }
    }
}

/// In-place Fisher-Yates shuffle driven by the given stream.
pub fn shuffle<T>(rng: &mut ChaCha8Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = GaussianSource::new(42);
        let mut b = GaussianSource::new(42);
        for _ in 0..100 {
            assert_eq!(a.next().to_bits(), b.next().to_bits());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = GaussianSource::new(1);
        let mut b = GaussianSource::new(2);
        let same = (0..32).filter(|_| a.next() == b.next()).count();
        assert!(same < 4);
    }

    #[test]
    fn moments_are_standard_normal() {
        let mut g = GaussianSource::new(7);
        let n = 200_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let z = g.next();
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn derive_seed_separates_roles_and_indices() {
        let s = 123;
        assert_ne!(derive_seed(s, "map", 0), derive_seed(s, "split", 0));
        assert_ne!(derive_seed(s, "map", 0), derive_seed(s, "map", 1));
        assert_eq!(derive_seed(s, "map", 5), derive_seed(s, "map", 5));
    }

    #[test]
    fn uniform_index_is_unbiased_and_in_range() {
        let mut rng = chacha_from_seed(9);
        let mut counts = [0usize; 7];
        for _ in 0..70_000 {
            counts[uniform_index(&mut rng, 7)] += 1;
        }
        for &c in &counts {
            assert!((c as f64 - 10_000.0).abs() < 500.0, "counts {counts:?}");
        }
    }

    #[test]
    fn uniform_f64_in_unit_interval() {
        let mut rng = chacha_from_seed(3);
        for _ in 0..10_000 {
            let u = uniform_f64(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
