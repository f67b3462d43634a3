//! Counter-based random streams.
//!
//! Every random decision of the Monte Carlo engine is drawn from a stream
//! keyed by `(seed, t, index)`, so results do not depend on the order in
//! which pairs are processed. The derivation is part of the reproducibility
//! contract and must not change:
//!
//! ```text
//! mix(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!          z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!          z ^ (z >> 31)                        (wrapping u64 arithmetic)
//! G = 0x9E3779B97F4A7C15
//! key(seed, t, index) = mix(mix(mix(seed + G) ^ (t + G)) ^ (index + G))
//! stream: state = key; next_word() { state += G; mix(state) }
//! uniform() = (next_word() >> 11) * 2^-53    in [0, 1)
//! coin()    = next_word() >> 63 == 1
//! below(n)  = Lemire multiply-shift with rejection on next_word()
//! ```
//!
//! Pair `k` of step `t` draws `eps = uniform()` then `coin()` from
//! `key(seed, t, k)`. The matching of step `t` is a Fisher-Yates shuffle
//! driven by `key(seed, t, MATCHING_INDEX)`; initial populations draw from
//! `key(seed, INIT_STEP, INIT_INDEX)`.

use rand::RngCore;

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
pub const MATCHING_INDEX: u64 = u64::MAX;
pub const INIT_STEP: u64 = u64::MAX;
pub const INIT_INDEX: u64 = u64::MAX - 1;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_key(seed: u64, t: u64, index: u64) -> u64 {
    let k = mix64(seed.wrapping_add(GOLDEN_GAMMA));
    let k = mix64(k ^ t.wrapping_add(GOLDEN_GAMMA));
    mix64(k ^ index.wrapping_add(GOLDEN_GAMMA))
}

/// SplitMix64 generator started at a derived key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64, t: u64, index: u64) -> Self {
        Self {
            state: stream_key(seed, t, index),
        }
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn coin(&mut self) -> bool {
        self.next_word() >> 63 == 1
    }

    /// Unbiased integer in `0..n` (Lemire's method).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let mut m = (self.next_word() as u128) * (n as u128);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = (self.next_word() as u128) * (n as u128);
            }
        }
        (m >> 64) as u64
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        (self.next_word() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_word().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Uniform random permutation of `0..n` for step `t` (Fisher-Yates, high to low).
pub fn matching(seed: u64, t: u64, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut s = Stream::new(seed, t, MATCHING_INDEX);
    for i in (1..n).rev() {
        let j = s.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_sequence() {
        // SplitMix64 seeded with 0 produces this well-known first output.
        let mut s = Stream { state: 0 };
        assert_eq!(s.next_word(), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn keys_separate_coordinates() {
        let a = stream_key(1, 2, 3);
        assert_ne!(a, stream_key(1, 3, 2));
        assert_ne!(a, stream_key(2, 2, 3));
        assert_eq!(a, stream_key(1, 2, 3));
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = Stream::new(7, 0, 0);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn below_is_roughly_uniform() {
        let mut s = Stream::new(11, 0, 0);
        let mut counts = [0usize; 6];
        for _ in 0..60_000 {
            counts[s.below(6) as usize] += 1;
        }
        for c in counts {
            assert!((c as i64 - 10_000).abs() < 500, "{counts:?}");
        }
    }

    #[test]
    fn matching_is_a_permutation() {
        let mut p = matching(5, 9, 1001);
        p.sort_unstable();
        assert_eq!(p, (0..1001).collect::<Vec<_>>());
        assert_eq!(matching(5, 9, 100), matching(5, 9, 100));
        assert_ne!(matching(5, 9, 100), matching(5, 10, 100));
    }
}
