//! Counter-based standard normal streams.
//!
//! Normal number `i` of stream `(seed, stream)` is a pure function of its
//! coordinates, so draws can be generated in any order or in parallel.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Mixes several integers into one 64-bit stream identifier.
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        // splitmix64 finalizer
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalStream {
    pub seed: u64,
    pub stream: u64,
}

#[inline]
fn unit_open(x: u64) -> f64 {
    // (0, 1]
    ((x >> 11) + 1) as f64 * (-53f64).exp2()
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        NormalStream { seed, stream }
    }

    /// Writes normals `start, start + 1, …` into `out`.
    pub fn fill(&self, start: u64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        // each Box–Muller pair consumes two u64, i.e. four 32-bit words
        let first_pair = start / 2;
        rng.set_word_pos(4 * first_pair as u128);
        let mut i = 0usize;
        let mut skip = (start % 2) as usize;
        while i < out.len() {
            let u1 = unit_open(rng.next_u64());
            let u2 = unit_open(rng.next_u64());
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            for z in [r * c, r * s] {
                if skip > 0 {
                    skip -= 1;
                    continue;
                }
                if i < out.len() {
                    out[i] = z;
                    i += 1;
                }
            }
        }
    }

    pub fn vector(&self, start: u64, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        self.fill(start, &mut v);
        v
    }

    pub fn get(&self, index: u64) -> f64 {
        let mut v = [0.0];
        self.fill(index, &mut v);
        v[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential() {
        let s = NormalStream::new(7, stream_id(&[1, 2]));
        let all = s.vector(0, 101);
        for start in [0u64, 1, 2, 33, 100] {
            let part = s.vector(start, 101 - start as usize);
            assert_eq!(&all[start as usize..], &part[..]);
        }
        assert_eq!(s.get(57), all[57]);
    }

    #[test]
    fn streams_and_seeds_differ() {
        let a = NormalStream::new(1, 0).vector(0, 8);
        let b = NormalStream::new(1, 1).vector(0, 8);
        let c = NormalStream::new(2, 0).vector(0, 8);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(stream_id(&[1, 2]), stream_id(&[2, 1]));
    }

    #[test]
    fn moments() {
        let v = NormalStream::new(42, 3).vector(0, 200_000);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let kurt = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n / (var * var);
        assert!(mean.abs() < 4.0 / n.sqrt());
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
        assert!((kurt - 3.0).abs() < 0.1);
    }
}
