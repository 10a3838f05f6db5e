//! Seeded, counter-based randomness.
//!
//! All noise is a pure function of `(key, stream, position)`: a ChaCha8 block
//! cipher keyed by the problem seed, with the sample id selecting the stream.
//! The same sample therefore produces the same noise at every query point,
//! which is what the shared-sample gradient difference relies on.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Generator returned by [`NoiseKey::stream`] and [`NoiseKey::setup`].
pub type NoiseRng = ChaCha8Rng;

/// Identifier of one stochastic draw `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleId(pub u64);

// Domain separators so that a sample stream and a noise key built from the
// same user seed never share a ChaCha key.
const STREAM_DOMAIN: u64 = 0x5A4D_504C_5354_524D;
const NOISE_DOMAIN: u64 = 0x4E4F_4953_454B_4559;

/// Deterministic sequence of sample ids for one run.
#[derive(Debug, Clone)]
pub struct SampleStream {
    rng: ChaCha8Rng,
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed ^ STREAM_DOMAIN),
        }
    }
}

impl Iterator for SampleStream {
    type Item = SampleId;

    fn next(&mut self) -> Option<SampleId> {
        Some(SampleId(self.rng.next_u64()))
    }
}

/// Noise source keyed by a problem seed; each sample id reads its own stream.
#[derive(Debug, Clone, Copy)]
pub struct NoiseKey(u64);

impl NoiseKey {
    pub fn new(seed: u64) -> Self {
        Self(seed ^ NOISE_DOMAIN)
    }

    /// Fresh generator positioned at the start of `sample`'s stream.
    pub fn stream(&self, sample: SampleId) -> NoiseRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(sample.0);
        rng
    }

    /// Generator for construction-time data (datasets, targets).
    pub fn setup(&self, purpose: u64) -> NoiseRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0.rotate_left(17) ^ purpose);
        rng.set_stream(u64::MAX - purpose);
        rng
    }
}

/// Uniform on `[0, 1)` with 53 bits of precision.
pub fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `[lo, hi)`.
pub fn uniform(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

/// Uniform index in `0..n`, `n > 0`.
pub fn below(rng: &mut impl RngCore, n: usize) -> usize {
    // Lemire's multiply-shift; bias is below 2^-64 * n and irrelevant here.
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

pub fn rademacher(rng: &mut impl RngCore) -> f64 {
    if rng.next_u64() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `n` independent standard normals (Box-Muller).
pub fn standard_normals(rng: &mut impl RngCore, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - uniform01(rng);
        let u2 = uniform01(rng);
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        out.push(r * libm::cos(theta));
        out.push(r * libm::sin(theta));
    }
    out.truncate(n);
    out
}

/// Uniform direction on the unit sphere in `n` dimensions.
pub fn unit_sphere(rng: &mut impl RngCore, n: usize) -> Vec<f64> {
    loop {
        let mut z = standard_normals(rng, n);
        let norm = libm::sqrt(z.iter().map(|x| x * x).sum());
        if norm > 1e-300 {
            z.iter_mut().for_each(|x| *x /= norm);
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_reproducible() {
        let a: Vec<_> = SampleStream::new(42).take(1000).collect();
        let b: Vec<_> = SampleStream::new(42).take(1000).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_seeds_give_distinct_streams() {
        let a = SampleStream::new(1).take(1000);
        let b = SampleStream::new(2).take(1000);
        let differ = a.zip(b).filter(|(x, y)| x != y).count();
        assert!(differ >= 990, "{differ}");
    }

    #[test]
    fn noise_depends_only_on_key_and_sample() {
        let key = NoiseKey::new(7);
        let a = standard_normals(&mut key.stream(SampleId(3)), 5);
        let b = standard_normals(&mut key.stream(SampleId(3)), 5);
        let c = standard_normals(&mut key.stream(SampleId(4)), 5);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn normals_have_unit_variance() {
        let mut rng = NoiseKey::new(1).setup(0);
        let z = standard_normals(&mut rng, 200_000);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / z.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn sphere_points_have_unit_norm() {
        let mut rng = NoiseKey::new(9).setup(1);
        for n in [1, 2, 7] {
            let u = unit_sphere(&mut rng, n);
            let norm: f64 = u.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-14);
        }
    }
}
