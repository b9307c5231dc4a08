//! Reproducible random streams.
//!
//! A [`RngStream`] is a `(seed, stream_id)` pair mapped onto a ChaCha8
//! generator: the seed selects the key and the stream id selects the ChaCha
//! stream. Substreams for a purpose and an index are derived by hashing, so
//! every sample of a batch owns an independent generator and parallel runs
//! reproduce serial runs bit for bit.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ChannelVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream for a named purpose below this one.
    pub fn derive(&self, label: &str) -> Self {
        Self { seed: self.seed, stream_id: splitmix64(self.stream_id ^ splitmix64(label_hash(label))) }
    }

    /// Stream for the `index`-th item (sample, cell, ...) below this one.
    pub fn index(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id.rotate_left(17) ^ splitmix64(index.wrapping_add(1))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Draws one circularly-symmetric standard complex normal: real and imaginary
/// parts are independent N(0, 1/2), so `E|z|^2 = 1`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn fill_complex_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [Complex64]) {
    for z in out {
        *z = complex_normal(rng);
    }
}

/// `n` i.i.d. draws from `N_C(0, 1)` taken from the start of `stream`.
pub fn sample_complex_standard_normal(stream: &RngStream, n: usize) -> Result<ChannelVector> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let mut rng = stream.rng();
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    fill_complex_normal(&mut rng, &mut v);
    Ok(ChannelVector::new_unchecked(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_length_is_rejected() {
        assert!(sample_complex_standard_normal(&RngStream::new(1, 0), 0).is_err());
    }

    #[test]
    fn moments_match_circular_convention() {
        let v = sample_complex_standard_normal(&RngStream::new(7, 3), 1_000_000).unwrap();
        let n = v.len() as f64;
        let power = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let mean: Complex64 = v.iter().sum::<Complex64>() / n;
        let re_var = v.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        assert!((power - 1.0).abs() < 0.01, "power {power}");
        assert!(mean.re.abs() < 0.01 && mean.im.abs() < 0.01, "mean {mean}");
        assert!((re_var - 0.5).abs() < 0.01);
    }

    #[test]
    fn same_stream_same_sequence() {
        let s = RngStream::new(42, 9);
        let a = sample_complex_standard_normal(&s, 64).unwrap();
        let b = sample_complex_standard_normal(&s, 64).unwrap();
        assert_eq!(a, b);
        let c = sample_complex_standard_normal(&s.index(1), 64).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn derived_streams_are_distinct() {
        let s = RngStream::new(1, 0);
        let ids: std::collections::HashSet<u64> = (0..10_000).map(|i| s.index(i).stream_id).collect();
        assert_eq!(ids.len(), 10_000);
        assert_ne!(s.derive("a").stream_id, s.derive("b").stream_id);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let s = RngStream::new(5, 0);
        let a = sample_complex_standard_normal(&s.index(0), 100_000).unwrap();
        let b = sample_complex_standard_normal(&s.index(1), 100_000).unwrap();
        let corr: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum::<Complex64>() / a.len() as f64;
        assert!(corr.norm() < 0.015, "cross correlation {corr}");
    }
}
