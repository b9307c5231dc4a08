use serde::{Deserialize, Serialize};

use crate::dataset::{sq_norm, ChannelDataset};
use crate::types::NoiseConfig;

/// Per-sample spectral efficiency in bit/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeSampleSet {
    pub values: Vec<f64>,
    pub sigma_sq: f64,
}

/// `log2(1 + ||h||^2 / sigma^2)` for every sample.
pub fn spectral_efficiency(ds: &ChannelDataset, noise: &NoiseConfig) -> SeSampleSet {
    let s2 = noise.sigma_sq();
    let values = ds.samples().map(|h| (sq_norm(h) / s2).ln_1p() / std::f64::consts::LN_2).collect();
    SeSampleSet { values, sigma_sq: s2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn zero_channel_has_zero_rate() {
        let ds = ChannelDataset::new(4, vec![Complex64::new(0.0, 0.0); 4]).unwrap();
        let se = spectral_efficiency(&ds, &NoiseConfig::from_sigma_sq(0.3).unwrap());
        assert_eq!(se.values, vec![0.0]);
    }

    #[test]
    fn spot_value_at_20db() {
        let ds = ChannelDataset::new(64, vec![Complex64::new(1.0, 0.0); 64]).unwrap();
        let se = spectral_efficiency(&ds, &NoiseConfig::from_sigma_sq(0.01).unwrap());
        assert!((se.values[0] - 6401f64.log2()).abs() <= 1e-12);
        assert!((se.values[0] - 12.6440).abs() < 1e-4);
    }

    #[test]
    fn more_noise_lowers_rate() {
        let data: Vec<Complex64> = (0..40).map(|i| Complex64::new((i as f64).sin(), 0.1 * i as f64)).collect();
        let ds = ChannelDataset::new(4, data).unwrap();
        let a = spectral_efficiency(&ds, &NoiseConfig::from_sigma_sq(0.1).unwrap());
        let b = spectral_efficiency(&ds, &NoiseConfig::from_sigma_sq(0.2).unwrap());
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(y < x);
        }
    }
}
