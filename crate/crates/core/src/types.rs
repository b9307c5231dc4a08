//! Small value types shared across modules.

use std::ops::Deref;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A complex channel vector `h` with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(Vec<Complex64>);

impl ChannelVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("channel vector must not be empty".into()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("channel vector has non-finite entries".into()));
        }
        Ok(Self(entries))
    }

    pub(crate) fn new_unchecked(entries: Vec<Complex64>) -> Self {
        Self(entries)
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

impl Deref for ChannelVector {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

/// Uniform rectangular array, `n_vertical` rows by `n_horizontal` columns.
/// Spacings are in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UraGeometry {
    pub n_vertical: usize,
    pub n_horizontal: usize,
    pub spacing_vertical: f64,
    pub spacing_horizontal: f64,
}

impl Default for UraGeometry {
    fn default() -> Self {
        Self { n_vertical: 4, n_horizontal: 16, spacing_vertical: 1.0, spacing_horizontal: 0.5 }
    }
}

impl UraGeometry {
    pub fn n_antennas(&self) -> usize {
        self.n_vertical * self.n_horizontal
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vertical == 0 || self.n_horizontal == 0 {
            return Err(Error::Config("array dimensions must be positive".into()));
        }
        if !(self.spacing_vertical > 0.0 && self.spacing_horizontal > 0.0)
            || !self.spacing_vertical.is_finite()
            || !self.spacing_horizontal.is_finite()
        {
            return Err(Error::Config("antenna spacings must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Additive white noise level. The SNR of a normalized channel is `1 / sigma_sq`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    sigma_sq: f64,
}

impl NoiseConfig {
    pub fn from_sigma_sq(sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
            return Err(Error::InvalidArgument(format!("noise variance must be positive, got {sigma_sq}")));
        }
        Ok(Self { sigma_sq })
    }

    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::InvalidArgument(format!("SNR must be finite, got {snr_db}")));
        }
        Self::from_sigma_sq(10f64.powf(-snr_db / 10.0))
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn snr_db(&self) -> f64 {
        -10.0 * self.sigma_sq.log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_round_trip() {
        for snr in [-10.0, -3.5, 0.0, 10.0, 20.0, 37.25] {
            let n = NoiseConfig::from_snr_db(snr).unwrap();
            assert!((n.snr_db() - snr).abs() <= 1e-12, "{snr}");
            let m = NoiseConfig::from_sigma_sq(n.sigma_sq()).unwrap();
            assert_eq!(m, n);
        }
        assert_eq!(NoiseConfig::from_snr_db(20.0).unwrap().sigma_sq(), 0.01);
    }

    #[test]
    fn rejects_bad_noise() {
        assert!(NoiseConfig::from_sigma_sq(0.0).is_err());
        assert!(NoiseConfig::from_sigma_sq(-1.0).is_err());
        assert!(NoiseConfig::from_sigma_sq(f64::NAN).is_err());
        assert!(NoiseConfig::from_snr_db(f64::INFINITY).is_err());
    }

    #[test]
    fn channel_vector_rejects_nan() {
        assert!(ChannelVector::new(vec![Complex64::new(f64::NAN, 0.0)]).is_err());
        assert!(ChannelVector::new(vec![]).is_err());
    }

    #[test]
    fn geometry_validation() {
        assert_eq!(UraGeometry::default().n_antennas(), 64);
        let g = UraGeometry { spacing_horizontal: 0.0, ..Default::default() };
        assert!(g.validate().is_err());
    }
}
