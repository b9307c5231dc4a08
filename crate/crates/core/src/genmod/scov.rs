use num_complex::Complex64;

use crate::dataset::ChannelDataset;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

use super::moments::weighted_moments;

/// Single complex Gaussian `N_C(mean, covariance)` fitted by sample moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ScovModel {
    pub mean: Vec<Complex64>,
    pub covariance: CMatrix,
}

impl ScovModel {
    pub fn n_antennas(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and (biased, `1/M`) sample covariance.
pub fn fit_scov(ds: &ChannelDataset) -> Result<ScovModel> {
    if ds.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: ds.len() });
    }
    let rows = ds.real_rows(0..ds.len());
    let (_, mean, covariance) = weighted_moments(ds, &rows, None);
    Ok(ScovModel { mean, covariance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn repeated_vector_has_zero_covariance() {
        let v = vec![c(1.0, 2.0), c(-0.5, 0.25)];
        let ds = ChannelDataset::from_samples(2, [v.clone(), v.clone()]).unwrap();
        let m = fit_scov(&ds).unwrap();
        assert_eq!(m.mean, v);
        assert!(m.covariance.max_abs() < 1e-15);
    }

    #[test]
    fn two_point_example() {
        let ds = ChannelDataset::from_samples(2, [[c(1.0, 0.0), c(0.0, 0.0)], [c(-1.0, 0.0), c(0.0, 0.0)]]).unwrap();
        let m = fit_scov(&ds).unwrap();
        assert!(m.mean.iter().all(|z| z.norm() < 1e-15));
        let expect = CMatrix::from_diag(&[1.0, 0.0]);
        assert!(m.covariance.sub(&expect).max_abs() < 1e-15);
    }

    #[test]
    fn translation_shifts_mean_only() {
        let samples: Vec<[Complex64; 3]> = (0..50)
            .map(|i| {
                let t = i as f64;
                [c(t.sin(), t.cos()), c((2.0 * t).cos(), 0.3 * t.sin()), c(0.1 * t, -0.2)]
            })
            .collect();
        let shift = [c(1.0, -2.0), c(0.5, 0.5), c(-3.0, 0.0)];
        let shifted: Vec<Vec<Complex64>> =
            samples.iter().map(|s| s.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        let a = fit_scov(&ChannelDataset::from_samples(3, &samples).unwrap()).unwrap();
        let b = fit_scov(&ChannelDataset::from_samples(3, &shifted).unwrap()).unwrap();
        for ((x, y), s) in b.mean.iter().zip(&a.mean).zip(&shift) {
            assert!((x - y - s).norm() < 1e-12);
        }
        assert!(b.covariance.sub(&a.covariance).max_abs() < 1e-12);
    }

    #[test]
    fn needs_two_samples() {
        let ds = ChannelDataset::from_samples(1, [[c(1.0, 0.0)]]).unwrap();
        assert!(matches!(fit_scov(&ds), Err(Error::InsufficientData { needed: 2, got: 1 })));
    }
}
