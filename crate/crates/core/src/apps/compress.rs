//! PCA-truncation compressor: keep the top `r = max(1, floor(N / rho))`
//! eigenvectors of the training covariance and reconstruct by projection.

use num_complex::Complex64;

use crate::dataset::{ChannelDataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::genmod::fit_scov;
use crate::linalg::{gemm_nt, hermitian_eigen, CMatrix};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCompressor {
    /// `N x r`, orthonormal columns in descending eigenvalue order.
    pub basis: CMatrix,
    pub mean: Vec<Complex64>,
    pub rho: f64,
    pub eigenvalues: Vec<f64>,
}

impl LinearCompressor {
    pub fn latent_dim(&self) -> usize {
        self.basis.cols()
    }
}

pub fn latent_dim(n: usize, rho: f64) -> usize {
    ((n as f64 / rho).floor() as usize).max(1)
}

pub fn fit_compressor(ds: &ChannelDataset, rho: f64) -> Result<LinearCompressor> {
    if !(rho >= 1.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("compression factor must be >= 1, got {rho}")));
    }
    let n = ds.n_antennas();
    if ds.len() < n {
        return Err(Error::InsufficientData { needed: n, got: ds.len() });
    }
    let scov = fit_scov(ds)?;
    let (vals, vecs) = hermitian_eigen(&scov.covariance).map_err(|e| Error::Numeric(format!("compressor: {e}")))?;
    let r = latent_dim(n, rho);
    let mut basis = CMatrix::zeros(n, r);
    for col in 0..r {
        let v: Vec<Complex64> = (0..n).map(|i| vecs[(i, col)]).collect();
        let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let pivot = v.iter().find(|z| z.norm() > 1e-12 * scale).copied().unwrap_or(Complex64::new(1.0, 0.0));
        let phase = pivot.conj() / pivot.norm();
        for (i, z) in v.iter().enumerate() {
            basis[(i, col)] = z * phase;
        }
    }
    Ok(LinearCompressor { basis, mean: scov.mean, rho, eigenvalues: vals })
}

/// `mean + B B^H (h - mean)` for every sample.
pub fn compress_reconstruct(lc: &LinearCompressor, ds: &ChannelDataset) -> Result<ChannelDataset> {
    let n = lc.mean.len();
    if ds.n_antennas() != n {
        return Err(Error::InvalidArgument(format!(
            "dataset dimension {} != compressor dimension {n}",
            ds.n_antennas()
        )));
    }
    let proj = lc.basis.matmul(&lc.basis.adjoint()).realify();
    let d = 2 * n;
    let mean_real: Vec<f64> = lc.mean.iter().map(|z| z.re).chain(lc.mean.iter().map(|z| z.im)).collect();
    let parts = par::map_chunks(ds.len(), par::CHUNK_ROWS, |r| {
        let m = r.len();
        let mut rows = ds.real_rows(r);
        for row in rows.chunks_exact_mut(d) {
            for (v, mu) in row.iter_mut().zip(&mean_real) {
                *v -= mu;
            }
        }
        let mut out = vec![0.0; m * d];
        gemm_nt(1.0, &rows, &proj, 0.0, &mut out, m, d, d);
        let mut data = Vec::with_capacity(m * n);
        for row in out.chunks_exact(d) {
            data.extend((0..n).map(|j| Complex64::new(row[j], row[n + j]) + lc.mean[j]));
        }
        data
    });
    let data: Vec<Complex64> = parts.into_iter().flatten().collect();
    Ok(ChannelDataset::new(n, data)?
        .with_meta(DatasetMeta { generator: Some(format!("pca(rho={})", lc.rho)), ..Default::default() }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::nmse;
    use crate::rng::{complex_normal, fill_complex_normal, RngStream};

    fn correlated(m: usize, n: usize, seed: u64) -> ChannelDataset {
        let mut rng = RngStream::new(seed, 0).rng();
        let a = CMatrix::from_fn(n, n, |i, j| complex_normal(&mut rng) / (1.0 + (i + j) as f64));
        let mut eps = vec![Complex64::new(0.0, 0.0); n];
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m {
            fill_complex_normal(&mut rng, &mut eps);
            data.extend(a.matvec(&eps));
        }
        ChannelDataset::new(n, data).unwrap()
    }

    #[test]
    fn full_basis_is_lossless() {
        let ds = correlated(200, 16, 1);
        let lc = fit_compressor(&ds, 1.0).unwrap();
        assert_eq!(lc.latent_dim(), 16);
        let rec = compress_reconstruct(&lc, &ds).unwrap();
        assert!(nmse(&ds, &rec).unwrap() <= 1e-10);
    }

    #[test]
    fn rank_one_data_needs_one_component() {
        let n = 8;
        let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, 0.3 * i as f64)).collect();
        let mut rng = RngStream::new(2, 0).rng();
        let data: Vec<Complex64> = (0..100)
            .flat_map(|_| {
                let s = complex_normal(&mut rng);
                v.iter().map(move |z| z * s).collect::<Vec<_>>()
            })
            .collect();
        let mut ds = ChannelDataset::new(n, data).unwrap();
        // zero mean exactly: append the negated samples
        let neg: Vec<Complex64> = ds.as_slice().iter().map(|z| -z).collect();
        let mut all = ds.as_slice().to_vec();
        all.extend(neg);
        ds = ChannelDataset::new(n, all).unwrap();
        let lc = fit_compressor(&ds, n as f64).unwrap();
        assert_eq!(lc.latent_dim(), 1);
        let rec = compress_reconstruct(&lc, &ds).unwrap();
        assert!(nmse(&ds, &rec).unwrap() <= 1e-10);
    }

    #[test]
    fn basis_orthonormal_and_sign_fixed() {
        let ds = correlated(300, 12, 3);
        let lc = fit_compressor(&ds, 2.0).unwrap();
        let g = lc.basis.adjoint().matmul(&lc.basis);
        assert!(g.sub(&CMatrix::identity(6)).max_abs() <= 1e-10);
        for col in 0..6 {
            let first = (0..12).map(|i| lc.basis[(i, col)]).find(|z| z.norm() > 1e-12).unwrap();
            assert!(first.im.abs() < 1e-12 && first.re > 0.0);
        }
    }

    #[test]
    fn nested_subspaces_monotone() {
        let ds = correlated(400, 32, 4);
        let mut prev = f64::INFINITY;
        for rho in [16.0, 8.0, 4.0, 2.0] {
            let lc = fit_compressor(&ds, rho).unwrap();
            let e = nmse(&ds, &compress_reconstruct(&lc, &ds).unwrap()).unwrap();
            assert!(e <= prev + 1e-12, "rho={rho}: {e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn idempotent() {
        let ds = correlated(200, 16, 5);
        let lc = fit_compressor(&ds, 4.0).unwrap();
        let once = compress_reconstruct(&lc, &ds).unwrap();
        let twice = compress_reconstruct(&lc, &once).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn argument_errors() {
        let ds = correlated(10, 16, 6);
        assert!(matches!(fit_compressor(&ds, 2.0), Err(Error::InsufficientData { .. })));
        let ds = correlated(50, 4, 6);
        assert!(fit_compressor(&ds, 0.5).is_err());
    }
}
