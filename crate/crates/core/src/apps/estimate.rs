//! Channel estimation from `y = h + n`, `n ~ N_C(0, sigma^2 I)`.
//!
//! Under a mixture prior the MMSE estimate is
//! `sum_k p(k | y) [mu_k + C_k (C_k + sigma^2 I)^{-1} (y - mu_k)]`, where
//! `p(k | y)` uses the observation-domain mixture with covariances
//! `C_k + sigma^2 I`. A single component reduces this to the LMMSE estimator.

use num_complex::Complex64;

use crate::dataset::{ChannelDataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::genmod::{GmmDensity, GmmModel, ScovModel};
use crate::linalg::{gemm_nt, CMatrix};
use crate::par;
use crate::rng::{fill_complex_normal, RngStream};
use crate::types::NoiseConfig;

use crate::genmod::gmm::log_normalize;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub truth: ChannelDataset,
    pub observations: ChannelDataset,
    pub sigma_sq: f64,
}

/// Adds white circular Gaussian noise of variance `sigma^2` to every sample.
pub fn observe(ds: &ChannelDataset, noise: &NoiseConfig, stream: &RngStream) -> Result<ObservationSet> {
    let n = ds.n_antennas();
    let sigma = noise.sigma_sq().sqrt();
    let base = stream.derive("observe");
    let mut data = ds.as_slice().to_vec();
    par::for_each_chunk_mut(&mut data, n * par::CHUNK_ROWS, |c, chunk| {
        let mut eps = vec![Complex64::new(0.0, 0.0); n];
        for (j, y) in chunk.chunks_exact_mut(n).enumerate() {
            let i = c * par::CHUNK_ROWS + j;
            fill_complex_normal(&mut base.index(i as u64).rng(), &mut eps);
            for (v, e) in y.iter_mut().zip(&eps) {
                *v += e * sigma;
            }
        }
    });
    let observations = ChannelDataset::new(n, data)?;
    Ok(ObservationSet { truth: ds.clone(), observations, sigma_sq: noise.sigma_sq() })
}

/// Prior used by an estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorModel {
    ScovLmmse(ScovModel),
    Gmm(GmmModel),
}

impl EstimatorModel {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorModel::ScovLmmse(_) => "lmmse",
            EstimatorModel::Gmm(_) => "gmm",
        }
    }
}

struct ComponentFilter {
    mean_real: Vec<f64>,
    /// Realified `C (C + sigma^2 I)^{-1}`.
    gain_real: Vec<f64>,
}

/// Mixture prior with all per-`sigma^2` factorizations done once.
pub struct MixtureEstimator {
    n: usize,
    filters: Vec<ComponentFilter>,
    /// Observation-domain densities; `None` for a single component.
    density: Option<GmmDensity>,
}

impl MixtureEstimator {
    pub fn new(weights: &[f64], means: &[Vec<Complex64>], covs: &[CMatrix], sigma_sq: f64) -> Result<Self> {
        let n = means[0].len();
        let density = if weights.len() > 1 {
            Some(
                GmmDensity::new(weights, means, covs, sigma_sq)
                    .map_err(|e| Error::Numeric(format!("estimator setup: {e}")))?,
            )
        } else {
            None
        };
        let mut filters = Vec::with_capacity(weights.len());
        for (k, (mu, c)) in means.iter().zip(covs).enumerate() {
            let f = match &density {
                Some(d) => d.factors[k].clone(),
                None => {
                    crate::linalg::cholesky_pd(&c.add_diagonal(sigma_sq), &format!("component {k} (C + sigma^2 I)"))
                        .map_err(|e| Error::Numeric(format!("estimator setup: {e}")))?
                }
            };
            // C (C + s I)^{-1} = ((C + s I)^{-1} C)^H
            let gain = f.solve(c).adjoint();
            let mut mean_real = vec![0.0; 2 * n];
            for (j, z) in mu.iter().enumerate() {
                mean_real[j] = z.re;
                mean_real[n + j] = z.im;
            }
            filters.push(ComponentFilter { mean_real, gain_real: gain.realify() });
        }
        Ok(Self { n, filters, density })
    }

    pub fn for_model(model: &EstimatorModel, sigma_sq: f64) -> Result<Self> {
        match model {
            EstimatorModel::ScovLmmse(s) => {
                Self::new(&[1.0], std::slice::from_ref(&s.mean), std::slice::from_ref(&s.covariance), sigma_sq)
            }
            EstimatorModel::Gmm(g) => Self::new(&g.weights, &g.means, &g.covariances, sigma_sq),
        }
    }

    fn estimate_rows(&self, rows: &[f64], first: usize) -> Result<Vec<f64>> {
        let d = 2 * self.n;
        let m = rows.len() / d;
        let kn = self.filters.len();
        let weights = match &self.density {
            Some(dens) => {
                let mut lj = dens.log_joint(rows);
                for (i, row) in lj.chunks_exact_mut(kn).enumerate() {
                    log_normalize(row).ok_or_else(|| {
                        Error::Numeric(format!("observation weights underflow for sample {}", first + i))
                    })?;
                }
                lj
            }
            None => vec![1.0; m],
        };
        let mut out = vec![0.0; m * d];
        let mut diff = vec![0.0; m * d];
        let mut cand = vec![0.0; m * d];
        for (k, f) in self.filters.iter().enumerate() {
            if (0..m).all(|i| weights[i * kn + k] == 0.0) {
                continue;
            }
            for (dst, src) in diff.chunks_exact_mut(d).zip(rows.chunks_exact(d)) {
                for ((o, x), mu) in dst.iter_mut().zip(src).zip(&f.mean_real) {
                    *o = x - mu;
                }
            }
            gemm_nt(1.0, &diff, &f.gain_real, 0.0, &mut cand, m, d, d);
            for i in 0..m {
                let w = weights[i * kn + k];
                if w == 0.0 {
                    continue;
                }
                for ((o, c), mu) in out[i * d..(i + 1) * d].iter_mut().zip(&cand[i * d..(i + 1) * d]).zip(&f.mean_real)
                {
                    *o += w * (mu + c);
                }
            }
        }
        Ok(out)
    }

    pub fn estimate(&self, obs: &ChannelDataset) -> Result<ChannelDataset> {
        if obs.n_antennas() != self.n {
            return Err(Error::InvalidArgument(format!(
                "observation dimension {} != model dimension {}",
                obs.n_antennas(),
                self.n
            )));
        }
        let n = self.n;
        let parts = par::map_chunks(obs.len(), par::CHUNK_ROWS, |r| {
            let first = r.start;
            self.estimate_rows(&obs.real_rows(r), first)
        });
        let mut data = Vec::with_capacity(obs.len() * n);
        for p in parts {
            for row in p?.chunks_exact(2 * n) {
                data.extend((0..n).map(|j| Complex64::new(row[j], row[n + j])));
            }
        }
        Ok(ChannelDataset::new(n, data)?
            .with_meta(DatasetMeta { generator: Some("estimate".into()), ..Default::default() }))
    }
}

pub fn estimate(model: &EstimatorModel, obs: &ObservationSet) -> Result<ChannelDataset> {
    MixtureEstimator::for_model(model, obs.sigma_sq)?.estimate(&obs.observations)
}

/// `mu + C (C + sigma^2 I)^{-1} (y - mu)` for every observation.
pub fn estimate_lmmse(model: &ScovModel, obs: &ObservationSet) -> Result<ChannelDataset> {
    MixtureEstimator::new(
        &[1.0],
        std::slice::from_ref(&model.mean),
        std::slice::from_ref(&model.covariance),
        obs.sigma_sq,
    )?
    .estimate(&obs.observations)
}

/// Conditional mean under a mixture prior.
pub fn estimate_gmm(model: &GmmModel, obs: &ObservationSet) -> Result<ChannelDataset> {
    MixtureEstimator::new(&model.weights, &model.means, &model.covariances, obs.sigma_sq)?.estimate(&obs.observations)
}

/// `sum ||h_i - hhat_i||^2 / (N M)`.
pub fn nmse(truth: &ChannelDataset, estimates: &ChannelDataset) -> Result<f64> {
    if truth.len() != estimates.len() || truth.n_antennas() != estimates.n_antennas() {
        return Err(Error::InvalidArgument(format!(
            "size mismatch: {}x{} vs {}x{}",
            truth.len(),
            truth.n_antennas(),
            estimates.len(),
            estimates.n_antennas()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("empty datasets".into()));
    }
    let err: Vec<f64> = truth
        .samples()
        .zip(estimates.samples())
        .map(|(h, e)| h.iter().zip(e).map(|(a, b)| (a - b).norm_sqr()).sum())
        .collect();
    Ok(par::tree_sum(&err) / (truth.n_antennas() * truth.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_obs(y: Complex64, s2: f64) -> ObservationSet {
        let ds = ChannelDataset::new(1, vec![y]).unwrap();
        ObservationSet { truth: ds.clone(), observations: ds, sigma_sq: s2 }
    }

    #[test]
    fn scalar_lmmse_example() {
        let m = ScovModel { mean: vec![c(0.0, 0.0)], covariance: CMatrix::identity(1) };
        let est = estimate_lmmse(&m, &scalar_obs(c(2.0, 0.0), 1.0)).unwrap();
        assert!((est.sample(0)[0] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn observe_noise_power_and_reproducibility() {
        let ds = ChannelDataset::new(8, vec![c(0.0, 0.0); 8 * 10_000]).unwrap();
        let noise = NoiseConfig::from_sigma_sq(0.3).unwrap();
        let o = observe(&ds, &noise, &RngStream::new(1, 0)).unwrap();
        let p = o.observations.mean_sq_norm() / 8.0;
        assert!((p - 0.3).abs() / 0.3 < 0.02, "{p}");
        let o2 = observe(&ds, &noise, &RngStream::new(1, 0)).unwrap();
        assert_eq!(o, o2);
        let tiny = observe(&ds, &NoiseConfig::from_sigma_sq(1e-300).unwrap(), &RngStream::new(1, 0)).unwrap();
        assert!(tiny.observations.as_slice().iter().all(|z| z.norm() < 1e-140));
    }

    #[test]
    fn nmse_examples() {
        let t = ChannelDataset::new(2, vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        let z = ChannelDataset::new(2, vec![c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        // error vector (1, j): ||e||^2 = 2, N * M = 2
        assert_eq!(nmse(&t, &z).unwrap(), 1.0);
        let short = ChannelDataset::new(1, vec![c(0.0, 0.0)]).unwrap();
        assert!(matches!(nmse(&t, &short), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gmm_prior_mean_limit() {
        let g = GmmModel::new(
            vec![0.3, 0.7],
            vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(-1.0, 1.0), c(2.0, 0.0)]],
            vec![CMatrix::identity(2), CMatrix::from_diag(&[0.5, 2.0])],
        )
        .unwrap();
        let ds = ChannelDataset::new(2, vec![c(3.0, -1.0), c(0.5, 0.5)]).unwrap();
        let obs = ObservationSet { truth: ds.clone(), observations: ds, sigma_sq: 1e12 };
        let est = estimate_gmm(&g, &obs).unwrap();
        let prior = g.mean();
        for (a, b) in est.sample(0).iter().zip(&prior) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }
}
