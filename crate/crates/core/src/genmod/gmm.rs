//! Complex Gaussian mixture: EM fitting, responsibilities and ancestral sampling.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ChannelDataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_pd, cholesky_psd, gemm_nt, CMatrix, Cholesky};
use crate::par;
use crate::rng::{fill_complex_normal, RngStream};

use super::kmeans::kmeans_pp;
use super::moments::weighted_moments;
use super::scov::{fit_scov, ScovModel};

/// Mixture weight below which a component counts as collapsed.
const COLLAPSE_WEIGHT: f64 = 1e-6;
/// Responsibilities below this are dropped from the M-step sums.
const RESP_FLOOR: f64 = 1e-10;

/// Re-seeds per component before it is frozen at the sample statistics.
const MAX_RESEEDS: usize = 3;

/// Mixture `sum_k pi_k N_C(mu_k, C_k)` with full covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<Complex64>>,
    pub covariances: Vec<CMatrix>,
    /// Mean training log-likelihood after each E-step.
    pub fit_log: Vec<f64>,
    /// Iterations (indices into `fit_log`) preceded by a component re-seed;
    /// EM monotonicity does not apply across those transitions.
    pub reseed_iterations: Vec<usize>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<Complex64>>, covariances: Vec<CMatrix>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covariances.len() != k {
            return Err(Error::InvalidArgument("mixture needs matching, non-empty parameter lists".into()));
        }
        let n = means[0].len();
        if n == 0 || means.iter().any(|m| m.len() != n) || covariances.iter().any(|c| c.rows() != n || c.cols() != n) {
            return Err(Error::InvalidArgument("mixture component dimensions disagree".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("mixture weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
        }
        Ok(Self { weights, means, covariances, fit_log: Vec::new(), reseed_iterations: Vec::new() })
    }

    pub fn from_scov(s: &ScovModel) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![s.mean.clone()],
            covariances: vec![s.covariance.clone()],
            fit_log: Vec::new(),
            reseed_iterations: Vec::new(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.means[0].len()
    }

    /// `sum_k pi_k mu_k`.
    pub fn mean(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_antennas()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, z) in out.iter_mut().zip(m) {
                *o += z * *w;
            }
        }
        out
    }

    /// Precomputes factorizations for density evaluation.
    pub fn densities(&self) -> Result<GmmDensity> {
        GmmDensity::new(&self.weights, &self.means, &self.covariances, 0.0)
    }
}

/// One component prepared for batched log-density evaluation.
#[derive(Debug, Clone)]
pub(crate) struct ComponentDensity {
    mean_real: Vec<f64>,
    /// Realified `L^{-1}`, `2N x 2N` row-major.
    linv_real: Vec<f64>,
    /// `ln pi_k - N ln(pi) - ln det C_k`.
    log_const: f64,
}

/// Mixture prepared for fast evaluation of `ln pi_k + ln N_C(y; mu_k, C_k + s I)`.
#[derive(Debug, Clone)]
pub struct GmmDensity {
    n: usize,
    comps: Vec<ComponentDensity>,
    pub(crate) factors: Vec<Cholesky>,
}

impl GmmDensity {
    /// `extra_diag` is added to every covariance (the observation noise
    /// variance when evaluating the observation-domain mixture).
    pub fn new(weights: &[f64], means: &[Vec<Complex64>], covs: &[CMatrix], extra_diag: f64) -> Result<Self> {
        let n = means[0].len();
        let mut comps = Vec::with_capacity(weights.len());
        let mut factors = Vec::with_capacity(weights.len());
        for (k, ((w, mu), c)) in weights.iter().zip(means).zip(covs).enumerate() {
            let shifted;
            let c = if extra_diag != 0.0 {
                shifted = c.add_diagonal(extra_diag);
                &shifted
            } else {
                c
            };
            let f = cholesky_pd(c, &format!("component {k} covariance"))?;
            let linv = f.lower_inverse();
            let mut mean_real = vec![0.0; 2 * n];
            for (j, z) in mu.iter().enumerate() {
                mean_real[j] = z.re;
                mean_real[n + j] = z.im;
            }
            comps.push(ComponentDensity {
                mean_real,
                linv_real: linv.realify(),
                log_const: w.ln() - n as f64 * PI.ln() - f.log_det(),
            });
            factors.push(f);
        }
        Ok(Self { n, comps, factors })
    }

    pub fn n_components(&self) -> usize {
        self.comps.len()
    }

    /// `ln pi_k N_C(x_i; ...)` for stacked real rows, output `(rows, K)` row-major.
    pub(crate) fn log_joint(&self, rows: &[f64]) -> Vec<f64> {
        let d = 2 * self.n;
        let m = rows.len() / d;
        let k_total = self.comps.len();
        let mut out = vec![0.0; m * k_total];
        let mut diff = vec![0.0; m * d];
        let mut z = vec![0.0; m * d];
        for (k, comp) in self.comps.iter().enumerate() {
            for (dst, src) in diff.chunks_exact_mut(d).zip(rows.chunks_exact(d)) {
                for ((o, x), mu) in dst.iter_mut().zip(src).zip(&comp.mean_real) {
                    *o = x - mu;
                }
            }
            gemm_nt(1.0, &diff, &comp.linv_real, 0.0, &mut z, m, d, d);
            for i in 0..m {
                let quad: f64 = z[i * d..(i + 1) * d].iter().map(|v| v * v).sum();
                out[i * k_total + k] = comp.log_const - quad;
            }
        }
        out
    }

    /// Responsibilities for a single vector.
    pub fn responsibilities(&self, h: &[Complex64]) -> Result<Vec<f64>> {
        if h.len() != self.n {
            return Err(Error::InvalidArgument(format!("vector length {} != model dimension {}", h.len(), self.n)));
        }
        let mut row = vec![0.0; 2 * self.n];
        for (j, z) in h.iter().enumerate() {
            row[j] = z.re;
            row[self.n + j] = z.im;
        }
        let mut lj = self.log_joint(&row);
        log_normalize(&mut lj)
            .ok_or_else(|| Error::Numeric("all component densities underflow for sample 0".into()))?;
        Ok(lj)
    }

    /// Responsibilities for every sample of `ds`, `(M, K)` row-major.
    pub fn responsibilities_batch(&self, ds: &ChannelDataset) -> Result<Vec<f64>> {
        let k = self.comps.len();
        let parts = par::map_chunks(ds.len(), par::CHUNK_ROWS, |r| -> Result<Vec<f64>> {
            let start = r.start;
            let mut lj = self.log_joint(&ds.real_rows(r));
            for (i, row) in lj.chunks_exact_mut(k).enumerate() {
                log_normalize(row).ok_or_else(|| {
                    Error::Numeric(format!("all component densities underflow for sample {}", start + i))
                })?;
            }
            Ok(lj)
        });
        let mut out = Vec::with_capacity(ds.len() * k);
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

/// In-place log-sum-exp normalization; returns the log normalizer, or `None`
/// when every entry is `-inf` or something is NaN.
pub(crate) fn log_normalize(row: &mut [f64]) -> Option<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let s: f64 = row.iter().map(|v| (v - max).exp()).sum();
    let lse = max + s.ln();
    for v in row.iter_mut() {
        *v = (*v - lse).exp();
    }
    lse.is_finite().then_some(lse)
}

/// `p(k | h)` for one vector.
pub fn gmm_responsibility(model: &GmmModel, h: &[Complex64]) -> Result<Vec<f64>> {
    model.densities()?.responsibilities(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmFitConfig {
    pub components: usize,
    /// Stop once `|delta LL| / |LL|` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Subset size for k-means++ seeding.
    pub init_subset: usize,
}

impl Default for GmmFitConfig {
    fn default() -> Self {
        Self { components: 32, tol: 1e-4, max_iter: 100, init_subset: 10_000 }
    }
}

impl GmmFitConfig {
    pub fn with_components(components: usize) -> Self {
        Self { components, ..Self::default() }
    }
}

struct EStep {
    mean_ll: f64,
    resp: Vec<f64>,
    sample_ll: Vec<f64>,
}

fn e_step(dens: &GmmDensity, rows: &[f64], d: usize, iter: usize) -> Result<EStep> {
    let m = rows.len() / d;
    let k = dens.n_components();
    let parts = par::map_chunks(m, par::CHUNK_ROWS, |r| -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let start = r.start;
        let mut lj = dens.log_joint(&rows[r.start * d..r.end * d]);
        let mut lls = Vec::with_capacity(r.len());
        for (i, row) in lj.chunks_exact_mut(k).enumerate() {
            let lse = log_normalize(row).ok_or_else(|| {
                Error::Numeric(format!("non-finite likelihood at EM iteration {iter} (sample {})", start + i))
            })?;
            lls.push(lse);
        }
        let partial = par::tree_sum(&lls);
        Ok((lj, lls, partial))
    });
    let mut resp = Vec::with_capacity(m * k);
    let mut sample_ll = Vec::with_capacity(m);
    let mut partials = Vec::new();
    for p in parts {
        let (lj, lls, s) = p?;
        resp.extend(lj);
        sample_ll.extend(lls);
        partials.push(s);
    }
    let mean_ll = par::tree_sum(&partials) / m as f64;
    if !mean_ll.is_finite() {
        return Err(Error::Numeric(format!("non-finite likelihood at EM iteration {iter}")));
    }
    Ok(EStep { mean_ll, resp, sample_ll })
}

/// Fits a `components`-component mixture by EM.
///
/// Means are seeded by k-means++, covariances start at the sample covariance
/// and weights uniform. Components whose weight falls below `1e-6` or whose
/// covariance cannot be factored are re-seeded at the worst-explained sample;
/// after three re-seeds a component is frozen at the sample statistics.
pub fn fit_gmm(ds: &ChannelDataset, cfg: &GmmFitConfig, stream: &RngStream) -> Result<GmmModel> {
    let k = cfg.components;
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one mixture component".into()));
    }
    if ds.len() < 2 * k {
        return Err(Error::InsufficientData { needed: 2 * k, got: ds.len() });
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::InvalidArgument("tolerance must be non-negative".into()));
    }
    let n = ds.n_antennas();
    let d = 2 * n;
    let m = ds.len();
    let rows = ds.real_rows(0..m);
    let scov = fit_scov(ds)?;

    let mut means =
        if k == 1 { vec![scov.mean.clone()] } else { kmeans_pp(ds, k, cfg.init_subset, &stream.derive("kmeans++")) };
    let mut covs = vec![scov.covariance.clone(); k];
    let mut weights = vec![1.0 / k as f64; k];
    let mut reseeds = vec![0usize; k];
    let mut frozen = vec![false; k];
    let mut fit_log = Vec::new();
    let mut reseed_iterations = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    let mut last_sample_ll: Option<Vec<f64>> = None;

    for iter in 0..=cfg.max_iter {
        // Components whose covariance is singular (needs diagonal loading).
        let mut reseeded = false;
        loop {
            let mut bad = pending.clone();
            for (j, c) in covs.iter().enumerate() {
                if !bad.contains(&j) && !frozen[j] && !cholesky_pd(c, "component").is_ok_and(|f| f.loading == 0.0) {
                    bad.push(j);
                }
            }
            if bad.is_empty() {
                break;
            }
            reseed(
                &bad,
                ds,
                &scov,
                last_sample_ll.as_deref(),
                &mut means,
                &mut covs,
                &mut weights,
                &mut reseeds,
                &mut frozen,
            );
            if !reseeded {
                reseed_iterations.push(iter);
            }
            reseeded = true;
            pending.clear();
        }

        let dens = GmmDensity::new(&weights, &means, &covs, 0.0)?;
        let e = e_step(&dens, &rows, d, iter)?;
        let converged = !reseeded
            && fit_log
                .last()
                .map(|&prev: &f64| ((e.mean_ll - prev) / e.mean_ll.abs().max(f64::MIN_POSITIVE)).abs() < cfg.tol)
                .unwrap_or(false);
        fit_log.push(e.mean_ll);
        if converged || iter == cfg.max_iter {
            break;
        }

        // M-step, one component per task.
        let resp = &e.resp;
        let updates = par::map_indexed(k, |j| {
            let w: Vec<f64> = (0..m)
                .map(|i| {
                    let r = resp[i * k + j];
                    if r < RESP_FLOOR {
                        0.0
                    } else {
                        r
                    }
                })
                .collect();
            if frozen[j] {
                let total: f64 = w.iter().sum();
                return (total, None);
            }
            let (total, mu, cov) = weighted_moments(ds, &rows, Some(&w));
            (total, Some((mu, cov)))
        });
        let grand: f64 = updates.iter().map(|u| u.0).sum();
        for (j, (total, upd)) in updates.into_iter().enumerate() {
            weights[j] = total / grand;
            if let Some((mu, cov)) = upd {
                if weights[j] >= COLLAPSE_WEIGHT {
                    means[j] = mu;
                    covs[j] = cov;
                } else {
                    pending.push(j);
                }
            }
        }
        last_sample_ll = Some(e.sample_ll);
    }

    Ok(GmmModel { weights, means, covariances: covs, fit_log, reseed_iterations })
}

#[allow(clippy::too_many_arguments)]
fn reseed(
    bad: &[usize],
    ds: &ChannelDataset,
    scov: &ScovModel,
    sample_ll: Option<&[f64]>,
    means: &mut [Vec<Complex64>],
    covs: &mut [CMatrix],
    weights: &mut [f64],
    reseeds: &mut [usize],
    frozen: &mut [bool],
) {
    let k = weights.len();
    // worst-explained samples first
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if let Some(ll) = sample_ll {
        order.sort_by(|&a, &b| ll[a].total_cmp(&ll[b]).then(a.cmp(&b)));
    }
    let mut next = order.into_iter();
    for &j in bad {
        reseeds[j] += 1;
        covs[j] = scov.covariance.clone();
        if reseeds[j] > MAX_RESEEDS {
            frozen[j] = true;
            means[j] = scov.mean.clone();
        } else if let Some(i) = next.next() {
            means[j] = ds.sample(i).to_vec();
        }
        weights[j] = weights[j].max(1.0 / k as f64);
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}

/// Ancestral sampling: draw a component from the weights, then
/// `h = mu_k + L_k eps` with `eps ~ N_C(0, I)`. Also returns the component of
/// every sample.
pub fn sample_gmm_labeled(model: &GmmModel, m: usize, stream: &RngStream) -> Result<(ChannelDataset, Vec<usize>)> {
    if m == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let n = model.n_antennas();
    let factors = model
        .covariances
        .iter()
        .enumerate()
        .map(|(k, c)| cholesky_psd(c, &format!("component {k} covariance")))
        .collect::<Result<Vec<_>>>()?;
    let mut cdf = Vec::with_capacity(model.n_components());
    let mut acc = 0.0;
    for w in &model.weights {
        acc += w;
        cdf.push(acc);
    }
    let base = stream.derive("gmm-sample");
    let chunks = par::map_chunks(m, par::CHUNK_ROWS, |r| {
        let mut data = Vec::with_capacity(r.len() * n);
        let mut labels = Vec::with_capacity(r.len());
        let mut eps = vec![Complex64::new(0.0, 0.0); n];
        for i in r {
            let mut rng = base.index(i as u64).rng();
            let u = rng.random::<f64>() * acc;
            let k = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
            fill_complex_normal(&mut rng, &mut eps);
            let l = &factors[k].l;
            for (a, mu) in model.means[k].iter().enumerate() {
                let s: Complex64 = l.row(a)[..=a].iter().zip(&eps).map(|(x, e)| x * e).sum();
                data.push(mu + s);
            }
            labels.push(k);
        }
        (data, labels)
    });
    let mut data = Vec::with_capacity(m * n);
    let mut labels = Vec::with_capacity(m);
    for (d, l) in chunks {
        data.extend(d);
        labels.extend(l);
    }
    let ds = ChannelDataset::new(n, data)?.with_meta(DatasetMeta {
        seed: Some(stream.seed),
        generator: Some(format!("gmm(K={})", model.n_components())),
        ..Default::default()
    });
    Ok((ds, labels))
}

/// [`sample_gmm_labeled`] without the labels.
pub fn sample_gmm(model: &GmmModel, m: usize, stream: &RngStream) -> Result<ChannelDataset> {
    sample_gmm_labeled(model, m, stream).map(|(ds, _)| ds)
}
