//! Diffusion sampling with an analytic denoiser.
//!
//! The forward process is `q(h_t | h_{t-1}) = N(sqrt(alpha_t) h_{t-1}, (1 - alpha_t) I)`
//! on stacked real vectors. For a Gaussian-mixture target the marginal at
//! step `t` is again a mixture,
//! `sum_k pi_k N(sqrt(abar_t) m_k, abar_t S_k + (1 - abar_t) I)`, so the
//! posterior mean `E[h_0 | h_t]` is available in closed form. The reverse
//! chain plugs it into the usual ancestral update.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{ChannelDataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::linalg::{gemm_nn, gemm_nt, symmetric_eigen, CMatrix};
use crate::par;
use crate::rng::RngStream;

use super::gmm::{log_normalize, GmmModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub n_steps: usize,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
    /// Reverse-step variances; `sigmas_sq[0]` (step 1) is zero.
    pub sigmas_sq: Vec<f64>,
}

impl DiffusionSchedule {
    /// `abar_{t}` with the convention `abar_0 = 1`; `t` is 1-based.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }
}

/// Linear beta schedule from `beta_start` to `beta_end` over `t_steps` steps.
pub fn make_schedule(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    if t_steps == 0 {
        return Err(Error::Config("diffusion needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "beta range must satisfy 0 < start <= end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let betas: Vec<f64> = (0..t_steps)
        .map(|i| {
            if t_steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (t_steps - 1) as f64
            }
        })
        .collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(t_steps);
    let mut acc = 1.0;
    for a in &alphas {
        acc *= a;
        alpha_bars.push(acc);
    }
    let sigmas_sq = (0..t_steps)
        .map(|i| if i == 0 { 0.0 } else { (1.0 - alphas[i]) * (1.0 - alpha_bars[i - 1]) / (1.0 - alpha_bars[i]) })
        .collect();
    Ok(DiffusionSchedule { n_steps: t_steps, betas, alphas, alpha_bars, sigmas_sq })
}

/// Real `2N`-dimensional image of a complex mixture: means `[Re mu; Im mu]`
/// and covariances `1/2 [[Re C, -Im C], [Im C, Re C]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGmm {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// `dim x dim` row-major.
    pub covariances: Vec<Vec<f64>>,
}

impl RealGmm {
    pub fn from_complex(model: &GmmModel) -> Self {
        let n = model.n_antennas();
        let means =
            model.means.iter().map(|mu| mu.iter().map(|z| z.re).chain(mu.iter().map(|z| z.im)).collect()).collect();
        let covariances =
            model.covariances.iter().map(|c| c.realify().into_iter().map(|v| 0.5 * v).collect()).collect();
        Self { dim: 2 * n, weights: model.weights.clone(), means, covariances }
    }

    /// Complex means and covariances `C = S11 + S22 + j (S21 - S12)`.
    pub fn to_complex(&self) -> (Vec<Vec<Complex64>>, Vec<CMatrix>) {
        let n = self.dim / 2;
        let d = self.dim;
        let means = self.means.iter().map(|m| (0..n).map(|j| Complex64::new(m[j], m[n + j])).collect()).collect();
        let covs = self
            .covariances
            .iter()
            .map(|s| {
                CMatrix::from_fn(n, n, |a, b| {
                    Complex64::new(s[a * d + b] + s[(n + a) * d + n + b], s[(n + a) * d + b] - s[a * d + n + b])
                })
            })
            .collect();
        (means, covs)
    }
}

struct EigenComponent {
    log_weight: f64,
    mean: Vec<f64>,
    /// Eigenvalues of the component covariance, clamped at zero.
    lambda: Vec<f64>,
    /// Eigenvectors as columns, row-major `dim x dim`.
    u: Vec<f64>,
}

/// Closed-form `E[h_0 | h_t]` for a [`RealGmm`] target, with each component
/// covariance diagonalized once up front.
pub struct AnalyticDenoiser {
    dim: usize,
    comps: Vec<EigenComponent>,
}

impl AnalyticDenoiser {
    pub fn new(rgmm: &RealGmm) -> Result<Self> {
        let d = rgmm.dim;
        let mut comps = Vec::with_capacity(rgmm.weights.len());
        for (k, ((w, m), s)) in rgmm.weights.iter().zip(&rgmm.means).zip(&rgmm.covariances).enumerate() {
            let (lambda, u) = symmetric_eigen(d, s).map_err(|e| Error::Numeric(format!("component {k}: {e}")))?;
            comps.push(EigenComponent {
                log_weight: w.ln(),
                mean: m.clone(),
                lambda: lambda.into_iter().map(|v| v.max(0.0)).collect(),
                u,
            });
        }
        Ok(Self { dim: d, comps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Posterior means for stacked rows `h_t` (row-major `(m, dim)`) at noise
    /// level `abar`. Requires `abar < 1` or non-singular component covariances.
    pub fn posterior_mean(&self, rows: &[f64], abar: f64) -> Result<Vec<f64>> {
        let d = self.dim;
        let m = rows.len() / d;
        let kn = self.comps.len();
        let sa = abar.sqrt();
        let mut z_all: Vec<Vec<f64>> = Vec::with_capacity(kn);
        let mut logw = vec![0.0; m * kn];
        let mut shifted = vec![0.0; m * d];
        let mut gains: Vec<Vec<f64>> = Vec::with_capacity(kn);
        for (k, c) in self.comps.iter().enumerate() {
            let s: Vec<f64> = c.lambda.iter().map(|l| abar * l + (1.0 - abar)).collect();
            if s.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Numeric(format!("component {k}: singular marginal covariance")));
            }
            let half_logdet: f64 = 0.5 * s.iter().map(|v| v.ln()).sum::<f64>();
            for (dst, src) in shifted.chunks_exact_mut(d).zip(rows.chunks_exact(d)) {
                for ((o, x), mu) in dst.iter_mut().zip(src).zip(&c.mean) {
                    *o = x - sa * mu;
                }
            }
            let mut z = vec![0.0; m * d];
            gemm_nn(1.0, &shifted, &c.u, 0.0, &mut z, m, d, d);
            for i in 0..m {
                let quad: f64 = z[i * d..(i + 1) * d].iter().zip(&s).map(|(v, sv)| v * v / sv).sum();
                logw[i * kn + k] = c.log_weight - half_logdet - 0.5 * quad;
            }
            gains.push(c.lambda.iter().zip(&s).map(|(l, sv)| sa * l / sv).collect());
            z_all.push(z);
        }
        for (i, row) in logw.chunks_exact_mut(kn).enumerate() {
            log_normalize(row).ok_or_else(|| Error::Numeric(format!("posterior weights underflow for row {i}")))?;
        }
        let mut out = vec![0.0; m * d];
        for (k, c) in self.comps.iter().enumerate() {
            let z = &mut z_all[k];
            let mut any = false;
            for i in 0..m {
                let w = logw[i * kn + k];
                if w != 0.0 {
                    any = true;
                }
                for (zv, g) in z[i * d..(i + 1) * d].iter_mut().zip(&gains[k]) {
                    *zv *= w * g;
                }
                for (o, mu) in out[i * d..(i + 1) * d].iter_mut().zip(&c.mean) {
                    *o += w * mu;
                }
            }
            if any {
                gemm_nt(1.0, z, &c.u, 1.0, &mut out, m, d, d);
            }
        }
        Ok(out)
    }
}

/// `E[h_0 | h_t]` for a single stacked vector at 1-based step `t`.
pub fn analytic_posterior_mean(rgmm: &RealGmm, h_t: &[f64], t: usize, sched: &DiffusionSchedule) -> Result<Vec<f64>> {
    if t == 0 || t > sched.n_steps {
        return Err(Error::InvalidArgument(format!("step {t} outside [1, {}]", sched.n_steps)));
    }
    if h_t.len() != rgmm.dim {
        return Err(Error::InvalidArgument(format!("vector length {} != {}", h_t.len(), rgmm.dim)));
    }
    AnalyticDenoiser::new(rgmm)?.posterior_mean(h_t, sched.alpha_bar(t))
}

fn fill_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

/// Runs the reverse chain from `N(0, I)` for `m` samples and converts the
/// final stacked vectors back to complex channels.
pub fn sample_diffusion(
    rgmm: &RealGmm,
    sched: &DiffusionSchedule,
    m: usize,
    stream: &RngStream,
) -> Result<ChannelDataset> {
    if m == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let den = AnalyticDenoiser::new(rgmm)?;
    let d = rgmm.dim;
    let n = d / 2;
    let base = stream.derive("diffusion-sample");
    let chunks = par::map_chunks(m, par::CHUNK_ROWS, |r| -> Result<Vec<Complex64>> {
        let rows = r.len();
        let mut rngs: Vec<ChaCha8Rng> = r.clone().map(|i| base.index(i as u64).rng()).collect();
        let mut h = vec![0.0; rows * d];
        for (row, rng) in h.chunks_exact_mut(d).zip(rngs.iter_mut()) {
            fill_normal(rng, row);
        }
        let mut eps = vec![0.0; d];
        for t in (1..=sched.n_steps).rev() {
            let alpha = sched.alphas[t - 1];
            let abar = sched.alpha_bar(t);
            let abar_prev = sched.alpha_bar(t - 1);
            let sigma = sched.sigmas_sq[t - 1].sqrt();
            let h0 = den.posterior_mean(&h, abar).map_err(|e| Error::Numeric(format!("reverse step {t}: {e}")))?;
            let c_t = alpha.sqrt() * (1.0 - abar_prev) / (1.0 - abar);
            let c_0 = abar_prev.sqrt() * (1.0 - alpha) / (1.0 - abar);
            for ((row, x0), rng) in h.chunks_exact_mut(d).zip(h0.chunks_exact(d)).zip(rngs.iter_mut()) {
                fill_normal(rng, &mut eps);
                for ((v, x), e) in row.iter_mut().zip(x0).zip(&eps) {
                    *v = c_t * *v + c_0 * x + sigma * e;
                }
            }
        }
        let mut out = Vec::with_capacity(rows * n);
        for row in h.chunks_exact(d) {
            out.extend((0..n).map(|j| Complex64::new(row[j], row[n + j])));
        }
        Ok(out)
    });
    let mut data = Vec::with_capacity(m * n);
    for c in chunks {
        data.extend(c?);
    }
    Ok(ChannelDataset::new(n, data)?.with_meta(DatasetMeta {
        seed: Some(stream.seed),
        generator: Some(format!("diffusion(K={}, T={})", rgmm.weights.len(), sched.n_steps)),
        ..Default::default()
    }))
}
