//! Reference generative models.
//!
//! * [`ScovModel`]: a single complex Gaussian with the sample mean and covariance.
//! * [`GmmModel`]: a complex Gaussian mixture fitted by EM and sampled ancestrally.
//! * [`diffusion`]: a reverse diffusion chain whose denoiser is the exact
//!   posterior mean of a Gaussian mixture target.

pub mod diffusion;
pub mod gmm;
pub mod io;
mod kmeans;
mod moments;
pub mod scov;

pub use diffusion::{
    analytic_posterior_mean, make_schedule, sample_diffusion, AnalyticDenoiser, DiffusionSchedule, RealGmm,
};
pub use gmm::{fit_gmm, gmm_responsibility, sample_gmm, sample_gmm_labeled, GmmDensity, GmmFitConfig, GmmModel};
pub use io::{read_model, write_model};
pub use scov::{fit_scov, ScovModel};
