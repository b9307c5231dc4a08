//! Generator evaluation metrics.
//!
//! * spectral-efficiency distributions compared by the Wasserstein-1 distance,
//! * codebook fingerprints compared by total variation distance,
//! * the unbiased kernel MMD estimate.

pub mod codebook;
pub mod mmd;
pub mod report;
pub mod se;
pub mod wasserstein;

pub use codebook::{build_codebook, feedback_index, fingerprint, tvd, Codebook, Fingerprint};
pub use mmd::{mmd_unbiased, Bandwidth, MmdEstimate};
pub use report::MetricReport;
pub use se::{spectral_efficiency, SeSampleSet};
pub use wasserstein::{cdf_points, wasserstein1, wasserstein1_cdf_area, wasserstein1_sorted};
