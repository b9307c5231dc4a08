//! Downstream PHY applications used by the cross-check: MMSE-type channel
//! estimators, a linear (PCA) compressor and the NMSE score.

pub mod compress;
pub mod estimate;

pub use compress::{compress_reconstruct, fit_compressor, LinearCompressor};
pub use estimate::{
    estimate, estimate_gmm, estimate_lmmse, nmse, observe, EstimatorModel, MixtureEstimator, ObservationSet,
};
