//! Gaussian-process preference learning from pairwise comparisons that carry
//! a self-reported confidence level.
//!
//! The engine covers the probit likelihood and its Laplace posterior, the
//! confidence-weighted density that rescales predictive variance, the
//! information-gain acquisition, the variance-drop stopping rule, and the
//! calibration of per-user noise factors.

pub mod acquisition;
pub mod calibration;
pub mod domain;
pub mod error;
pub mod gmm;
pub mod gp;
pub mod math;
pub mod point;

pub use domain::{Bound, Domain};
pub use error::{CoreError, Result};
pub use gp::{
    LaplaceOptions, LikelihoodMode, PosteriorState, PredictiveDistribution, PreferenceDataset, PreferencePair,
    UncertaintyFactors, UncertaintyLevel,
};
pub use math::{CovMatrix, KernelConfig};
pub use point::FeaturePoint;
