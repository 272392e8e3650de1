//! Probit preference likelihood, Laplace posterior and prediction.

pub mod laplace;
pub mod likelihood;
pub mod predict;
pub mod types;

pub use laplace::{laplace_mode, laplace_mode_with, posterior_covariance, LaplaceFit, LaplaceOptions};
pub use likelihood::{choice_probability, log_likelihood, neg_hessian, LaplaceObjective, LikelihoodMode};
pub use predict::{PosteriorState, PredictiveDistribution};
pub use types::{PreferenceDataset, PreferencePair, UncertaintyFactors, UncertaintyLevel};
