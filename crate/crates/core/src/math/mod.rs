//! Numerical primitives shared by the engine.

pub mod kernel;
pub mod linalg;
pub mod normal;
pub mod stats;

pub use kernel::{build_covariance, median_heuristic_gamma, rbf_kernel, CovMatrix, KernelConfig, DEFAULT_JITTER};
pub use linalg::{solve_spd, solve_spd_vec};
pub use normal::{binary_entropy, std_normal_cdf, std_normal_pdf};
pub use stats::sample_correlation;
