use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::point::FeaturePoint;

/// Default diagonal regularization.
pub const DEFAULT_JITTER: f64 = 1e-6;

/// RBF kernel `k(a, b) = exp(-gamma * |a - b|^2)` with diagonal jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub gamma: f64,
    pub jitter: f64,
}

impl KernelConfig {
    pub fn new(gamma: f64, jitter: f64) -> Result<Self> {
        let cfg = Self { gamma, jitter };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_gamma(gamma: f64) -> Result<Self> {
        Self::new(gamma, DEFAULT_JITTER)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(CoreError::OutOfRange { what: "kernel gamma", value: self.gamma });
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(CoreError::OutOfRange { what: "kernel jitter", value: self.jitter });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn eval_sq(&self, sq_dist: f64) -> f64 {
        (-self.gamma * sq_dist).exp()
    }
}

/// Dense kernel matrix over a list of points, jitter on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Wraps an arbitrary symmetric matrix, e.g. the canonical 2x2
    /// `[[1, rho], [rho, 1]]` used by calibration.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(CoreError::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let n = m.nrows();
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                    return Err(CoreError::InvalidConfig("covariance matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self(m))
    }
}

pub fn rbf_kernel(x1: &FeaturePoint, x2: &FeaturePoint, cfg: &KernelConfig) -> Result<f64> {
    let d2 = x1.sq_dist(x2)?;
    Ok(cfg.eval_sq(d2))
}

pub fn build_covariance(points: &[FeaturePoint], cfg: &KernelConfig) -> Result<CovMatrix> {
    cfg.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(CoreError::InvalidConfig("covariance over an empty point list".into()));
    }
    let dim = points[0].dim();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        if points[i].dim() != dim {
            return Err(CoreError::DimensionMismatch { expected: dim, got: points[i].dim() });
        }
        k[(i, i)] = 1.0 + cfg.jitter;
        for j in 0..i {
            let v = cfg.eval_sq(points[i].sq_dist_unchecked(&points[j]));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    // Jitter must leave the matrix factorizable.
    if k.clone().cholesky().is_none() {
        return Err(CoreError::NotPositiveDefinite);
    }
    Ok(CovMatrix(k))
}

/// `0.5 / median(|a - b|^2)` over all distinct pairs of `points`.
pub fn median_heuristic_gamma(points: &[FeaturePoint]) -> Result<f64> {
    let mut d2: Vec<f64> = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in 0..i {
            d2.push(points[i].sq_dist(&points[j])?);
        }
    }
    if d2.is_empty() {
        return Err(CoreError::EmptyDomain);
    }
    d2.sort_by(f64::total_cmp);
    let mid = d2.len() / 2;
    let median = if d2.len().is_multiple_of(2) { 0.5 * (d2[mid - 1] + d2[mid]) } else { d2[mid] };
    if median <= 0.0 {
        return Err(CoreError::EmptyDomain);
    }
    Ok(0.5 / median)
}
