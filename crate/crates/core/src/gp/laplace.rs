use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gp::likelihood::{assemble_w, grad_and_curvature, log_lik_terms, terms, LikelihoodMode, Term};
use crate::gp::types::{PreferenceDataset, UncertaintyFactors};
use crate::math::kernel::CovMatrix;
use crate::math::linalg::cholesky;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceOptions {
    pub max_iter: usize,
    /// Stop once `|grad S|_inf` falls below this.
    pub tol: f64,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8 }
    }
}

impl LaplaceOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(CoreError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(CoreError::OutOfRange { what: "Laplace tolerance", value: self.tol });
        }
        Ok(())
    }
}

/// Posterior mode and the likelihood curvature there.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceFit {
    pub f_lap: DVector<f64>,
    /// Negative Hessian of the log-likelihood at `f_lap`.
    pub w: DMatrix<f64>,
    pub iterations: usize,
}

/// Everything the predictive equations need, kept from the last Newton
/// iteration. With `K = L L^T` the mode is `f = L y` and `K^-1 f = L^-T y`.
pub(crate) struct ModeSolution {
    pub f: DVector<f64>,
    pub alpha: DVector<f64>,
    pub w: DMatrix<f64>,
    /// Cholesky factor of `B = I + L^T W L`.
    pub b_chol: Cholesky<f64, Dyn>,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn objective(terms: &[Term], l: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let f = l * y;
    log_lik_terms(terms, &f) - 0.5 * y.dot(y)
}

fn b_matrix(l: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut b = l.transpose() * (w * l);
    b += DMatrix::<f64>::identity(n, n);
    // exact symmetry for the factorization
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (b[(i, j)] + b[(j, i)]);
            b[(i, j)] = s;
            b[(j, i)] = s;
        }
    }
    b
}

/// Damped Newton on `S` in whitened coordinates `y = L^-1 f`, starting at
/// the prior mean.
pub(crate) fn solve_mode(terms: &[Term], l: &DMatrix<f64>, opts: &LaplaceOptions) -> Result<ModeSolution> {
    opts.validate()?;
    let n = l.nrows();
    let lt = l.transpose();
    let mut y = DVector::<f64>::zeros(n);
    let mut s_cur = objective(terms, l, &y);
    let mut it = 0usize;
    loop {
        let f = l * &y;
        let (g, c) = grad_and_curvature(terms, &f);
        let alpha = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| CoreError::NewtonStepFailed { iteration: it, reason: "singular kernel factor".into() })?;
        let grad_norm = (&g - &alpha).amax();
        if !grad_norm.is_finite() {
            return Err(CoreError::NewtonStepFailed { iteration: it, reason: "non-finite gradient".into() });
        }
        let w = assemble_w(terms, &c, n);
        let b_chol = b_matrix(l, &w).cholesky().ok_or_else(|| CoreError::NewtonStepFailed {
            iteration: it,
            reason: "I + L^T W L is not positive definite".into(),
        })?;
        if grad_norm < opts.tol {
            return Ok(ModeSolution { f, alpha, w, b_chol, iterations: it, grad_norm });
        }
        if it == opts.max_iter {
            return Err(CoreError::NonConvergence { iterations: it, grad_norm });
        }
        let rhs = &lt * (&w * &f + &g);
        let step = b_chol.solve(&rhs) - &y;

        let slack = 1e-13 * (1.0 + s_cur.abs());
        let mut t = 1.0;
        loop {
            let cand = &y + &step * t;
            let s_new = objective(terms, l, &cand);
            if s_new.is_finite() && s_new >= s_cur - slack {
                y = cand;
                s_cur = s_new;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(CoreError::NewtonStepFailed {
                    iteration: it,
                    reason: format!("line search stalled at |grad|_inf = {grad_norm:e}"),
                });
            }
        }
        it += 1;
    }
}

fn check_k(dataset: &PreferenceDataset, k: &CovMatrix) -> Result<()> {
    if k.dim() != dataset.num_points() {
        return Err(CoreError::DimensionMismatch { expected: dataset.num_points(), got: k.dim() });
    }
    Ok(())
}

/// Posterior mode `argmax S(f)` for the per-level likelihood.
pub fn laplace_mode(
    dataset: &PreferenceDataset,
    k: &CovMatrix,
    factors: &UncertaintyFactors,
    opts: &LaplaceOptions,
) -> Result<LaplaceFit> {
    laplace_mode_with(dataset, k, factors, LikelihoodMode::PerLevel, opts)
}

pub fn laplace_mode_with(
    dataset: &PreferenceDataset,
    k: &CovMatrix,
    factors: &UncertaintyFactors,
    mode: LikelihoodMode,
    opts: &LaplaceOptions,
) -> Result<LaplaceFit> {
    check_k(dataset, k)?;
    let chol = cholesky(k.matrix())?;
    let sol = solve_mode(&terms(dataset, factors, mode), &chol.l(), opts)?;
    Ok(LaplaceFit { f_lap: sol.f, w: sol.w, iterations: sol.iterations })
}

/// `(W + K^-1)^-1`, evaluated as `L (I + L^T W L)^-1 L^T` so that neither
/// `K` nor `W` is inverted.
pub fn posterior_covariance(k: &CovMatrix, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w.nrows() != k.dim() || w.ncols() != k.dim() {
        return Err(CoreError::DimensionMismatch { expected: k.dim(), got: w.nrows() });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("likelihood Hessian"));
    }
    let l = cholesky(k.matrix())?.l();
    let b = b_matrix(&l, w).cholesky().ok_or(CoreError::NotPositiveDefinite)?;
    let mut cov = &l * b.solve(&l.transpose());
    let n = cov.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::types::UncertaintyLevel;
    use crate::point::FeaturePoint;
    use approx::assert_abs_diff_eq;

    fn single_pair(u: f64, rho: f64) -> (PreferenceDataset, CovMatrix, UncertaintyFactors) {
        let mut d = PreferenceDataset::new();
        d.add_comparison(FeaturePoint::scalar(0.0).unwrap(), FeaturePoint::scalar(1.0).unwrap(), UncertaintyLevel::L1)
            .unwrap();
        let k = CovMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap();
        let f = UncertaintyFactors::new([u, 2.0 * u, 3.0 * u, 4.0 * u]).unwrap();
        (d, k, f)
    }

    #[test]
    fn empty_dataset_is_prior_mode() {
        let d = PreferenceDataset::new();
        let k = CovMatrix::from_matrix(DMatrix::zeros(0, 0)).unwrap();
        let f = UncertaintyFactors::new([1.0, 2.0, 3.0, 4.0]).unwrap();
        let fit = laplace_mode(&d, &k, &f, &LaplaceOptions::default()).unwrap();
        assert_eq!(fit.f_lap.len(), 0);
        assert_eq!(fit.iterations, 0);
    }

    #[test]
    fn points_without_pairs_stay_at_zero() {
        let pts = vec![FeaturePoint::scalar(0.0).unwrap(), FeaturePoint::scalar(1.0).unwrap()];
        let d = PreferenceDataset::from_parts(pts, vec![]).unwrap();
        let k = CovMatrix::from_matrix(DMatrix::identity(2, 2)).unwrap();
        let f = UncertaintyFactors::new([1.0, 2.0, 3.0, 4.0]).unwrap();
        let fit = laplace_mode(&d, &k, &f, &LaplaceOptions::default()).unwrap();
        assert_eq!(fit.f_lap, DVector::zeros(2));
        assert_eq!(fit.w, DMatrix::zeros(2, 2));
    }

    #[test]
    fn flat_likelihood_limit() {
        let (d, k, f) = single_pair(1e6, 0.5);
        let fit = laplace_mode(&d, &k, &f, &LaplaceOptions::default()).unwrap();
        assert!((fit.f_lap[0] - fit.f_lap[1]).abs() < 1e-3);
    }

    #[test]
    fn symmetric_single_pair() {
        let (d, k, f) = single_pair(1.0, 0.5);
        let fit = laplace_mode(&d, &k, &f, &LaplaceOptions::default()).unwrap();
        // by symmetry f_l = -f_w
        assert_abs_diff_eq!(fit.f_lap[0], -fit.f_lap[1], epsilon = 1e-12);
        assert!(fit.f_lap[0] > 0.0);
        assert!(fit.iterations <= 100);
    }

    #[test]
    fn posterior_covariance_examples() {
        let k = CovMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let half = posterior_covariance(&k, &DMatrix::identity(3, 3)).unwrap();
        assert!((half - DMatrix::identity(3, 3) * 0.5).amax() < 1e-15);

        let k2 = CovMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap();
        let same = posterior_covariance(&k2, &DMatrix::zeros(2, 2)).unwrap();
        assert!((same - k2.matrix()).amax() < 1e-14);

        assert!(posterior_covariance(&k2, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn tiny_u_converges() {
        // confident answers make z large; damping must keep Newton stable
        let (d, k, f) = single_pair(1e-4, 0.9);
        let fit = laplace_mode(&d, &k, &f, &LaplaceOptions::default()).unwrap();
        assert!(fit.f_lap[0] > fit.f_lap[1]);
    }

    #[test]
    fn nonconvergence_reported() {
        let (d, k, f) = single_pair(0.1, 0.5);
        let opts = LaplaceOptions { max_iter: 1, tol: 1e-14 };
        match laplace_mode(&d, &k, &f, &opts) {
            Err(CoreError::NonConvergence { iterations, .. }) => assert_eq!(iterations, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
