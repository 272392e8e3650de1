use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gp::laplace::{solve_mode, LaplaceOptions};
use crate::gp::likelihood::{terms, LikelihoodMode};
use crate::gp::types::{PreferenceDataset, UncertaintyFactors};
use crate::math::kernel::{build_covariance, CovMatrix, KernelConfig};
use crate::math::linalg::cholesky;
use crate::point::FeaturePoint;

/// Joint Gaussian over the latent rewards of two query points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mu: [f64; 2],
    pub sigma: [[f64; 2]; 2],
}

/// A fitted Laplace posterior. Immutable once built.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    dataset: PreferenceDataset,
    kernel: KernelConfig,
    factors: UncertaintyFactors,
    mode: LikelihoodMode,
    k: CovMatrix,
    l: DMatrix<f64>,
    f_lap: DVector<f64>,
    alpha: DVector<f64>,
    w: DMatrix<f64>,
    b_chol: Option<Cholesky<f64, Dyn>>,
    iterations: usize,
    grad_norm: f64,
}

impl PosteriorState {
    pub fn fit(
        dataset: PreferenceDataset,
        kernel: KernelConfig,
        factors: UncertaintyFactors,
        mode: LikelihoodMode,
        opts: &LaplaceOptions,
    ) -> Result<Self> {
        kernel.validate()?;
        let n = dataset.num_points();
        if n == 0 {
            return Ok(Self {
                dataset,
                kernel,
                factors,
                mode,
                k: CovMatrix::from_matrix(DMatrix::zeros(0, 0))?,
                l: DMatrix::zeros(0, 0),
                f_lap: DVector::zeros(0),
                alpha: DVector::zeros(0),
                w: DMatrix::zeros(0, 0),
                b_chol: None,
                iterations: 0,
                grad_norm: 0.0,
            });
        }
        let k = build_covariance(dataset.points(), &kernel)?;
        let l = cholesky(k.matrix())?.l();
        let sol = solve_mode(&terms(&dataset, &factors, mode), &l, opts)?;
        Ok(Self {
            dataset,
            kernel,
            factors,
            mode,
            k,
            l,
            f_lap: sol.f,
            alpha: sol.alpha,
            w: sol.w,
            b_chol: Some(sol.b_chol),
            iterations: sol.iterations,
            grad_norm: sol.grad_norm,
        })
    }

    /// Posterior with no observations.
    pub fn prior(kernel: KernelConfig, factors: UncertaintyFactors) -> Result<Self> {
        Self::fit(PreferenceDataset::new(), kernel, factors, LikelihoodMode::PerLevel, &LaplaceOptions::default())
    }

    pub fn dataset(&self) -> &PreferenceDataset {
        &self.dataset
    }
    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }
    pub fn factors(&self) -> &UncertaintyFactors {
        &self.factors
    }
    pub fn likelihood_mode(&self) -> LikelihoodMode {
        self.mode
    }
    pub fn k(&self) -> &CovMatrix {
        &self.k
    }
    pub fn f_lap(&self) -> &DVector<f64> {
        &self.f_lap
    }
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }
    pub fn iterations(&self) -> usize {
        self.iterations
    }
    /// `|grad S|_inf` at the returned mode.
    pub fn grad_norm(&self) -> f64 {
        self.grad_norm
    }

    fn check_dim(&self, x: &FeaturePoint) -> Result<()> {
        if let Some(d) = self.dataset.dim() {
            if x.dim() != d {
                return Err(CoreError::DimensionMismatch { expected: d, got: x.dim() });
            }
        }
        Ok(())
    }

    /// Kernel value between two points of the augmented covariance: the
    /// jitter applies wherever the points coincide, so a test point equal
    /// to a training point behaves exactly like that training point.
    fn kval(&self, a: &FeaturePoint, b: &FeaturePoint) -> f64 {
        let base = self.kernel.eval_sq(a.sq_dist_unchecked(b));
        if a.coincides(b) {
            base + self.kernel.jitter
        } else {
            base
        }
    }

    fn cross(&self, x: &FeaturePoint) -> DVector<f64> {
        DVector::from_iterator(self.dataset.num_points(), self.dataset.points().iter().map(|p| self.kval(p, x)))
    }

    /// Posterior mean of the latent reward at `x`.
    pub fn predict_mean(&self, x: &FeaturePoint) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.cross(x).dot(&self.alpha))
    }

    /// Posterior means over many points.
    pub fn predict_means(&self, xs: &[FeaturePoint]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict_mean(x)).collect()
    }

    /// Joint mean and covariance over `xs`.
    pub fn predict_joint(&self, xs: &[FeaturePoint]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        for x in xs {
            self.check_dim(x)?;
        }
        let m = xs.len();
        let n = self.dataset.num_points();
        let mut cov = DMatrix::from_fn(m, m, |i, j| self.kval(&xs[i], &xs[j]));
        if n == 0 {
            return Ok((DVector::zeros(m), cov));
        }
        let kx = DMatrix::from_fn(n, m, |i, j| self.kval(&self.dataset.points()[i], &xs[j]));
        let mean = kx.transpose() * &self.alpha;
        // K_t - k^T (K + W^-1)^-1 k = K_t - v^T v + v^T B^-1 v with v = L^-1 k
        let v = self.l.solve_lower_triangular(&kx).ok_or(CoreError::NotPositiveDefinite)?;
        let b = self.b_chol.as_ref().expect("fitted state with points has a factor");
        let bv = b.solve(&v);
        cov -= v.transpose() * (&v - bv);
        for i in 0..m {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Ok((mean, cov))
    }

    /// Predictive distribution of a query pair.
    pub fn predict(&self, x1: &FeaturePoint, x2: &FeaturePoint) -> Result<PredictiveDistribution> {
        let (mean, cov) = self.predict_joint(&[x1.clone(), x2.clone()])?;
        Ok(finish_pair([mean[0], mean[1]], [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]]))
    }

    /// [`predict`](Self::predict) for many pairs, sharing the triangular
    /// solves across the batch.
    pub fn predict_pairs(&self, pairs: &[(FeaturePoint, FeaturePoint)]) -> Result<Vec<PredictiveDistribution>> {
        for (a, b) in pairs {
            self.check_dim(a)?;
            self.check_dim(b)?;
        }
        let n = self.dataset.num_points();
        let mut out = Vec::with_capacity(pairs.len());
        if n == 0 {
            for (a, b) in pairs {
                let s12 = self.kval(a, b);
                out.push(finish_pair([0.0, 0.0], [[self.kval(a, a), s12], [s12, self.kval(b, b)]]));
            }
            return Ok(out);
        }
        let bl = self.b_chol.as_ref().expect("fitted state with points has a factor").l();
        let pts = self.dataset.points();
        for chunk in pairs.chunks(256) {
            let m = 2 * chunk.len();
            let at = |j: usize| if j.is_multiple_of(2) { &chunk[j / 2].0 } else { &chunk[j / 2].1 };
            let kx = DMatrix::from_fn(n, m, |i, j| self.kval(&pts[i], at(j)));
            let mean = kx.transpose() * &self.alpha;
            let v = self.l.solve_lower_triangular(&kx).ok_or(CoreError::NotPositiveDefinite)?;
            let u = bl.solve_lower_triangular(&v).ok_or(CoreError::NotPositiveDefinite)?;
            let entry = |a: usize, b: usize| {
                self.kval(at(a), at(b)) - v.column(a).dot(&v.column(b)) + u.column(a).dot(&u.column(b))
            };
            for j in 0..chunk.len() {
                let (a, b) = (2 * j, 2 * j + 1);
                let s12 = entry(a, b);
                out.push(finish_pair([mean[a], mean[b]], [[entry(a, a), s12], [s12, entry(b, b)]]));
            }
        }
        Ok(out)
    }

    /// Mean and variance at a single point.
    pub fn predict_marginal(&self, x: &FeaturePoint) -> Result<(f64, f64)> {
        let (mean, cov) = self.predict_joint(std::slice::from_ref(x))?;
        Ok((mean[0], cov[(0, 0)].max(0.0)))
    }

    /// Marginal means and variances over a batch, without forming the full
    /// joint covariance.
    pub fn predict_marginals(&self, xs: &[FeaturePoint]) -> Result<Vec<(f64, f64)>> {
        for x in xs {
            self.check_dim(x)?;
        }
        let n = self.dataset.num_points();
        let prior_var = 1.0 + self.kernel.jitter;
        if n == 0 {
            return Ok(vec![(0.0, prior_var); xs.len()]);
        }
        let b = self.b_chol.as_ref().expect("fitted state with points has a factor");
        let bl = b.l();
        let mut out = Vec::with_capacity(xs.len());
        // chunked to bound memory on large grids
        for chunk in xs.chunks(512) {
            let kx = DMatrix::from_fn(n, chunk.len(), |i, j| self.kval(&self.dataset.points()[i], &chunk[j]));
            let mean = kx.transpose() * &self.alpha;
            let v = self.l.solve_lower_triangular(&kx).ok_or(CoreError::NotPositiveDefinite)?;
            let u = bl.solve_lower_triangular(&v).ok_or(CoreError::NotPositiveDefinite)?;
            for j in 0..chunk.len() {
                let var = prior_var - v.column(j).norm_squared() + u.column(j).norm_squared();
                out.push((mean[j], var.max(0.0)));
            }
        }
        Ok(out)
    }
}

/// Clamps round-off: negative variances to 0 and the covariance into the
/// Cauchy-Schwarz bound.
fn finish_pair(mu: [f64; 2], mut s: [[f64; 2]; 2]) -> PredictiveDistribution {
    for (i, row) in s.iter_mut().enumerate() {
        let d = &mut row[i];
        if *d < 0.0 {
            if *d < -1e-10 {
                log::warn!("predictive variance {d} clamped to 0");
            }
            *d = 0.0;
        }
    }
    let bound = (s[0][0] * s[1][1]).sqrt();
    let c = (0.5 * (s[0][1] + s[1][0])).clamp(-bound, bound);
    s[0][1] = c;
    s[1][0] = c;
    PredictiveDistribution { mu, sigma: s }
}
