use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gp::types::{PreferenceDataset, UncertaintyFactors, UncertaintyLevel};
use crate::math::kernel::CovMatrix;
use crate::math::linalg::cholesky;
use crate::math::normal::{cdf_unchecked, inv_mills, ln_cdf, probit_curvature};

/// Which probit scale each pair's likelihood term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "level")]
pub enum LikelihoodMode {
    /// `u` of the level reported with the answer.
    #[default]
    PerLevel,
    /// Every answer treated as if reported at this level.
    Uniform(UncertaintyLevel),
}

/// `Phi(delta / u)`: probability that the option with the higher reward wins.
pub fn choice_probability(delta_reward: f64, u: f64) -> Result<f64> {
    if !delta_reward.is_finite() {
        return Err(CoreError::NonFinite("reward difference"));
    }
    if !(u.is_finite() && u > 0.0) {
        return Err(CoreError::OutOfRange { what: "uncertainty factor", value: u });
    }
    Ok(cdf_unchecked(delta_reward / u))
}

/// Flattened pair terms: winner index, loser index, probit scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Term {
    pub w: usize,
    pub l: usize,
    pub u: f64,
}

pub(crate) fn terms(dataset: &PreferenceDataset, factors: &UncertaintyFactors, mode: LikelihoodMode) -> Vec<Term> {
    dataset
        .pairs()
        .iter()
        .map(|p| Term {
            w: p.winner_idx,
            l: p.loser_idx,
            u: match mode {
                LikelihoodMode::PerLevel => factors.get(p.level),
                LikelihoodMode::Uniform(level) => factors.get(level),
            },
        })
        .collect()
}

fn check_len(f: &DVector<f64>, n: usize) -> Result<()> {
    if f.len() != n {
        return Err(CoreError::DimensionMismatch { expected: n, got: f.len() });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("reward vector"));
    }
    Ok(())
}

pub(crate) fn log_lik_terms(terms: &[Term], f: &DVector<f64>) -> f64 {
    terms.iter().map(|t| ln_cdf((f[t.w] - f[t.l]) / t.u)).sum()
}

/// Gradient of the log-likelihood and the per-pair curvature weights `c`
/// such that `W = sum c (e_w - e_l)(e_w - e_l)^T`.
pub(crate) fn grad_and_curvature(terms: &[Term], f: &DVector<f64>) -> (DVector<f64>, Vec<f64>) {
    let mut g = DVector::zeros(f.len());
    let mut c = Vec::with_capacity(terms.len());
    for t in terms {
        let z = (f[t.w] - f[t.l]) / t.u;
        let d = inv_mills(z) / t.u;
        g[t.w] += d;
        g[t.l] -= d;
        c.push(probit_curvature(z) / (t.u * t.u));
    }
    (g, c)
}

pub(crate) fn assemble_w(terms: &[Term], c: &[f64], n: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(n, n);
    for (t, &ci) in terms.iter().zip(c) {
        w[(t.w, t.w)] += ci;
        w[(t.l, t.l)] += ci;
        w[(t.w, t.l)] -= ci;
        w[(t.l, t.w)] -= ci;
    }
    w
}

/// `sum ln Phi((f_w - f_l) / u^level)` over the dataset's pairs.
pub fn log_likelihood(dataset: &PreferenceDataset, f: &DVector<f64>, factors: &UncertaintyFactors) -> Result<f64> {
    check_len(f, dataset.num_points())?;
    Ok(log_lik_terms(&terms(dataset, factors, LikelihoodMode::PerLevel), f))
}

/// Negative Hessian of the log-likelihood at `f`.
pub fn neg_hessian(
    dataset: &PreferenceDataset,
    f: &DVector<f64>,
    factors: &UncertaintyFactors,
) -> Result<DMatrix<f64>> {
    check_len(f, dataset.num_points())?;
    let t = terms(dataset, factors, LikelihoodMode::PerLevel);
    let (_, c) = grad_and_curvature(&t, f);
    Ok(assemble_w(&t, &c, f.len()))
}

/// The Laplace objective `S(f) = ln p(D | f) - f^T K^-1 f / 2` with its
/// first and second derivatives.
pub struct LaplaceObjective {
    terms: Vec<Term>,
    chol: Cholesky<f64, Dyn>,
}

impl LaplaceObjective {
    pub fn new(
        dataset: &PreferenceDataset,
        k: &CovMatrix,
        factors: &UncertaintyFactors,
        mode: LikelihoodMode,
    ) -> Result<Self> {
        if k.dim() != dataset.num_points() {
            return Err(CoreError::DimensionMismatch { expected: dataset.num_points(), got: k.dim() });
        }
        Ok(Self { terms: terms(dataset, factors, mode), chol: cholesky(k.matrix())? })
    }

    fn n(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn value(&self, f: &DVector<f64>) -> Result<f64> {
        check_len(f, self.n())?;
        let a = self.chol.solve(f);
        Ok(log_lik_terms(&self.terms, f) - 0.5 * f.dot(&a))
    }

    pub fn gradient(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(f, self.n())?;
        let (g, _) = grad_and_curvature(&self.terms, f);
        Ok(g - self.chol.solve(f))
    }

    /// Hessian of `S` at `f` applied to `v`, i.e. `-(W + K^-1) v`.
    pub fn hessian_vec(&self, f: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(f, self.n())?;
        check_len(v, self.n())?;
        let (_, c) = grad_and_curvature(&self.terms, f);
        let w = assemble_w(&self.terms, &c, self.n());
        Ok(-(w * v + self.chol.solve(v)))
    }
}
