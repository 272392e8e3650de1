//! Information-gain query selection and the variance-drop stopping rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{CoreError, Result};
use crate::gmm::{scale_covariance, GmmModel, ScaledPrediction};
use crate::gp::predict::PosteriorState;
use crate::math::normal::{binary_entropy_unchecked, cdf_unchecked};
use crate::point::FeaturePoint;

/// Default number of candidate pairs scored per round.
pub const DEFAULT_POOL_SIZE: usize = 200;

/// Where candidate pairs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CandidateSource {
    /// Two distinct nodes of the regular `n`-per-dimension lattice.
    Grid { points_per_dim: usize },
    /// Two independent uniform draws from the box.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Probit scale assumed for the not-yet-given answer.
    pub u_acq: f64,
    pub pool_size: usize,
    pub rng_seed: u64,
    pub candidate_source: CandidateSource,
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_acq.is_finite() && self.u_acq > 0.0) {
            return Err(CoreError::OutOfRange { what: "u_acq", value: self.u_acq });
        }
        if self.pool_size == 0 {
            return Err(CoreError::InvalidConfig("pool_size must be at least 1".into()));
        }
        if let CandidateSource::Grid { points_per_dim } = self.candidate_source {
            if points_per_dim < 2 {
                return Err(CoreError::InvalidConfig("candidate grid needs at least 2 points per dimension".into()));
            }
        }
        Ok(())
    }
}

/// `h(Phi(dmu / sqrt(u^2 + g))) - m`, where `g` is the variance of the
/// scaled reward gap and `m` the expected entropy of the answer itself.
pub fn pair_score(mu: [f64; 2], sigma_prime: [[f64; 2]; 2], u_acq: f64) -> Result<f64> {
    if !(u_acq.is_finite() && u_acq > 0.0) {
        return Err(CoreError::OutOfRange { what: "u_acq", value: u_acq });
    }
    if mu.iter().chain(sigma_prime.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("pair score input"));
    }
    let g = (sigma_prime[0][0] + sigma_prime[1][1] - sigma_prime[0][1] - sigma_prime[1][0]).max(0.0);
    Ok(score_unchecked(mu[0] - mu[1], g, u_acq))
}

fn score_unchecked(dmu: f64, g: f64, u: f64) -> f64 {
    let c = std::f64::consts::PI * std::f64::consts::LN_2 * u * u;
    let h = binary_entropy_unchecked(cdf_unchecked(dmu / (u * u + g).sqrt()));
    let m = c.sqrt() * (-dmu * dmu / (c + 2.0 * g)).exp() / (c + 2.0 * g).sqrt();
    h - m
}

/// The chosen query with the quantities that ranked it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryChoice {
    pub x1: FeaturePoint,
    pub x2: FeaturePoint,
    pub score: f64,
    /// Position of the winner inside the candidate pool.
    pub candidate_index: usize,
}

/// Seeded candidate pool; no pair has coinciding members.
pub fn candidate_pairs(domain: &Domain, cfg: &AcquisitionConfig) -> Result<Vec<(FeaturePoint, FeaturePoint)>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut out = Vec::with_capacity(cfg.pool_size);
    match cfg.candidate_source {
        CandidateSource::Grid { points_per_dim } => {
            let grid = domain.grid(points_per_dim)?;
            while out.len() < cfg.pool_size {
                let i = rng.random_range(0..grid.len());
                let j = rng.random_range(0..grid.len());
                if i != j {
                    out.push((grid[i].clone(), grid[j].clone()));
                }
            }
        }
        CandidateSource::Uniform => {
            while out.len() < cfg.pool_size {
                let a = domain.sample_uniform(&mut rng);
                let b = domain.sample_uniform(&mut rng);
                if !a.coincides(&b) {
                    out.push((a, b));
                }
            }
        }
    }
    Ok(out)
}

/// Predicts and rescales every candidate. `gmm = None` leaves the
/// covariance unscaled.
pub fn scaled_predictions(
    state: &PosteriorState,
    gmm: Option<&GmmModel>,
    pairs: &[(FeaturePoint, FeaturePoint)],
) -> Result<Vec<ScaledPrediction>> {
    let preds = state.predict_pairs(pairs)?;
    preds
        .iter()
        .zip(pairs)
        .map(|(p, (a, b))| {
            let (g1, g2) = match gmm {
                Some(m) => (m.density(a)?, m.density(b)?),
                None => (1.0, 1.0),
            };
            scale_covariance(p, g1, g2)
        })
        .collect()
}

/// Highest-scoring pair of the seeded pool; ties go to the lowest index.
pub fn select_next_query(
    state: &PosteriorState,
    gmm: Option<&GmmModel>,
    domain: &Domain,
    cfg: &AcquisitionConfig,
) -> Result<QueryChoice> {
    if let Some(d) = state.dataset().dim() {
        if d != domain.dim() {
            return Err(CoreError::DimensionMismatch { expected: d, got: domain.dim() });
        }
    }
    let pairs = candidate_pairs(domain, cfg)?;
    let scaled = scaled_predictions(state, gmm, &pairs)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, sp) in scaled.iter().enumerate() {
        let s = pair_score(sp.mu, sp.sigma_prime, cfg.u_acq)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    let (idx, score) = best.ok_or(CoreError::EmptyDomain)?;
    let (x1, x2) = pairs[idx].clone();
    Ok(QueryChoice { x1, x2, score, candidate_index: idx })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub base_queries: usize,
    pub increment: usize,
    pub drop_threshold: f64,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        Self { base_queries: 20, increment: 5, drop_threshold: 0.02 }
    }
}

impl StoppingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_queries == 0 || self.increment == 0 {
            return Err(CoreError::InvalidConfig("base_queries and increment must be at least 1".into()));
        }
        if !(self.drop_threshold.is_finite() && self.drop_threshold > 0.0) {
            return Err(CoreError::OutOfRange { what: "drop_threshold", value: self.drop_threshold });
        }
        Ok(())
    }
}

/// `trace[i]` is the mean scaled grid variance after `i + 1` answers.
///
/// Checkpoints sit at `base_queries`, `base_queries + increment`, and so on.
/// Never stops before the first one. After that, stops when the variance fell
/// by less than `drop_threshold` between the two most recent checkpoints,
/// measured as a fraction of the first recorded value. The answer only
/// changes at checkpoints.
pub fn should_stop(trace: &[f64], cfg: &StoppingConfig) -> bool {
    let n = trace.len();
    if n < cfg.base_queries || cfg.increment == 0 {
        return false;
    }
    let last_cp = cfg.base_queries + (n - cfg.base_queries) / cfg.increment * cfg.increment;
    if last_cp <= cfg.increment {
        return false;
    }
    let reference = trace[0];
    let (prev, last) = (trace[last_cp - 1 - cfg.increment], trace[last_cp - 1]);
    if !(reference > 0.0 && prev.is_finite() && last.is_finite()) {
        return false;
    }
    (prev - last) / reference < cfg.drop_threshold
}

/// Mean of `Var(x) / G(x)^2` over `grid`: the statistic tracked by
/// [`should_stop`].
pub fn mean_scaled_variance(state: &PosteriorState, gmm: Option<&GmmModel>, grid: &[FeaturePoint]) -> Result<f64> {
    if grid.is_empty() {
        return Err(CoreError::EmptyDomain);
    }
    let marg = state.predict_marginals(grid)?;
    let mut total = 0.0;
    for (x, (_, v)) in grid.iter().zip(marg) {
        let g = match gmm {
            Some(m) => m.density(x)?,
            None => 1.0,
        };
        total += v / (g * g);
    }
    Ok(total / grid.len() as f64)
}
