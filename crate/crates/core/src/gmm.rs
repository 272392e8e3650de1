//! Confidence-weighted mixture density `G(x)` over the observed query points
//! and the covariance rescaling it drives.

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{CoreError, Result};
use crate::gp::predict::PredictiveDistribution;
use crate::gp::types::{PreferenceDataset, UncertaintyLevel};
use crate::point::FeaturePoint;

/// Default bandwidth as a fraction of each feature's range.
pub const DEFAULT_BANDWIDTH_FRACTION: f64 = 0.1;

/// Mixture weight per level; must be strictly decreasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct GmmWeights {
    w: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    w1: f64,
    w2: f64,
    w3: f64,
    w4: f64,
}

impl TryFrom<RawWeights> for GmmWeights {
    type Error = CoreError;
    fn try_from(r: RawWeights) -> Result<Self> {
        Self::new([r.w1, r.w2, r.w3, r.w4])
    }
}

impl From<GmmWeights> for RawWeights {
    fn from(g: GmmWeights) -> Self {
        let [w1, w2, w3, w4] = g.w;
        Self { w1, w2, w3, w4 }
    }
}

impl Default for GmmWeights {
    fn default() -> Self {
        Self { w: [1.0, 0.6, 0.3, 0.1] }
    }
}

impl GmmWeights {
    pub fn new(w: [f64; 4]) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("GMM weight"));
        }
        if w[3] <= 0.0 || w.windows(2).any(|p| p[0] <= p[1]) {
            return Err(CoreError::InvalidConfig(format!("GMM weights must satisfy w1 > w2 > w3 > w4 > 0, got {w:?}")));
        }
        Ok(Self { w })
    }

    pub fn get(&self, level: UncertaintyLevel) -> f64 {
        self.w[level.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.w
    }
}

/// `G(x) = 1 + sum_i w(l_i) [N(x; x_i1, s^2 I) + N(x; x_i2, s^2 I)]`, with
/// coordinates optionally divided by per-feature scales first.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: GmmWeights,
    bandwidth: f64,
    scale: Vec<f64>,
    /// Normalized centre and summed weight per unique observed point.
    components: Vec<(Vec<f64>, f64)>,
    dim: Option<usize>,
}

impl GmmModel {
    /// Density in raw feature units with bandwidth `sigma`.
    pub fn new(dataset: &PreferenceDataset, weights: GmmWeights, sigma: f64) -> Result<Self> {
        let dim = dataset.dim();
        Self::build(dataset, weights, sigma, dim.map(|d| vec![1.0; d]), dim)
    }

    /// Density in coordinates normalized by the domain's extents, with
    /// `fraction` the bandwidth relative to each range.
    pub fn for_domain(
        dataset: &PreferenceDataset,
        weights: GmmWeights,
        fraction: f64,
        domain: &Domain,
    ) -> Result<Self> {
        if let Some(d) = dataset.dim() {
            if d != domain.dim() {
                return Err(CoreError::DimensionMismatch { expected: domain.dim(), got: d });
            }
        }
        Self::build(dataset, weights, fraction, Some(domain.extents()), Some(domain.dim()))
    }

    fn build(
        dataset: &PreferenceDataset,
        weights: GmmWeights,
        bandwidth: f64,
        scale: Option<Vec<f64>>,
        dim: Option<usize>,
    ) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(CoreError::OutOfRange { what: "GMM bandwidth", value: bandwidth });
        }
        let scale = scale.unwrap_or_default();
        let mut mass = vec![0.0; dataset.num_points()];
        for p in dataset.pairs() {
            let w = weights.get(p.level);
            mass[p.winner_idx] += w;
            mass[p.loser_idx] += w;
        }
        let components = dataset
            .points()
            .iter()
            .zip(mass)
            .filter(|(_, m)| *m > 0.0)
            .map(|(pt, m)| (normalize(pt.coords(), &scale), m))
            .collect();
        Ok(Self { weights, bandwidth, scale, components, dim })
    }

    pub fn weights(&self) -> &GmmWeights {
        &self.weights
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `G(x) >= 1`.
    pub fn density(&self, x: &FeaturePoint) -> Result<f64> {
        if let Some(d) = self.dim {
            if x.dim() != d {
                return Err(CoreError::DimensionMismatch { expected: d, got: x.dim() });
            }
        }
        if self.components.is_empty() {
            return Ok(1.0);
        }
        let z = normalize(x.coords(), &self.scale);
        let n = z.len() as f64;
        let s2 = self.bandwidth * self.bandwidth;
        let norm = (2.0 * std::f64::consts::PI * s2).powf(-0.5 * n);
        let sum: f64 = self
            .components
            .iter()
            .map(|(c, m)| {
                let d2: f64 = c.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                m * (-0.5 * d2 / s2).exp()
            })
            .sum();
        Ok(1.0 + norm * sum)
    }
}

fn normalize(x: &[f64], scale: &[f64]) -> Vec<f64> {
    if scale.is_empty() {
        return x.to_vec();
    }
    x.iter().zip(scale).map(|(v, s)| v / s).collect()
}

/// Free-function form of [`GmmModel::density`].
pub fn gmm_density(model: &GmmModel, x: &FeaturePoint) -> Result<f64> {
    model.density(x)
}

/// Predictive distribution after dividing each latent reward by its `G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledPrediction {
    pub mu: [f64; 2],
    pub sigma_prime: [[f64; 2]; 2],
    pub g1: f64,
    pub g2: f64,
}

impl ScaledPrediction {
    /// `Var'_1 + Var'_2 - 2 Cov'`, the variance of `f1/G1 - f2/G2`.
    pub fn gap_variance(&self) -> f64 {
        let s = &self.sigma_prime;
        let g = s[0][0] + s[1][1] - 2.0 * s[0][1];
        if g < 0.0 {
            if g < -1e-10 {
                log::warn!("scaled gap variance {g} clamped to 0");
            }
            0.0
        } else {
            g
        }
    }
}

pub fn scale_covariance(pred: &PredictiveDistribution, g1: f64, g2: f64) -> Result<ScaledPrediction> {
    for g in [g1, g2] {
        if !g.is_finite() {
            return Err(CoreError::NonFinite("GMM density"));
        }
        if g < 1.0 {
            return Err(CoreError::OutOfRange { what: "GMM density (must be >= 1)", value: g });
        }
    }
    let s = &pred.sigma;
    let mut v1 = s[0][0] / (g1 * g1);
    let mut v2 = s[1][1] / (g2 * g2);
    for v in [&mut v1, &mut v2] {
        if *v < 0.0 {
            log::warn!("scaled variance {} clamped to 0", *v);
            *v = 0.0;
        }
    }
    let c = s[0][1] / (g1 * g2);
    Ok(ScaledPrediction { mu: pred.mu, sigma_prime: [[v1, c], [c, v2]], g1, g2 })
}
