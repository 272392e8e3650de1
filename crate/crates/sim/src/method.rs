use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use uupl_core::acquisition::{AcquisitionConfig, CandidateSource, DEFAULT_POOL_SIZE};
use uupl_core::calibration::{default_uncertainty_factors, CalibrationCurve};
use uupl_core::gmm::GmmWeights;
use uupl_core::{KernelConfig, LaplaceOptions, LikelihoodMode, UncertaintyFactors, UncertaintyLevel};

use crate::error::{Result, SimError};
use crate::oracle::{ChoiceMode, OracleConfig};
use crate::task::{GroundTruthTask, TaskKind};

/// The four ablation configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodVariant {
    Full,
    NoGmm,
    NoLikelihood,
    Baseline,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 4] =
        [MethodVariant::Full, MethodVariant::NoGmm, MethodVariant::NoLikelihood, MethodVariant::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            MethodVariant::Full => "full",
            MethodVariant::NoGmm => "no-gmm",
            MethodVariant::NoLikelihood => "no-likelihood",
            MethodVariant::Baseline => "baseline",
        }
    }

    /// `(use_uncertainty_likelihood, use_gmm_scaling)`.
    pub fn flags(self) -> (bool, bool) {
        match self {
            MethodVariant::Full => (true, true),
            MethodVariant::NoGmm => (true, false),
            MethodVariant::NoLikelihood => (false, true),
            MethodVariant::Baseline => (false, false),
        }
    }
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodVariant {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        MethodVariant::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SimError::UnknownName { what: "method", value: s.to_string() })
    }
}

/// Per-task learner and oracle settings used by the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub gamma: f64,
    /// Multiplier applied to the default uncertainty factors.
    pub factor_scale: f64,
    pub gmm_bandwidth_fraction: f64,
    pub candidate_source: CandidateSource,
    /// Oracle noise relative to the learner's assumed noise.
    pub oracle_noise: f64,
    pub iterations: usize,
}

impl TaskProfile {
    pub fn for_task(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Thermal => Self {
                gamma: 0.3,
                factor_scale: 0.01,
                gmm_bandwidth_fraction: 0.08,
                candidate_source: CandidateSource::Grid { points_per_dim: 161 },
                oracle_noise: 1.0,
                iterations: 50,
            },
            TaskKind::Tabletop => Self {
                gamma: 0.14,
                factor_scale: 0.02,
                gmm_bandwidth_fraction: 0.08,
                candidate_source: CandidateSource::Uniform,
                oracle_noise: 0.5,
                iterations: 50,
            },
            TaskKind::Driving => Self {
                gamma: 0.05,
                factor_scale: 0.02,
                gmm_bandwidth_fraction: 0.15,
                candidate_source: CandidateSource::Uniform,
                oracle_noise: 0.5,
                iterations: 100,
            },
        }
    }

    pub fn learner_factors(&self) -> Result<UncertaintyFactors> {
        Ok(default_uncertainty_factors(CalibrationCurve::standard())?.scaled(self.factor_scale)?)
    }

    /// Stochastic oracle matched to this profile's learner.
    pub fn oracle(&self, task: &GroundTruthTask, seed: u64) -> Result<OracleConfig> {
        OracleConfig::matched(&self.learner_factors()?, task, self.oracle_noise, ChoiceMode::Stochastic, Some(seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    /// Label used in summaries and exports.
    pub name: String,
    pub use_uncertainty_likelihood: bool,
    pub use_gmm_scaling: bool,
    pub kernel: KernelConfig,
    pub factors: UncertaintyFactors,
    /// Level whose factor every answer gets when the per-level likelihood is
    /// off.
    pub baseline_level: UncertaintyLevel,
    pub gmm_weights: GmmWeights,
    pub gmm_bandwidth_fraction: f64,
    /// `rng_seed` is replaced per iteration by the trial runner.
    pub acquisition: AcquisitionConfig,
    pub laplace: LaplaceOptions,
}

impl MethodConfig {
    pub fn new(profile: &TaskProfile, variant: MethodVariant) -> Result<Self> {
        let (lik, gmm) = variant.flags();
        let factors = profile.learner_factors()?;
        Ok(Self {
            name: variant.name().to_string(),
            use_uncertainty_likelihood: lik,
            use_gmm_scaling: gmm,
            kernel: KernelConfig::with_gamma(profile.gamma)?,
            factors,
            baseline_level: UncertaintyLevel::L1,
            gmm_weights: GmmWeights::default(),
            gmm_bandwidth_fraction: profile.gmm_bandwidth_fraction,
            acquisition: AcquisitionConfig {
                u_acq: factors.get(UncertaintyLevel::L2),
                pool_size: DEFAULT_POOL_SIZE,
                rng_seed: 0,
                candidate_source: profile.candidate_source,
            },
            laplace: LaplaceOptions::default(),
        })
    }

    pub fn for_task(kind: TaskKind, variant: MethodVariant) -> Result<Self> {
        Self::new(&TaskProfile::for_task(kind), variant)
    }

    pub fn likelihood_mode(&self) -> LikelihoodMode {
        if self.use_uncertainty_likelihood {
            LikelihoodMode::PerLevel
        } else {
            LikelihoodMode::Uniform(self.baseline_level)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.acquisition.validate()?;
        self.laplace.validate()?;
        if !(self.gmm_bandwidth_fraction.is_finite() && self.gmm_bandwidth_fraction > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "GMM bandwidth fraction must be positive, got {}",
                self.gmm_bandwidth_fraction
            )));
        }
        Ok(())
    }
}
