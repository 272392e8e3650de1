use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uupl_core::calibration::{CalibrationCurve, RewardFunction};
use uupl_core::gp::choice_probability;
use uupl_core::{FeaturePoint, UncertaintyFactors, UncertaintyLevel};

use crate::error::{Result, SimError};
use crate::task::{ground_truth_eval, GroundTruthTask};

/// Lower edges of levels 1..3 on `|dR| / span`; anything below the last is
/// level 4.
pub const LEVEL_BIN_EDGES: [f64; 3] = [5.0 / 6.0, 0.5, 1.0 / 6.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceMode {
    /// Bernoulli draw with probability `Phi(dR / u_level)`.
    Stochastic,
    /// Always the higher reward; ties go to the first option.
    Deterministic,
}

/// Which member of a presented pair was preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Choice {
    First,
    Second,
}

impl TryFrom<u8> for Choice {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Choice::First),
            2 => Ok(Choice::Second),
            _ => Err(format!("invalid choice {v}; expected 1 or 2")),
        }
    }
}

impl From<Choice> for u8 {
    fn from(c: Choice) -> u8 {
        match c {
            Choice::First => 1,
            Choice::Second => 2,
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Probit scales of the simulated human, in reward units.
    pub factors: UncertaintyFactors,
    pub choice_mode: ChoiceMode,
    pub rng_seed: Option<u64>,
}

impl OracleConfig {
    /// A human whose noise matches a learner using `learner` factors: each
    /// learner factor is mapped to reward units through the task span and
    /// the largest single-pair posterior gap, then multiplied by `noise`.
    pub fn matched(
        learner: &UncertaintyFactors,
        task: &GroundTruthTask,
        noise: f64,
        choice_mode: ChoiceMode,
        rng_seed: Option<u64>,
    ) -> Result<Self> {
        if !(noise.is_finite() && noise > 0.0) {
            return Err(SimError::InvalidConfig(format!("oracle noise must be positive, got {noise}")));
        }
        let scale = task.span() / CalibrationCurve::standard().d_max() * noise;
        Ok(Self { factors: learner.scaled(scale)?, choice_mode, rng_seed })
    }

    pub fn validate(&self) -> Result<()> {
        if self.choice_mode == ChoiceMode::Stochastic && self.rng_seed.is_none() {
            return Err(SimError::InvalidConfig("stochastic oracle requires an rng seed".into()));
        }
        Ok(())
    }
}

/// Level for a reward gap given as a fraction of the task span.
pub fn quantize_level(normalized_gap: f64) -> UncertaintyLevel {
    let q = normalized_gap.abs();
    LEVEL_BIN_EDGES.iter().position(|&edge| q >= edge).map_or(UncertaintyLevel::L4, |i| UncertaintyLevel::ALL[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub choice: Choice,
    pub level: UncertaintyLevel,
}

/// A simulated human with its own random stream.
#[derive(Debug, Clone)]
pub struct Oracle {
    cfg: OracleConfig,
    rng: Option<ChaCha8Rng>,
}

impl Oracle {
    pub fn new(cfg: OracleConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { rng: cfg.rng_seed.map(ChaCha8Rng::seed_from_u64), cfg })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn answer(&mut self, task: &GroundTruthTask, x1: &FeaturePoint, x2: &FeaturePoint) -> Result<OracleAnswer> {
        let dr = ground_truth_eval(task, x1)? - ground_truth_eval(task, x2)?;
        let (lo, hi) = task.range();
        let level = quantize_level(dr / (hi - lo));
        let first = match (self.cfg.choice_mode, self.rng.as_mut()) {
            (ChoiceMode::Stochastic, Some(rng)) => {
                let p = choice_probability(dr, self.cfg.factors.get(level))?;
                rng.random::<f64>() < p
            }
            _ => dr >= 0.0,
        };
        Ok(OracleAnswer { choice: if first { Choice::First } else { Choice::Second }, level })
    }
}

/// One answer from a freshly seeded oracle.
pub fn oracle_answer(
    task: &GroundTruthTask,
    pair: (&FeaturePoint, &FeaturePoint),
    cfg: &OracleConfig,
) -> Result<OracleAnswer> {
    Oracle::new(*cfg)?.answer(task, pair.0, pair.1)
}
