use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uupl_core::acquisition::select_next_query;
use uupl_core::calibration::RewardFunction;
use uupl_core::gmm::GmmModel;
use uupl_core::math::sample_correlation;
use uupl_core::{CoreError, PosteriorState, PreferenceDataset};

use crate::error::{Result, SimError};
use crate::method::MethodConfig;
use crate::oracle::{Choice, ChoiceMode, Oracle, OracleConfig};
use crate::task::{GroundTruthTask, TaskKind};

const STREAM_TRIAL: u64 = 1;
const STREAM_ORACLE: u64 = 2;
const STREAM_POOL: u64 = 3;

/// Deterministic child seed: word `index` of ChaCha stream `stream` keyed by
/// `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

/// Oracle seed used when an experiment is run from a single base seed.
pub fn default_oracle_seed(base_seed: u64) -> u64 {
    derive_seed(base_seed, STREAM_ORACLE, u64::MAX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    /// Correlation between posterior mean and ground truth on the evaluation
    /// grid after each answer.
    pub trace: Vec<f64>,
    pub final_accuracy: f64,
    /// Not serialized, so exports stay reproducible.
    #[serde(skip)]
    pub wall_clock: Duration,
}

fn accuracy(pred: &[f64], truth: &[f64]) -> uupl_core::Result<f64> {
    match sample_correlation(pred, truth) {
        // a flat posterior carries no ranking information
        Err(CoreError::ConstantVector) => Ok(0.0),
        r => r,
    }
}

/// Runs one active-learning loop of `iters` queries.
pub fn run_trial(
    task: &GroundTruthTask,
    method: &MethodConfig,
    oracle: &OracleConfig,
    iters: usize,
    seed: u64,
) -> Result<TrialResult> {
    if iters == 0 {
        return Err(SimError::InvalidConfig("a trial needs at least one iteration".into()));
    }
    method.validate()?;
    let start = Instant::now();
    let mut oracle = Oracle::new(*oracle)?;
    let domain = task.domain();
    let mode = method.likelihood_mode();
    let mut dataset = PreferenceDataset::new();
    let mut state = PosteriorState::prior(method.kernel, method.factors)?;
    let mut trace = Vec::with_capacity(iters);

    for it in 0..iters {
        let engine = |source| SimError::Engine { iteration: it, source };
        let gmm = if method.use_gmm_scaling {
            Some(
                GmmModel::for_domain(&dataset, method.gmm_weights, method.gmm_bandwidth_fraction, domain)
                    .map_err(engine)?,
            )
        } else {
            None
        };
        let mut acq = method.acquisition;
        acq.rng_seed = derive_seed(seed, STREAM_POOL, it as u64);
        let q = select_next_query(&state, gmm.as_ref(), domain, &acq).map_err(engine)?;
        let ans = oracle.answer(task, &q.x1, &q.x2)?;
        let (w, l) = match ans.choice {
            Choice::First => (q.x1, q.x2),
            Choice::Second => (q.x2, q.x1),
        };
        dataset.add_comparison(w, l, ans.level).map_err(engine)?;
        state = PosteriorState::fit(dataset.clone(), method.kernel, method.factors, mode, &method.laplace)
            .map_err(engine)?;
        let means = state.predict_means(task.evaluation_grid()).map_err(engine)?;
        trace.push(accuracy(&means, task.grid_values()).map_err(engine)?);
    }

    let final_accuracy = *trace.last().expect("iters >= 1");
    log::debug!("{} / {} seed {seed}: final accuracy {final_accuracy:.4}", task.kind(), method.name);
    Ok(TrialResult { seed, trace, final_accuracy, wall_clock: start.elapsed() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub final_mean: f64,
    /// Population standard deviation of the final accuracies.
    pub final_std: f64,
    pub trials: Vec<TrialResult>,
}

impl MethodSummary {
    /// Cross-trial standard deviation at each iteration, averaged over
    /// iterations `range`.
    pub fn window_std(&self, range: std::ops::Range<usize>) -> f64 {
        let len = range.len() as f64;
        range
            .map(|i| {
                let col: Vec<f64> = self.trials.iter().map(|t| t.trace[i]).collect();
                mean_std(&col).1
            })
            .sum::<f64>()
            / len
    }

    pub fn iterations(&self) -> usize {
        self.trials.first().map_or(0, |t| t.trace.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub task: TaskKind,
    pub iterations: usize,
    pub base_seed: u64,
    pub methods: Vec<MethodSummary>,
}

impl ExperimentSummary {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `trials` seeded trials per method. Every method sees the same trial
/// seeds; a stochastic oracle's stream is keyed by its own seed and the trial
/// seed.
pub fn run_experiment(
    task: &GroundTruthTask,
    methods: &[MethodConfig],
    oracle: &OracleConfig,
    trials: usize,
    iters: usize,
    base_seed: u64,
) -> Result<ExperimentSummary> {
    if trials == 0 {
        return Err(SimError::InvalidConfig("an experiment needs at least one trial".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..methods.len())
        .flat_map(|m| (0..trials).map(move |t| (m, derive_seed(base_seed, STREAM_TRIAL, t as u64))))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(m, seed)| {
            let mut oc = *oracle;
            if let (ChoiceMode::Stochastic, Some(s)) = (oc.choice_mode, oc.rng_seed) {
                oc.rng_seed = Some(derive_seed(s, STREAM_ORACLE, seed));
            }
            run_trial(task, &methods[m], &oc, iters, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut results = results.into_iter();
    let methods = methods
        .iter()
        .map(|cfg| {
            let trials: Vec<TrialResult> = results.by_ref().take(trials).collect();
            let finals: Vec<f64> = trials.iter().map(|t| t.final_accuracy).collect();
            let (final_mean, final_std) = mean_std(&finals);
            MethodSummary { method: cfg.name.clone(), final_mean, final_std, trials }
        })
        .collect();
    Ok(ExperimentSummary { task: task.kind(), iterations: iters, base_seed, methods })
}
