use serde::{Deserialize, Serialize};
use uupl_core::acquisition::{
    mean_scaled_variance, select_next_query, should_stop, AcquisitionConfig, CandidateSource, StoppingConfig,
    DEFAULT_POOL_SIZE,
};
use uupl_core::calibration::{
    calibrate_user, default_uncertainty_factors, generate_calibration_queries, CalibrationCurve, CalibrationSession,
    CalibrationWarning, LinearRamp, RewardFunction, DEFAULT_QUERY_COUNT,
};
use uupl_core::gmm::{GmmModel, GmmWeights, DEFAULT_BANDWIDTH_FRACTION};
use uupl_core::math::kernel::median_heuristic_gamma;
use uupl_core::{
    Bound, Domain, FeaturePoint, KernelConfig, LaplaceOptions, LikelihoodMode, PosteriorState, PreferenceDataset,
    UncertaintyFactors, UncertaintyLevel,
};
use uupl_sim::{derive_seed, Choice, TaskKind, TaskProfile};

use crate::canonical::to_canonical_vec;
use crate::error::{Result, ServiceError};

/// Version stamped on every persisted session and every response.
pub const SCHEMA_VERSION: u32 = 1;

/// Cells the stopping statistic averages over, before rounding down to a
/// whole number of points per dimension.
const STOPPING_GRID_CELLS: f64 = 4096.0;
const STREAM_POOL: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Calibrating,
    Learning,
    Stopped,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Calibrating => "calibrating",
            Phase::Learning => "learning",
            Phase::Stopped => "stopped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Calibration,
    Learning,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub choice: Choice,
    pub level: UncertaintyLevel,
    pub answered_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub kind: QueryKind,
    pub x1: FeaturePoint,
    pub x2: FeaturePoint,
    pub presented_at_ms: u64,
    pub answer: Option<Answer>,
}

/// Body of `POST /sessions`. Everything but the domain has a default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    #[serde(default)]
    pub task: Option<TaskKind>,
    /// `[[min, max], ...]`; defaults to the task's box.
    #[serde(default)]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub calibrate: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub calibration_queries: Option<usize>,
    #[serde(default)]
    pub pool_size: Option<usize>,
    #[serde(default)]
    pub gmm_bandwidth_fraction: Option<f64>,
    #[serde(default)]
    pub stopping: Option<StoppingConfig>,
}

/// Fully resolved session settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub task: Option<TaskKind>,
    pub domain: Domain,
    pub calibrate: bool,
    pub seed: u64,
    pub kernel: KernelConfig,
    pub laplace: LaplaceOptions,
    pub gmm_weights: GmmWeights,
    pub gmm_bandwidth_fraction: f64,
    pub pool_size: usize,
    pub candidate_source: CandidateSource,
    pub calibration_queries: usize,
    pub stopping: StoppingConfig,
    pub stopping_grid_points_per_dim: usize,
}

impl SessionConfig {
    pub fn from_request(req: &SessionRequest) -> Result<Self> {
        let domain = match (&req.domain, req.task) {
            (Some(b), _) => Domain::new(b.iter().map(|&[lo, hi]| Bound { lo, hi }).collect())
                .map_err(|e| ServiceError::Validation(e.to_string()))?,
            (None, Some(t)) => {
                uupl_sim::GroundTruthTask::new(t).map_err(|e| ServiceError::Validation(e.to_string()))?.domain().clone()
            }
            (None, None) => return Err(ServiceError::Validation("either `task` or `domain` is required".into())),
        };
        let dim = domain.dim();
        let stop_n = (STOPPING_GRID_CELLS.powf(1.0 / dim as f64).floor() as usize).clamp(2, 161);
        let gamma = match (req.gamma, req.task) {
            (Some(g), _) => g,
            (None, Some(t)) => TaskProfile::for_task(t).gamma,
            (None, None) => median_heuristic_gamma(&domain.grid(stop_n.min(9))?)?,
        };
        let kernel = KernelConfig::with_gamma(gamma).map_err(|e| ServiceError::Validation(e.to_string()))?;
        let stopping = req.stopping.unwrap_or_default();
        stopping.validate().map_err(|e| ServiceError::Validation(e.to_string()))?;
        let fraction = req.gmm_bandwidth_fraction.unwrap_or(DEFAULT_BANDWIDTH_FRACTION);
        if !(fraction.is_finite() && fraction > 0.0) {
            return Err(ServiceError::Validation(format!("gmm_bandwidth_fraction must be positive, got {fraction}")));
        }
        let pool_size = req.pool_size.unwrap_or(DEFAULT_POOL_SIZE);
        let calibration_queries = req.calibration_queries.unwrap_or(DEFAULT_QUERY_COUNT);
        if pool_size == 0 || calibration_queries == 0 {
            return Err(ServiceError::Validation("pool_size and calibration_queries must be at least 1".into()));
        }
        Ok(Self {
            task: req.task,
            domain,
            calibrate: req.calibrate,
            seed: req.seed,
            kernel,
            laplace: LaplaceOptions::default(),
            gmm_weights: GmmWeights::default(),
            gmm_bandwidth_fraction: fraction,
            pool_size,
            candidate_source: CandidateSource::Uniform,
            calibration_queries,
            stopping,
            stopping_grid_points_per_dim: stop_n,
        })
    }

    fn acquisition(&self, factors: &UncertaintyFactors, round: usize) -> AcquisitionConfig {
        AcquisitionConfig {
            u_acq: factors.get(UncertaintyLevel::L2),
            pool_size: self.pool_size,
            rng_seed: derive_seed(self.seed, STREAM_POOL, round as u64),
            candidate_source: self.candidate_source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Default,
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredFactors {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
    pub provenance: Provenance,
}

impl StoredFactors {
    fn new(f: UncertaintyFactors, provenance: Provenance) -> Self {
        let [u1, u2, u3, u4] = f.as_array();
        Self { u1, u2, u3, u4, provenance }
    }

    pub fn factors(&self) -> Result<UncertaintyFactors> {
        Ok(UncertaintyFactors::new([self.u1, self.u2, self.u3, self.u4])?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub queries: Vec<(FeaturePoint, FeaturePoint)>,
    pub answers: CalibrationSession,
    pub warnings: Vec<CalibrationWarning>,
}

/// What replay must reproduce bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSnapshot {
    pub dataset: PreferenceDataset,
    pub f_lap: Vec<f64>,
    /// Mean GMM-scaled grid variance after each learning answer.
    pub variance_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub schema_version: u32,
    pub id: String,
    pub created_at_ms: u64,
    pub phase: Phase,
    pub config: SessionConfig,
    pub uncertainty_factors: StoredFactors,
    pub calibration: Option<CalibrationState>,
    pub posterior: PosteriorSnapshot,
    pub pending_query: Option<QueryRecord>,
    /// Answered queries in order.
    pub transcript: Vec<QueryRecord>,
}

impl Session {
    pub fn to_canonical(&self) -> Result<Vec<u8>> {
        to_canonical_vec(self)
    }

    pub fn learning_answers(&self) -> usize {
        self.transcript.iter().filter(|q| q.kind == QueryKind::Learning).count()
    }
}

/// A session plus its fitted posterior, ready to serve.
#[derive(Debug, Clone)]
pub struct LiveSession {
    session: Session,
    state: PosteriorState,
}

fn posterior_from(
    dataset: &PreferenceDataset,
    cfg: &SessionConfig,
    factors: UncertaintyFactors,
) -> Result<PosteriorState> {
    if dataset.is_empty() {
        return Ok(PosteriorState::prior(cfg.kernel, factors)?);
    }
    Ok(PosteriorState::fit(dataset.clone(), cfg.kernel, factors, LikelihoodMode::PerLevel, &cfg.laplace)?)
}

impl LiveSession {
    pub fn create(id: String, config: SessionConfig, now_ms: u64) -> Result<Self> {
        let factors = default_uncertainty_factors(CalibrationCurve::standard())?;
        let (phase, calibration) = if config.calibrate {
            let ramp = LinearRamp { domain: config.domain.clone() };
            let queries = generate_calibration_queries(&ramp, config.calibration_queries, config.seed)?;
            let state = CalibrationState { queries, answers: CalibrationSession::new(&ramp)?, warnings: Vec::new() };
            (Phase::Calibrating, Some(state))
        } else {
            (Phase::Learning, None)
        };
        let state = PosteriorState::prior(config.kernel, factors)?;
        Ok(Self {
            session: Session {
                schema_version: SCHEMA_VERSION,
                id,
                created_at_ms: now_ms,
                phase,
                config,
                uncertainty_factors: StoredFactors::new(factors, Provenance::Default),
                calibration,
                posterior: PosteriorSnapshot {
                    dataset: PreferenceDataset::new(),
                    f_lap: Vec::new(),
                    variance_trace: Vec::new(),
                },
                pending_query: None,
                transcript: Vec::new(),
            },
            state,
        })
    }

    /// Refits the posterior of a loaded session and checks it against the
    /// stored snapshot.
    pub fn restore(session: Session) -> Result<Self> {
        let factors = session.uncertainty_factors.factors()?;
        let state = posterior_from(&session.posterior.dataset, &session.config, factors)?;
        if state.f_lap().as_slice() != session.posterior.f_lap.as_slice() {
            return Err(ServiceError::ReplayMismatch {
                index: session.transcript.len(),
                reason: "refitted posterior differs from the stored snapshot".into(),
            });
        }
        Ok(Self { session, state })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn into_session(self) -> Session {
        self.session
    }

    pub fn state(&self) -> &PosteriorState {
        &self.state
    }

    fn gmm(&self) -> Result<GmmModel> {
        let cfg = &self.session.config;
        Ok(GmmModel::for_domain(
            &self.session.posterior.dataset,
            cfg.gmm_weights,
            cfg.gmm_bandwidth_fraction,
            &cfg.domain,
        )?)
    }

    /// The pending query, creating it if none is outstanding.
    pub fn next_query(&mut self, now_ms: u64) -> Result<&QueryRecord> {
        if self.session.pending_query.is_none() {
            let s = &self.session;
            let (kind, x1, x2) = match s.phase {
                Phase::Stopped => return Err(ServiceError::Terminal),
                Phase::Calibrating => {
                    let cal = s.calibration.as_ref().expect("calibrating sessions carry calibration state");
                    let (a, b) = cal.queries[cal.answers.answers.len()].clone();
                    (QueryKind::Calibration, a, b)
                }
                Phase::Learning => {
                    let acq = s.config.acquisition(&s.uncertainty_factors.factors()?, s.learning_answers());
                    let gmm = self.gmm()?;
                    let q = select_next_query(&self.state, Some(&gmm), &s.config.domain, &acq)?;
                    (QueryKind::Learning, q.x1, q.x2)
                }
            };
            self.session.pending_query = Some(QueryRecord {
                id: format!("q{}", self.session.transcript.len() + 1),
                kind,
                x1,
                x2,
                presented_at_ms: now_ms,
                answer: None,
            });
        }
        Ok(self.session.pending_query.as_ref().expect("set above"))
    }

    pub fn submit_answer(
        &mut self,
        query_id: &str,
        choice: Choice,
        level: UncertaintyLevel,
        now_ms: u64,
    ) -> Result<()> {
        if self.session.phase == Phase::Stopped {
            return Err(ServiceError::Terminal);
        }
        let pending = match &self.session.pending_query {
            Some(p) if p.id == query_id => p.clone(),
            Some(p) => {
                return Err(if self.session.transcript.iter().any(|q| q.id == query_id) {
                    ServiceError::StaleQuery(query_id.to_string())
                } else {
                    ServiceError::UnknownQuery { given: query_id.to_string(), pending: p.id.clone() }
                })
            }
            None if self.session.transcript.iter().any(|q| q.id == query_id) => {
                return Err(ServiceError::StaleQuery(query_id.to_string()))
            }
            None => return Err(ServiceError::NoPendingQuery),
        };
        match pending.kind {
            QueryKind::Calibration => self.record_calibration(&pending, level)?,
            QueryKind::Learning => self.record_learning(&pending, choice, level)?,
        }
        let mut done = pending;
        done.answer = Some(Answer { choice, level, answered_at_ms: now_ms });
        self.session.transcript.push(done);
        self.session.pending_query = None;
        Ok(())
    }

    fn record_calibration(&mut self, q: &QueryRecord, level: UncertaintyLevel) -> Result<()> {
        let s = &mut self.session;
        let ramp = LinearRamp { domain: s.config.domain.clone() };
        let cal = s.calibration.as_mut().expect("calibrating sessions carry calibration state");
        cal.answers.record(&ramp, q.x1.clone(), q.x2.clone(), level)?;
        if cal.answers.answers.len() == cal.queries.len() {
            let out = calibrate_user(&cal.answers, CalibrationCurve::standard())?;
            cal.warnings = out.warnings;
            s.uncertainty_factors = StoredFactors::new(out.factors, Provenance::Calibrated);
            s.phase = Phase::Learning;
            self.state = PosteriorState::prior(s.config.kernel, out.factors)?;
        }
        Ok(())
    }

    fn record_learning(&mut self, q: &QueryRecord, choice: Choice, level: UncertaintyLevel) -> Result<()> {
        let (w, l) = match choice {
            Choice::First => (q.x1.clone(), q.x2.clone()),
            Choice::Second => (q.x2.clone(), q.x1.clone()),
        };
        let mut dataset = self.session.posterior.dataset.clone();
        dataset.add_comparison(w, l, level)?;
        let cfg = &self.session.config;
        let state = posterior_from(&dataset, cfg, self.session.uncertainty_factors.factors()?)?;
        let gmm = GmmModel::for_domain(&dataset, cfg.gmm_weights, cfg.gmm_bandwidth_fraction, &cfg.domain)?;
        let grid = cfg.domain.grid(cfg.stopping_grid_points_per_dim)?;
        let v = mean_scaled_variance(&state, Some(&gmm), &grid)?;

        let post = &mut self.session.posterior;
        post.dataset = dataset;
        post.f_lap = state.f_lap().as_slice().to_vec();
        post.variance_trace.push(v);
        if should_stop(&post.variance_trace, &cfg.stopping) {
            self.session.phase = Phase::Stopped;
        }
        self.state = state;
        Ok(())
    }

    /// Posterior mean and GMM-scaled marginal variance on an `n`-per-dimension
    /// lattice over the domain.
    pub fn posterior_grid(&self, points_per_dim: usize, max_cells: usize) -> Result<PosteriorGrid> {
        if self.session.phase == Phase::Calibrating {
            return Err(ServiceError::WrongPhase { phase: Phase::Calibrating.name(), action: "posterior inspection" });
        }
        if points_per_dim == 0 {
            return Err(ServiceError::Validation("grid needs at least one point per dimension".into()));
        }
        let dim = self.session.config.domain.dim();
        let cells = (points_per_dim as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
        if cells > max_cells as u128 {
            return Err(ServiceError::GridTooLarge { cells, cap: max_cells });
        }
        let grid = self.session.config.domain.grid(points_per_dim)?;
        let gmm = self.gmm()?;
        let marg = self.state.predict_marginals(&grid)?;
        let cells = grid
            .into_iter()
            .zip(marg)
            .map(|(x, (mean, var))| {
                let g = gmm.density(&x)?;
                Ok(PosteriorCell { x, mean, variance: var / (g * g) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PosteriorGrid {
            schema_version: SCHEMA_VERSION,
            session_id: self.session.id.clone(),
            answered: self.session.learning_answers(),
            points_per_dim,
            cells,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorCell {
    pub x: FeaturePoint,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    pub schema_version: u32,
    pub session_id: String,
    pub answered: usize,
    pub points_per_dim: usize,
    pub cells: Vec<PosteriorCell>,
}

/// Rebuilds a session from its configuration and transcript alone.
pub fn replay(session: &Session) -> Result<LiveSession> {
    let mut live = LiveSession::create(session.id.clone(), session.config.clone(), session.created_at_ms)?;
    for (i, rec) in session.transcript.iter().enumerate() {
        let ans = rec.answer.ok_or_else(|| ServiceError::ReplayMismatch {
            index: i,
            reason: "transcript entry has no answer".into(),
        })?;
        let q = live.next_query(rec.presented_at_ms)?;
        if q.x1 != rec.x1 || q.x2 != rec.x2 || q.id != rec.id {
            return Err(ServiceError::ReplayMismatch {
                index: i,
                reason: format!("engine served {} but the transcript has {}", q.id, rec.id),
            });
        }
        let id = q.id.clone();
        live.submit_answer(&id, ans.choice, ans.level, ans.answered_at_ms)?;
    }
    Ok(live)
}
