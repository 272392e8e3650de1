use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use uupl_core::calibration::RewardFunction;
use uupl_core::{CoreError, Domain, FeaturePoint};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Thermal,
    Tabletop,
    Driving,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Thermal, TaskKind::Tabletop, TaskKind::Driving];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Thermal => "thermal",
            TaskKind::Tabletop => "tabletop",
            TaskKind::Driving => "driving",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::UnknownName { what: "task", value: s.to_string() })
    }
}

/// `(centre, height, width)` of the room-temperature bumps.
pub const THERMAL_BUMPS: [(f64, f64, f64); 3] = [(13.0, 0.6, 1.2), (18.5, 1.0, 1.0), (23.0, 0.8, 1.5)];

/// `(centre, covariance [a, b, c] for [[a, b], [b, c]], height)` of the
/// placement hills.
pub const TABLETOP_HILLS: [([f64; 2], [f64; 3], f64); 3] =
    [([-2.5, 2.0], [5.0, 1.5, 3.5], 1.0), ([2.8, 1.5], [2.5, 0.0, 6.0], 0.65), ([0.0, -2.8], [8.0, -1.2, 2.5], 0.8)];

fn gauss(x: f64, c: f64, w: f64) -> f64 {
    let z = (x - c) / w;
    (-0.5 * z * z).exp()
}

/// Per-feature driving curves: unimodal, monotone, bimodal, saturating.
pub fn driving_component(i: usize, x: f64) -> f64 {
    match i {
        0 => gauss(x, 3.0, 0.8),
        1 => 1.0 / (1.0 + (-2.0 * (x - 2.5)).exp()),
        2 => 0.7 * gauss(x, 1.0, 0.5) + 0.9 * gauss(x, 3.8, 0.6),
        3 => 1.0 - (-x / 1.2).exp(),
        _ => panic!("driving has four components, got index {i}"),
    }
}

/// Squared Mahalanobis distance of `x` from each hill centre.
pub fn tabletop_mahalanobis_sq(x: [f64; 2]) -> [f64; 3] {
    TABLETOP_HILLS.map(|(c, [a, b, d], _)| {
        let s = Matrix2::new(a, b, b, d);
        let inv = s.try_inverse().expect("hill covariances are invertible");
        let v = Vector2::new(x[0] - c[0], x[1] - c[1]);
        (v.transpose() * inv * v)[0]
    })
}

fn analytic(kind: TaskKind, x: &[f64]) -> f64 {
    match kind {
        TaskKind::Thermal => THERMAL_BUMPS.iter().map(|&(c, h, w)| h * gauss(x[0], c, w)).sum(),
        TaskKind::Tabletop => tabletop_mahalanobis_sq([x[0], x[1]])
            .iter()
            .zip(TABLETOP_HILLS)
            .map(|(m, (_, _, h))| h * (-0.5 * m).exp())
            .sum(),
        TaskKind::Driving => x.iter().enumerate().map(|(i, &v)| driving_component(i, v)).sum(),
    }
}

/// A synthetic reward function with its evaluation grid.
#[derive(Debug, Clone)]
pub struct GroundTruthTask {
    kind: TaskKind,
    domain: Domain,
    grid_points_per_dim: usize,
    grid: Vec<FeaturePoint>,
    values: Vec<f64>,
    range: (f64, f64),
}

impl GroundTruthTask {
    pub fn new(kind: TaskKind) -> Result<Self> {
        let (bounds, n): (Vec<(f64, f64)>, usize) = match kind {
            TaskKind::Thermal => (vec![(10.0, 26.0)], 161),
            TaskKind::Tabletop => (vec![(-5.0, 5.0); 2], 101),
            TaskKind::Driving => (vec![(0.0, 5.0); 4], 9),
        };
        let domain = Domain::from_pairs(&bounds)?;
        let grid = domain.grid(n)?;
        let values: Vec<f64> = grid.iter().map(|x| analytic(kind, x.coords())).collect();
        let range = match kind {
            // additive: the extremes of the sum are the sums of the extremes
            TaskKind::Driving => (0..4).fold((0.0, 0.0), |(lo, hi), i| {
                let scan: Vec<f64> = (0..=1000).map(|k| driving_component(i, 5.0 * k as f64 / 1000.0)).collect();
                let (a, b) = min_max(&scan);
                (lo + a, hi + b)
            }),
            _ => min_max(&values),
        };
        Ok(Self { kind, domain, grid_points_per_dim: n, grid, values, range })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn grid_points_per_dim(&self) -> usize {
        self.grid_points_per_dim
    }

    pub fn evaluation_grid(&self) -> &[FeaturePoint] {
        &self.grid
    }

    /// Ground truth on [`Self::evaluation_grid`], in the same order.
    pub fn grid_values(&self) -> &[f64] {
        &self.values
    }

    /// `max - min` of the reward over the domain.
    pub fn span(&self) -> f64 {
        self.range.1 - self.range.0
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Evaluates the task's reward at `x`; points outside the box are rejected.
pub fn ground_truth_eval(task: &GroundTruthTask, x: &FeaturePoint) -> Result<f64> {
    if x.dim() != task.domain.dim() {
        return Err(CoreError::DimensionMismatch { expected: task.domain.dim(), got: x.dim() }.into());
    }
    if !task.domain.contains(x) {
        return Err(SimError::OutOfDomain(x.coords().to_vec()));
    }
    Ok(analytic(task.kind, x.coords()))
}

impl RewardFunction for GroundTruthTask {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn eval(&self, x: &FeaturePoint) -> uupl_core::Result<f64> {
        ground_truth_eval(self, x).map_err(|e| match e {
            SimError::Core(c) => c,
            other => CoreError::InvalidConfig(other.to_string()),
        })
    }

    fn range(&self) -> (f64, f64) {
        self.range
    }
}
