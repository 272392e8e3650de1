use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Two points closer than this in every coordinate are the same point.
pub const POINT_MERGE_TOL: f64 = 1e-12;

/// A feature vector `x` in R^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeaturePoint(Vec<f64>);

impl FeaturePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(CoreError::InvalidConfig("feature point with zero dimensions".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(CoreError::NonFinite("feature coordinate"));
        }
        Ok(Self(coords))
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn sq_dist(&self, other: &FeaturePoint) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(CoreError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(self.sq_dist_unchecked(other))
    }

    #[inline]
    pub(crate) fn sq_dist_unchecked(&self, other: &FeaturePoint) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Same point up to [`POINT_MERGE_TOL`] per coordinate.
    pub fn coincides(&self, other: &FeaturePoint) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| (a - b).abs() <= POINT_MERGE_TOL)
    }
}

impl From<FeaturePoint> for Vec<f64> {
    fn from(p: FeaturePoint) -> Self {
        p.0
    }
}

impl TryFrom<Vec<f64>> for FeaturePoint {
    type Error = CoreError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}
