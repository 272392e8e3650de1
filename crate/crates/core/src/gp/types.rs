use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::point::FeaturePoint;

/// Self-reported confidence of one answer, 1 (very confident) to 4 (very
/// uncertain). Serialized as the bare integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum UncertaintyLevel {
    L1,
    L2,
    L3,
    L4,
}

impl UncertaintyLevel {
    pub const ALL: [UncertaintyLevel; 4] = [Self::L1, Self::L2, Self::L3, Self::L4];

    pub fn new(level: i64) -> Result<Self> {
        match level {
            1 => Ok(Self::L1),
            2 => Ok(Self::L2),
            3 => Ok(Self::L3),
            4 => Ok(Self::L4),
            other => Err(CoreError::InvalidLevel(other)),
        }
    }

    pub fn get(self) -> u8 {
        self.index() as u8 + 1
    }

    /// Zero-based position, handy for per-level arrays.
    pub fn index(self) -> usize {
        match self {
            Self::L1 => 0,
            Self::L2 => 1,
            Self::L3 => 2,
            Self::L4 => 3,
        }
    }
}

impl TryFrom<i64> for UncertaintyLevel {
    type Error = CoreError;

    fn try_from(v: i64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<UncertaintyLevel> for i64 {
    fn from(l: UncertaintyLevel) -> i64 {
        l.get() as i64
    }
}

impl std::fmt::Display for UncertaintyLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.get())
    }
}

/// Probit standard deviation per uncertainty level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFactors", into = "RawFactors")]
pub struct UncertaintyFactors {
    u: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct RawFactors {
    u1: f64,
    u2: f64,
    u3: f64,
    u4: f64,
}

impl TryFrom<RawFactors> for UncertaintyFactors {
    type Error = CoreError;

    fn try_from(r: RawFactors) -> Result<Self> {
        Self::new([r.u1, r.u2, r.u3, r.u4])
    }
}

impl From<UncertaintyFactors> for RawFactors {
    fn from(f: UncertaintyFactors) -> Self {
        let [u1, u2, u3, u4] = f.u;
        Self { u1, u2, u3, u4 }
    }
}

impl UncertaintyFactors {
    /// Requires `0 < u1 < u2 < u3 < u4`, all finite.
    pub fn new(u: [f64; 4]) -> Result<Self> {
        for &v in &u {
            if !v.is_finite() {
                return Err(CoreError::NonFinite("uncertainty factor"));
            }
            if v <= 0.0 {
                return Err(CoreError::OutOfRange { what: "uncertainty factor", value: v });
            }
        }
        if u.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::InvalidConfig(format!(
                "uncertainty factors must be strictly increasing, got {u:?}"
            )));
        }
        Ok(Self { u })
    }

    pub fn get(&self, level: UncertaintyLevel) -> f64 {
        self.u[level.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.u
    }

    /// Multiplies every factor by `s > 0`; ordering is preserved.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(CoreError::OutOfRange { what: "factor scale", value: s });
        }
        Self::new(self.u.map(|v| v * s))
    }
}

/// One answered comparison over the unique-point list of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub winner_idx: usize,
    pub loser_idx: usize,
    pub level: UncertaintyLevel,
}

/// Unique feature points plus the pairs that reference them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawDataset", into = "RawDataset")]
pub struct PreferenceDataset {
    points: Vec<FeaturePoint>,
    pairs: Vec<PreferencePair>,
}

#[derive(Serialize, Deserialize)]
struct RawDataset {
    points: Vec<FeaturePoint>,
    pairs: Vec<PreferencePair>,
}

impl TryFrom<RawDataset> for PreferenceDataset {
    type Error = CoreError;

    fn try_from(r: RawDataset) -> Result<Self> {
        Self::from_parts(r.points, r.pairs)
    }
}

impl From<PreferenceDataset> for RawDataset {
    fn from(d: PreferenceDataset) -> Self {
        Self { points: d.points, pairs: d.pairs }
    }
}

impl PreferenceDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates an explicit point list and pair list.
    pub fn from_parts(points: Vec<FeaturePoint>, pairs: Vec<PreferencePair>) -> Result<Self> {
        if let Some(first) = points.first() {
            for p in &points[1..] {
                if p.dim() != first.dim() {
                    return Err(CoreError::DimensionMismatch { expected: first.dim(), got: p.dim() });
                }
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i].coincides(&points[j]) {
                    return Err(CoreError::InvalidPair(format!("points {j} and {i} coincide")));
                }
            }
        }
        for (k, pair) in pairs.iter().enumerate() {
            if pair.winner_idx >= points.len() || pair.loser_idx >= points.len() {
                return Err(CoreError::InvalidPair(format!("pair {k} index out of range")));
            }
            if pair.winner_idx == pair.loser_idx {
                return Err(CoreError::InvalidPair(format!("pair {k} compares a point with itself")));
            }
        }
        Ok(Self { points, pairs })
    }

    pub fn points(&self) -> &[FeaturePoint] {
        &self.points
    }

    pub fn pairs(&self) -> &[PreferencePair] {
        &self.pairs
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Feature dimension, unknown until the first point arrives.
    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(FeaturePoint::dim)
    }

    /// Index of `x` in the point list, merging near-duplicates.
    pub fn find(&self, x: &FeaturePoint) -> Option<usize> {
        self.points.iter().position(|p| p.coincides(x))
    }

    fn intern(&mut self, x: FeaturePoint) -> Result<usize> {
        if let Some(d) = self.dim() {
            if x.dim() != d {
                return Err(CoreError::DimensionMismatch { expected: d, got: x.dim() });
            }
        }
        if let Some(i) = self.find(&x) {
            return Ok(i);
        }
        self.points.push(x);
        Ok(self.points.len() - 1)
    }

    /// Records "`winner` preferred over `loser`" at `level` and returns the
    /// new pair. Points already present are reused.
    pub fn add_comparison(
        &mut self,
        winner: FeaturePoint,
        loser: FeaturePoint,
        level: UncertaintyLevel,
    ) -> Result<PreferencePair> {
        if winner.coincides(&loser) {
            return Err(CoreError::InvalidPair("winner and loser are the same point".into()));
        }
        if winner.dim() != loser.dim() {
            return Err(CoreError::DimensionMismatch { expected: winner.dim(), got: loser.dim() });
        }
        let n_before = self.points.len();
        let w = self.intern(winner)?;
        let l = match self.intern(loser) {
            Ok(l) => l,
            Err(e) => {
                self.points.truncate(n_before);
                return Err(e);
            }
        };
        let pair = PreferencePair { winner_idx: w, loser_idx: l, level };
        self.pairs.push(pair);
        Ok(pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64) -> FeaturePoint {
        FeaturePoint::scalar(x).unwrap()
    }

    #[test]
    fn level_roundtrip() {
        for l in UncertaintyLevel::ALL {
            assert_eq!(UncertaintyLevel::new(l.get() as i64).unwrap(), l);
        }
        assert_eq!(UncertaintyLevel::new(7).unwrap_err(), CoreError::InvalidLevel(7));
        assert!(UncertaintyLevel::new(0).is_err());
        let l: UncertaintyLevel = serde_json::from_str("3").unwrap();
        assert_eq!(l, UncertaintyLevel::L3);
        assert_eq!(serde_json::to_string(&UncertaintyLevel::L2).unwrap(), "2");
        assert!(serde_json::from_str::<UncertaintyLevel>("5").is_err());
    }

    #[test]
    fn factors_ordering() {
        assert!(UncertaintyFactors::new([1.0, 2.0, 3.0, 4.0]).is_ok());
        assert!(UncertaintyFactors::new([1.0, 1.0, 3.0, 4.0]).is_err());
        assert!(UncertaintyFactors::new([0.0, 1.0, 3.0, 4.0]).is_err());
        assert!(UncertaintyFactors::new([1.0, 2.0, f64::NAN, 4.0]).is_err());
        let f = UncertaintyFactors::new([0.5, 1.0, 2.0, 8.0]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"u1":0.5,"u2":1.0,"u3":2.0,"u4":8.0}"#);
        assert_eq!(serde_json::from_str::<UncertaintyFactors>(&s).unwrap(), f);
        assert!(serde_json::from_str::<UncertaintyFactors>(r#"{"u1":2,"u2":1,"u3":3,"u4":4}"#).is_err());
        assert_eq!(f.scaled(2.0).unwrap().get(UncertaintyLevel::L4), 16.0);
    }

    #[test]
    fn dedup_on_ingest() {
        let mut d = PreferenceDataset::new();
        for x in 10..=26 {
            if x != 19 {
                d.add_comparison(p(19.0), p(x as f64), UncertaintyLevel::L1).unwrap();
            }
        }
        assert_eq!(d.num_pairs(), 16);
        assert_eq!(d.num_points(), 17);
        assert!(d.pairs().iter().all(|q| q.winner_idx == 0));
        assert!(d.add_comparison(p(1.0), p(1.0), UncertaintyLevel::L1).is_err());
        assert!(d.add_comparison(p(1.0), FeaturePoint::new(vec![1.0, 2.0]).unwrap(), UncertaintyLevel::L1).is_err());
        // a rejected comparison leaves the dataset untouched
        assert_eq!(d.num_points(), 17);
    }

    #[test]
    fn from_parts_validation() {
        let pts = vec![p(0.0), p(1.0)];
        let ok = PreferencePair { winner_idx: 0, loser_idx: 1, level: UncertaintyLevel::L2 };
        assert!(PreferenceDataset::from_parts(pts.clone(), vec![ok]).is_ok());
        let bad = PreferencePair { loser_idx: 2, ..ok };
        assert!(PreferenceDataset::from_parts(pts.clone(), vec![bad]).is_err());
        let selfp = PreferencePair { loser_idx: 0, ..ok };
        assert!(PreferenceDataset::from_parts(pts, vec![selfp]).is_err());
        assert!(PreferenceDataset::from_parts(vec![p(0.0), p(0.0)], vec![]).is_err());
    }

    #[test]
    fn dataset_serde_roundtrip() {
        let mut d = PreferenceDataset::new();
        d.add_comparison(p(0.5), p(2.0), UncertaintyLevel::L3).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        let back: PreferenceDataset = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }
}
