use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::point::FeaturePoint;

/// Closed interval `[lo, hi]` for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

/// Axis-aligned box of feasible feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr")]
pub struct Domain {
    bounds: Vec<Bound>,
}

#[derive(Deserialize)]
struct DomainRepr {
    bounds: Vec<Bound>,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = CoreError;

    fn try_from(r: DomainRepr) -> Result<Self> {
        Domain::new(r.bounds)
    }
}

impl Domain {
    pub fn new(bounds: Vec<Bound>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(CoreError::EmptyDomain);
        }
        for b in &bounds {
            if !(b.lo.is_finite() && b.hi.is_finite()) {
                return Err(CoreError::NonFinite("domain bound"));
            }
            if b.lo >= b.hi {
                return Err(CoreError::InvalidConfig(format!("domain bound min {} is not below max {}", b.lo, b.hi)));
            }
        }
        Ok(Self { bounds })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(lo, hi)| Bound { lo, hi }).collect())
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[Bound] {
        &self.bounds
    }

    pub fn extents(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.hi - b.lo).collect()
    }

    pub fn contains(&self, x: &FeaturePoint) -> bool {
        x.dim() == self.dim() && x.coords().iter().zip(&self.bounds).all(|(c, b)| *c >= b.lo && *c <= b.hi)
    }

    /// Regular lattice with `n` points per dimension, last dimension varying
    /// fastest. `n == 1` yields the box centre.
    pub fn grid(&self, n: usize) -> Result<Vec<FeaturePoint>> {
        if n == 0 {
            return Err(CoreError::InvalidConfig("grid with zero points per dimension".into()));
        }
        let axes: Vec<Vec<f64>> = self
            .bounds
            .iter()
            .map(|b| {
                if n == 1 {
                    vec![0.5 * (b.lo + b.hi)]
                } else {
                    (0..n).map(|i| b.lo + (b.hi - b.lo) * i as f64 / (n - 1) as f64).collect()
                }
            })
            .collect();
        let total =
            n.checked_pow(self.dim() as u32).ok_or_else(|| CoreError::InvalidConfig("grid size overflows".into()))?;
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim()];
        for _ in 0..total {
            out.push(FeaturePoint::new(idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect())?);
            for d in (0..self.dim()).rev() {
                idx[d] += 1;
                if idx[d] < n {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(out)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> FeaturePoint {
        let coords = self.bounds.iter().map(|b| b.lo + (b.hi - b.lo) * rng.random::<f64>()).collect();
        FeaturePoint::new(coords).expect("bounds are finite")
    }
}
