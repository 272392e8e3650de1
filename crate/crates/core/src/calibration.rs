//! The single-pair mode gap curve `d(u)`, default factors read off it, and
//! per-user calibration from answers about a known function.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{CoreError, Result};
use crate::gp::laplace::{solve_mode, LaplaceOptions};
use crate::gp::likelihood::Term;
use crate::gp::types::{UncertaintyFactors, UncertaintyLevel};
use crate::point::FeaturePoint;

pub const DEFAULT_RHO: f64 = 0.5;
pub const DEFAULT_QUERY_COUNT: usize = 50;
/// Mode gap assigned to the "very uncertain" level.
pub const LEVEL4_TARGET: f64 = 1e-3;
/// Fractions of `d_max` for levels 1 to 3.
pub const LEVEL_FRACTIONS: [f64; 3] = [1.0, 2.0 / 3.0, 1.0 / 3.0];

/// 200 log-spaced points on `[1e-2, 1e4]`.
pub fn default_u_grid() -> Vec<f64> {
    let (a, b) = (1e-2f64.log10(), 1e4f64.log10());
    (0..200).map(|i| 10f64.powf(a + (b - a) * i as f64 / 199.0)).collect()
}

/// Mode gap `f_w - f_l` for one pair under `K = [[1, rho], [rho, 1]]`.
pub fn single_pair_gap(u: f64, rho: f64) -> Result<f64> {
    if !(u.is_finite() && u > 0.0) {
        return Err(CoreError::OutOfRange { what: "u", value: u });
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(CoreError::OutOfRange { what: "rho", value: rho });
    }
    let k = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let l = k.cholesky().ok_or(CoreError::NotPositiveDefinite)?.l();
    let terms = [Term { w: 0, l: 1, u }];
    let sol = solve_mode(&terms, &l, &LaplaceOptions::default())
        .map_err(|e| CoreError::CurveFailed { u, source: Box::new(e) })?;
    Ok(sol.f[0] - sol.f[1])
}

/// Sampled `d(u)` with its decreasing tail identified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub gamma: f64,
    pub rho: f64,
    pub u_grid: Vec<f64>,
    pub delta_flap: Vec<f64>,
    /// Index of the last grid maximum; the tail starts here.
    pub tail_start: usize,
}

pub fn compute_delta_flap_curve(gamma: f64, rho: f64, u_grid: &[f64]) -> Result<CalibrationCurve> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(CoreError::OutOfRange { what: "kernel gamma", value: gamma });
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(CoreError::OutOfRange { what: "rho", value: rho });
    }
    if u_grid.len() < 2 {
        return Err(CoreError::InvalidConfig("u grid needs at least two points".into()));
    }
    if u_grid.iter().any(|u| !(u.is_finite() && *u > 0.0)) || u_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoreError::InvalidConfig("u grid must be positive and strictly increasing".into()));
    }
    let delta = u_grid.iter().map(|&u| single_pair_gap(u, rho)).collect::<Result<Vec<_>>>()?;
    let d_max = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail_start = delta.iter().rposition(|&d| d == d_max).expect("non-empty grid");
    if tail_start + 1 >= delta.len() {
        return Err(CoreError::InvalidConfig("curve has no decreasing tail on this grid".into()));
    }
    if let Some(i) = (tail_start..delta.len() - 1).find(|&i| delta[i + 1] >= delta[i]) {
        return Err(CoreError::InvalidConfig(format!("curve tail not strictly decreasing at u = {}", u_grid[i + 1])));
    }
    Ok(CalibrationCurve { gamma, rho, u_grid: u_grid.to_vec(), delta_flap: delta, tail_start })
}

impl CalibrationCurve {
    /// Curve for `rho = 0.5` on the default grid, computed once.
    pub fn standard() -> &'static CalibrationCurve {
        static CURVE: OnceLock<CalibrationCurve> = OnceLock::new();
        CURVE.get_or_init(|| {
            compute_delta_flap_curve(1.0, DEFAULT_RHO, &default_u_grid()).expect("standard curve is well posed")
        })
    }

    pub fn d_max(&self) -> f64 {
        self.delta_flap[self.tail_start]
    }

    pub fn tail_start_u(&self) -> f64 {
        self.u_grid[self.tail_start]
    }

    /// Smallest gap on the tail.
    pub fn tail_min(&self) -> f64 {
        *self.delta_flap.last().expect("non-empty curve")
    }

    /// Exact `d(u)` by a fresh solve.
    pub fn evaluate(&self, u: f64) -> Result<f64> {
        single_pair_gap(u, self.rho)
    }

    /// `d^-1(y)` on the tail: bracketed by the grid, refined by bisection in
    /// `ln u` with exact solves.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let (lo, hi) = (self.tail_min(), self.d_max());
        if !(y.is_finite() && y >= lo && y <= hi) {
            return Err(CoreError::TargetOutsideTail { target: y, low: lo, high: hi });
        }
        let d = &self.delta_flap;
        let last = d.len() - 1;
        if y == hi {
            return Ok(self.u_grid[self.tail_start]);
        }
        if y == lo {
            return Ok(self.u_grid[last]);
        }
        let j = (self.tail_start..last).find(|&i| d[i] >= y && y >= d[i + 1]).expect("target inside tail range");
        let (mut a, mut b) = (self.u_grid[j].ln(), self.u_grid[j + 1].ln());
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if b - a < 1e-15 * a.abs().max(1.0) {
                break;
            }
            if self.evaluate(m.exp())? > y {
                a = m;
            } else {
                b = m;
            }
        }
        Ok((0.5 * (a + b)).exp())
    }

    /// Gap targets per level: fractions of `d_max`, then the floor.
    pub fn default_targets(&self) -> [f64; 4] {
        let m = self.d_max();
        [LEVEL_FRACTIONS[0] * m, LEVEL_FRACTIONS[1] * m, LEVEL_FRACTIONS[2] * m, LEVEL4_TARGET]
    }
}

/// `u^l = d^-1(target_l)` for the fixed percentage points.
pub fn default_uncertainty_factors(curve: &CalibrationCurve) -> Result<UncertaintyFactors> {
    let t = curve.default_targets();
    let mut u = [0.0; 4];
    for i in 0..4 {
        u[i] = curve.inverse(t[i])?;
    }
    UncertaintyFactors::new(u)
}

/// A reward function with a known range, used to interpret calibration
/// answers.
pub trait RewardFunction {
    fn domain(&self) -> &Domain;
    fn eval(&self, x: &FeaturePoint) -> Result<f64>;
    /// `(min, max)` over the domain.
    fn range(&self) -> (f64, f64);
}

/// Mean of the coordinates rescaled to `[0, 1]`; ranges over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRamp {
    pub domain: Domain,
}

impl RewardFunction for LinearRamp {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn eval(&self, x: &FeaturePoint) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(CoreError::InvalidConfig("point outside the calibration domain".into()));
        }
        let n = x.dim() as f64;
        Ok(x.coords().iter().zip(self.domain.bounds()).map(|(v, b)| (v - b.lo) / (b.hi - b.lo)).sum::<f64>() / n)
    }

    fn range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// Seeded uniform pairs over the function's domain.
pub fn generate_calibration_queries<F: RewardFunction + ?Sized>(
    f_calib: &F,
    count: usize,
    seed: u64,
) -> Result<Vec<(FeaturePoint, FeaturePoint)>> {
    if count == 0 {
        return Err(CoreError::InvalidConfig("calibration needs at least one query".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom = f_calib.domain();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = dom.sample_uniform(&mut rng);
        let b = dom.sample_uniform(&mut rng);
        if !a.coincides(&b) {
            out.push((a, b));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAnswer {
    pub x1: FeaturePoint,
    pub x2: FeaturePoint,
    pub level: UncertaintyLevel,
    /// `|f_calib(x1) - f_calib(x2)|`
    pub gap: f64,
}

/// Answers collected so far, plus the range of the function they refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSession {
    pub f_min: f64,
    pub f_max: f64,
    pub answers: Vec<CalibrationAnswer>,
}

impl CalibrationSession {
    pub fn new<F: RewardFunction + ?Sized>(f_calib: &F) -> Result<Self> {
        let (f_min, f_max) = f_calib.range();
        if !(f_min.is_finite() && f_max.is_finite() && f_max > f_min) {
            return Err(CoreError::InvalidConfig("calibration function must have a positive range".into()));
        }
        Ok(Self { f_min, f_max, answers: Vec::new() })
    }

    pub fn record<F: RewardFunction + ?Sized>(
        &mut self,
        f_calib: &F,
        x1: FeaturePoint,
        x2: FeaturePoint,
        level: UncertaintyLevel,
    ) -> Result<&CalibrationAnswer> {
        let gap = (f_calib.eval(&x1)? - f_calib.eval(&x2)?).abs();
        self.answers.push(CalibrationAnswer { x1, x2, level, gap });
        Ok(self.answers.last().expect("just pushed"))
    }

    /// Mean gap per level; `None` for a level never used.
    pub fn level_means(&self) -> [Option<f64>; 4] {
        let mut sum = [0.0; 4];
        let mut cnt = [0usize; 4];
        for a in &self.answers {
            sum[a.level.index()] += a.gap;
            cnt[a.level.index()] += 1;
        }
        std::array::from_fn(|i| (cnt[i] > 0).then(|| sum[i] / cnt[i] as f64))
    }

    /// Mean gap as a fraction of the function's range, clamped to `[0, 1]`.
    pub fn quantiles(&self) -> [Option<f64>; 4] {
        let span = self.f_max - self.f_min;
        self.level_means().map(|m| m.map(|v| (v / span).clamp(0.0, 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CalibrationWarning {
    /// Level never used; its default factor was kept.
    EmptyLevel { level: UncertaintyLevel },
    /// Raw factors were out of order and have been repaired.
    NonMonotone { raw: [f64; 4] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub factors: UncertaintyFactors,
    pub warnings: Vec<CalibrationWarning>,
}

/// Maps each level's mean gap quantile `q` to `u = d^-1(q d_max)`.
///
/// Targets are clamped to `[1e-3, d_max]`. Unused levels fall back to the
/// default factor. Out-of-order results are repaired by isotonic regression.
pub fn calibrate_user(session: &CalibrationSession, curve: &CalibrationCurve) -> Result<CalibrationOutcome> {
    let defaults = default_uncertainty_factors(curve)?.as_array();
    let floor = LEVEL4_TARGET.max(curve.tail_min());
    let mut warnings = Vec::new();
    let mut raw = [0.0; 4];
    for (i, q) in session.quantiles().into_iter().enumerate() {
        raw[i] = match q {
            Some(q) => curve.inverse((q * curve.d_max()).clamp(floor, curve.d_max()))?,
            None => {
                let level = UncertaintyLevel::ALL[i];
                log::warn!("calibration: level {level} never used, keeping its default factor");
                warnings.push(CalibrationWarning::EmptyLevel { level });
                defaults[i]
            }
        };
    }
    let repaired = strictly_increasing(&isotonic(&raw));
    if repaired != raw {
        log::warn!("calibration: factors {raw:?} out of order, repaired to {repaired:?}");
        warnings.push(CalibrationWarning::NonMonotone { raw });
    }
    Ok(CalibrationOutcome { factors: UncertaintyFactors::new(repaired)?, warnings })
}

/// Pool-adjacent-violators fit of a non-decreasing sequence (equal weights).
fn isotonic(x: &[f64; 4]) -> [f64; 4] {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(4);
    for &v in x {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb));
        }
    }
    let mut out = [0.0; 4];
    let mut i = 0;
    for (v, n) in blocks {
        for _ in 0..n {
            out[i] = v;
            i += 1;
        }
    }
    out
}

/// Breaks ties left by pooling with a relative nudge of `1e-6`.
fn strictly_increasing(x: &[f64; 4]) -> [f64; 4] {
    let mut out = *x;
    for i in 1..4 {
        if out[i] <= out[i - 1] {
            out[i] = out[i - 1] * (1.0 + 1e-6);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_curve_shape() {
        let c = CalibrationCurve::standard();
        assert_eq!(c.u_grid.len(), 200);
        assert!(c.delta_flap.iter().all(|d| *d >= 0.0));
        // rising head below the peak, peak near u = 0.64
        assert!(c.tail_start > 0 && c.tail_start_u() > 0.5 && c.tail_start_u() < 0.8);
        assert!((c.d_max() - 0.5427).abs() < 1e-3);
        assert!(single_pair_gap(1e6, 0.5).unwrap() < 1e-3);
    }

    #[test]
    fn default_factors_round_trip() {
        let c = CalibrationCurve::standard();
        let f = default_uncertainty_factors(c).unwrap().as_array();
        assert_eq!(f[0], c.tail_start_u());
        let t = c.default_targets();
        for i in 1..4 {
            assert!((c.evaluate(f[i]).unwrap() - t[i]).abs() < 1e-6);
        }
        assert!(c.inverse(c.d_max() * 1.01).is_err());
        assert!(c.inverse(0.0).is_err());
    }

    #[test]
    fn bad_curve_inputs() {
        assert!(compute_delta_flap_curve(1.0, 1.0, &default_u_grid()).is_err());
        assert!(compute_delta_flap_curve(1.0, 0.5, &[1.0, 0.5]).is_err());
        assert!(compute_delta_flap_curve(0.0, 0.5, &default_u_grid()).is_err());
        // grid entirely on the rising head has no tail
        assert!(compute_delta_flap_curve(1.0, 0.5, &[0.01, 0.02, 0.05]).is_err());
    }

    #[test]
    fn isotonic_repair() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0, 4.0]), [1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic(&[4.0, 3.0, 2.0, 1.0]), [2.5; 4]);
        let s = strictly_increasing(&[1.0, 2.5, 2.5, 4.0]);
        assert!(s[1] < s[2] && s[2] < s[3]);
    }

    #[test]
    fn empty_levels_fall_back() {
        let ramp = LinearRamp { domain: Domain::from_pairs(&[(0.0, 1.0)]).unwrap() };
        let c = CalibrationCurve::standard();
        let mut s = CalibrationSession::new(&ramp).unwrap();
        let p = |x: f64| FeaturePoint::scalar(x).unwrap();
        s.record(&ramp, p(0.0), p(1.0), UncertaintyLevel::L1).unwrap();
        let out = calibrate_user(&s, c).unwrap();
        let def = default_uncertainty_factors(c).unwrap();
        assert_eq!(out.factors.get(UncertaintyLevel::L1), c.tail_start_u());
        for l in &UncertaintyLevel::ALL[1..] {
            assert_eq!(out.factors.get(*l), def.get(*l));
        }
        assert_eq!(out.warnings.len(), 3);
    }

    #[test]
    fn queries_are_seeded_and_in_bounds() {
        let ramp = LinearRamp { domain: Domain::from_pairs(&[(10.0, 26.0)]).unwrap() };
        let a = generate_calibration_queries(&ramp, 50, 3).unwrap();
        assert_eq!(a, generate_calibration_queries(&ramp, 50, 3).unwrap());
        assert_eq!(a.len(), 50);
        assert!(a.iter().all(|(x, y)| ramp.domain.contains(x) && ramp.domain.contains(y) && !x.coincides(y)));
        assert!(generate_calibration_queries(&ramp, 0, 3).is_err());
    }
}
