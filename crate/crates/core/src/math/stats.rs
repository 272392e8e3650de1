use crate::error::{CoreError, Result};

/// Pearson sample correlation between predicted and ground-truth values,
/// the accuracy metric used throughout the simulations.
pub fn sample_correlation(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(CoreError::DimensionMismatch { expected: pred.len(), got: truth.len() });
    }
    if pred.len() < 2 {
        return Err(CoreError::InvalidConfig("correlation needs at least two samples".into()));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("correlation sample"));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mp, t - mt);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
    }
    // Relative test so that a vector of identical large values is still constant.
    let tiny = |ss: f64, m: f64| ss <= (f64::EPSILON * m.abs().max(1e-300)).powi(2) * n;
    if sxx == 0.0 || syy == 0.0 || tiny(sxx, mp) || tiny(syy, mt) {
        return Err(CoreError::ConstantVector);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
