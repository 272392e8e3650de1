//! Standard-normal distribution functions.
//!
//! The checked entry points reject non-finite input. The `*_unchecked`
//! variants are used on hot paths inside the likelihood where inputs are
//! already known to be finite.

use libm::erfc;

use crate::error::{CoreError, Result};

/// `ln(sqrt(2 * pi))`
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this argument `ln Phi` and the inverse Mills ratio switch to the
/// continued-fraction tail representation.
const TAIL_SWITCH: f64 = -8.0;

pub fn std_normal_cdf(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(CoreError::NonFinite("std_normal_cdf argument"));
    }
    Ok(cdf_unchecked(z))
}

pub fn std_normal_pdf(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(CoreError::NonFinite("std_normal_pdf argument"));
    }
    Ok(pdf_unchecked(z))
}

#[inline]
pub fn cdf_unchecked(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

#[inline]
pub fn pdf_unchecked(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Tail of the Laplace continued fraction, `x + k/(x + (k+1)/(x + ...))`.
fn laplace_cf(x: f64, k: usize) -> f64 {
    let mut acc = x;
    for j in (k..=k + 60).rev() {
        acc = x + j as f64 / acc;
    }
    acc
}

/// Mills ratio `Phi(-x) / phi(x)` for `x >= 8`.
fn mills_ratio_tail(x: f64) -> f64 {
    debug_assert!(x >= -TAIL_SWITCH);
    1.0 / laplace_cf(x, 1)
}

/// `ln Phi(z)`, accurate in the far left tail.
pub fn ln_cdf(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        -0.5 * z * z - LN_SQRT_2PI + mills_ratio_tail(-z).ln()
    } else if z > 0.0 {
        (-0.5 * erfc(z * std::f64::consts::FRAC_1_SQRT_2)).ln_1p()
    } else {
        cdf_unchecked(z).ln()
    }
}

/// Inverse Mills ratio `phi(z) / Phi(z)`, the derivative of `ln Phi(z)`.
pub fn inv_mills(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        1.0 / mills_ratio_tail(-z)
    } else {
        pdf_unchecked(z) / cdf_unchecked(z)
    }
}

/// `lambda(z) * (z + lambda(z))` with `lambda` the inverse Mills ratio: the
/// negative second derivative of `ln Phi(z)`. Always positive.
pub fn probit_curvature(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        let x = -z;
        // z + lambda(z) = 1/R(x) - x = 1 / (x + 2/(x + 3/(...)))
        laplace_cf(x, 1) / laplace_cf(x, 2)
    } else {
        let lam = inv_mills(z);
        lam * (z + lam)
    }
}

/// Binary entropy in bits. `h(0) = h(1) = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !p.is_finite() {
        return Err(CoreError::NonFinite("binary_entropy argument"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(CoreError::OutOfRange { what: "probability", value: p });
    }
    Ok(binary_entropy_unchecked(p))
}

pub(crate) fn binary_entropy_unchecked(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        // erf-based references to 15 digits
        assert_abs_diff_eq!(std_normal_cdf(1.0).unwrap(), 0.841_344_746_068_542_9, epsilon = 1e-12);
        assert_abs_diff_eq!(std_normal_cdf(-1.0).unwrap(), 0.158_655_253_931_457_05, epsilon = 1e-12);
        assert!((std_normal_cdf(1.0).unwrap() - 0.841345).abs() < 5e-7);
        assert!((std_normal_cdf(-1.0).unwrap() - 0.158655).abs() < 5e-7);
    }

    #[test]
    fn cdf_symmetry() {
        for i in -600..=600 {
            let z = i as f64 / 100.0;
            let s = cdf_unchecked(z) + cdf_unchecked(-z);
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
        assert!(std_normal_pdf(f64::NEG_INFINITY).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn pdf_values() {
        assert_abs_diff_eq!(std_normal_pdf(0.0).unwrap(), 0.398942, epsilon = 5e-7);
        assert_eq!(std_normal_pdf(2.0).unwrap(), std_normal_pdf(-2.0).unwrap());
        assert!(std_normal_pdf(40.0).unwrap() < 1e-300);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // -0.25 log2 0.25 - 0.75 log2 0.75 = 0.8112781244591328
        assert_abs_diff_eq!(binary_entropy(0.25).unwrap(), 0.811_278_124_459_132_8, epsilon = 1e-12);
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn ln_cdf_continuous_across_switch() {
        let left = ln_cdf(TAIL_SWITCH - 1e-9);
        let right = ln_cdf(TAIL_SWITCH + 1e-9);
        assert!((left - right).abs() < 1e-7);
        // direct evaluation is still accurate at -8
        let direct = cdf_unchecked(-8.0).ln();
        assert!((ln_cdf(-8.0 - 1e-12) - direct).abs() < 1e-9);
    }

    #[test]
    fn ln_cdf_far_tail_is_finite() {
        let v = ln_cdf(-1e4);
        assert!(v.is_finite());
        assert!(v < -4.9e7);
        assert!(inv_mills(-1e4) > 9.99e3);
        // phi/Phi ~ -z in the far tail
        assert!((inv_mills(-50.0) - 50.0).abs() < 0.05);
    }

    #[test]
    fn curvature_positive_and_continuous() {
        for i in -2000..=800 {
            let z = i as f64 / 100.0;
            assert!(probit_curvature(z) > 0.0, "z = {z}");
        }
        let a = probit_curvature(-8.0 - 1e-9);
        let b = probit_curvature(-8.0 + 1e-9);
        assert!((a - b).abs() < 1e-6 * b);
        // limit is 1 as z -> -inf
        assert!((probit_curvature(-1e3) - 1.0).abs() < 1e-5);
        // central difference of the inverse Mills ratio
        for &z in &[-9.0, -3.0, 0.0, 2.0] {
            let h = 1e-5;
            let fd = -(inv_mills(z + h) - inv_mills(z - h)) / (2.0 * h);
            assert!((fd - probit_curvature(z)).abs() < 1e-6, "z = {z}");
        }
    }

    #[test]
    fn inv_mills_matches_ratio() {
        for &z in &[-7.9, -3.0, 0.0, 1.5, 6.0] {
            let direct = pdf_unchecked(z) / cdf_unchecked(z);
            assert_abs_diff_eq!(inv_mills(z), direct, epsilon = 1e-12 * direct.max(1.0));
        }
        let a = inv_mills(-8.0 - 1e-9);
        let b = inv_mills(-8.0 + 1e-9);
        assert!((a - b).abs() < 1e-6);
    }
}
