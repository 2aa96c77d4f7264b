//! Standard normal CDF, survival function, density and quantile.
//!
//! The CDF goes through `erfc`, which keeps full relative precision in both
//! tails. The quantile starts from Acklam's rational approximation (relative
//! error about 1.15e-9) and is polished with Halley steps against the CDF.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{ensure_finite, ensure_probability, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

/// Density of the standard normal.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Φ(z), unchecked.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// 1 − Φ(z), computed without cancellation.
#[inline]
pub fn norm_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// Φ(z) with a domain check on `z`.
pub fn std_normal_cdf(z: f64) -> Result<f64> {
    ensure_finite("z", z)?;
    Ok(norm_cdf(z))
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    ensure_probability("p", p)?;
    Ok(norm_quantile(p))
}

/// Φ⁻¹(p), unchecked. Returns ±∞ at the endpoints and NaN outside [0, 1].
pub fn norm_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // 1 - p is exact here, and the lower branch refines against the
        // accurate lower tail.
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

fn lower_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 0.5);
    if p == 0.5 {
        return 0.0;
    }
    let mut x = acklam(p);
    for _ in 0..3 {
        let err = norm_cdf(x) - p;
        let dens = norm_pdf(x);
        if dens < 1e-300 {
            break;
        }
        let u = err / dens;
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// erf via the all-positive series erf(x) = 2/√π · e^{-x²} Σ 2ⁿ x^{2n+1} / (2n+1)!!,
    /// which has no cancellation for x ≥ 0.
    fn erf_series(x: f64) -> f64 {
        assert!(x >= 0.0);
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
            if term <= 1e-18 * sum {
                break;
            }
        }
        2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    }

    fn cdf_oracle(z: f64) -> f64 {
        let e = erf_series(z.abs() * FRAC_1_SQRT_2);
        if z >= 0.0 {
            0.5 * (1.0 + e)
        } else {
            0.5 * (1.0 - e)
        }
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
    }

    #[test]
    fn cdf_matches_series_oracle() {
        let mut z = -6.0;
        while z <= 6.0 {
            let got = norm_cdf(z);
            let want = cdf_oracle(z);
            assert!((got - want).abs() < 1e-12, "z={z}: {got} vs {want}");
            z += 0.01;
        }
    }

    #[test]
    fn cdf_reference_points() {
        // 2.3263 is the bisection root of the series oracle at 0.99, to 4 dp.
        assert!((std_normal_cdf(2.3263).unwrap() - 0.99).abs() < 1e-4);
        assert!((std_normal_cdf(-2.3263).unwrap() - 0.01).abs() < 1e-4);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(-0.1).is_err());
    }

    fn bisect_oracle(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf_oracle(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_reference_points() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        let z99 = std_normal_quantile(0.99).unwrap();
        assert!((z99 - 2.3263).abs() < 1e-3);
        assert!((z99 - bisect_oracle(0.99)).abs() < 1e-10);
        assert!((std_normal_quantile(0.01).unwrap() + z99).abs() < 1e-12);
        assert!((std_normal_quantile(0.9).unwrap() - bisect_oracle(0.9)).abs() < 1e-10);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let z = norm_quantile(p);
            assert!((norm_cdf(z) - p).abs() < 1e-9, "p={p}");
        }
        for &p in &[1e-12, 1e-9, 1e-6, 1e-3] {
            let z = norm_quantile(p);
            assert!(((norm_cdf(z) - p) / p).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn quantile_strictly_increasing() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..10_000 {
            let z = norm_quantile(i as f64 / 10_000.0);
            assert!(z > prev);
            prev = z;
        }
    }
}
