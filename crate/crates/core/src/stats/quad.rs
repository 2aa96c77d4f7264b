//! Adaptive Simpson quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of equal panels the interval is cut into before adaptation starts.
/// A single 5-point Simpson pass can miss a narrow peak entirely.
const INITIAL_PANELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_subdivisions: 100_000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let spec = QuadratureSpec {
            abs_tol,
            rel_tol,
            max_subdivisions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::domain(format!(
                "abs_tol must be positive, got {}",
                self.abs_tol
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::domain(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::domain("max_subdivisions must be at least 1"));
        }
        Ok(())
    }

    /// Same budget, tighter or looser tolerances.
    pub fn with_tolerance(self, tol: f64) -> Self {
        QuadratureSpec {
            abs_tol: tol,
            rel_tol: tol,
            ..self
        }
    }
}

/// Result of a converged integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of the local Richardson error estimates.
    pub error: f64,
    pub subdivisions: usize,
}

struct Panel {
    lo: f64,
    hi: f64,
    f_lo: f64,
    f_mid: f64,
    f_hi: f64,
    whole: f64,
}

#[inline]
fn simpson(lo: f64, hi: f64, f_lo: f64, f_mid: f64, f_hi: f64) -> f64 {
    (hi - lo) * (f_lo + 4.0 * f_mid + f_hi) / 6.0
}

/// ∫ₐᵇ f with adaptive Simpson; returns only the value.
pub fn integrate<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_with_error(f, a, b, spec).map(|r| r.value)
}

/// ∫ₐᵇ f with adaptive Simpson.
///
/// The target accuracy is `max(abs_tol, rel_tol·|I₀|)` where `I₀` is the
/// initial composite estimate; each panel receives a share proportional to
/// its width. Accepted panels are Richardson-corrected.
pub fn integrate_with_error<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    spec.validate()?;
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(format!(
            "integration limits must be finite, got [{a}, {b}]"
        )));
    }
    if a > b {
        return Err(Error::domain(format!(
            "lower limit {a} exceeds upper limit {b}"
        )));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
        });
    }

    let width = b - a;
    let mut stack: Vec<Panel> = Vec::with_capacity(64);
    let mut initial = 0.0;
    let mut f_prev = f(a);
    for i in 0..INITIAL_PANELS {
        let lo = a + width * i as f64 / INITIAL_PANELS as f64;
        let hi = if i + 1 == INITIAL_PANELS {
            b
        } else {
            a + width * (i + 1) as f64 / INITIAL_PANELS as f64
        };
        let f_mid = f(0.5 * (lo + hi));
        let f_hi = f(hi);
        let whole = simpson(lo, hi, f_prev, f_mid, f_hi);
        initial += whole;
        stack.push(Panel {
            lo,
            hi,
            f_lo: f_prev,
            f_mid,
            f_hi,
            whole,
        });
        f_prev = f_hi;
    }
    if !initial.is_finite() {
        return Err(Error::domain("integrand is not finite on the interval"));
    }
    // Process panels left to right.
    stack.reverse();

    let tol = spec.abs_tol.max(spec.rel_tol * initial.abs());
    let mut value = 0.0;
    let mut error = 0.0;
    let mut subdivisions = 0usize;

    while let Some(p) = stack.pop() {
        let mid = 0.5 * (p.lo + p.hi);
        let f_lm = f(0.5 * (p.lo + mid));
        let f_rm = f(0.5 * (mid + p.hi));
        let left = simpson(p.lo, mid, p.f_lo, f_lm, p.f_mid);
        let right = simpson(mid, p.hi, p.f_mid, f_rm, p.f_hi);
        let refined = left + right;
        let diff = refined - p.whole;
        if !diff.is_finite() {
            return Err(Error::domain("integrand is not finite on the interval"));
        }
        let panel_tol = tol * (p.hi - p.lo) / width;
        // Stop splitting once the midpoint is no longer representable.
        let unsplittable = mid <= p.lo || mid >= p.hi;
        if diff.abs() <= 15.0 * panel_tol || unsplittable {
            value += refined + diff / 15.0;
            error += diff.abs() / 15.0;
            continue;
        }
        if subdivisions >= spec.max_subdivisions {
            let remaining: f64 = stack.iter().map(|q| q.whole).sum();
            let pending = refined + diff / 15.0;
            return Err(Error::Convergence {
                estimate: value + pending + remaining,
                error_bound: error + diff.abs() + stack.len() as f64 * panel_tol * 15.0,
                subdivisions,
            });
        }
        subdivisions += 1;
        stack.push(Panel {
            lo: mid,
            hi: p.hi,
            f_lo: p.f_mid,
            f_mid: f_rm,
            f_hi: p.f_hi,
            whole: right,
        });
        stack.push(Panel {
            lo: p.lo,
            hi: mid,
            f_lo: p.f_lo,
            f_mid: f_lm,
            f_hi: p.f_mid,
            whole: left,
        });
    }

    Ok(Integral {
        value,
        error,
        subdivisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::normal::{norm_cdf, norm_pdf};

    #[test]
    fn constant_integrand() {
        let v = integrate(|_| 1.0, 0.0, 3.3, &QuadratureSpec::default()).unwrap();
        assert!((v - 3.3).abs() <= 4.0 * f64::EPSILON * 3.3);
    }

    #[test]
    fn empty_and_reversed_intervals() {
        let spec = QuadratureSpec::default();
        assert_eq!(integrate(|x| x, 2.0, 2.0, &spec).unwrap(), 0.0);
        assert!(integrate(|x| x, 2.0, 1.0, &spec).is_err());
        assert!(integrate(|x| x, 0.0, f64::INFINITY, &spec).is_err());
    }

    #[test]
    fn integral_of_normal_cdf_matches_closed_form() {
        // ∫ Φ(u) du = uΦ(u) + φ(u); with t = 1.31 + 0.2u the integral over
        // t ∈ [0, 1.7753] is 0.2·[G(u₁) − G(u₀)].
        let g = |u: f64| u * norm_cdf(u) + norm_pdf(u);
        let (u0, u1) = ((0.0 - 1.31) / 0.2, (1.7753 - 1.31) / 0.2);
        let exact = 0.2 * (g(u1) - g(u0));
        let v = integrate(
            |t| norm_cdf((t - 1.31) / 0.2),
            0.0,
            1.7753,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((v - exact).abs() < 1e-9);
        assert!((v - 0.4659).abs() < 1e-4);
    }

    #[test]
    fn narrow_peak_is_found() {
        // Bump narrower than the initial panel spacing (6 / 64).
        let s = 0.05;
        let v = integrate(
            |x| norm_pdf((x - 0.37) / s) / s,
            0.0,
            6.0,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-7, "{v}");
    }

    #[test]
    fn budget_exhaustion_reports_best_estimate() {
        let spec = QuadratureSpec::new(1e-14, 1e-14, 2).unwrap();
        match integrate(|x: f64| x.sin().exp(), 0.0, 40.0, &spec) {
            Err(Error::Convergence {
                estimate,
                error_bound,
                subdivisions,
            }) => {
                assert_eq!(subdivisions, 2);
                assert!(estimate.is_finite());
                assert!(error_bound > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(QuadratureSpec::new(0.0, 1e-8, 10).is_err());
        assert!(QuadratureSpec::new(1e-8, -1.0, 10).is_err());
        assert!(QuadratureSpec::new(1e-8, 1e-8, 0).is_err());
    }
}
