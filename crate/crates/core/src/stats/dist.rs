//! The two PRT families: lognormal for the population and zero-truncated
//! normal for an individual driver.

use serde::{Deserialize, Serialize};

use super::normal::{norm_cdf, norm_pdf, norm_quantile, norm_sf};
use super::quad::{integrate, QuadratureSpec};
use super::rng::SeededRng;
use crate::error::{ensure_finite, ensure_positive, ensure_probability, Error, Result};

/// Tail mass left beyond the finite cutoff used in place of +∞.
pub const TAIL_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogNormalRaw")]
pub struct LogNormalPrt {
    mu_log: f64,
    sigma_log: f64,
}

#[derive(Deserialize)]
struct LogNormalRaw {
    mu_log: f64,
    sigma_log: f64,
}

impl TryFrom<LogNormalRaw> for LogNormalPrt {
    type Error = Error;
    fn try_from(r: LogNormalRaw) -> Result<Self> {
        LogNormalPrt::new(r.mu_log, r.sigma_log)
    }
}

impl LogNormalPrt {
    pub fn new(mu_log: f64, sigma_log: f64) -> Result<Self> {
        ensure_finite("mu_log", mu_log)?;
        ensure_positive("sigma_log", sigma_log)?;
        Ok(LogNormalPrt { mu_log, sigma_log })
    }

    pub fn mu_log(&self) -> f64 {
        self.mu_log
    }

    pub fn sigma_log(&self) -> f64 {
        self.sigma_log
    }

    pub fn median(&self) -> f64 {
        self.mu_log.exp()
    }

    pub fn mean(&self) -> f64 {
        (self.mu_log + 0.5 * self.sigma_log * self.sigma_log).exp()
    }

    pub fn variance(&self) -> f64 {
        let s2 = self.sigma_log * self.sigma_log;
        s2.exp_m1() * (2.0 * self.mu_log + s2).exp()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 || x.is_infinite() {
            return 0.0;
        }
        let z = (x.ln() - self.mu_log) / self.sigma_log;
        norm_pdf(z) / (x * self.sigma_log)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 {
            return 0.0;
        }
        norm_cdf((x.ln() - self.mu_log) / self.sigma_log)
    }

    pub fn sf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 {
            return 1.0;
        }
        norm_sf((x.ln() - self.mu_log) / self.sigma_log)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        ensure_probability("p", p)?;
        Ok((self.mu_log + self.sigma_log * norm_quantile(p)).exp())
    }

    /// Inverse survival function: x with P(X > x) = q.
    pub fn isf(&self, q: f64) -> Result<f64> {
        ensure_probability("q", q)?;
        Ok((self.mu_log - self.sigma_log * norm_quantile(q)).exp())
    }
}

/// Normal law conditioned on `x ≥ lower`, with `lower` fixed at 0 for PRTs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TruncatedNormalRaw", into = "TruncatedNormalRaw")]
pub struct TruncatedNormalPrt {
    mu: f64,
    sigma: f64,
    lower: f64,
    /// (lower − mu) / sigma
    a0: f64,
    /// Φ(a0), mass cut away below `lower`.
    cut: f64,
    /// 1 − Φ(a0), mass retained.
    kept: f64,
}

#[derive(Serialize, Deserialize)]
struct TruncatedNormalRaw {
    mu: f64,
    sigma: f64,
    #[serde(default)]
    lower: f64,
}

impl TryFrom<TruncatedNormalRaw> for TruncatedNormalPrt {
    type Error = Error;
    fn try_from(r: TruncatedNormalRaw) -> Result<Self> {
        TruncatedNormalPrt::with_lower(r.mu, r.sigma, r.lower)
    }
}

impl From<TruncatedNormalPrt> for TruncatedNormalRaw {
    fn from(t: TruncatedNormalPrt) -> Self {
        TruncatedNormalRaw {
            mu: t.mu,
            sigma: t.sigma,
            lower: t.lower,
        }
    }
}

impl TruncatedNormalPrt {
    /// Zero-truncated normal.
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        Self::with_lower(mu, sigma, 0.0)
    }

    pub(crate) fn with_lower(mu: f64, sigma: f64, lower: f64) -> Result<Self> {
        ensure_finite("mu", mu)?;
        ensure_positive("sigma", sigma)?;
        ensure_finite("lower", lower)?;
        let a0 = (lower - mu) / sigma;
        let kept = norm_sf(a0);
        if kept <= 0.0 {
            return Err(Error::domain(format!(
                "truncation at {lower} removes all mass of N({mu}, {sigma}²)"
            )));
        }
        Ok(TruncatedNormalPrt {
            mu,
            sigma,
            lower,
            a0,
            cut: norm_cdf(a0),
            kept,
        })
    }

    /// Zero-truncated normal whose own mean and standard deviation equal
    /// the given moments. Requires `std / mean < 1`, the exponential limit.
    pub fn from_moments(mean: f64, std: f64) -> Result<Self> {
        ensure_positive("mean", mean)?;
        ensure_positive("std", std)?;
        let cv = std / mean;
        if cv >= 1.0 {
            return Err(Error::domain(format!(
                "coefficient of variation {cv} is not attainable by a zero-truncated normal"
            )));
        }
        // Standardized truncation point a0 = -mu/sigma. The ratio
        // mean/std of the truncated law is decreasing in a0.
        let ratio = |a0: f64| {
            let lam = inverse_mills(a0);
            let m = lam - a0;
            let v = 1.0 + a0 * lam - lam * lam;
            m / v.max(0.0).sqrt()
        };
        let target = 1.0 / cv;
        let (mut lo, mut hi) = (-40.0_f64, 30.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        let a0 = 0.5 * (lo + hi);
        let lam = inverse_mills(a0);
        let unit_var = 1.0 + a0 * lam - lam * lam;
        let sigma = std / unit_var.sqrt();
        let mu = -a0 * sigma;
        Self::new(mu, sigma)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Normalizer α = 1 / (1 − Φ((lower − μ)/σ)).
    pub fn alpha(&self) -> f64 {
        1.0 / self.kept
    }

    pub fn mean(&self) -> f64 {
        self.mu + self.sigma * inverse_mills(self.a0)
    }

    pub fn variance(&self) -> f64 {
        let lam = inverse_mills(self.a0);
        self.sigma * self.sigma * (1.0 + self.a0 * lam - lam * lam)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x < self.lower || x.is_infinite() {
            return 0.0;
        }
        norm_pdf((x - self.mu) / self.sigma) / (self.sigma * self.kept)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= self.lower {
            return 0.0;
        }
        let z = (x - self.mu) / self.sigma;
        let v = if z > 0.0 {
            1.0 - norm_sf(z) / self.kept
        } else {
            (norm_cdf(z) - self.cut) / self.kept
        };
        v.clamp(0.0, 1.0)
    }

    pub fn sf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= self.lower {
            return 1.0;
        }
        (norm_sf((x - self.mu) / self.sigma) / self.kept).min(1.0)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        ensure_probability("p", p)?;
        Ok(self.quantile_unchecked(p))
    }

    /// Inverse survival function: x with P(X > x) = q.
    pub fn isf(&self, q: f64) -> Result<f64> {
        ensure_probability("q", q)?;
        if q > 0.5 {
            return Ok(self.quantile_unchecked(1.0 - q));
        }
        let z = -norm_quantile(q * self.kept);
        let mut x = (self.mu + self.sigma * z).max(self.lower);
        for _ in 0..2 {
            let d = self.pdf(x);
            if d.is_nan() || d <= 0.0 {
                break;
            }
            let next = (x - (q - self.sf(x)) / d).max(self.lower);
            if next == x {
                break;
            }
            x = next;
        }
        Ok(x)
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        // Below the mode of N(μ, σ²) the lower tail is accurate; past it
        // `cut` is close to 1 and the upper tail must be used instead.
        let z = if p < 0.5 && self.a0 <= 0.0 {
            norm_quantile(self.cut + p * self.kept)
        } else {
            -norm_quantile((1.0 - p) * self.kept)
        };
        let mut x = (self.mu + self.sigma * z).max(self.lower);
        // Newton polish on the truncated CDF itself.
        for _ in 0..2 {
            let d = self.pdf(x);
            if d.is_nan() || d <= 0.0 {
                break;
            }
            let err = if p < 0.5 {
                self.cdf(x) - p
            } else {
                (1.0 - p) - self.sf(x)
            };
            let next = (x - err / d).max(self.lower);
            if next == x {
                break;
            }
            x = next;
        }
        x
    }
}

/// φ(a)/(1 − Φ(a)), evaluated stably for large a.
fn inverse_mills(a: f64) -> f64 {
    let sf = norm_sf(a);
    if sf > 1e-300 {
        norm_pdf(a) / sf
    } else {
        // Asymptotic series a + 1/a − 2/a³.
        a + 1.0 / a - 2.0 / (a * a * a)
    }
}

/// A brake-response-time law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PrtDistribution {
    LogNormal(LogNormalPrt),
    TruncatedNormal(TruncatedNormalPrt),
}

impl From<LogNormalPrt> for PrtDistribution {
    fn from(d: LogNormalPrt) -> Self {
        PrtDistribution::LogNormal(d)
    }
}

impl From<TruncatedNormalPrt> for PrtDistribution {
    fn from(d: TruncatedNormalPrt) -> Self {
        PrtDistribution::TruncatedNormal(d)
    }
}

impl PrtDistribution {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            PrtDistribution::LogNormal(d) => d.pdf(x),
            PrtDistribution::TruncatedNormal(d) => d.pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            PrtDistribution::LogNormal(d) => d.cdf(x),
            PrtDistribution::TruncatedNormal(d) => d.cdf(x),
        }
    }

    pub fn sf(&self, x: f64) -> f64 {
        match self {
            PrtDistribution::LogNormal(d) => d.sf(x),
            PrtDistribution::TruncatedNormal(d) => d.sf(x),
        }
    }

    pub fn pdf_checked(&self, x: f64) -> Result<f64> {
        ensure_finite("x", x)?;
        Ok(self.pdf(x))
    }

    pub fn cdf_checked(&self, x: f64) -> Result<f64> {
        ensure_finite("x", x)?;
        Ok(self.cdf(x))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        match self {
            PrtDistribution::LogNormal(d) => d.quantile(p),
            PrtDistribution::TruncatedNormal(d) => d.quantile(p),
        }
    }

    pub fn isf(&self, q: f64) -> Result<f64> {
        match self {
            PrtDistribution::LogNormal(d) => d.isf(q),
            PrtDistribution::TruncatedNormal(d) => d.isf(q),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            PrtDistribution::LogNormal(d) => d.mean(),
            PrtDistribution::TruncatedNormal(d) => d.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            PrtDistribution::LogNormal(d) => d.variance(),
            PrtDistribution::TruncatedNormal(d) => d.variance(),
        }
    }

    /// Lower end of the support (0 for both families).
    pub fn support_lower(&self) -> f64 {
        match self {
            PrtDistribution::LogNormal(_) => 0.0,
            PrtDistribution::TruncatedNormal(d) => d.lower(),
        }
    }

    /// Finite stand-in for +∞: the 1 − 1e-12 quantile.
    pub fn upper_cutoff(&self) -> f64 {
        match self {
            PrtDistribution::LogNormal(d) => {
                (d.mu_log() + d.sigma_log() * -norm_quantile(TAIL_CUTOFF)).exp()
            }
            PrtDistribution::TruncatedNormal(d) => d.quantile_unchecked(1.0 - TAIL_CUTOFF),
        }
    }

    /// Inverse-transform draw.
    pub fn draw(&self, rng: &mut SeededRng) -> f64 {
        let u = rng.uniform_open();
        match self {
            PrtDistribution::LogNormal(d) => (d.mu_log() + d.sigma_log() * norm_quantile(u)).exp(),
            PrtDistribution::TruncatedNormal(d) => d.quantile_unchecked(u),
        }
    }

    /// `n` inverse-transform draws; `n = 0` gives an empty vector.
    pub fn sample(&self, rng: &mut SeededRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// ∫ pdf over the support, by quadrature up to the cutoff.
    pub fn total_mass(&self, spec: &QuadratureSpec) -> Result<f64> {
        integrate(
            |x| self.pdf(x),
            self.support_lower(),
            self.upper_cutoff(),
            spec,
        )
    }

    pub fn label(&self) -> String {
        match self {
            PrtDistribution::LogNormal(d) => {
                format!(
                    "lognormal(mu_log={}, sigma_log={})",
                    d.mu_log(),
                    d.sigma_log()
                )
            }
            PrtDistribution::TruncatedNormal(d) => {
                format!("truncnorm(mu={}, sigma={})", d.mu(), d.sigma())
            }
        }
    }
}
