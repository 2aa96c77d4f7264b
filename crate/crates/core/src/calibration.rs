//! Warning thresholds, false-alarm rates and FAR-versus-miss-probability curves.
//!
//! A warning goes out whenever the time available to react is below the
//! threshold `T`, and `T` is set so the driver's PRT exceeds it with
//! probability `p_accident`. Given a warning, the available time is taken as
//! uniform on `[0, T]`, so the false-alarm rate is
//!
//! ```text
//! FAR = (1/T) ∫₀ᵀ F_X(t) dt
//! ```

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, ensure_probability, Error, Result};
use crate::population::PopulationPrt;
use crate::stats::{integrate, PrtDistribution, QuadratureSpec, TruncatedNormalPrt};

/// Mean of the individual distribution used for the std sweep.
pub const SWEEP_STD_FIXED_MEAN: f64 = 1.31;
/// Individual std used for the mean sweep.
pub const SWEEP_MEAN_FIXED_STD: f64 = 0.2;

pub const DEFAULT_P_MIN: f64 = 0.001;
pub const DEFAULT_P_MAX: f64 = 0.5;
pub const DEFAULT_P_POINTS: usize = 200;

/// Bisection stops once the bracket on the crossing is this narrow.
const CROSSING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub mean: f64,
    pub std: f64,
}

impl DriverProfile {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        ensure_positive("mean", mean)?;
        ensure_positive("std", std)?;
        Ok(DriverProfile { mean, std })
    }

    pub fn distribution(&self) -> Result<PrtDistribution> {
        Ok(TruncatedNormalPrt::new(self.mean, self.std)?.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    Population,
    Individual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarningPolicy {
    pub threshold_s: f64,
    pub p_accident: f64,
    pub source: PolicySource,
}

impl WarningPolicy {
    pub fn new(threshold_s: f64, p_accident: f64, source: PolicySource) -> Result<Self> {
        ensure_positive("threshold_s", threshold_s)?;
        ensure_probability("p_accident", p_accident)?;
        Ok(WarningPolicy {
            threshold_s,
            p_accident,
            source,
        })
    }
}

/// Threshold with P(X > T) = p_accident under the population lognormal.
pub fn calibrate_population(pop: &PopulationPrt, p_accident: f64) -> Result<WarningPolicy> {
    ensure_probability("p_accident", p_accident)?;
    let t = pop.law().isf(p_accident)?;
    WarningPolicy::new(t, p_accident, PolicySource::Population)
}

/// Threshold with P(X > T) = p_accident under the driver's truncated normal.
pub fn calibrate_individual(profile: &DriverProfile, p_accident: f64) -> Result<WarningPolicy> {
    ensure_probability("p_accident", p_accident)?;
    let t = profile.distribution()?.isf(p_accident)?;
    WarningPolicy::new(t, p_accident, PolicySource::Individual)
}

fn far_spec() -> QuadratureSpec {
    QuadratureSpec::default().with_tolerance(1e-11)
}

/// FAR for a driver with PRT law `dist` under `policy`.
pub fn false_alarm_rate(dist: &PrtDistribution, policy: &WarningPolicy) -> Result<f64> {
    false_alarm_rate_at(dist, policy.threshold_s, &far_spec())
}

/// FAR at an explicit threshold with a caller-chosen quadrature spec.
pub fn false_alarm_rate_at(
    dist: &PrtDistribution,
    threshold_s: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    ensure_positive("threshold_s", threshold_s)?;
    let area = integrate(|t| dist.cdf(t), 0.0, threshold_s, spec)?;
    Ok((area / threshold_s).clamp(0.0, 1.0))
}

/// What a FAR curve describes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveSource {
    /// Calibrated and evaluated with the population law.
    Population { population: PopulationPrt },
    /// Calibrated and evaluated with the driver's own law.
    Individual { profile: DriverProfile },
    /// Calibrated with the population law, evaluated with the driver's law.
    Mismatched {
        population: PopulationPrt,
        profile: DriverProfile,
    },
}

impl CurveSource {
    pub fn far_at(&self, p_accident: f64) -> Result<f64> {
        match self {
            CurveSource::Population { population } => {
                let policy = calibrate_population(population, p_accident)?;
                false_alarm_rate(&population.distribution(), &policy)
            }
            CurveSource::Individual { profile } => {
                let policy = calibrate_individual(profile, p_accident)?;
                false_alarm_rate(&profile.distribution()?, &policy)
            }
            CurveSource::Mismatched {
                population,
                profile,
            } => {
                let policy = calibrate_population(population, p_accident)?;
                false_alarm_rate(&profile.distribution()?, &policy)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            CurveSource::Population { .. } => "population".to_string(),
            CurveSource::Individual { profile } => {
                format!("individual_mean{}_std{}", profile.mean, profile.std)
            }
            CurveSource::Mismatched { profile, .. } => {
                format!("mismatched_mean{}_std{}", profile.mean, profile.std)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarPoint {
    pub p_accident: f64,
    pub far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarCurve {
    pub label: String,
    pub points: Vec<FarPoint>,
    /// Present for computed curves; lets crossings be refined off-grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<CurveSource>,
}

impl FarCurve {
    pub fn p_grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.p_accident).collect()
    }

    /// FAR at `p`, exactly from the source when known, else by linear
    /// interpolation between grid points.
    pub fn far_at(&self, p: f64) -> Result<f64> {
        if let Some(src) = &self.source {
            return src.far_at(p);
        }
        let pts = &self.points;
        let i = pts
            .windows(2)
            .position(|w| w[0].p_accident <= p && p <= w[1].p_accident)
            .ok_or_else(|| Error::domain(format!("p = {p} lies outside the curve's grid")))?;
        let (a, b) = (pts[i], pts[i + 1]);
        let w = (p - a.p_accident) / (b.p_accident - a.p_accident);
        Ok(a.far + w * (b.far - a.far))
    }

    /// True when FAR never increases along the grid.
    pub fn is_nonincreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].far <= w[0].far)
    }
}

pub fn validate_p_grid(p_grid: &[f64]) -> Result<()> {
    if p_grid.is_empty() {
        return Err(Error::domain("p grid is empty"));
    }
    for &p in p_grid {
        ensure_probability("p_accident", p)?;
    }
    if p_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("p grid must be strictly increasing"));
    }
    Ok(())
}

/// `n` log-spaced probabilities from `p_min` to `p_max` inclusive.
pub fn log_grid(p_min: f64, p_max: f64, n: usize) -> Result<Vec<f64>> {
    ensure_probability("p_min", p_min)?;
    ensure_probability("p_max", p_max)?;
    if n == 0 {
        return Err(Error::domain("grid needs at least one point"));
    }
    if n == 1 {
        return Ok(vec![p_min]);
    }
    if p_max <= p_min {
        return Err(Error::domain(format!(
            "p_max {p_max} must exceed p_min {p_min}"
        )));
    }
    let (lo, hi) = (p_min.ln(), p_max.ln());
    let mut grid: Vec<f64> = (0..n)
        .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = p_min;
    grid[n - 1] = p_max;
    Ok(grid)
}

/// 200 log-spaced points in [0.001, 0.5].
pub fn default_p_grid() -> Vec<f64> {
    log_grid(DEFAULT_P_MIN, DEFAULT_P_MAX, DEFAULT_P_POINTS).expect("valid defaults")
}

/// FAR against p_accident for one source. Points are computed in parallel
/// and returned in grid order.
pub fn far_curve(source: &CurveSource, p_grid: &[f64]) -> Result<FarCurve> {
    validate_p_grid(p_grid)?;
    let points = p_grid
        .par_iter()
        .map(|&p| source.far_at(p).map(|far| FarPoint { p_accident: p, far }))
        .collect::<Result<Vec<_>>>()?;
    Ok(FarCurve {
        label: source.label(),
        points,
        source: Some(*source),
    })
}

/// p_accident where `a.far − b.far` changes sign, refined by bisection on
/// the underlying FAR functions. `None` without a strict sign change on the
/// grid; the first change is reported when there are several.
pub fn find_crossing(a: &FarCurve, b: &FarCurve) -> Result<Option<f64>> {
    if a.points.len() != b.points.len()
        || a.points
            .iter()
            .zip(&b.points)
            .any(|(x, y)| x.p_accident != y.p_accident)
    {
        return Err(Error::Usage(
            "curves must share the same p_accident grid".to_string(),
        ));
    }
    let diff: Vec<f64> = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(x, y)| x.far - y.far)
        .collect();
    let Some(i) = diff.windows(2).position(|w| w[0] * w[1] < 0.0) else {
        return Ok(None);
    };
    let (mut lo, mut hi) = (a.points[i].p_accident, a.points[i + 1].p_accident);
    let sign_lo = diff[i].signum();
    while hi - lo > CROSSING_TOL {
        let mid = 0.5 * (lo + hi);
        let d = a.far_at(mid)? - b.far_at(mid)?;
        if d == 0.0 {
            return Ok(Some(mid));
        }
        if d.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Std,
    Mean,
}

impl SweepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKind::Std => "std",
            SweepKind::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPanel {
    /// The swept parameter (std or mean) for this panel.
    pub value: f64,
    pub profile: DriverProfile,
    pub individual: FarCurve,
    pub mismatched: FarCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub kind: SweepKind,
    /// The parameter held fixed (mean for a std sweep, std for a mean sweep).
    pub fixed: f64,
    pub population: FarCurve,
    pub panels: Vec<SweepPanel>,
}

impl Sweep {
    pub fn curves(&self) -> impl Iterator<Item = &FarCurve> {
        std::iter::once(&self.population).chain(
            self.panels
                .iter()
                .flat_map(|p| [&p.individual, &p.mismatched]),
        )
    }
}

fn sweep(
    kind: SweepKind,
    fixed: f64,
    values: &[f64],
    pop: &PopulationPrt,
    p_grid: &[f64],
) -> Result<Sweep> {
    if values.is_empty() {
        return Err(Error::domain("sweep needs at least one parameter value"));
    }
    let population = far_curve(&CurveSource::Population { population: *pop }, p_grid)?;
    let panels = values
        .iter()
        .map(|&v| {
            let profile = match kind {
                SweepKind::Std => DriverProfile::new(fixed, v)?,
                SweepKind::Mean => DriverProfile::new(v, fixed)?,
            };
            Ok(SweepPanel {
                value: v,
                profile,
                individual: far_curve(&CurveSource::Individual { profile }, p_grid)?,
                mismatched: far_curve(
                    &CurveSource::Mismatched {
                        population: *pop,
                        profile,
                    },
                    p_grid,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep {
        kind,
        fixed,
        population,
        panels,
    })
}

/// One panel per individual std at a fixed individual mean.
pub fn sweep_std(mean: f64, stds: &[f64], pop: &PopulationPrt, p_grid: &[f64]) -> Result<Sweep> {
    sweep(SweepKind::Std, mean, stds, pop, p_grid)
}

/// One panel per individual mean at a fixed individual std.
pub fn sweep_mean(std: f64, means: &[f64], pop: &PopulationPrt, p_grid: &[f64]) -> Result<Sweep> {
    sweep(SweepKind::Mean, std, means, pop, p_grid)
}

/// Writes `label,p_accident,far` rows with 17 significant digits.
pub fn write_curves_csv<'a, W, I>(curves: I, out: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a FarCurve>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "p_accident", "far"])
        .map_err(csv_err)?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.label.as_str(),
                &format!("{:.16e}", p.p_accident),
                &format!("{:.16e}", p.far),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads curves back from the CSV schema, one curve per distinct label in
/// order of first appearance.
pub fn read_curves_csv<R: Read>(input: R) -> Result<Vec<FarCurve>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["label", "p_accident", "far"] {
        return Err(Error::Usage(format!(
            "expected header label,p_accident,far, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut curves: Vec<FarCurve> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Usage(format!("malformed curve row {}", row + 1)))
        };
        let label = rec.get(0).unwrap_or_default().to_string();
        let point = FarPoint {
            p_accident: parse(1)?,
            far: parse(2)?,
        };
        match curves.iter_mut().find(|c| c.label == label) {
            Some(c) => c.points.push(point),
            None => curves.push(FarCurve {
                label,
                points: vec![point],
                source: None,
            }),
        }
    }
    Ok(curves)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Usage(format!("csv: {e}"))
}
