//! Sequential estimation of one driver's PRT distribution.
//!
//! The model is conjugate Normal–Inverse-Gamma regression:
//!
//! ```text
//! prt = μ + δ_s + ε,   ε ~ N(0, σ²)
//! (μ, δ₂, …) | σ² ~ N(β, σ² Λ⁻¹),   σ² ~ InvGamma(a, b)
//! ```
//!
//! where `δ_s` is the mean shift of scenario `s` (scenario 1 is the
//! baseline, δ₁ = 0). Scenarios share σ² and μ, so braking events in one
//! scenario also sharpen the others. The prior is moment-matched to the
//! population lognormal: before any data the predictive for scenario 1 has
//! the population mean and variance.
//!
//! Only events inside the transition zone (TTSL ≤ 4 s) are used.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::population::PopulationPrt;
use crate::stats::{integrate, PrtDistribution, QuadratureSpec, SeededRng, TruncatedNormalPrt};

/// Largest TTSL (seconds) at which a braking event counts as forced.
pub const TRANSITION_ZONE_MAX_TTSL: f64 = 4.0;

/// TTSL used when synthesizing observations for the replication harness.
pub const HARNESS_TTSL: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub prt_s: f64,
    pub ttsl_s: f64,
    pub scenario_id: u8,
}

impl Observation {
    pub fn new(prt_s: f64, ttsl_s: f64, scenario_id: u8) -> Result<Self> {
        ensure_positive("prt_s", prt_s)?;
        ensure_positive("ttsl_s", ttsl_s)?;
        if scenario_id == 0 {
            return Err(Error::domain("scenario_id starts at 1"));
        }
        Ok(Observation {
            prt_s,
            ttsl_s,
            scenario_id,
        })
    }
}

pub fn in_transition_zone(obs: &Observation) -> bool {
    obs.ttsl_s <= TRANSITION_ZONE_MAX_TTSL
}

/// How the population variance is split between drivers and within a driver
/// when building the prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PriorSplit {
    /// Prior expected within-driver std in seconds; κ follows from it.
    WithinStd(f64),
    /// Location pseudo-count κ; the expected within-driver variance follows.
    Weight(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub split: PriorSplit,
    /// Inverse-gamma shape `a` of the σ² prior; must exceed 1.
    pub shape: f64,
    /// Prior std (seconds) of each non-baseline scenario offset.
    pub offset_std: f64,
    pub n_scenarios: usize,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            split: PriorSplit::WithinStd(0.2),
            shape: 3.0,
            offset_std: 0.3,
            n_scenarios: 2,
        }
    }
}

impl PriorConfig {
    pub fn with_weight(prior_weight: f64) -> Self {
        PriorConfig {
            split: PriorSplit::Weight(prior_weight),
            ..Default::default()
        }
    }
}

/// Posterior hyperparameters. A value type: [`EstimatorState::update`]
/// returns a new state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRepr", into = "StateRepr")]
pub struct EstimatorState {
    /// Posterior mean of (μ, δ₂, …, δ_K).
    coef: Vec<f64>,
    /// K×K row-major precision of the coefficients in units of 1/σ².
    precision: Vec<f64>,
    a: f64,
    b: f64,
    n_seen: u64,
}

#[derive(Serialize, Deserialize)]
struct StateRepr {
    m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    a: f64,
    b: f64,
    /// Offset per scenario; the first (baseline) entry is always 0.
    scenario_offsets: Vec<f64>,
    precision: Vec<Vec<f64>>,
    n_seen: u64,
}

impl From<EstimatorState> for StateRepr {
    fn from(s: EstimatorState) -> Self {
        let k = s.coef.len();
        let mut offsets = vec![0.0];
        offsets.extend_from_slice(&s.coef[1..]);
        StateRepr {
            m: s.coef[0],
            kappa: Some(s.kappa()),
            a: s.a,
            b: s.b,
            scenario_offsets: offsets,
            precision: s.precision.chunks(k).map(|r| r.to_vec()).collect(),
            n_seen: s.n_seen,
        }
    }
}

impl TryFrom<StateRepr> for EstimatorState {
    type Error = Error;
    fn try_from(r: StateRepr) -> Result<Self> {
        let k = r.scenario_offsets.len();
        if k == 0 || r.precision.len() != k || r.precision.iter().any(|row| row.len() != k) {
            return Err(Error::domain(
                "precision must be a square matrix matching scenario_offsets",
            ));
        }
        if r.scenario_offsets[0] != 0.0 {
            return Err(Error::domain("baseline scenario offset must be 0"));
        }
        let mut coef = vec![r.m];
        coef.extend_from_slice(&r.scenario_offsets[1..]);
        let state = EstimatorState {
            coef,
            precision: r.precision.concat(),
            a: r.a,
            b: r.b,
            n_seen: r.n_seen,
        };
        state.validate()?;
        Ok(state)
    }
}

/// Point summary of a predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: f64,
    pub std: f64,
    pub p10: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predictive {
    pub scenario_id: u8,
    /// Zero-truncated normal carrying the posterior predictive's moments.
    pub distribution: TruncatedNormalPrt,
    pub summary: PredictiveSummary,
    /// Moments of the untruncated Student-t predictive.
    pub t_location: f64,
    pub t_std: f64,
    pub t_dof: f64,
    /// False when the moments were out of reach of a zero-truncated normal
    /// (std ≥ mean) and the t location/scale were used directly.
    pub moment_matched: bool,
}

impl EstimatorState {
    fn k(&self) -> usize {
        self.coef.len()
    }

    fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.precision.len() != k * k {
            return Err(Error::domain("precision has the wrong size"));
        }
        if self
            .coef
            .iter()
            .chain(&self.precision)
            .any(|v| !v.is_finite())
        {
            return Err(Error::domain("state contains non-finite values"));
        }
        if self.a.is_nan() || self.a <= 1.0 {
            return Err(Error::domain(format!(
                "shape a must exceed 1, got {}",
                self.a
            )));
        }
        ensure_positive("b", self.b)?;
        if self.precision_matrix().cholesky().is_none() {
            return Err(Error::domain(
                "precision must be symmetric positive definite",
            ));
        }
        Ok(())
    }

    fn precision_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_row_slice(k, k, &self.precision)
    }

    fn covariance_unit(&self) -> DMatrix<f64> {
        self.precision_matrix()
            .cholesky()
            .expect("validated positive definite")
            .inverse()
    }

    fn design(&self, scenario_id: u8) -> Result<DVector<f64>> {
        let k = self.k();
        let s = scenario_id as usize;
        if s == 0 || s > k {
            return Err(Error::domain(format!(
                "scenario_id {scenario_id} outside 1..={k}"
            )));
        }
        let mut x = DVector::zeros(k);
        x[0] = 1.0;
        if s > 1 {
            x[s - 1] = 1.0;
        }
        Ok(x)
    }

    /// Posterior mean of the baseline location μ.
    pub fn m(&self) -> f64 {
        self.coef[0]
    }

    /// Effective pseudo-count on μ: 1 / Var(μ | σ²)·σ².
    pub fn kappa(&self) -> f64 {
        1.0 / self.covariance_unit()[(0, 0)]
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn n_scenarios(&self) -> usize {
        self.k()
    }

    /// Posterior mean offset of each scenario, baseline first (always 0).
    pub fn scenario_offsets(&self) -> Vec<f64> {
        let mut v = vec![0.0];
        v.extend_from_slice(&self.coef[1..]);
        v
    }

    /// Expected within-driver variance E[σ²] = b / (a − 1).
    pub fn expected_variance(&self) -> f64 {
        self.b / (self.a - 1.0)
    }

    /// Conjugate update with one transition-zone observation.
    pub fn update(&self, obs: &Observation) -> Result<EstimatorState> {
        if !in_transition_zone(obs) {
            return Err(Error::FilteredObservation { ttsl_s: obs.ttsl_s });
        }
        ensure_positive("prt_s", obs.prt_s)?;
        let x = self.design(obs.scenario_id)?;
        let prec = self.precision_matrix();
        let cov = self.covariance_unit();
        let coef = DVector::from_column_slice(&self.coef);

        let resid = obs.prt_s - x.dot(&coef);
        let leverage = (x.transpose() * &cov * &x)[(0, 0)];
        let gain = &cov * &x / (1.0 + leverage);
        let new_coef = &coef + &gain * resid;
        let new_prec = prec + &x * x.transpose();

        Ok(EstimatorState {
            coef: new_coef.iter().copied().collect(),
            precision: row_major(&new_prec),
            a: self.a + 0.5,
            b: self.b + 0.5 * resid * resid / (1.0 + leverage),
            n_seen: self.n_seen + 1,
        })
    }

    /// Applies every observation in order, skipping those outside the
    /// transition zone. Returns the new state and the number skipped.
    pub fn update_all<'a, I>(&self, obs: I) -> Result<(EstimatorState, usize)>
    where
        I: IntoIterator<Item = &'a Observation>,
    {
        let mut state = self.clone();
        let mut skipped = 0;
        for o in obs {
            if in_transition_zone(o) {
                state = state.update(o)?;
            } else {
                skipped += 1;
            }
        }
        Ok((state, skipped))
    }

    /// Posterior predictive for the next PRT in `scenario_id`.
    pub fn predictive(&self, scenario_id: u8) -> Result<Predictive> {
        let x = self.design(scenario_id)?;
        let cov = self.covariance_unit();
        let coef = DVector::from_column_slice(&self.coef);
        let loc = x.dot(&coef);
        let leverage = (x.transpose() * &cov * &x)[(0, 0)];
        let var = self.b / (self.a - 1.0) * (1.0 + leverage);
        let std = var.sqrt();

        let (distribution, moment_matched) = match TruncatedNormalPrt::from_moments(loc, std) {
            Ok(d) => (d, true),
            Err(_) => (TruncatedNormalPrt::new(loc, std)?, false),
        };
        let summary = PredictiveSummary {
            mean: distribution.mean(),
            std: distribution.variance().sqrt(),
            p10: distribution.quantile(0.1)?,
            p90: distribution.quantile(0.9)?,
        };
        Ok(Predictive {
            scenario_id,
            distribution,
            summary,
            t_location: loc,
            t_std: std,
            t_dof: 2.0 * self.a,
            moment_matched,
        })
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Column order of observation logs.
pub const OBSERVATION_HEADER: [&str; 3] = ["prt_s", "ttsl_s", "scenario_id"];

/// Reads an observation log. Errors name the offending line (the header is
/// line 1).
pub fn read_observations_csv<R: Read>(input: R) -> Result<Vec<Observation>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = r
        .headers()
        .map_err(|e| Error::domain(format!("observation log header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != OBSERVATION_HEADER {
        return Err(Error::domain(format!(
            "observation log header must be {}, got {}",
            OBSERVATION_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let bad = |why: String| Error::domain(format!("observation log line {line}: {why}"));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j].parse::<f64>().map_err(|_| {
                bad(format!(
                    "{} '{}' is not a number",
                    OBSERVATION_HEADER[j], &rec[j]
                ))
            })
        };
        let (prt, ttsl) = (num(0)?, num(1)?);
        let sid = rec[2]
            .parse::<u8>()
            .map_err(|_| bad(format!("scenario_id '{}' is not a small integer", &rec[2])))?;
        out.push(Observation::new(prt, ttsl, sid).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_observations_csv<W: Write>(obs: &[Observation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::domain(format!("writing observation log: {e}"));
    w.write_record(OBSERVATION_HEADER).map_err(err)?;
    for o in obs {
        w.write_record([
            format!("{}", o.prt_s),
            format!("{}", o.ttsl_s),
            o.scenario_id.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Prior state whose scenario-1 predictive has the population mean and variance.
pub fn init_from_population(pop: &PopulationPrt, prior: &PriorConfig) -> Result<EstimatorState> {
    if !(prior.shape > 1.0 && prior.shape.is_finite()) {
        return Err(Error::domain(format!(
            "prior shape must exceed 1, got {}",
            prior.shape
        )));
    }
    ensure_positive("offset_std", prior.offset_std)?;
    if prior.n_scenarios == 0 || prior.n_scenarios > u8::MAX as usize {
        return Err(Error::domain("n_scenarios must lie in 1..=255"));
    }
    let pop_var = pop.variance();
    let (kappa, within_var) = match prior.split {
        PriorSplit::WithinStd(s) => {
            ensure_positive("within_std", s)?;
            let w = s * s;
            if w >= pop_var {
                return Err(Error::domain(format!(
                    "within-driver std {s} must be below the population std {:.4}",
                    pop_var.sqrt()
                )));
            }
            (w / (pop_var - w), w)
        }
        PriorSplit::Weight(kappa) => {
            ensure_positive("prior_weight", kappa)?;
            (kappa, pop_var * kappa / (1.0 + kappa))
        }
    };
    let k = prior.n_scenarios;
    let mut precision = vec![0.0; k * k];
    precision[0] = kappa;
    let offset_prec = within_var / (prior.offset_std * prior.offset_std);
    for i in 1..k {
        precision[i * k + i] = offset_prec;
    }
    let mut coef = vec![0.0; k];
    coef[0] = pop.mean();
    let state = EstimatorState {
        coef,
        precision,
        a: prior.shape,
        b: within_var * (prior.shape - 1.0),
        n_seen: 0,
    };
    state.validate()?;
    Ok(state)
}

/// ∫ |f − g| over [0, upper], where `upper` covers both laws.
pub fn l1_density_distance(f: &PrtDistribution, g: &PrtDistribution) -> Result<f64> {
    let upper = f.upper_cutoff().max(g.upper_cutoff());
    integrate(
        |x| (f.pdf(x) - g.pdf(x)).abs(),
        0.0,
        upper,
        &QuadratureSpec::default().with_tolerance(1e-7),
    )
}

/// Outcome of one simulated driver history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub summary: PredictiveSummary,
    pub l1_error: f64,
}

/// Draws `n` transition-zone observations from `truth` in scenario 1 for
/// each of `replications` drivers and reports the predictive after updating.
/// Replication `r` uses child stream `r` of `seed`.
pub fn run_replications(
    prior: &EstimatorState,
    truth: &TruncatedNormalPrt,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<Vec<ReplicationOutcome>> {
    let root = SeededRng::new(seed);
    let truth_dist: PrtDistribution = (*truth).into();
    (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.child(r as u64);
            let mut state = prior.clone();
            for _ in 0..n {
                let prt = truth_dist.draw(&mut rng);
                state = state.update(&Observation::new(prt, HARNESS_TTSL, 1)?)?;
            }
            let pred = state.predictive(1)?;
            let l1 = l1_density_distance(&pred.distribution.into(), &truth_dist)?;
            Ok(ReplicationOutcome {
                summary: pred.summary,
                l1_error: l1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioError {
    pub scenario_id: u8,
    /// Mean |predictive mean − truth mean|.
    pub mean_abs_error: f64,
    /// Mean L1 distance between predictive and truth densities.
    pub mean_l1_error: f64,
    /// Mean p90 − p10 of the predictive.
    pub mean_interval_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub counts: Vec<usize>,
    pub replications: usize,
    pub scenarios: Vec<ScenarioError>,
}

/// Replication harness over two (or more) scenarios: `counts[s]`
/// observations are drawn from `truths[s]`, then every scenario's predictive
/// is scored against its own truth.
pub fn allocate_scenarios(
    prior: &EstimatorState,
    truths: &[TruncatedNormalPrt],
    counts: &[usize],
    replications: usize,
    seed: u64,
) -> Result<AllocationReport> {
    if truths.len() != counts.len() || truths.len() != prior.n_scenarios() {
        return Err(Error::Usage(format!(
            "need one truth and one count per scenario ({})",
            prior.n_scenarios()
        )));
    }
    if replications == 0 {
        return Err(Error::domain("replications must be at least 1"));
    }
    let root = SeededRng::new(seed);
    let per_rep: Vec<Vec<(f64, f64, f64)>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.child(r as u64);
            let mut state = prior.clone();
            for (s, (truth, &count)) in truths.iter().zip(counts).enumerate() {
                let d: PrtDistribution = (*truth).into();
                for _ in 0..count {
                    let obs = Observation::new(d.draw(&mut rng), HARNESS_TTSL, s as u8 + 1)?;
                    state = state.update(&obs)?;
                }
            }
            truths
                .iter()
                .enumerate()
                .map(|(s, truth)| {
                    let pred = state.predictive(s as u8 + 1)?;
                    let l1 = l1_density_distance(&pred.distribution.into(), &(*truth).into())?;
                    Ok((
                        (pred.summary.mean - truth.mean()).abs(),
                        l1,
                        pred.summary.p90 - pred.summary.p10,
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let nrep = replications as f64;
    let scenarios = (0..truths.len())
        .map(|s| {
            let (mut e, mut l, mut w) = (0.0, 0.0, 0.0);
            for rep in &per_rep {
                e += rep[s].0;
                l += rep[s].1;
                w += rep[s].2;
            }
            ScenarioError {
                scenario_id: s as u8 + 1,
                mean_abs_error: e / nrep,
                mean_l1_error: l / nrep,
                mean_interval_width: w / nrep,
            }
        })
        .collect();
    Ok(AllocationReport {
        counts: counts.to_vec(),
        replications,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior() -> EstimatorState {
        init_from_population(&PopulationPrt::default(), &PriorConfig::default()).unwrap()
    }

    fn obs(prt: f64) -> Observation {
        Observation::new(prt, 1.5, 1).unwrap()
    }

    #[test]
    fn transition_zone_rule() {
        assert!(in_transition_zone(&Observation::new(1.0, 1.5, 1).unwrap()));
        assert!(in_transition_zone(&Observation::new(1.0, 4.0, 1).unwrap()));
        assert!(!in_transition_zone(&Observation::new(1.0, 7.5, 1).unwrap()));
    }

    #[test]
    fn out_of_zone_update_is_rejected() {
        let s = prior();
        let err = s
            .update(&Observation::new(1.0, 8.0, 1).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::FilteredObservation { ttsl_s } if ttsl_s == 8.0));
    }

    #[test]
    fn bad_observations_rejected() {
        assert!(Observation::new(0.0, 1.5, 1).is_err());
        assert!(Observation::new(1.0, -1.0, 1).is_err());
        assert!(Observation::new(1.0, 1.0, 0).is_err());
        assert!(prior()
            .update(&Observation::new(1.0, 1.0, 3).unwrap())
            .is_err());
    }

    #[test]
    fn prior_weight_sets_kappa() {
        let s = init_from_population(&PopulationPrt::default(), &PriorConfig::with_weight(2.0))
            .unwrap();
        assert!((s.kappa() - 2.0).abs() < 1e-12);
        assert!(
            init_from_population(&PopulationPrt::default(), &PriorConfig::with_weight(0.0))
                .is_err()
        );
        assert!(
            init_from_population(&PopulationPrt::default(), &PriorConfig::with_weight(-1.0))
                .is_err()
        );
    }

    #[test]
    fn prior_predictive_matches_population_moments() {
        let pop = PopulationPrt::default();
        for cfg in [PriorConfig::default(), PriorConfig::with_weight(2.0)] {
            let p = init_from_population(&pop, &cfg)
                .unwrap()
                .predictive(1)
                .unwrap();
            assert!((p.summary.mean - pop.mean()).abs() < 0.01 * pop.mean());
            assert!((p.summary.std.powi(2) - pop.variance()).abs() < 0.01 * pop.variance());
            assert!(p.moment_matched);
            assert!(p.summary.p10 < p.summary.mean && p.summary.mean < p.summary.p90);
        }
    }

    #[test]
    fn within_std_too_large_rejected() {
        let cfg = PriorConfig {
            split: PriorSplit::WithinStd(0.7),
            ..Default::default()
        };
        assert!(init_from_population(&PopulationPrt::default(), &cfg).is_err());
    }

    #[test]
    fn update_is_pure_and_counts() {
        let s0 = prior();
        let s1 = s0.update(&obs(1.1)).unwrap();
        assert_eq!(s0.n_seen(), 0);
        assert_eq!(s1.n_seen(), 1);
        assert_eq!(s1.a(), s0.a() + 0.5);
        assert!(s1.b() > s0.b());
    }

    #[test]
    fn single_scenario_matches_textbook_nig() {
        // With one scenario the update is the scalar NIG recursion.
        let cfg = PriorConfig {
            n_scenarios: 1,
            ..Default::default()
        };
        let s0 = init_from_population(&PopulationPrt::default(), &cfg).unwrap();
        let ys = [1.05, 1.31, 0.97, 1.44, 1.2];
        let (k0, m0, a0, b0) = (s0.kappa(), s0.m(), s0.a(), s0.b());
        let n = ys.len() as f64;
        let ybar = ys.iter().sum::<f64>() / n;
        let ss: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
        let kn = k0 + n;
        let mn = (k0 * m0 + n * ybar) / kn;
        let an = a0 + n / 2.0;
        let bn = b0 + 0.5 * ss + 0.5 * k0 * n / kn * (ybar - m0).powi(2);
        let mut s = s0;
        for y in ys {
            s = s.update(&obs(y)).unwrap();
        }
        assert!((s.kappa() - kn).abs() < 1e-10);
        assert!((s.m() - mn).abs() < 1e-12);
        assert!((s.a() - an).abs() < 1e-12);
        assert!((s.b() - bn).abs() < 1e-12);
    }

    #[test]
    fn state_json_round_trip() {
        let mut s = prior();
        for (i, y) in [1.0, 1.3, 1.2].iter().enumerate() {
            s = s
                .update(&Observation::new(*y, 2.0, (i % 2) as u8 + 1).unwrap())
                .unwrap();
        }
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kappa\""));
        assert!(text.contains("\"scenario_offsets\""));
        let back: EstimatorState = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn corrupt_state_rejected() {
        let bad =
            r#"{"m":1.3,"a":0.5,"b":0.1,"scenario_offsets":[0.0],"precision":[[1.0]],"n_seen":0}"#;
        assert!(serde_json::from_str::<EstimatorState>(bad).is_err());
        let bad = r#"{"m":1.3,"a":3,"b":0.1,"scenario_offsets":[0.0,0.0],"precision":[[1.0]],"n_seen":0}"#;
        assert!(serde_json::from_str::<EstimatorState>(bad).is_err());
    }

    #[test]
    fn observation_csv_round_trip_and_errors() {
        let obs = vec![
            Observation::new(1.25, 1.5, 1).unwrap(),
            Observation::new(0.9, 7.5, 2).unwrap(),
        ];
        let mut buf = Vec::new();
        write_observations_csv(&obs, &mut buf).unwrap();
        assert_eq!(read_observations_csv(buf.as_slice()).unwrap(), obs);

        let text = "prt_s,ttsl_s,scenario_id\n1.0,1.5,1\n1.1,abc,1\n";
        let err = read_observations_csv(text.as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
        let text = "prt_s,ttsl_s,scenario_id\n-1.0,1.5,1\n";
        let err = read_observations_csv(text.as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(read_observations_csv("a,b,c\n".as_bytes()).is_err());
        assert!(
            read_observations_csv("prt_s,ttsl_s,scenario_id\n".as_bytes())
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn predictive_std_converges_to_within_driver_std() {
        let truth: PrtDistribution = TruncatedNormalPrt::new(1.2, 0.2).unwrap().into();
        let mut rng = SeededRng::new(11);
        let mut s = prior();
        for _ in 0..10_000 {
            s = s.update(&obs(truth.draw(&mut rng))).unwrap();
        }
        let p = s.predictive(1).unwrap();
        assert!(
            (p.summary.std - 0.2).abs() < 0.01 * 0.2,
            "{}",
            p.summary.std
        );
        assert!((p.summary.mean - 1.2).abs() < 0.012);
    }

    #[test]
    fn no_data_leaves_prior_predictives() {
        let s = prior();
        let truths = [
            TruncatedNormalPrt::new(1.2, 0.2).unwrap(),
            TruncatedNormalPrt::new(1.5, 0.2).unwrap(),
        ];
        let rep = allocate_scenarios(&s, &truths, &[0, 0], 3, 1).unwrap();
        for (sid, e) in rep.scenarios.iter().enumerate() {
            let p = s.predictive(sid as u8 + 1).unwrap();
            assert!((e.mean_interval_width - (p.summary.p90 - p.summary.p10)).abs() < 1e-12);
        }
    }
}
