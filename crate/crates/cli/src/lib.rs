//! `brtwarn` command-line tool: threshold calibration, false-alarm curves and
//! sweeps, individual PRT estimation, Monte Carlo checks and mixture fits.
//!
//! Exit codes: 0 success, 1 domain or computation error, 2 usage error.

pub mod config;
mod svg;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use brtwarn_core::calibration::{
    calibrate_individual, calibrate_population, false_alarm_rate, far_curve, find_crossing,
    log_grid, sweep_mean, sweep_std, write_curves_csv, CurveSource, DriverProfile, FarCurve,
    PolicySource, Sweep, SweepKind, WarningPolicy, DEFAULT_P_MAX, DEFAULT_P_MIN, DEFAULT_P_POINTS,
    SWEEP_MEAN_FIXED_STD, SWEEP_STD_FIXED_MEAN,
};
use brtwarn_core::estimator::{
    init_from_population, read_observations_csv, EstimatorState, PriorConfig, PriorSplit,
};
use brtwarn_core::population::{fit_mean_distribution, FitOptions, MeanFamily, PopulationPrt};
use brtwarn_core::sim::{
    run_abstract_traced, run_kinematic_traced, EventModel, Range, ScenarioSampler, SimReport,
    DEFAULT_EVENTS, DEFAULT_HORIZON,
};
use brtwarn_core::stats::{PrtDistribution, QuadratureSpec};
use brtwarn_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::svg::{Plot, Series};

/// Environment variable capping the worker thread count; 0 means automatic.
pub const THREADS_ENV: &str = "BRTWARN_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "brtwarn",
    version,
    about = "Brake-response-time warning calibration"
)]
pub struct Cli {
    /// JSON file whose keys mirror the long flags; flags take precedence.
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Warning threshold for a target accident probability.
    Calibrate(CalibrateArgs),
    /// False-alarm rate against accident probability for one law.
    Curve(CurveArgs),
    /// Individual vs population curves over a range of stds or means.
    Sweep(SweepArgs),
    /// Update a driver's PRT estimate from an observation log.
    Estimate(EstimateArgs),
    /// Monte Carlo false-alarm simulation.
    Simulate(SimulateArgs),
    /// Fit the distribution of individual means to the population law.
    MarginalFit(MarginalFitArgs),
}

#[derive(Args, Debug, Default)]
struct PopulationArgs {
    /// Log-mean of the population lognormal.
    #[arg(long)]
    mu_log: Option<f64>,
    /// Log-std of the population lognormal.
    #[arg(long)]
    sigma_log: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct LawArgs {
    /// Use the population lognormal.
    #[arg(long)]
    population: bool,
    /// Individual mean PRT in seconds.
    #[arg(long)]
    mean: Option<f64>,
    /// Individual PRT standard deviation in seconds.
    #[arg(long)]
    std: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct GridArgs {
    #[arg(long)]
    p_min: Option<f64>,
    #[arg(long)]
    p_max: Option<f64>,
    /// Number of log-spaced grid points.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    law: LawArgs,
    #[command(flatten)]
    pop: PopulationArgs,
    #[arg(long)]
    p_accident: Option<f64>,
    /// Also write the JSON to this file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[command(flatten)]
    law: LawArgs,
    #[command(flatten)]
    pop: PopulationArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Calibrate on the population, evaluate on the individual law.
    #[arg(long)]
    mismatched: bool,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also plot the curve to this SVG file.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// `std` or `mean`.
    #[arg(long)]
    kind: Option<String>,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// The parameter held fixed (default mean 1.31 or std 0.2).
    #[arg(long)]
    fixed: Option<f64>,
    /// Accident probability at which the summary compares curves.
    #[arg(long)]
    p_ref: Option<f64>,
    #[command(flatten)]
    pop: PopulationArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one SVG per panel.
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Observation log with columns prt_s,ttsl_s,scenario_id.
    #[arg(long)]
    obs: Option<PathBuf>,
    /// Resume from a saved state instead of the population prior.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Write the final state JSON here.
    #[arg(long)]
    state_out: Option<PathBuf>,
    #[command(flatten)]
    pop: PopulationArgs,
    /// Prior expected within-driver std (default 0.2).
    #[arg(long, conflicts_with = "prior_weight")]
    prior_within_std: Option<f64>,
    /// Prior pseudo-count on the mean instead of a within-driver std.
    #[arg(long)]
    prior_weight: Option<f64>,
    #[arg(long)]
    prior_shape: Option<f64>,
    /// Prior std of each scenario's offset from scenario 1.
    #[arg(long)]
    offset_std: Option<f64>,
    /// Number of scenarios in the model.
    #[arg(long)]
    scenarios: Option<usize>,
    /// Also write the summary JSON to this file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    law: LawArgs,
    #[command(flatten)]
    pop: PopulationArgs,
    /// Accident probability used to calibrate the threshold.
    #[arg(long)]
    p_accident: Option<f64>,
    /// Explicit threshold in seconds instead of calibrating.
    #[arg(long, conflicts_with = "p_accident")]
    threshold: Option<f64>,
    /// Law used for calibration: `population` or `individual`.
    #[arg(long)]
    policy: Option<String>,
    /// Available times are drawn on (0, horizon).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Compare against the quadrature; exit 1 beyond 3 standard errors.
    #[arg(long)]
    check: bool,
    /// Per-event CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Draw available times from car-following scenarios.
    #[arg(long)]
    kinematic: bool,
    /// Speed in m/s: one value or `low,high`.
    #[arg(long, value_delimiter = ',')]
    speed: Vec<f64>,
    /// Gap in m: one value or `low,high`.
    #[arg(long, value_delimiter = ',')]
    gap: Vec<f64>,
    /// Lead deceleration in m/s²: one value or `low,high`.
    #[arg(long, value_delimiter = ',')]
    lead_decel: Vec<f64>,
    /// Extra follower deceleration over the lead's: one value or `low,high`.
    #[arg(long, value_delimiter = ',')]
    extra_decel: Vec<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MarginalFitArgs {
    /// Within-driver std σ.
    #[arg(long)]
    individual_std: Option<f64>,
    /// `lognormal`, `shifted-lognormal` or `gamma`.
    #[arg(long)]
    family: Option<String>,
    #[command(flatten)]
    pop: PopulationArgs,
    /// Largest acceptable L2 distance.
    #[arg(long)]
    rejection_threshold: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => 2,
        _ => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| {
        Error::Usage(format!(
            "{THREADS_ENV} must be a non-negative integer, got '{v}'"
        ))
    })?;
    if n == 0 {
        return Ok(());
    }
    // A pool may already exist when running in-process more than once.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Calibrate(a) => cmd_calibrate(a, &cfg),
        Command::Curve(a) => cmd_curve(a, &cfg),
        Command::Sweep(a) => cmd_sweep(a, &cfg),
        Command::Estimate(a) => cmd_estimate(a, &cfg),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::MarginalFit(a) => cmd_marginal_fit(a, &cfg),
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn population(a: &PopulationArgs, cfg: &RunConfig) -> Result<PopulationPrt> {
    let d = PopulationPrt::default();
    PopulationPrt::new(
        a.mu_log.or(cfg.mu_log).unwrap_or(d.law().mu_log()),
        a.sigma_log.or(cfg.sigma_log).unwrap_or(d.law().sigma_log()),
    )
}

enum Law {
    Population(PopulationPrt),
    Individual(DriverProfile),
}

impl Law {
    fn distribution(&self) -> Result<PrtDistribution> {
        match self {
            Law::Population(p) => Ok(p.distribution()),
            Law::Individual(d) => d.distribution(),
        }
    }
}

fn law(a: &LawArgs, pop: PopulationPrt, cfg: &RunConfig) -> Result<Law> {
    let use_pop = a.population || cfg.population == Some(true);
    let mean = a.mean.or(cfg.mean);
    let std = a.std.or(cfg.std);
    match (use_pop, mean, std) {
        (true, None, None) => Ok(Law::Population(pop)),
        (true, _, _) => Err(usage("--population cannot be combined with --mean/--std")),
        (false, Some(m), Some(s)) => Ok(Law::Individual(DriverProfile::new(m, s)?)),
        _ => Err(usage("give either --population or both --mean and --std")),
    }
}

fn p_grid(a: &GridArgs, cfg: &RunConfig) -> Result<Vec<f64>> {
    log_grid(
        a.p_min.or(cfg.p_min).unwrap_or(DEFAULT_P_MIN),
        a.p_max.or(cfg.p_max).unwrap_or(DEFAULT_P_MAX),
        a.points.or(cfg.points).unwrap_or(DEFAULT_P_POINTS),
    )
}

fn quadrature(abs: Option<f64>, rel: Option<f64>, cfg: &RunConfig) -> Result<QuadratureSpec> {
    let d = QuadratureSpec::default();
    let spec = QuadratureSpec {
        abs_tol: abs.or(cfg.abs_tol).unwrap_or(d.abs_tol),
        rel_tol: rel.or(cfg.rel_tol).unwrap_or(d.rel_tol),
        ..d
    };
    spec.validate()?;
    Ok(spec)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Prints pretty JSON to stdout and, when given, to `output`.
fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(p) = output {
        write_text(p, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn cmd_calibrate(a: CalibrateArgs, cfg: &RunConfig) -> Result<i32> {
    let pop = population(&a.pop, cfg)?;
    let law = law(&a.law, pop, cfg)?;
    let p = a
        .p_accident
        .or(cfg.p_accident)
        .ok_or_else(|| usage("--p-accident is required"))?;
    let policy = match &law {
        Law::Population(pop) => calibrate_population(pop, p)?,
        Law::Individual(profile) => calibrate_individual(profile, p)?,
    };
    let dist = law.distribution()?;
    let far = false_alarm_rate(&dist, &policy)?;
    let out = json!({
        "threshold_s": policy.threshold_s,
        "threshold_minus_mean_s": policy.threshold_s - dist.mean(),
        "false_alarm_rate": far,
        "policy": policy,
        "distribution": dist,
    });
    emit(&out, a.output.as_deref().or(cfg.output.as_deref()))?;
    Ok(0)
}

fn curve_plot<'a>(title: &'a str, curves: &'a [&'a FarCurve]) -> Plot<'a> {
    Plot {
        title,
        x_label: "probability of accident",
        y_label: "false alarm rate",
        series: curves
            .iter()
            .map(|c| Series {
                label: c.label.as_str(),
                points: c.points.iter().map(|p| (p.p_accident, p.far)).collect(),
                dashed: c.label.starts_with("mismatched"),
            })
            .collect(),
    }
}

fn cmd_curve(a: CurveArgs, cfg: &RunConfig) -> Result<i32> {
    let pop = population(&a.pop, cfg)?;
    let grid = p_grid(&a.grid, cfg)?;
    let mismatched = a.mismatched || cfg.mismatched == Some(true);
    let source = match (law(&a.law, pop, cfg)?, mismatched) {
        (Law::Population(population), false) => CurveSource::Population { population },
        (Law::Population(_), true) => {
            return Err(usage(
                "--mismatched needs an individual law (--mean and --std)",
            ))
        }
        (Law::Individual(profile), false) => CurveSource::Individual { profile },
        (Law::Individual(profile), true) => CurveSource::Mismatched {
            population: pop,
            profile,
        },
    };
    let curve = far_curve(&source, &grid)?;
    match a.output.as_deref().or(cfg.output.as_deref()) {
        Some(p) => write_curves_csv([&curve], create(p)?)?,
        None => write_curves_csv([&curve], std::io::stdout().lock())?,
    }
    if let Some(p) = a.svg.as_deref().or(cfg.svg.as_deref()) {
        let curves = [&curve];
        write_text(p, &curve_plot(&curve.label, &curves).render())?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct Crossings {
    mismatched_vs_population: Option<f64>,
    mismatched_vs_individual: Option<f64>,
    individual_vs_population: Option<f64>,
}

#[derive(Serialize)]
struct PanelSummary {
    value: f64,
    mean: f64,
    std: f64,
    individual_far: f64,
    mismatched_far: f64,
    /// Population FAR minus individual FAR at `p_ref`.
    gap: f64,
    nonincreasing: bool,
    crossings: Crossings,
    csv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    svg: Option<String>,
}

#[derive(Serialize)]
struct SweepSummary {
    kind: SweepKind,
    fixed: f64,
    p_ref: f64,
    population_far: f64,
    population_csv: String,
    panels: Vec<PanelSummary>,
}

fn value_tag(v: f64) -> String {
    format!("{v}")
}

fn cmd_sweep(a: SweepArgs, cfg: &RunConfig) -> Result<i32> {
    let kind = match a.kind.as_deref().or(cfg.kind.as_deref()) {
        Some("std") => SweepKind::Std,
        Some("mean") => SweepKind::Mean,
        Some(other) => return Err(usage(format!("--kind must be std or mean, got '{other}'"))),
        None => return Err(usage("--kind is required")),
    };
    let values = if a.values.is_empty() {
        cfg.values.clone().unwrap_or_default()
    } else {
        a.values.clone()
    };
    if values.is_empty() {
        return Err(usage("--values is required"));
    }
    let out = a
        .out
        .clone()
        .or(cfg.out.clone())
        .ok_or_else(|| usage("--out is required"))?;
    let pop = population(&a.pop, cfg)?;
    let grid = p_grid(&a.grid, cfg)?;
    let p_ref = a.p_ref.or(cfg.p_ref).unwrap_or(0.01);
    let svg = a.svg || cfg.plot == Some(true);

    let sweep: Sweep = match kind {
        SweepKind::Std => {
            let mean = a.fixed.or(cfg.fixed).unwrap_or(SWEEP_STD_FIXED_MEAN);
            sweep_std(mean, &values, &pop, &grid)?
        }
        SweepKind::Mean => {
            let std = a.fixed.or(cfg.fixed).unwrap_or(SWEEP_MEAN_FIXED_STD);
            sweep_mean(std, &values, &pop, &grid)?
        }
    };
    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;

    let k = kind.as_str();
    let pop_source = CurveSource::Population { population: pop };
    let population_far = pop_source.far_at(p_ref)?;
    let population_csv = format!("sweep_{k}_population.csv");
    write_curves_csv([&sweep.population], create(&out.join(&population_csv))?)?;

    let mut panels = Vec::new();
    for panel in &sweep.panels {
        let tag = value_tag(panel.value);
        let csv = format!("sweep_{k}_{tag}.csv");
        write_curves_csv(
            [&panel.individual, &panel.mismatched],
            create(&out.join(&csv))?,
        )?;
        let svg_name = if svg {
            let name = format!("sweep_{k}_{tag}.svg");
            let title = format!("{k} = {tag}");
            let curves = [&sweep.population, &panel.individual, &panel.mismatched];
            write_text(&out.join(&name), &curve_plot(&title, &curves).render())?;
            Some(name)
        } else {
            None
        };
        let ind = CurveSource::Individual {
            profile: panel.profile,
        };
        let individual_far = ind.far_at(p_ref)?;
        panels.push(PanelSummary {
            value: panel.value,
            mean: panel.profile.mean,
            std: panel.profile.std,
            individual_far,
            mismatched_far: panel
                .mismatched
                .source
                .as_ref()
                .expect("computed curve")
                .far_at(p_ref)?,
            gap: population_far - individual_far,
            nonincreasing: panel.individual.is_nonincreasing()
                && panel.mismatched.is_nonincreasing(),
            crossings: Crossings {
                mismatched_vs_population: find_crossing(&panel.mismatched, &sweep.population)?,
                mismatched_vs_individual: find_crossing(&panel.mismatched, &panel.individual)?,
                individual_vs_population: find_crossing(&panel.individual, &sweep.population)?,
            },
            csv,
            svg: svg_name,
        });
    }
    let summary = SweepSummary {
        kind,
        fixed: sweep.fixed,
        p_ref,
        population_far,
        population_csv,
        panels,
    };
    emit(&summary, Some(&out.join(format!("sweep_{k}_summary.json"))))?;
    Ok(0)
}

#[derive(Serialize)]
struct ScenarioPrediction {
    scenario_id: u8,
    summary: brtwarn_core::estimator::PredictiveSummary,
    distribution: brtwarn_core::stats::TruncatedNormalPrt,
    moment_matched: bool,
}

fn cmd_estimate(a: EstimateArgs, cfg: &RunConfig) -> Result<i32> {
    let state_path = a.state.clone().or(cfg.state.clone());
    let state: EstimatorState = match &state_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Domain(format!("state {}: {e}", p.display())))?
        }
        None => {
            let pop = population(&a.pop, cfg)?;
            let d = PriorConfig::default();
            let split = match (
                a.prior_within_std.or(cfg.prior_within_std),
                a.prior_weight.or(cfg.prior_weight),
            ) {
                (Some(_), Some(_)) => {
                    return Err(usage(
                        "give at most one of prior_within_std and prior_weight",
                    ))
                }
                (Some(s), None) => PriorSplit::WithinStd(s),
                (None, Some(w)) => PriorSplit::Weight(w),
                (None, None) => d.split,
            };
            init_from_population(
                &pop,
                &PriorConfig {
                    split,
                    shape: a.prior_shape.or(cfg.prior_shape).unwrap_or(d.shape),
                    offset_std: a.offset_std.or(cfg.offset_std).unwrap_or(d.offset_std),
                    n_scenarios: a.scenarios.or(cfg.scenarios).unwrap_or(d.n_scenarios),
                },
            )?
        }
    };
    let obs = match a.obs.clone().or(cfg.obs.clone()) {
        Some(p) => read_observations_csv(File::open(&p).map_err(|e| io_err(&p, e))?)?,
        None => Vec::new(),
    };
    let (final_state, filtered) = state.update_all(&obs)?;
    let predictive = (1..=final_state.n_scenarios())
        .map(|s| {
            let p = final_state.predictive(s as u8)?;
            Ok(ScenarioPrediction {
                scenario_id: p.scenario_id,
                summary: p.summary,
                distribution: p.distribution,
                moment_matched: p.moment_matched,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(p) = a.state_out.as_deref().or(cfg.state_out.as_deref()) {
        let mut text = serde_json::to_string_pretty(&final_state)?;
        text.push('\n');
        write_text(p, &text)?;
    }
    let out = json!({
        "n_read": obs.len(),
        "n_used": obs.len() - filtered,
        "n_filtered": filtered,
        "state": final_state,
        "predictive": predictive,
    });
    emit(&out, a.output.as_deref().or(cfg.output.as_deref()))?;
    Ok(0)
}

fn range(flag: &str, v: &[f64], default: Range) -> Result<Range> {
    match v {
        [] => Ok(default),
        [x] => Ok(Range::fixed(*x)),
        [lo, hi] => Ok(Range {
            low: *lo,
            high: *hi,
        }),
        _ => Err(usage(format!("--{flag} takes one value or low,high"))),
    }
}

fn pick<'a>(flag: &'a [f64], cfg: &'a Option<Vec<f64>>) -> &'a [f64] {
    if flag.is_empty() {
        cfg.as_deref().unwrap_or(&[])
    } else {
        flag
    }
}

#[derive(Serialize)]
struct Check {
    quadrature: f64,
    std_error: f64,
    z_score: f64,
    passed: bool,
}

#[derive(Serialize)]
struct SimulateOutput {
    report: SimReport,
    policy: WarningPolicy,
    distribution: PrtDistribution,
    horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenarios: Option<ScenarioSampler>,
    #[serde(skip_serializing_if = "Option::is_none")]
    check: Option<Check>,
}

fn cmd_simulate(a: SimulateArgs, cfg: &RunConfig) -> Result<i32> {
    let pop = population(&a.pop, cfg)?;
    let law = law(&a.law, pop, cfg)?;
    let dist = law.distribution()?;
    let n = a.n.or(cfg.n).unwrap_or(DEFAULT_EVENTS);
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let seed = a.seed.or(cfg.seed).unwrap_or(1);
    let horizon = a.horizon.or(cfg.horizon).unwrap_or(DEFAULT_HORIZON);

    let source = match a.policy.as_deref().or(cfg.policy.as_deref()) {
        Some("population") => PolicySource::Population,
        Some("individual") => PolicySource::Individual,
        Some(other) => {
            return Err(usage(format!(
                "--policy must be population or individual, got '{other}'"
            )))
        }
        None => match law {
            Law::Population(_) => PolicySource::Population,
            Law::Individual(_) => PolicySource::Individual,
        },
    };
    let policy = match (
        a.threshold.or(cfg.threshold),
        a.p_accident.or(cfg.p_accident),
    ) {
        (Some(_), Some(_)) => return Err(usage("give --threshold or --p-accident, not both")),
        (Some(t), None) => {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Domain(format!(
                    "threshold must be positive, got {t}"
                )));
            }
            let p = dist.sf(t).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            WarningPolicy::new(t, p, source)?
        }
        (None, Some(p)) => match (source, &law) {
            (PolicySource::Population, _) => calibrate_population(&pop, p)?,
            (PolicySource::Individual, Law::Individual(profile)) => {
                calibrate_individual(profile, p)?
            }
            (PolicySource::Individual, Law::Population(_)) => {
                return Err(usage("--policy individual needs --mean and --std"))
            }
        },
        (None, None) => return Err(usage("--p-accident or --threshold is required")),
    };

    let mut trace = match a.trace.as_deref().or(cfg.trace.as_deref()) {
        Some(p) => Some(create(p)?),
        None => None,
    };
    let trace_ref = trace.as_mut().map(|w| w as &mut dyn Write);
    let kinematic = a.kinematic || cfg.kinematic == Some(true);
    let (report, scenarios) = if kinematic {
        let speed = range("speed", pick(&a.speed, &cfg.speed), Range::fixed(20.0))?;
        let sampler = ScenarioSampler::Uniform {
            speed,
            gap: range(
                "gap",
                pick(&a.gap, &cfg.gap),
                Range {
                    low: 0.0,
                    high: speed.low * horizon,
                },
            )?,
            lead_decel: range(
                "lead-decel",
                pick(&a.lead_decel, &cfg.lead_decel),
                Range::fixed(6.0),
            )?,
            extra_follower_decel: range(
                "extra-decel",
                pick(&a.extra_decel, &cfg.extra_decel),
                Range::fixed(0.0),
            )?,
        };
        let r = run_kinematic_traced(&dist, &policy, &sampler, horizon, n, seed, trace_ref)?;
        (r, Some(sampler))
    } else {
        let model = EventModel::uniform(horizon)?;
        (
            run_abstract_traced(&dist, &policy, &model, n, seed, trace_ref)?,
            None,
        )
    };
    if let Some(w) = trace.as_mut() {
        w.flush()?;
    }

    let check = if a.check || cfg.check == Some(true) {
        let q = false_alarm_rate(&dist, &policy)?;
        let se = if report.n_warnings > 0 {
            (q * (1.0 - q) / report.n_warnings as f64).sqrt()
        } else {
            f64::INFINITY
        };
        let z = (report.far_estimate - q).abs() / se;
        Some(Check {
            quadrature: q,
            std_error: se,
            z_score: z,
            passed: report.n_warnings > 0 && z < 3.0,
        })
    } else {
        None
    };
    let failed = check.as_ref().is_some_and(|c| !c.passed);
    emit(
        &SimulateOutput {
            report,
            policy,
            distribution: dist,
            horizon,
            scenarios,
            check,
        },
        a.output.as_deref().or(cfg.output.as_deref()),
    )?;
    if failed {
        eprintln!("error: Monte Carlo estimate disagrees with the quadrature by 3 or more standard errors");
        return Ok(1);
    }
    Ok(0)
}

fn cmd_marginal_fit(a: MarginalFitArgs, cfg: &RunConfig) -> Result<i32> {
    let target = population(&a.pop, cfg)?;
    let sigma = a
        .individual_std
        .or(cfg.individual_std)
        .ok_or_else(|| usage("--individual-std is required"))?;
    let family: MeanFamily = a
        .family
        .as_deref()
        .or(cfg.family.as_deref())
        .unwrap_or("shifted-lognormal")
        .parse()?;
    let d = FitOptions::default();
    let opts = FitOptions {
        rejection_threshold: a
            .rejection_threshold
            .or(cfg.rejection_threshold)
            .unwrap_or(d.rejection_threshold),
        quadrature: quadrature(a.abs_tol, a.rel_tol, cfg)?,
        ..d
    };
    let output = a.output.as_deref().or(cfg.output.as_deref());
    match fit_mean_distribution(&target, sigma, family, &opts) {
        Ok(fit) => {
            emit(&json!({ "model": fit.model, "report": fit.report }), output)?;
            Ok(0)
        }
        Err(Error::InfeasibleFit { reason, best }) => {
            emit(&json!({ "error": reason, "best": best }), output)?;
            eprintln!("error: infeasible fit: {reason}");
            Ok(1)
        }
        Err(e) => Err(e),
    }
}
