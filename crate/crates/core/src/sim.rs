//! Monte Carlo warning-event simulator.
//!
//! Each event draws an available time `t` and a driver PRT `x`. A warning is
//! sent when `t < T`; it is needed when `x > t`. With `t ~ U(0, T)` the
//! false-alarm fraction among warnings estimates the quadrature in
//! [`crate::calibration::false_alarm_rate`].
//!
//! Events are generated in fixed-size batches; batch `b` uses child stream
//! `b` of the report seed and batches reduce by integer summation, so results
//! do not depend on the number of worker threads.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::WarningPolicy;
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::stats::{PrtDistribution, SeededRng};

pub const DEFAULT_HORIZON: f64 = 8.0;
pub const DEFAULT_EVENTS: u64 = 1_000_000;
pub const BATCH_SIZE: u64 = 1 << 16;

/// Two-sided 95% normal critical value.
const Z95: f64 = 1.959_963_984_540_054;

/// Source of available times. Implemented by [`AvailableTimeLaw`] and
/// [`ScenarioSampler`]; anything else that can draw seconds can plug in.
pub trait EventLaw: Sync {
    fn draw_time(&self, rng: &mut SeededRng) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum AvailableTimeLaw {
    Uniform { low: f64, high: f64 },
    Fixed { at: f64 },
    Exponential { mean: f64 },
}

impl AvailableTimeLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AvailableTimeLaw::Uniform { low, high } => {
                ensure_finite("low", low)?;
                ensure_finite("high", high)?;
                if !(low >= 0.0 && high > low) {
                    return Err(Error::domain(format!(
                        "uniform law needs 0 <= low < high, got [{low}, {high}]"
                    )));
                }
            }
            AvailableTimeLaw::Fixed { at } => {
                ensure_finite("at", at)?;
                if at < 0.0 {
                    return Err(Error::domain("fixed available time must be >= 0"));
                }
            }
            AvailableTimeLaw::Exponential { mean } => ensure_positive("mean", mean)?,
        }
        Ok(())
    }
}

impl EventLaw for AvailableTimeLaw {
    fn draw_time(&self, rng: &mut SeededRng) -> Result<f64> {
        Ok(match *self {
            AvailableTimeLaw::Uniform { low, high } => rng.uniform(low, high),
            AvailableTimeLaw::Fixed { at } => at,
            AvailableTimeLaw::Exponential { mean } => -mean * rng.uniform_open().ln(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventModel {
    pub available_time_law: AvailableTimeLaw,
    pub horizon: f64,
}

impl Default for EventModel {
    fn default() -> Self {
        EventModel::uniform(DEFAULT_HORIZON).expect("default horizon is positive")
    }
}

impl EventModel {
    /// Available time uniform on (0, horizon).
    pub fn uniform(horizon: f64) -> Result<Self> {
        ensure_positive("horizon", horizon)?;
        Ok(EventModel {
            available_time_law: AvailableTimeLaw::Uniform {
                low: 0.0,
                high: horizon,
            },
            horizon,
        })
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("horizon", self.horizon)?;
        self.available_time_law.validate()
    }
}

/// Draws from the law, capped at the horizon.
struct CappedLaw<'a, L: EventLaw> {
    law: &'a L,
    horizon: f64,
}

impl<L: EventLaw> EventLaw for CappedLaw<'_, L> {
    fn draw_time(&self, rng: &mut SeededRng) -> Result<f64> {
        Ok(self.law.draw_time(rng)?.min(self.horizon))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub warning_sent: bool,
    pub warning_needed: bool,
    pub false_alarm: bool,
    pub miss: bool,
}

impl EventOutcome {
    pub fn classify(t: f64, x: f64, threshold_s: f64) -> Self {
        let warning_sent = t < threshold_s;
        let warning_needed = x > t;
        EventOutcome {
            warning_sent,
            warning_needed,
            false_alarm: warning_sent && !warning_needed,
            miss: !warning_sent && warning_needed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n_events: u64,
    pub n_warnings: u64,
    pub n_false_alarms: u64,
    pub n_misses: u64,
    /// False alarms among warnings; 0 when no warning was sent.
    pub far_estimate: f64,
    /// Wilson 95% interval for `far_estimate`.
    pub far_ci95: (f64, f64),
    pub far_std_error: f64,
    /// Misses among events without a warning; 0 when every event warned.
    pub miss_rate: f64,
    /// Events whose PRT exceeded the threshold, regardless of available time.
    pub n_exceed_threshold: u64,
    /// Direct estimate of P(X > T).
    pub exceedance_estimate: f64,
    pub exceedance_ci95: (f64, f64),
    pub threshold_s: f64,
    pub seed: u64,
}

/// Wilson score interval at 95% for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if k == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if k == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    events: u64,
    warnings: u64,
    false_alarms: u64,
    misses: u64,
    exceed: u64,
}

impl Counts {
    fn add(mut self, o: Counts) -> Counts {
        self.events += o.events;
        self.warnings += o.warnings;
        self.false_alarms += o.false_alarms;
        self.misses += o.misses;
        self.exceed += o.exceed;
        self
    }

    fn record(&mut self, out: &EventOutcome, x: f64, threshold: f64) {
        self.events += 1;
        self.warnings += out.warning_sent as u64;
        self.false_alarms += out.false_alarm as u64;
        self.misses += out.miss as u64;
        self.exceed += (x > threshold) as u64;
    }
}

fn batch_len(n: u64, b: u64) -> u64 {
    BATCH_SIZE.min(n - b * BATCH_SIZE)
}

fn run_batch<L: EventLaw>(
    law: &L,
    dist: &PrtDistribution,
    threshold: f64,
    rng: &mut SeededRng,
    len: u64,
    mut on_event: impl FnMut(f64, f64, &EventOutcome) -> Result<()>,
) -> Result<Counts> {
    let mut c = Counts::default();
    for _ in 0..len {
        let t = law.draw_time(rng)?;
        let x = dist.draw(rng);
        let out = EventOutcome::classify(t, x, threshold);
        on_event(t, x, &out)?;
        c.record(&out, x, threshold);
    }
    Ok(c)
}

/// Core event loop shared by the abstract and kinematic runs. When `trace`
/// is given, batches run sequentially and every event is written as CSV.
pub fn run_events<L: EventLaw>(
    law: &L,
    dist: &PrtDistribution,
    policy: &WarningPolicy,
    n: u64,
    seed: u64,
    trace: Option<&mut dyn Write>,
) -> Result<SimReport> {
    if n == 0 {
        return Err(Error::domain("number of events must be at least 1"));
    }
    let root = SeededRng::new(seed);
    let threshold = policy.threshold_s;
    let n_batches = n.div_ceil(BATCH_SIZE);

    let counts = match trace {
        None => (0..n_batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = root.child(b);
                run_batch(
                    law,
                    dist,
                    threshold,
                    &mut rng,
                    batch_len(n, b),
                    |_, _, _| Ok(()),
                )
            })
            .try_reduce(Counts::default, |a, b| Ok(a.add(b)))?,
        Some(w) => {
            writeln!(w, "t,x,warning_sent,warning_needed,false_alarm,miss")?;
            let mut total = Counts::default();
            for b in 0..n_batches {
                let mut rng = root.child(b);
                let c = run_batch(
                    law,
                    dist,
                    threshold,
                    &mut rng,
                    batch_len(n, b),
                    |t, x, o| {
                        writeln!(
                            w,
                            "{t:.17e},{x:.17e},{},{},{},{}",
                            o.warning_sent as u8,
                            o.warning_needed as u8,
                            o.false_alarm as u8,
                            o.miss as u8
                        )?;
                        Ok(())
                    },
                )?;
                total = total.add(c);
            }
            total
        }
    };
    Ok(report(counts, threshold, seed))
}

fn report(c: Counts, threshold: f64, seed: u64) -> SimReport {
    let far = if c.warnings == 0 {
        0.0
    } else {
        c.false_alarms as f64 / c.warnings as f64
    };
    let far_se = if c.warnings == 0 {
        0.0
    } else {
        (far * (1.0 - far) / c.warnings as f64).sqrt()
    };
    let quiet = c.events - c.warnings;
    let miss_rate = if quiet == 0 {
        0.0
    } else {
        c.misses as f64 / quiet as f64
    };
    SimReport {
        n_events: c.events,
        n_warnings: c.warnings,
        n_false_alarms: c.false_alarms,
        n_misses: c.misses,
        far_estimate: far,
        far_ci95: wilson_interval(c.false_alarms, c.warnings),
        far_std_error: far_se,
        miss_rate,
        n_exceed_threshold: c.exceed,
        exceedance_estimate: c.exceed as f64 / c.events as f64,
        exceedance_ci95: wilson_interval(c.exceed, c.events),
        threshold_s: threshold,
        seed,
    }
}

/// Events with available time from `model`, capped at its horizon.
pub fn run_abstract(
    dist: &PrtDistribution,
    policy: &WarningPolicy,
    model: &EventModel,
    n: u64,
    seed: u64,
) -> Result<SimReport> {
    run_abstract_traced(dist, policy, model, n, seed, None)
}

/// [`run_abstract`], optionally writing every event to `trace` as CSV.
pub fn run_abstract_traced(
    dist: &PrtDistribution,
    policy: &WarningPolicy,
    model: &EventModel,
    n: u64,
    seed: u64,
    trace: Option<&mut dyn Write>,
) -> Result<SimReport> {
    model.validate()?;
    let law = CappedLaw {
        law: &model.available_time_law,
        horizon: model.horizon,
    };
    run_events(&law, dist, policy, n, seed, trace)
}

/// Car-following geometry at the moment the lead vehicle starts braking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicScenario {
    pub follower_speed: f64,
    pub gap: f64,
    pub lead_decel: f64,
    pub follower_decel: f64,
    /// Lead speed when it differs from the follower's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_speed: Option<f64>,
}

impl KinematicScenario {
    pub fn new(follower_speed: f64, gap: f64, lead_decel: f64, follower_decel: f64) -> Self {
        KinematicScenario {
            follower_speed,
            gap,
            lead_decel,
            follower_decel,
            lead_speed: None,
        }
    }

    pub fn lead_speed(&self) -> f64 {
        self.lead_speed.unwrap_or(self.follower_speed)
    }

    fn validate(&self) -> Result<()> {
        ensure_positive("follower_speed", self.follower_speed)?;
        ensure_positive("lead_decel", self.lead_decel)?;
        ensure_positive("follower_decel", self.follower_decel)?;
        if let Some(v) = self.lead_speed {
            ensure_finite("lead_speed", v)?;
            if v < 0.0 {
                return Err(Error::domain("lead_speed must be >= 0"));
            }
        }
        if self.gap.is_nan() || self.gap < 0.0 {
            return Err(Error::domain(format!("gap must be >= 0, got {}", self.gap)));
        }
        Ok(())
    }

    /// Position of a vehicle starting at `x0` with speed `v`, braking at
    /// `decel` from time `onset` until it stops.
    fn position(x0: f64, v: f64, decel: f64, onset: f64, s: f64) -> f64 {
        if s <= onset {
            return x0 + v * s;
        }
        let stop = v / decel;
        let u = (s - onset).min(stop);
        x0 + v * onset + v * u - 0.5 * decel * u * u
    }

    fn speed(v: f64, decel: f64, onset: f64, s: f64) -> f64 {
        if s <= onset {
            v
        } else {
            (v - decel * (s - onset)).max(0.0)
        }
    }

    /// Smallest lead − follower distance over the whole manoeuvre when the
    /// follower starts braking after `delay` seconds.
    pub fn min_gap(&self, delay: f64) -> f64 {
        let (vl, al) = (self.lead_speed(), self.lead_decel);
        let (vf, af) = (self.follower_speed, self.follower_decel);
        let gap_at = |s: f64| {
            Self::position(self.gap, vl, al, 0.0, s) - Self::position(0.0, vf, af, delay, s)
        };
        let mut knots = [0.0, delay, vl / al, delay + vf / af];
        knots.sort_by(f64::total_cmp);
        let mut best = gap_at(knots[3]);
        for w in knots.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            best = best.min(gap_at(s0));
            if s1 <= s0 {
                continue;
            }
            // Relative speed is linear on each piece; its zero is a stationary point.
            let r0 = Self::speed(vl, al, 0.0, s0) - Self::speed(vf, af, delay, s0);
            let r1 = Self::speed(vl, al, 0.0, s1) - Self::speed(vf, af, delay, s1);
            if r0 < 0.0 && r1 > 0.0 {
                best = best.min(gap_at(s0 + (s1 - s0) * r0 / (r0 - r1)));
            }
        }
        best
    }
}

/// Latest brake-onset delay that still avoids contact. Returns 0 when
/// contact is unavoidable and `f64::INFINITY` for an infinite gap.
pub fn available_time(k: &KinematicScenario) -> Result<f64> {
    k.validate()?;
    if k.gap.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if k.lead_speed.is_none_or(|v| v == k.follower_speed) {
        return Ok(equal_speed_available_time(k));
    }
    if k.min_gap(0.0) < 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while k.min_gap(hi) >= 0.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::domain("available time search diverged"));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if k.min_gap(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn equal_speed_available_time(k: &KinematicScenario) -> f64 {
    let (v, g, al, af) = (k.follower_speed, k.gap, k.lead_decel, k.follower_decel);
    // Contact after both have stopped.
    let tau_end = (g + v * v / (2.0 * al) - v * v / (2.0 * af)) / v;
    let mut tau = tau_end;
    if af > al {
        // Contact while the lead is still moving, at the instant the
        // relative speed returns to zero.
        let d = af - al;
        let tau_mid = (2.0 * g * d / (al * af)).sqrt();
        if tau_mid <= v * d / (al * af) {
            tau = tau.min(tau_mid);
        }
    }
    tau.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub low: f64,
    pub high: f64,
}

impl Range {
    pub fn fixed(v: f64) -> Self {
        Range { low: v, high: v }
    }

    fn validate(&self, name: &str) -> Result<()> {
        ensure_finite(name, self.low)?;
        ensure_finite(name, self.high)?;
        if self.low > self.high {
            return Err(Error::domain(format!("{name}: low exceeds high")));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut SeededRng) -> f64 {
        if self.low == self.high {
            self.low
        } else {
            rng.uniform(self.low, self.high)
        }
    }
}

/// Distribution over [`KinematicScenario`]s. The follower always brakes at
/// least as hard as the lead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "snake_case")]
pub enum ScenarioSampler {
    Fixed(KinematicScenario),
    Uniform {
        speed: Range,
        gap: Range,
        lead_decel: Range,
        /// Added to the sampled lead deceleration; must be >= 0.
        extra_follower_decel: Range,
    },
}

impl ScenarioSampler {
    /// Equal decelerations and a uniform gap, which makes the available time
    /// uniform on (0, `max_time`).
    pub fn uniform_available_time(speed: f64, decel: f64, max_time: f64) -> Result<Self> {
        ensure_positive("speed", speed)?;
        ensure_positive("decel", decel)?;
        ensure_positive("max_time", max_time)?;
        Ok(ScenarioSampler::Uniform {
            speed: Range::fixed(speed),
            gap: Range {
                low: 0.0,
                high: speed * max_time,
            },
            lead_decel: Range::fixed(decel),
            extra_follower_decel: Range::fixed(0.0),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScenarioSampler::Fixed(k) => k.validate(),
            ScenarioSampler::Uniform {
                speed,
                gap,
                lead_decel,
                extra_follower_decel,
            } => {
                speed.validate("speed")?;
                gap.validate("gap")?;
                lead_decel.validate("lead_decel")?;
                extra_follower_decel.validate("extra_follower_decel")?;
                if speed.low <= 0.0 || lead_decel.low <= 0.0 {
                    return Err(Error::domain("speed and lead_decel must be positive"));
                }
                if gap.low < 0.0 || extra_follower_decel.low < 0.0 {
                    return Err(Error::domain("gap and extra_follower_decel must be >= 0"));
                }
                Ok(())
            }
        }
    }

    pub fn draw(&self, rng: &mut SeededRng) -> KinematicScenario {
        match *self {
            ScenarioSampler::Fixed(k) => k,
            ScenarioSampler::Uniform {
                speed,
                gap,
                lead_decel,
                extra_follower_decel,
            } => {
                let v = speed.draw(rng);
                let g = gap.draw(rng);
                let al = lead_decel.draw(rng);
                let af = al + extra_follower_decel.draw(rng);
                KinematicScenario::new(v, g, al, af)
            }
        }
    }
}

impl EventLaw for ScenarioSampler {
    fn draw_time(&self, rng: &mut SeededRng) -> Result<f64> {
        available_time(&self.draw(rng))
    }
}

/// Events whose available time comes from sampled car-following scenarios,
/// capped at `horizon`.
pub fn run_kinematic(
    dist: &PrtDistribution,
    policy: &WarningPolicy,
    sampler: &ScenarioSampler,
    horizon: f64,
    n: u64,
    seed: u64,
) -> Result<SimReport> {
    run_kinematic_traced(dist, policy, sampler, horizon, n, seed, None)
}

/// [`run_kinematic`], optionally writing every event to `trace` as CSV.
pub fn run_kinematic_traced(
    dist: &PrtDistribution,
    policy: &WarningPolicy,
    sampler: &ScenarioSampler,
    horizon: f64,
    n: u64,
    seed: u64,
    trace: Option<&mut dyn Write>,
) -> Result<SimReport> {
    sampler.validate()?;
    ensure_positive("horizon", horizon)?;
    let law = CappedLaw {
        law: sampler,
        horizon,
    };
    run_events(&law, dist, policy, n, seed, trace)
}
