use brtwarn_core::estimator::{
    allocate_scenarios, init_from_population, run_replications, EstimatorState, PriorConfig,
    ReplicationOutcome,
};
use brtwarn_core::population::PopulationPrt;
use brtwarn_core::stats::TruncatedNormalPrt;

const REPS: usize = 500;

fn prior() -> EstimatorState {
    init_from_population(&PopulationPrt::default(), &PriorConfig::default()).unwrap()
}

fn truth() -> TruncatedNormalPrt {
    TruncatedNormalPrt::new(1.2, 0.2).unwrap()
}

fn fraction(out: &[ReplicationOutcome], pred: impl Fn(&ReplicationOutcome) -> bool) -> f64 {
    out.iter().filter(|o| pred(o)).count() as f64 / out.len() as f64
}

fn mean_l1(out: &[ReplicationOutcome]) -> f64 {
    out.iter().map(|o| o.l1_error).sum::<f64>() / out.len() as f64
}

#[test]
fn prior_interval_brackets_population_percentiles() {
    let pop = PopulationPrt::default();
    let p10 = pop.law().quantile(0.1).unwrap();
    let p90 = pop.law().quantile(0.9).unwrap();
    let s = prior().predictive(1).unwrap().summary;
    assert!((s.mean - 1.306).abs() < 0.013);
    // The predictive interval must cover the population's, up to 10% slack.
    assert!(s.p10 <= 1.1 * p10, "{} vs {p10}", s.p10);
    assert!(s.p90 >= 0.9 * p90, "{} vs {p90}", s.p90);
}

#[test]
fn five_observations_give_usable_percentiles() {
    let t = truth();
    let (t10, t90) = (t.quantile(0.1).unwrap(), t.quantile(0.9).unwrap());
    let out = run_replications(&prior(), &t, 5, REPS, 1).unwrap();
    let hit = fraction(&out, |o| {
        (o.summary.p10 - t10).abs() <= 0.15 && (o.summary.p90 - t90).abs() <= 0.15
    });
    assert!(hit >= 0.80, "{hit}");
}

#[test]
fn fifty_observations_pin_the_spread() {
    let out = run_replications(&prior(), &truth(), 50, REPS, 2).unwrap();
    let std_hit = fraction(&out, |o| (o.summary.std - 0.2).abs() <= 0.05);
    assert!(std_hit >= 0.95, "{std_hit}");
    // The sample mean of 50 draws has standard error 0.2/√50 ≈ 0.028, so
    // only about 72% of replications can land within 0.03 of the truth.
    let mean_hit = fraction(&out, |o| (o.summary.mean - 1.2).abs() <= 0.03);
    assert!((0.62..0.82).contains(&mean_hit), "{mean_hit}");
}

#[test]
fn l1_error_decreases_with_data() {
    let e: Vec<f64> = [0, 5, 50]
        .iter()
        .map(|&n| mean_l1(&run_replications(&prior(), &truth(), n, REPS, 3).unwrap()))
        .collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
}

#[test]
fn scenarios_share_information() {
    let s = prior();
    let truths = [truth(), TruncatedNormalPrt::new(1.5, 0.2).unwrap()];
    let run = |c: [usize; 2]| allocate_scenarios(&s, &truths, &c, 200, 4).unwrap();
    let only1 = run([5, 0]);
    let only2 = run([0, 5]);
    assert!(only1.scenarios[0].mean_l1_error < only2.scenarios[0].mean_l1_error);
    assert!(only2.scenarios[1].mean_l1_error < only1.scenarios[1].mean_l1_error);

    let none = run([0, 0]);
    let many1 = run([50, 0]);
    assert!(many1.scenarios[1].mean_interval_width < none.scenarios[1].mean_interval_width);
    for (sid, e) in none.scenarios.iter().enumerate() {
        let p = s.predictive(sid as u8 + 1).unwrap().summary;
        assert!((e.mean_interval_width - (p.p90 - p.p10)).abs() < 1e-12);
    }
}

#[test]
fn replications_are_deterministic() {
    let a = run_replications(&prior(), &truth(), 5, 50, 9).unwrap();
    let b = run_replications(&prior(), &truth(), 5, 50, 9).unwrap();
    assert_eq!(a, b);
}
