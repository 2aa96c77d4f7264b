use brtwarn_core::population::{
    fit_mean_distribution, FitOptions, FitReport, MeanDistribution, MeanFamily, PopulationPrt,
};
use brtwarn_core::stats::{integrate, QuadratureSpec};
use brtwarn_core::Error;

fn fit(sigma: f64, family: MeanFamily) -> Result<FitReport, Error> {
    fit_mean_distribution(
        &PopulationPrt::default(),
        sigma,
        family,
        &FitOptions::default(),
    )
    .map(|r| r.report)
}

fn best_attempt(err: Error) -> FitReport {
    match err {
        Error::InfeasibleFit { best, .. } => *best,
        other => panic!("expected an infeasible fit, got {other}"),
    }
}

#[test]
fn shifted_lognormal_fixture() {
    let pop = PopulationPrt::default();
    let r = fit_mean_distribution(
        &pop,
        0.2,
        MeanFamily::ShiftedLogNormal,
        &FitOptions::default(),
    )
    .unwrap();
    let rep = &r.report;
    // Frozen from this implementation; an independent dense-grid fit in
    // numpy lands on the same optimum (L2 0.029328, sup 0.043656).
    let MeanDistribution::ShiftedLogNormal {
        mu_log,
        sigma_log,
        shift,
    } = rep.mean_dist
    else {
        panic!("wrong family: {:?}", rep.mean_dist);
    };
    assert!((mu_log + 0.212_08).abs() < 1e-3, "{mu_log}");
    assert!((sigma_log - 0.592_44).abs() < 1e-3, "{sigma_log}");
    assert!((shift - 0.348_04).abs() < 1e-3, "{shift}");
    assert!((rep.l2_distance - 0.029_328).abs() < 1e-4);
    assert!(rep.sup_distance < 0.05);
    assert!(rep.converged);
    assert!((rep.marginal_mean - pop.mean()).abs() < 0.01 * pop.mean());

    let spec = QuadratureSpec::default();
    let mass = integrate(
        |x| r.model.marginal_pdf(x, &spec).unwrap(),
        0.0,
        30.0,
        &spec,
    )
    .unwrap();
    assert!((mass - 1.0).abs() < 1e-5, "{mass}");
}

#[test]
fn two_parameter_families_fall_short_at_sigma_point_two() {
    // Independent numpy fits: lognormal L2 0.052780, gamma L2 0.080738.
    let ln = best_attempt(fit(0.2, MeanFamily::LogNormal).unwrap_err());
    assert!(
        (ln.l2_distance - 0.052_780).abs() < 1e-4,
        "{}",
        ln.l2_distance
    );
    let g = best_attempt(fit(0.2, MeanFamily::Gamma).unwrap_err());
    assert!(
        (g.l2_distance - 0.080_738).abs() < 1e-4,
        "{}",
        g.l2_distance
    );
}

#[test]
fn near_degenerate_sigma_recovers_target() {
    let rep = fit(1e-6, MeanFamily::LogNormal).unwrap();
    assert!(rep.l2_distance < 1e-3);
    let MeanDistribution::LogNormal { mu_log, sigma_log } = rep.mean_dist else {
        panic!("wrong family");
    };
    assert!((mu_log - 0.17).abs() < 1e-4 && (sigma_log - 0.44).abs() < 1e-4);
}

#[test]
fn overdispersed_sigma_is_infeasible() {
    for family in [MeanFamily::LogNormal, MeanFamily::ShiftedLogNormal] {
        let best = best_attempt(fit(0.8, family).unwrap_err());
        assert_eq!(best.individual_sigma, 0.8);
        assert!(best.l2_distance.is_finite());
    }
}

#[test]
fn fit_is_deterministic() {
    let a = fit(0.2, MeanFamily::ShiftedLogNormal).unwrap();
    let b = fit(0.2, MeanFamily::ShiftedLogNormal).unwrap();
    assert_eq!(a, b);
}
