use brtwarn_core::stats::{
    integrate, norm_sf, LogNormalPrt, PrtDistribution, QuadratureSpec, SeededRng,
    TruncatedNormalPrt,
};
use proptest::prelude::*;

fn lognormal() -> impl Strategy<Value = PrtDistribution> {
    (-1.0..1.5f64, 0.05..1.2f64).prop_map(|(m, s)| LogNormalPrt::new(m, s).unwrap().into())
}

fn truncated() -> impl Strategy<Value = PrtDistribution> {
    (-1.0..4.0f64, 0.05..1.5f64).prop_map(|(m, s)| TruncatedNormalPrt::new(m, s).unwrap().into())
}

fn any_dist() -> impl Strategy<Value = PrtDistribution> {
    prop_oneof![lognormal(), truncated()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn quantile_cdf_round_trip(d in any_dist(), p in 1e-6..(1.0 - 1e-6)) {
        let x = d.quantile(p).unwrap();
        prop_assert!((d.cdf(x) - p).abs() < 1e-8, "{} p={p} x={x}", d.label());
    }

    #[test]
    fn isf_matches_quantile(d in any_dist(), q in 1e-6..0.5f64) {
        let x = d.isf(q).unwrap();
        prop_assert!((d.sf(x) - q).abs() < 1e-8 * q.max(1e-3));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn densities_normalize(d in any_dist()) {
        let spec = QuadratureSpec::default();
        let mass = d.total_mass(&spec).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-6, "{}: {mass}", d.label());
    }

    #[test]
    fn cdf_monotone_pdf_nonnegative(d in any_dist()) {
        let hi = d.upper_cutoff();
        let mut prev = 0.0;
        for i in 0..10_000 {
            let x = hi * i as f64 / 9_999.0;
            let c = d.cdf(x);
            prop_assert!(c >= prev);
            prop_assert!(d.pdf(x) >= 0.0);
            prev = c;
        }
        prop_assert_eq!(d.pdf(-1.0), 0.0);
        prop_assert_eq!(d.cdf(-1.0), 0.0);
    }

    #[test]
    fn truncation_consistency(mu in -1.0..4.0f64, sigma in 0.05..1.5f64) {
        let d = TruncatedNormalPrt::new(mu, sigma).unwrap();
        // Φ(x) − Φ(a0) over 1 − Φ(a0), written with survival functions so
        // heavily truncated laws keep their precision.
        let a0 = -mu / sigma;
        let spec = QuadratureSpec::default().with_tolerance(1e-12);
        let hi = PrtDistribution::from(d).upper_cutoff();
        for i in 1..=100 {
            let x = hi * i as f64 / 100.0;
            let formula = (norm_sf(a0) - norm_sf((x - mu) / sigma)) / norm_sf(a0);
            let quad = integrate(|t| d.pdf(t), 0.0, x, &spec).unwrap();
            prop_assert!((d.cdf(x) - formula).abs() < 1e-8);
            prop_assert!((quad - formula).abs() < 1e-8, "x={x}: {quad} vs {formula}");
        }
    }
}

/// Two-sided KS statistic of sorted samples against `cdf`.
fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn sampling_ks_below_threshold() {
    let dists: [PrtDistribution; 3] = [
        LogNormalPrt::new(0.17, 0.44).unwrap().into(),
        TruncatedNormalPrt::new(1.31, 0.2).unwrap().into(),
        TruncatedNormalPrt::new(0.2, 0.5).unwrap().into(),
    ];
    for (i, d) in dists.iter().enumerate() {
        let mut rng = SeededRng::new(100 + i as u64);
        let mut xs = d.sample(&mut rng, 1_000_000);
        xs.sort_by(f64::total_cmp);
        let ks = ks_statistic(&xs, |x| d.cdf(x));
        assert!(ks < 0.002, "{}: KS {ks}", d.label());
    }
}
