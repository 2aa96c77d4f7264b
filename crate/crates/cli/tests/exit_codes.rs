//! Exit-code contract per command: 0 success, 1 domain error, 2 usage error.

use std::fs;

use proptest::prelude::*;

fn run(args: &[String]) -> i32 {
    let mut argv = vec!["brtwarn".to_string()];
    argv.extend_from_slice(args);
    brtwarn::run(argv)
}

fn s(v: impl ToString) -> String {
    v.to_string()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn calibrate(p in -0.5..1.5f64, mean in -1.0..3.0f64, population in any::<bool>()) {
        let mut args = vec![s("calibrate"), format!("--p-accident={p}")];
        if population {
            args.push(s("--population"));
        } else {
            args.extend([format!("--mean={mean}"), s("--std"), s("0.2")]);
        }
        let valid = p > 0.0 && p < 1.0 && (population || mean > 0.0);
        prop_assert_eq!(run(&args), if valid { 0 } else { 1 });
    }

    #[test]
    fn calibrate_missing_law_is_usage(p in 0.001..0.5f64) {
        prop_assert_eq!(run(&[s("calibrate"), format!("--p-accident={p}")]), 2);
    }

    #[test]
    fn curve(points in 0usize..6, p_min in 0.0001..0.6f64, p_max in 0.0001..0.6f64) {
        let dir = tempfile::tempdir().unwrap();
        let args = [
            s("curve"), s("--population"), format!("--points={points}"),
            format!("--p-min={p_min}"), format!("--p-max={p_max}"),
            s("--output"), dir.path().join("c.csv").to_str().unwrap().to_string(),
        ];
        let valid = points == 1 || (points > 1 && p_max > p_min);
        prop_assert_eq!(run(&args), if valid { 0 } else { 1 });
    }

    #[test]
    fn simulate(n in 0u64..400, seed in any::<u64>(), horizon in -1.0..10.0f64) {
        let args = [
            s("simulate"), s("--mean"), s("1.31"), s("--std"), s("0.2"),
            s("--p-accident"), s("0.01"), format!("--n={n}"), format!("--seed={seed}"),
            format!("--horizon={horizon}"),
        ];
        let expected = if n == 0 { 2 } else if horizon > 0.0 { 0 } else { 1 };
        prop_assert_eq!(run(&args), expected);
    }

    #[test]
    fn estimate(rows in prop::collection::vec((-0.5..3.0f64, 0.1..8.0f64, 0u8..4), 0..12)) {
        let dir = tempfile::tempdir().unwrap();
        let obs = dir.path().join("obs.csv");
        let mut text = s("prt_s,ttsl_s,scenario_id\n");
        for (prt, ttsl, sid) in &rows {
            text.push_str(&format!("{prt},{ttsl},{sid}\n"));
        }
        fs::write(&obs, text).unwrap();
        // Rows outside the transition zone are filtered before they reach the
        // state, so an unknown scenario there is not an error.
        let valid = rows.iter().all(|&(prt, ttsl, sid)| {
            prt > 0.0 && sid >= 1 && (ttsl > 4.0 || sid <= 2)
        });
        let code = run(&[s("estimate"), s("--obs"), obs.to_str().unwrap().to_string()]);
        prop_assert_eq!(code, if valid { 0 } else { 1 });
    }

    #[test]
    fn sweep(kind in prop::sample::select(vec!["std", "mean", "median"]), v in -0.5..2.0f64) {
        let dir = tempfile::tempdir().unwrap();
        let args = [
            s("sweep"), format!("--kind={kind}"), format!("--values={v}"), s("--points=5"),
            s("--out"), dir.path().to_str().unwrap().to_string(),
        ];
        let expected = if kind == "median" { 2 } else if v > 0.0 { 0 } else { 1 };
        prop_assert_eq!(run(&args), expected);
    }
}

#[test]
fn marginal_fit_codes() {
    let code = |args: &[&str]| run(&args.iter().map(|a| a.to_string()).collect::<Vec<_>>());
    assert_eq!(code(&["marginal-fit"]), 2);
    assert_eq!(code(&["marginal-fit", "--individual-std=-0.2"]), 1);
    assert_eq!(
        code(&[
            "marginal-fit",
            "--individual-std",
            "0.8",
            "--family",
            "gamma"
        ]),
        1
    );
}
