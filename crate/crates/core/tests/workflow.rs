use std::path::Path;
use std::process::Command;

use extremile_fda::simulation::{
    gen_scenario, run_mc, run_mc_with, run_pmse, true_extremile, Estimator, Scenario, ScenarioConfig,
};
use extremile_fda::{ExtremileLevel, ExtremileModel};

fn small(scenario: Scenario) -> ScenarioConfig {
    ScenarioConfig {
        scenario,
        n: 50,
        grid_size: 30,
        reps: 4,
        seed: 17,
        ..ScenarioConfig::default()
    }
}

fn level(t: f64) -> ExtremileLevel<f64> {
    ExtremileLevel::new(t).unwrap()
}

#[test]
fn median_only_campaign_is_local_linear_mean() {
    let cfg = ScenarioConfig {
        tau_grid: vec![0.5],
        ..small(Scenario::A)
    };
    let mc = run_mc(&cfg).unwrap();
    let mut total = 0.0;
    for rep in 0..cfg.reps {
        let data = gen_scenario(&cfg, rep).unwrap();
        let model = ExtremileModel::fit(&data.sample, &data.responses, cfg.regression_config()).unwrap();
        let mut se = 0.0;
        for x in data.sample.curves() {
            let est = model.local_linear_mean_at(x).unwrap().alpha_hat;
            se += (est - true_extremile(x, level(0.5), &cfg).unwrap()).powi(2);
        }
        total += se / cfg.n as f64;
    }
    let manual = total / cfg.reps as f64;
    assert!((mc.amse[0] - manual).abs() <= 1e-12 * manual, "{} vs {manual}", mc.amse[0]);
}

#[test]
fn campaigns_are_reproducible_and_truth_scores_zero() {
    let cfg = small(Scenario::B);
    assert_eq!(run_mc(&cfg).unwrap(), run_mc(&cfg).unwrap());
    let truth = run_mc_with(&cfg, Estimator::Truth).unwrap();
    assert!(truth.amse.iter().all(|v| *v == 0.0));
    assert_eq!(truth.crossing_rate_extremile, 0.0);

    let pm = run_pmse(&small(Scenario::A)).unwrap();
    assert_eq!(pm.train_size + pm.test_size, 50);
    assert!(pm.apmse.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn simulated_extremiles_keep_their_order() {
    let cfg = ScenarioConfig {
        n: 100,
        grid_size: 50,
        ..ScenarioConfig::default()
    };
    let x0 = gen_scenario(&ScenarioConfig { seed: 999, ..cfg.clone() }, 0).unwrap().sample.curve(0).clone();
    let mut ordered = 0;
    for rep in 0..100 {
        let data = gen_scenario(&cfg, rep).unwrap();
        let model = ExtremileModel::fit(&data.sample, &data.responses, cfg.regression_config()).unwrap();
        let at = |t: f64| model.fit_at(&x0, level(t)).unwrap().alpha_hat;
        if at(0.1) < at(0.5) && at(0.5) < at(0.9) {
            ordered += 1;
        }
    }
    assert!(ordered >= 95, "ordered in {ordered} of 100 draws");
}

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_extremile"))
}

fn read_table(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn emitted_data_refit_matches_in_memory_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    let status = exe()
        .args(["simulate", "--n", "40", "--grid", "25", "--reps", "2", "--seed", "5", "--emit-data", "--out"])
        .arg(&sim)
        .status()
        .unwrap();
    assert!(status.success());
    let curves = sim.join("data_curves.csv");
    let status = exe()
        .args(["fit", "--curves"])
        .arg(&curves)
        .arg("--responses")
        .arg(sim.join("data_responses.csv"))
        .arg("--eval")
        .arg(&curves)
        .arg("--out")
        .arg(&fit)
        .status()
        .unwrap();
    assert!(status.success());

    let cfg = ScenarioConfig {
        n: 40,
        grid_size: 25,
        reps: 2,
        seed: 5,
        ..ScenarioConfig::default()
    };
    let data = gen_scenario(&cfg, 0).unwrap();
    let model = ExtremileModel::fit(&data.sample, &data.responses, cfg.regression_config()).unwrap();
    let pred = model.predict(data.sample.curves(), &cfg.levels().unwrap());
    let table = read_table(&fit.join("extremiles.csv"));
    assert_eq!(table.len(), 40);
    for (i, row) in table.iter().enumerate() {
        assert_eq!(row[0], format!("x{}", i + 1));
        for (j, cell) in row[1..].iter().enumerate() {
            let want = pred.get(i, j).unwrap();
            let got: f64 = cell.parse().unwrap();
            assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "cell ({i}, {j}): {got} vs {want}");
        }
    }
}

#[test]
fn report_is_deterministic_with_one_point_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(exe()
        .args(["simulate", "--n", "40", "--grid", "25", "--reps", "1", "--emit-data", "--out"])
        .arg(&sim)
        .status()
        .unwrap()
        .success());
    let fit = dir.path().join("fit");
    assert!(exe()
        .args(["fit", "--curves"])
        .arg(sim.join("data_curves.csv"))
        .arg("--responses")
        .arg(sim.join("data_responses.csv"))
        .arg("--out")
        .arg(&fit)
        .status()
        .unwrap()
        .success());
    let render = |name: &str| {
        let out = dir.path().join(name);
        assert!(exe()
            .args(["report", "--input"])
            .arg(fit.join("extremiles.csv"))
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
            .success());
        out
    };
    let (a, b) = (render("r1"), render("r2"));
    for id in ["mean", "mean_minus", "mean_plus"] {
        let name = format!("profile_{id}.svg");
        let svg = std::fs::read_to_string(a.join(&name)).unwrap();
        assert_eq!(svg, std::fs::read_to_string(b.join(&name)).unwrap());
        assert_eq!(svg.matches(r#"class="point""#).count(), 9);
    }
}

#[test]
fn manifest_replay_reproduces_tables() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    assert!(exe()
        .args(["simulate", "--n", "30", "--grid", "20", "--reps", "2", "--seed", "9", "--kappa", "2", "--out"])
        .arg(&first)
        .status()
        .unwrap()
        .success());
    let second = dir.path().join("second");
    assert!(exe()
        .args(["simulate", "--config"])
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap()
        .success());
    for name in ["amse.csv", "pmse.csv", "crossing.csv"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn bad_input_exit_codes() {
    let usage = exe().args(["simulate", "--n", "5"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
    let runtime = exe()
        .args(["fit", "--curves", "/nonexistent/c.csv", "--responses", "/nonexistent/r.csv"])
        .output()
        .unwrap();
    assert_eq!(runtime.status.code(), Some(1));
}
