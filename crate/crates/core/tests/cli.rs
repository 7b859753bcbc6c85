use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use driftbench::data::{read_results, read_series};
use driftbench::pflow::{pff_run, FlowConfig};
use driftbench::statespace::{
    build_matrices, load_params, simulate, substitute_raw, RhoPolicy, State,
};

const BIN: &str = env!("CARGO_BIN_EXE_driftbench");

fn substitute_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/substitute.json")
}

fn driftbench(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("DRIFTBENCH_SEED")
        .output()
        .unwrap()
}

fn with_config(args: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    v.push("--config".into());
    v.push(substitute_config().display().to_string());
    v
}

fn run_ok(args: &[&str], out: &Path) -> String {
    let args = with_config(args);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = driftbench(&args, out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = run_ok(
        &["simulate", "--seed", "7", "--n-steps", "65"],
        &dir.path().join("a"),
    );
    run_ok(
        &["simulate", "--seed", "7", "--n-steps", "65"],
        &dir.path().join("b"),
    );
    assert!(stdout.contains("seed 7"));
    assert!(stdout.contains("rows 65"));
    let series = read_series(fs::File::open(dir.path().join("a/series.csv")).unwrap()).unwrap();
    assert_eq!(series.len(), 65);
    for f in ["series.csv", "truth.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn missing_z0_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(substitute_config()).unwrap()).unwrap();
    doc["simulation"].as_object_mut().unwrap().remove("z0");
    fs::write(&cfg, doc.to_string()).unwrap();
    let o = driftbench(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("z0"));
}

#[test]
fn filter_kf_writes_rows_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = run_ok(&["filter", "--filter", "kf"], dir.path());
    assert!(stdout.contains("filter kf over 65 steps"));
    let frame = read_results(&dir.path().join("results_kf.csv")).unwrap();
    assert_eq!(frame.len(), 65);
    assert!(frame.rows.iter().all(|r| r.truth.is_some()));
    let metrics = fs::read_to_string(dir.path().join("metrics_kf.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    for line in metrics.lines().skip(1) {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v.is_finite());
    }
}

#[test]
fn filter_ukf_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "filter",
        "--filter",
        "ukf",
        "--noise-injection",
        "true",
        "--sigma-count",
        "20",
        "--seed",
        "5",
    ];
    run_ok(&args, &dir.path().join("a"));
    run_ok(&args, &dir.path().join("b"));
    for f in ["results_ukf.csv", "metrics_ukf.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn flat_likelihood_flow_tracks_propagation() {
    let m = build_matrices(
        &load_params(&substitute_raw(), RhoPolicy::Reject)
            .unwrap()
            .params,
    )
    .unwrap();
    let t = simulate(&m, &State::new(2.0451, 0.4), 65, 7).unwrap();
    let cfg = FlowConfig {
        sigma2_scale: 1e12,
        seed: 7,
        ..FlowConfig::default()
    };
    for r in pff_run(&m, &t.observations(), &cfg).unwrap() {
        assert!((&r.posterior.mean - &r.prior.mean).amax() < 1e-4);
    }
}

#[test]
fn compare_rows_match_single_filter_runs() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = run_ok(&["compare", "--particles", "300"], &dir.path().join("cmp"));
    assert!(stdout.contains("rows 195"));
    let combined = read_results(&dir.path().join("cmp/compare.csv")).unwrap();
    for tag in ["kf", "ukf", "pff"] {
        let out = dir.path().join(tag);
        run_ok(&["filter", "--filter", tag, "--particles", "300"], &out);
        let single = read_results(&out.join(format!("results_{tag}.csv"))).unwrap();
        let from_compare: Vec<_> = combined.filter_rows(tag).cloned().collect();
        assert_eq!(from_compare, single.rows, "{tag}");
    }
    let plot = fs::read_to_string(dir.path().join("cmp/plot.gp")).unwrap();
    assert!(plot.contains("compare.csv") && plot.contains("'pff'"));
}

#[test]
fn csv_input_reports_observation_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let mut text = String::from("year,yield,return\n");
    for (i, year) in (1945..=2010).enumerate() {
        text.push_str(&format!(
            "{year},{},{}\n",
            2.0 + 0.1 * ((i % 5) as f64 - 2.0),
            (i % 7) as f64 * 0.3 - 0.9
        ));
    }
    fs::write(&input, text).unwrap();
    run_ok(
        &[
            "compare",
            "--particles",
            "200",
            "--input",
            input.to_str().unwrap(),
        ],
        dir.path(),
    );
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.matches("observation_residual").count(), 6);
    let frame = read_results(&dir.path().join("compare.csv")).unwrap();
    assert_eq!(frame.len(), 3 * 66);
    assert!(frame.rows.iter().all(|r| r.truth.is_none()));
}

#[test]
fn bad_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "year,yield,return\n1945,2.0,0.1\n1945,2.1,0.2\n").unwrap();
    let args = with_config(&["filter", "--input", input.to_str().unwrap()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = driftbench(&args, dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn singular_innovation_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("singular.json");
    let mut raw = substitute_raw();
    raw.insert("rho".into(), 1.0);
    raw.insert("Q1".into(), 0.0);
    raw.insert("Q2".into(), 0.0);
    let doc =
        serde_json::json!({ "params": raw, "simulation": { "z0": [2.0, 0.4], "n_steps": 5 } });
    fs::write(&cfg, doc.to_string()).unwrap();
    let o = driftbench(&["filter", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 0"));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noseed.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(substitute_config()).unwrap()).unwrap();
    doc.as_object_mut().unwrap().remove("seed");
    fs::write(&cfg, doc.to_string()).unwrap();
    let run = |env: Option<&str>, flag: Option<&str>, config: &Path, out: &str| {
        let mut c = Command::new(BIN);
        c.args(["simulate", "--config", config.to_str().unwrap(), "--out"])
            .arg(dir.path().join(out));
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        match env {
            Some(v) => c.env("DRIFTBENCH_SEED", v),
            None => c.env_remove("DRIFTBENCH_SEED"),
        };
        String::from_utf8(c.output().unwrap().stdout).unwrap()
    };
    assert!(run(Some("11"), None, &cfg, "env").contains("seed 11"));
    assert!(run(Some("11"), Some("3"), &cfg, "flag").contains("seed 3"));
    assert!(run(Some("11"), None, &substitute_config(), "config").contains("seed 7"));
    assert!(run(None, None, &cfg, "none").contains("seed 0"));
}

#[test]
fn unknown_subcommand_and_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(driftbench(&["smooth"], dir.path()).status.code(), Some(2));
    assert_eq!(
        driftbench(&["filter", "--filter", "ekf"], dir.path())
            .status
            .code(),
        Some(2)
    );
    let args = with_config(&["filter", "--scheme", "midpoint"]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(driftbench(&args, dir.path()).status.code(), Some(2));
}
