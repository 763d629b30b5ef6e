//! End-to-end CLI tests: run the built binary against small fixtures and
//! check exit codes and output files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lsps_core::rng;
use lsps_core::stats::sigmoid;
use rand::Rng;

fn lsps() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lsps"))
}

fn run(args: &[&str]) -> Output {
    lsps().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const SIM1_SMALL: &str = r#"
[sim1]
n = 200
m = 12
replicates = 3
sigma2_grid = [0.01, 1.0]
master_seed = 5

[pipeline]
cv_folds = 4
lambda_points = 6
k_strata = 4
"#;

#[test]
fn sim1_outputs_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, SIM1_SMALL).unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "sim1",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    }
    for f in ["sim1_raw.csv", "sim1_agg.csv", "sim1_rmse.svg", "run_meta.json"] {
        assert!(out_a.join(f).exists(), "{f} missing");
    }
    assert_eq!(
        fs::read(out_a.join("sim1_raw.csv")).unwrap(),
        fs::read(out_b.join("sim1_raw.csv")).unwrap()
    );
    assert_eq!(
        fs::read(out_a.join("sim1_agg.csv")).unwrap(),
        fs::read(out_b.join("sim1_agg.csv")).unwrap()
    );
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["master_seed"], 5);
    assert!(meta["resolved_config"]["sim1"]["n"].is_number());
}

#[test]
fn sim1_single_replicate_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, "[sim1]\nn = 100\nm = 5\nreplicates = 1\n").unwrap();
    let res = run(&[
        "sim1",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 64);
}

#[test]
fn malformed_config_is_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, "[sim1\nnot toml").unwrap();
    let res = run(&["sim1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 64);
}

#[test]
fn sim2_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    fs::write(
        &cfg,
        r#"
[sim2]
n_grid = [300]
m_grid = [10]
replicates = 2
master_seed = 7

[pipeline]
cv_folds = 4
lambda_points = 6
k_strata = 4
"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let res = run(&[
        "sim2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let agg = fs::read_to_string(out.join("sim2_agg.csv")).unwrap();
    assert!(agg.starts_with("sweep_param,value,method,bias,variance,rmse,ps_rmse,r2\n"));
    assert!(agg.contains("m_n300"));
    assert!(out.join("sim2_rmse.svg").exists());
}

/// Writes a dense cohort CSV with `m` binary covariates. `logit_scale`
/// controls how strongly each covariate drives treatment; `confound` adds the
/// first one to the outcome too.
fn write_cohort(path: &Path, n: usize, m: usize, seed: u64, logit_scale: f64, confound: f64) {
    let mut rng = rng::stream(seed, &[0xC11]);
    let header: Vec<String> = (0..m).map(|j| format!("x{j}")).collect();
    let mut lines = vec![format!("treatment,y,{}", header.join(","))];
    for _ in 0..n {
        let xs: Vec<f64> = (0..m).map(|_| rng.gen_bool(0.5) as u8 as f64).collect();
        let logit = logit_scale * (xs.iter().sum::<f64>() - m as f64 / 2.0);
        let t = rng.gen_bool(sigmoid(logit)) as u8;
        let y = 2.0 * t as f64 + confound * xs[0] + rng.gen_range(-0.5..0.5);
        lines.push(format!(
            "{t},{y},{}",
            xs.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
        ));
    }
    fs::write(path, lines.join("\n")).unwrap();
}

fn study_toml(csv: &Path) -> String {
    format!(
        r#"
[input]
format = "dense"
path = "{}"
treatment = "treatment"
outcome = "y"

[pipeline]
cv_folds = 5
lambda_points = 8
k_strata = 5
"#,
        csv.display()
    )
}

#[test]
fn analyze_randomized_cohort_recovers_effect() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cohort.csv");
    write_cohort(&csv, 2000, 6, 1, 0.0, 0.0);
    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, study_toml(&csv)).unwrap();
    let out = dir.path().join("o");
    let res = run(&[
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let nu = report["report"]["effect"]["nu_hat"].as_f64().unwrap();
    assert!((nu - 2.0).abs() < 0.1, "nu_hat {nu}");
    assert!(out.join("balance.csv").exists());
}

#[test]
fn analyze_near_separated_cohort_fails_equipoise() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cohort.csv");
    // strong assignment: wide logit spread, little preference mass in band
    write_cohort(&csv, 10000, 20, 2, 0.9, 0.0);
    let cfg = dir.path().join("study.toml");
    // finer lambda grid: scores must be sharp enough to balance within strata
    let toml = study_toml(&csv).replace("lambda_points = 8", "lambda_points = 16");
    fs::write(&cfg, toml).unwrap();
    let out = dir.path().join("o");
    let res = run(&[
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--strata",
        "40",
        "--trim",
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(
        code(&res),
        2,
        "equipoise {:?} balance {:?}",
        report["report"]["equipoise"],
        report["report"]["balance"]["max_abs_adjusted_smd"]
    );
}

#[test]
fn diagnose_confounded_single_stratum_fails_balance() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cohort.csv");
    write_cohort(&csv, 1500, 6, 3, 1.2, 1.5);
    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, study_toml(&csv)).unwrap();
    let out = dir.path().join("o");
    let res = run(&[
        "diagnose",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--strata",
        "1",
    ]);
    assert_eq!(code(&res), 3, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["report"].get("effect").is_none());
    assert!(report["report"].get("unadjusted").is_none());
    assert!(report["report"]["balance"]["pass"] == false);
}

#[test]
fn exclude_removes_covariate_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cohort.csv");
    // x_inst duplicates treatment: a pure instrument
    let mut rng = rng::stream(9, &[0xC12]);
    let mut lines = vec!["treatment,y,x_inst,x_a,x_b".to_string()];
    for _ in 0..800 {
        let t = rng.gen_bool(0.5) as u8;
        let a = rng.gen_bool(0.5) as u8;
        let b = rng.gen_bool(0.5) as u8;
        let y = 2.0 * t as f64 + rng.gen_range(-0.5..0.5);
        lines.push(format!("{t},{y},{t},{a},{b}"));
    }
    fs::write(&csv, lines.join("\n")).unwrap();
    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, study_toml(&csv)).unwrap();
    let excl = dir.path().join("exclude.txt");
    fs::write(&excl, "x_inst\n").unwrap();
    let out = dir.path().join("o");
    let res = run(&[
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--exclude",
        excl.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let balance = fs::read_to_string(out.join("balance.csv")).unwrap();
    assert!(!balance.contains("x_inst"));
    assert!(balance.contains("x_a"));
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&report).unwrap();
    let flagged = doc["report"]["screening"]["flagged"].as_array().unwrap();
    assert!(flagged.is_empty());
}

#[test]
fn missing_input_section_is_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, "[pipeline]\nk_strata = 5\n").unwrap();
    let res = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 64);
}

#[test]
fn missing_data_file_is_data_or_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, study_toml(Path::new("/nonexistent/cohort.csv"))).unwrap();
    let res = run(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 65);
}
