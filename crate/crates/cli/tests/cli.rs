use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

fn linkfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linkfield"))
        .args(args)
        .env_remove("LINKFIELD_OUT")
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = linkfield(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(args: &[&str]) -> (i32, String) {
    let out = linkfield(args);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Runs the same command into two directories and compares every output.
fn assert_reproducible(args: &[&str], files: &[&str]) {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let mut full = args.to_vec();
        let out = d.path().display().to_string();
        full.extend(["--out", &out, "--no-timing"]);
        run_ok(&full);
    }
    for f in files.iter().chain(&["manifest.json"]) {
        assert_eq!(
            read(a.path(), f),
            read(b.path(), f),
            "{f} differs between runs"
        );
    }
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(exit_code(&["--help"]).0, 0);
    assert_eq!(exit_code(&["fit", "--help"]).0, 0);
    assert_eq!(exit_code(&[]).0, 1);
    assert_eq!(exit_code(&["fit", "--bogus"]).0, 1);
}

#[test]
fn fit_rejects_bad_inputs() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().display().to_string();
    let chain = fixture("planar_arm.json");
    let (code, err) = exit_code(&["fit", "--chain", &chain, "--n", "1", "--out", &o]);
    assert_eq!(code, 1, "{err}");
    assert_eq!(exit_code(&["fit", "--out", &o]).0, 1, "missing chain");
    assert_eq!(
        exit_code(&["fit", "--chain", "/no/such/chain.json", "--out", &o]).0,
        1
    );
    let cfg = out.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"chain": "x.json", "unknown_key": 3}"#).unwrap();
    let (code, err) = exit_code(&["fit", "--config", &cfg.display().to_string(), "--out", &o]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown_key"), "{err}");
}

#[test]
fn fit_is_reproducible_and_loads() {
    let args = [
        "fit",
        "--chain",
        &fixture("planar_arm.json"),
        "--n",
        "4",
        "--method",
        "tensor_grid",
        "--grid-resolution",
        "12",
        "--holdout",
        "200",
        "--seed",
        "3",
    ];
    assert_reproducible(&args, &["model.json", "fit_report.csv"]);
    let d = tempfile::tempdir().unwrap();
    let o = d.path().display().to_string();
    let mut full = args.to_vec();
    full.extend(["--out", &o]);
    run_ok(&full);
    let model = linkfield_core::robotsdf::RobotSdfModel::load(d.path().join("model.json")).unwrap();
    assert_eq!(model.links.len(), 3);
    let report = String::from_utf8(read(d.path(), "fit_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
}

#[test]
fn config_values_yield_to_flags() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("cfg.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"model": "{}", "configs": 2, "points": 50}}"#,
            fixture("planar_arm_n8.json")
        ),
    )
    .unwrap();
    let o = d.path().join("out").display().to_string();
    run_ok(&[
        "eval",
        "--config",
        &cfg.display().to_string(),
        "--points",
        "30",
        "--out",
        &o,
    ]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(Path::new(&o), "manifest.json")).unwrap();
    assert_eq!(manifest["options"]["evaluation"]["n_configs"], 2);
    assert_eq!(manifest["options"]["evaluation"]["n_points"], 30);
}

#[test]
fn eval_columns_and_reproducibility() {
    let model = fixture("planar_arm_n8.json");
    let args = [
        "eval",
        "--model",
        &model,
        "--configs",
        "3",
        "--points",
        "200",
        "--seed",
        "9",
    ];
    assert_reproducible(&args, &["eval.csv"]);
    let d = tempfile::tempdir().unwrap();
    let o = d.path().display().to_string();
    run_ok(&[
        "eval",
        "--model",
        &model,
        "--configs",
        "2",
        "--points",
        "100",
        "--out",
        &o,
        "--no-timing",
    ]);
    let text = String::from_utf8(read(d.path(), "eval.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "mae_near,rmse_near,mae_far,rmse_far,mae_avg,rmse_avg,ms_per_kquery"
    );
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(row.len(), 7);
    assert!(row[..6].iter().all(|v| v.is_finite() && *v >= 0.0));
    assert_eq!(row[6], 0.0);
}

#[test]
fn eval_rejects_mismatched_chain() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path().display().to_string();
    let (code, err) = exit_code(&[
        "eval",
        "--model",
        &fixture("planar_arm_n8.json"),
        "--chain",
        &fixture("franka_capsules.json"),
        "--out",
        &o,
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("joints"), "{err}");
}

#[test]
fn plan_outputs_and_reproducibility() {
    let problem = fixture("planar_lift.json");
    assert_reproducible(
        &[
            "plan",
            "--problem",
            &problem,
            "--seeds",
            "10",
            "--seed",
            "2",
        ],
        &["solutions.csv", "trajectory.csv", "plan_summary.json"],
    );
    let d = tempfile::tempdir().unwrap();
    let o = d.path().display().to_string();
    run_ok(&[
        "plan",
        "--problem",
        &problem,
        "--seeds",
        "10",
        "--out",
        &o,
        "--dt",
        "0.1",
        "--duration",
        "1",
    ]);
    let summary: serde_json::Value =
        serde_json::from_slice(&read(d.path(), "plan_summary.json")).unwrap();
    assert_eq!(summary["n_seeds"], 10);
    let solutions = String::from_utf8(read(d.path(), "solutions.csv")).unwrap();
    assert_eq!(solutions.lines().count(), 11);
    let traj = String::from_utf8(read(d.path(), "trajectory.csv")).unwrap();
    let rows: Vec<&str> = traj.lines().collect();
    assert_eq!(rows[0], "t,q_0,q_1,q_2");
    assert_eq!(rows.len(), 12);
    // Starts at the problem's initial configuration.
    assert_eq!(rows[1], "0,0,0,0");
    assert!(rows[11].starts_with("1,"));
}

#[test]
fn plan_reports_missing_normal() {
    let d = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("planar_lift.json")).unwrap();
    let broken = text
        .replacen("\"normal\"", "\"nrml\"", 1)
        .replace("planar_arm_n8.json", &fixture("planar_arm_n8.json"));
    let p = d.path().join("lift.json");
    std::fs::write(&p, broken).unwrap();
    let o = d.path().join("out").display().to_string();
    let (code, err) = exit_code(&["plan", "--problem", &p.display().to_string(), "--out", &o]);
    assert_eq!(code, 1);
    assert!(err.contains("normal"), "{err}");
}

#[test]
fn plan_with_zero_successes_still_exits_zero() {
    let d = tempfile::tempdir().unwrap();
    let o = d.path().display().to_string();
    run_ok(&[
        "plan",
        "--problem",
        &fixture("planar_lift.json"),
        "--seeds",
        "3",
        "--max-iters",
        "1",
        "--out",
        &o,
    ]);
    assert!(d.path().join("plan_summary.json").exists());
}

#[test]
fn avoid_summary_row_aggregates_episodes() {
    let scene = fixture("two_arm_scene.json");
    assert_reproducible(
        &[
            "avoid",
            "--scene",
            &scene,
            "--episodes",
            "2",
            "--max-steps",
            "80",
            "--seed",
            "5",
        ],
        &["episodes.csv"],
    );
    let d = tempfile::tempdir().unwrap();
    let o = d.path().display().to_string();
    run_ok(&[
        "avoid",
        "--scene",
        &scene,
        "--episodes",
        "3",
        "--max-steps",
        "60",
        "--seed",
        "7",
        "--out",
        &o,
    ]);
    let mut rdr = csv::Reader::from_path(d.path().join("episodes.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "episode",
            "seed",
            "reached",
            "qp_infeasible",
            "min_distance_m",
            "steps",
            "wall_ms",
            "slack_steps"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    let col = |r: &csv::StringRecord, i: usize| r[i].parse::<f64>().unwrap();
    let (episodes, summary) = rows.split_at(3);
    let summary = &summary[0];
    assert_eq!(&summary[0], "summary");
    for (i, r) in episodes.iter().enumerate() {
        assert_eq!(&r[1], (7 + i).to_string().as_str());
    }
    for c in [2, 3, 5, 6, 7] {
        let sum: f64 = episodes.iter().map(|r| col(r, c)).sum();
        assert!(
            (col(summary, c) - sum).abs() <= 1e-9 * sum.abs().max(1.0),
            "column {}",
            header[c]
        );
    }
    let min = episodes
        .iter()
        .map(|r| col(r, 4))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(col(summary, 4), min);
}

#[test]
fn grid_is_reproducible_and_readable() {
    let model = fixture("planar_arm_n8.json");
    let args = [
        "grid",
        "--model",
        &model,
        "--q",
        "0.2,-0.4,0.1",
        "--resolution",
        "6,5,4",
    ];
    assert_reproducible(&args, &["grid.bin"]);
    let d = tempfile::tempdir().unwrap();
    let o = d.path().display().to_string();
    run_ok(&[
        "grid",
        "--model",
        &model,
        "--q",
        "0.2,-0.4,0.1",
        "--resolution",
        "6,5,4",
        "--out",
        &o,
    ]);
    let bytes = read(d.path(), "grid.bin");
    let grid = linkfield_core::robotsdf::LevelSetGrid::read(&bytes[..]).unwrap();
    assert_eq!(grid.resolution, [6, 5, 4]);
    assert_eq!(grid.q, vec![0.2, -0.4, 0.1]);
    let mut again = Vec::new();
    grid.write(&mut again).unwrap();
    assert_eq!(again, bytes);
    assert_eq!(
        exit_code(&["grid", "--model", &model, "--q", "0.1", "--out", &o]).0,
        1
    );
}

#[test]
fn out_directory_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_linkfield"))
        .args([
            "grid",
            "--model",
            &fixture("planar_arm_n8.json"),
            "--resolution",
            "3",
        ])
        .env("LINKFIELD_OUT", d.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.path().join("grid.bin").exists());
}
