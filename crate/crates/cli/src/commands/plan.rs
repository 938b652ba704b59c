use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use linkfield_core::planner::{
    batch_plan, cubic_spline_trajectory, GnConfig, PlanSolution, PlanStatus, ProblemFile,
};

use super::{indexed, pick, require_path};
use crate::manifest::{load_config, out_dir, write_manifest};
use crate::{CliError, CliResult, Common};

pub const SOLUTIONS_FILE: &str = "solutions.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "plan_summary.json";

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    pub common: Common,
    /// Lift problem file.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Model file used for every arm instead of the ones the problem names.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Random restarts.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Length of the start-to-goal trajectory (s).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Trajectory sample period (s).
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFileConfig {
    problem: Option<PathBuf>,
    model: Option<PathBuf>,
    seed: Option<u64>,
    seeds: Option<usize>,
    max_iters: Option<usize>,
    duration: Option<f64>,
    dt: Option<f64>,
    solver: Option<GnConfig>,
}

#[derive(Debug, Serialize)]
struct PlanOptions {
    problem: String,
    model: Option<String>,
    seeds: usize,
    duration: f64,
    dt: f64,
    solver: GnConfig,
}

/// How many runs missed each stopping criterion at their final iterate.
#[derive(Debug, Default, Serialize)]
struct FailureBreakdown {
    reach: usize,
    penetration: usize,
    limits: usize,
    normals: usize,
    max_iters: usize,
    stalled: usize,
}

#[derive(Debug, Serialize)]
struct PlanSummary {
    n_seeds: usize,
    n_converged: usize,
    success_rate: f64,
    /// Over converged runs; absent when none converged.
    median_iterations: Option<f64>,
    best_seed_index: usize,
    best_status: PlanStatus,
    best_cost: f64,
    failures: FailureBreakdown,
}

fn median(mut v: Vec<usize>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        (v[m - 1] + v[m]) as f64 / 2.0
    })
}

fn solution_record(s: &PlanSolution) -> Vec<String> {
    let f = |x: f64| x.to_string();
    let b = |x: bool| (x as u8).to_string();
    let mut r = vec![
        s.seed_index.to_string(),
        s.status.name().to_string(),
        s.iterations.to_string(),
        f(s.cost),
        f(s.norms.reach),
        f(s.norms.penetration),
        f(s.norms.upper),
        f(s.norms.lower),
        f(s.norms.regularization),
        b(s.flags.reach),
        b(s.flags.penetration),
        b(s.flags.limits),
        b(s.flags.normals),
        f(s.flags.normal_sum),
    ];
    r.extend(s.q_final.iter().map(|x| f(*x)));
    r
}

pub fn run(args: PlanArgs) -> CliResult<()> {
    let file: PlanFileConfig = load_config(&args.common)?;
    let problem_path = require_path(args.problem, file.problem, "problem")?;
    let model_override = args.model.or(file.model);
    let (mut problem_file, base_dir) = ProblemFile::load(&problem_path)?;
    if let Some(m) = &model_override {
        let abs = std::env::current_dir()?.join(m);
        for arm in &mut problem_file.arms {
            arm.model = abs.display().to_string();
        }
    }
    let seed = pick(args.common.seed, file.seed, problem_file.seed);
    let n_seeds = pick(args.seeds, file.seeds, 50);
    let mut solver = file.solver.unwrap_or_default();
    if let Some(m) = args.max_iters.or(file.max_iters) {
        solver.max_iters = m;
    }
    let duration = pick(args.duration, file.duration, 2.0);
    let dt = pick(args.dt, file.dt, 0.01);

    let problem = problem_file.build(&base_dir)?;
    let report = batch_plan(&problem, &solver, n_seeds, seed)?;
    let best = report
        .solutions
        .first()
        .ok_or_else(|| CliError::Internal("batch returned no solutions".into()))?;

    let dir = out_dir(&args.common)?;
    let n = problem.n_vars();
    let mut w = csv::Writer::from_path(dir.join(SOLUTIONS_FILE))?;
    let mut header: Vec<String> = [
        "seed_index",
        "status",
        "iterations",
        "cost",
        "reach_norm",
        "penetration_norm",
        "upper_norm",
        "lower_norm",
        "regularization_norm",
        "reach_ok",
        "penetration_ok",
        "limits_ok",
        "normals_ok",
        "normal_sum",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(indexed("q_final", n));
    w.write_record(&header)?;
    for s in &report.solutions {
        w.write_record(solution_record(s))?;
    }
    w.flush()?;

    // The trajectory always runs from the problem's initial configuration to
    // the best final configuration, converged or not.
    let traj = cubic_spline_trajectory(&problem.q_init(), &best.q_final, duration, dt)?;
    let mut w = csv::Writer::from_path(dir.join(TRAJECTORY_FILE))?;
    let mut header = vec!["t".to_string()];
    header.extend(indexed("q", n));
    w.write_record(&header)?;
    for wp in &traj {
        let mut r = vec![wp.t.to_string()];
        r.extend(wp.q.iter().map(|x| x.to_string()));
        w.write_record(&r)?;
    }
    w.flush()?;

    let mut failures = FailureBreakdown::default();
    for s in &report.solutions {
        failures.reach += !s.flags.reach as usize;
        failures.penetration += !s.flags.penetration as usize;
        failures.limits += !s.flags.limits as usize;
        failures.normals += !s.flags.normals as usize;
        failures.max_iters += (s.status == PlanStatus::MaxIters) as usize;
        failures.stalled += (s.status == PlanStatus::Stalled) as usize;
    }
    let summary = PlanSummary {
        n_seeds: report.n_seeds,
        n_converged: report.n_converged,
        success_rate: report.success_rate(),
        median_iterations: median(
            report
                .solutions
                .iter()
                .filter(|s| s.status == PlanStatus::Converged)
                .map(|s| s.iterations)
                .collect(),
        ),
        best_seed_index: best.seed_index,
        best_status: best.status,
        best_cost: best.cost,
        failures,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(dir.join(SUMMARY_FILE), text)?;

    let options = PlanOptions {
        problem: problem_path.display().to_string(),
        model: model_override.map(|p| p.display().to_string()),
        seeds: n_seeds,
        duration,
        dt,
        solver,
    };
    write_manifest(
        &dir,
        "plan",
        &args.common,
        seed,
        &options,
        &[SOLUTIONS_FILE, TRAJECTORY_FILE, SUMMARY_FILE],
    )?;
    println!(
        "{}/{} restarts converged ({:.0}%)",
        report.n_converged,
        report.n_seeds,
        100.0 * report.success_rate()
    );
    Ok(())
}
