use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};

use linkfield_core::avoid::{run_episode, ControllerConfig, EpisodeReport, SceneFile};

use super::{indexed, pick, require_path};
use crate::manifest::{elapsed_ms, load_config, out_dir, write_manifest};
use crate::{CliResult, Common};

pub const EPISODES_FILE: &str = "episodes.csv";
pub const TRAJECTORY_DIR: &str = "trajectories";

#[derive(Args, Debug)]
pub struct AvoidArgs {
    #[command(flatten)]
    pub common: Common,
    /// Avoidance scene file.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Model file for the controlled arm instead of the one the scene names.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Control steps per episode.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Also write every episode's joint trajectory.
    #[arg(long)]
    pub trajectories: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AvoidFileConfig {
    scene: Option<PathBuf>,
    model: Option<PathBuf>,
    seed: Option<u64>,
    episodes: Option<usize>,
    max_steps: Option<usize>,
    trajectories: Option<bool>,
    controller: Option<ControllerConfig>,
}

#[derive(Debug, Serialize)]
struct AvoidOptions {
    scene: String,
    model: Option<String>,
    episodes: usize,
    max_steps: usize,
    trajectories: bool,
    controller: ControllerConfig,
}

fn episode_record(label: &str, seed: &str, r: &EpisodeTotals) -> Vec<String> {
    vec![
        label.to_string(),
        seed.to_string(),
        r.reached.to_string(),
        r.qp_infeasible.to_string(),
        r.min_distance.to_string(),
        r.steps.to_string(),
        r.wall_ms.to_string(),
        r.slack_steps.to_string(),
    ]
}

/// One row of the episode table; the summary row sums counts and keeps the
/// smallest clearance.
#[derive(Debug, Clone, Copy)]
struct EpisodeTotals {
    reached: usize,
    qp_infeasible: usize,
    min_distance: f64,
    steps: usize,
    wall_ms: f64,
    slack_steps: usize,
}

impl EpisodeTotals {
    fn of(r: &EpisodeReport, wall_ms: f64) -> Self {
        EpisodeTotals {
            reached: r.reached as usize,
            qp_infeasible: r.qp_infeasible,
            min_distance: r.min_distance,
            steps: r.steps,
            wall_ms,
            slack_steps: r.slack_steps,
        }
    }

    fn add(self, o: EpisodeTotals) -> Self {
        EpisodeTotals {
            reached: self.reached + o.reached,
            qp_infeasible: self.qp_infeasible + o.qp_infeasible,
            min_distance: self.min_distance.min(o.min_distance),
            steps: self.steps + o.steps,
            wall_ms: self.wall_ms + o.wall_ms,
            slack_steps: self.slack_steps + o.slack_steps,
        }
    }
}

fn write_trajectory(path: &std::path::Path, r: &EpisodeReport, n_joints: usize) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(indexed("q", n_joints));
    header.extend(["clearance_m".to_string(), "used_slack".to_string()]);
    w.write_record(&header)?;
    for s in &r.trajectory {
        let mut row = vec![s.t.to_string()];
        row.extend(s.q.iter().map(|x| x.to_string()));
        row.push(s.clearance.to_string());
        row.push((s.used_slack as u8).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: AvoidArgs) -> CliResult<()> {
    let file: AvoidFileConfig = load_config(&args.common)?;
    let scene_path = require_path(args.scene, file.scene, "scene")?;
    let model_override = args.model.or(file.model);
    let mut loaded = SceneFile::load(&scene_path, model_override.as_deref())?;
    if let Some(c) = file.controller {
        c.validate()?;
        loaded.file.controller = c;
    }
    let seed = pick(args.common.seed, file.seed, loaded.file.seed);
    let episodes = pick(args.episodes, file.episodes, 100);
    let max_steps = pick(args.max_steps, file.max_steps, loaded.file.max_steps);
    let trajectories = args.trajectories || file.trajectories.unwrap_or(false);
    let cfg = loaded.file.controller;

    let dir = out_dir(&args.common)?;
    if trajectories {
        std::fs::create_dir_all(dir.join(TRAJECTORY_DIR))?;
    }
    let n_joints = loaded.model.n_joints();
    let mut w = csv::Writer::from_path(dir.join(EPISODES_FILE))?;
    w.write_record([
        "episode",
        "seed",
        "reached",
        "qp_infeasible",
        "min_distance_m",
        "steps",
        "wall_ms",
        "slack_steps",
    ])?;
    let mut total: Option<EpisodeTotals> = None;
    let mut outputs = vec![EPISODES_FILE.to_string()];
    for i in 0..episodes {
        let ep_seed = seed.wrapping_add(i as u64);
        let start = Instant::now();
        let (scene, setup) = loaded.episode(ep_seed)?;
        let report = run_episode(&scene, &cfg, &setup.q0, max_steps, ep_seed)?;
        let row = EpisodeTotals::of(&report, elapsed_ms(start, &args.common));
        w.write_record(episode_record(&i.to_string(), &ep_seed.to_string(), &row))?;
        total = Some(total.map_or(row, |t| t.add(row)));
        if trajectories {
            let name = format!("{TRAJECTORY_DIR}/episode_{i}.csv");
            write_trajectory(&dir.join(&name), &report, n_joints)?;
            outputs.push(name);
        }
        log::info!(
            "episode {i}: reached {} min distance {:.4} m",
            report.reached,
            report.min_distance
        );
    }
    if let Some(t) = total {
        w.write_record(episode_record("summary", "", &t))?;
        println!(
            "{}/{} episodes reached, {} infeasible QPs, {} slack steps, min distance {:.4} m",
            t.reached, episodes, t.qp_infeasible, t.slack_steps, t.min_distance
        );
    }
    w.flush()?;

    let options = AvoidOptions {
        scene: scene_path.display().to_string(),
        model: model_override.map(|p| p.display().to_string()),
        episodes,
        max_steps,
        trajectories,
        controller: cfg,
    };
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(&dir, "avoid", &args.common, seed, &options, &outputs)?;
    Ok(())
}
