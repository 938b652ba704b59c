use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use linkfield_core::geometry::DEFAULT_NEAR_THRESHOLD;
use linkfield_core::kinematics::KinematicChain;
use linkfield_core::robotsdf::{
    evaluate_accuracy, link_geometries, EvaluationConfig, QueryVolume, RobotSdfModel,
};

use super::{pick, require_path};
use crate::manifest::{load_config, out_dir, write_manifest};
use crate::{CliError, CliResult, Common};

pub const EVAL_FILE: &str = "eval.csv";

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Chain file to take the exact geometry from instead of the model's own.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Random configurations.
    #[arg(long)]
    pub configs: Option<usize>,
    /// Query points per configuration.
    #[arg(long)]
    pub points: Option<usize>,
    /// Near/far split on the true distance (m).
    #[arg(long)]
    pub near_threshold: Option<f64>,
    /// Where uniform query points are drawn.
    #[arg(long, value_enum)]
    pub volume: Option<Volume>,
    /// Padding of the world bounding box for `--volume padded` (m).
    #[arg(long)]
    pub padding: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Volume {
    Domains,
    Padded,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalFileConfig {
    model: Option<PathBuf>,
    chain: Option<PathBuf>,
    seed: Option<u64>,
    configs: Option<usize>,
    points: Option<usize>,
    near_threshold: Option<f64>,
    volume: Option<Volume>,
    padding: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EvalOptions {
    model: String,
    chain: Option<String>,
    evaluation: EvaluationConfig,
}

/// Column set of the accuracy table; errors in mm, timing in ms per 1000 queries.
#[derive(Debug, Serialize)]
struct EvalRow {
    mae_near: f64,
    rmse_near: f64,
    mae_far: f64,
    rmse_far: f64,
    mae_avg: f64,
    rmse_avg: f64,
    ms_per_kquery: f64,
}

pub fn run(args: EvalArgs) -> CliResult<()> {
    let file: EvalFileConfig = load_config(&args.common)?;
    let model_path = require_path(args.model, file.model, "model")?;
    let chain_path = args.chain.or(file.chain);
    let seed = pick(args.common.seed, file.seed, 0);
    let volume = match pick(args.volume, file.volume, Volume::Domains) {
        Volume::Domains => QueryVolume::LinkDomains,
        Volume::Padded => QueryVolume::PaddedBounds {
            padding: pick(args.padding, file.padding, 0.1),
        },
    };
    let cfg = EvaluationConfig {
        n_configs: pick(args.configs, file.configs, 20),
        n_points: pick(args.points, file.points, 1000),
        near_threshold: pick(
            args.near_threshold,
            file.near_threshold,
            DEFAULT_NEAR_THRESHOLD,
        ),
        volume,
        ..EvaluationConfig::default()
    };

    let model = RobotSdfModel::load(&model_path)?;
    let geoms = match &chain_path {
        None => link_geometries(&model.chain)?,
        Some(p) => {
            let chain = KinematicChain::load(p)?;
            if chain.n_joints() != model.chain.n_joints()
                || chain.attachments.len() != model.links.len()
            {
                return Err(CliError::Validation(format!(
                    "chain {} has {} joints and {} attachments, model has {} joints and {} links",
                    p.display(),
                    chain.n_joints(),
                    chain.attachments.len(),
                    model.chain.n_joints(),
                    model.links.len()
                )));
            }
            link_geometries(&chain)?
        }
    };
    let ev = evaluate_accuracy(&model, &geoms, &cfg, seed)?;
    let r = &ev.report;
    let (near, far, all) = (r.near, r.far, r.all);
    let mm = |s: Option<linkfield_core::geometry::ErrorStats>, rmse: bool| {
        s.map_or(f64::NAN, |s| 1e3 * if rmse { s.rmse } else { s.mae })
    };
    let row = EvalRow {
        mae_near: mm(near, false),
        rmse_near: mm(near, true),
        mae_far: mm(far, false),
        rmse_far: mm(far, true),
        mae_avg: mm(all, false),
        rmse_avg: mm(all, true),
        ms_per_kquery: if args.common.no_timing {
            0.0
        } else {
            ev.ms_per_kquery()
        },
    };
    let dir = out_dir(&args.common)?;
    let mut w = csv::Writer::from_path(dir.join(EVAL_FILE))?;
    w.serialize(&row)?;
    w.flush()?;
    let options = EvalOptions {
        model: model_path.display().to_string(),
        chain: chain_path.map(|p| p.display().to_string()),
        evaluation: cfg,
    };
    write_manifest(&dir, "eval", &args.common, seed, &options, &[EVAL_FILE])?;
    println!(
        "MAE near {:.3} mm, far {:.3} mm, all {:.3} mm over {} queries",
        row.mae_near, row.mae_far, row.mae_avg, ev.n_queries
    );
    Ok(())
}
