use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use linkfield_core::fit::FitConfig;
use linkfield_core::geometry::{
    accuracy_report, sample_training_set, DistanceOracle, SamplingConfig, DEFAULT_NEAR_THRESHOLD,
};
use linkfield_core::kinematics::KinematicChain;
use linkfield_core::robotsdf::{
    fit_robot, link_geometries, link_seed, FitMethod, RobotFitConfig, LINK_LAMBDA, LINK_SAMPLES,
    LINK_UNIFORM_FRACTION,
};

use super::{pick, require_path};
use crate::manifest::{load_config, out_dir, write_manifest};
use crate::{CliError, CliResult, Common};

pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "fit_report.csv";

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Chain file with per-link geometry.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Basis functions per axis.
    #[arg(long)]
    pub n: Option<usize>,
    /// recursive, tensor_grid or auto.
    #[arg(long, value_parser = parse_method)]
    pub method: Option<FitMethod>,
    /// Training samples per link (recursive fits).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Share of training samples drawn uniformly in the link box.
    #[arg(long)]
    pub uniform_fraction: Option<f64>,
    /// Ridge weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Grid nodes per axis (tensor-grid fits).
    #[arg(long)]
    pub grid_resolution: Option<usize>,
    /// Held-out points per link for the fit report.
    #[arg(long)]
    pub holdout: Option<usize>,
}

fn parse_method(s: &str) -> Result<FitMethod, String> {
    match s {
        "recursive" => Ok(FitMethod::Recursive),
        "tensor_grid" => Ok(FitMethod::TensorGrid),
        "auto" => Ok(FitMethod::Auto),
        _ => Err(format!(
            "unknown fit method '{s}' (recursive, tensor_grid, auto)"
        )),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitFileConfig {
    chain: Option<PathBuf>,
    seed: Option<u64>,
    n: Option<usize>,
    method: Option<FitMethod>,
    samples: Option<usize>,
    uniform_fraction: Option<f64>,
    lambda: Option<f64>,
    grid_resolution: Option<usize>,
    holdout: Option<usize>,
}

#[derive(Debug, Serialize)]
struct FitOptions {
    chain: String,
    n: usize,
    method: FitMethod,
    samples: usize,
    uniform_fraction: f64,
    lambda: f64,
    grid_resolution: usize,
    holdout: usize,
}

#[derive(Debug, Serialize)]
struct LinkRow<'a> {
    link: &'a str,
    frame: usize,
    n_per_axis: usize,
    method: &'a str,
    training_samples: usize,
    holdout_points: usize,
    mae_mm: f64,
    rmse_mm: f64,
    mae_near_mm: f64,
    mae_far_mm: f64,
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let file: FitFileConfig = load_config(&args.common)?;
    let chain_path = require_path(args.chain, file.chain, "chain")?;
    let seed = pick(args.common.seed, file.seed, 0);
    let n = pick(args.n, file.n, 8);
    let samples = pick(args.samples, file.samples, LINK_SAMPLES);
    let uniform_fraction = pick(
        args.uniform_fraction,
        file.uniform_fraction,
        LINK_UNIFORM_FRACTION,
    );
    if !(0.0..=1.0).contains(&uniform_fraction) {
        return Err(CliError::Validation(
            "uniform fraction must lie in [0, 1]".into(),
        ));
    }
    let mut cfg = RobotFitConfig {
        n_per_axis: n,
        sampling: SamplingConfig::with_split(samples, uniform_fraction),
        fit: FitConfig {
            lambda: pick(args.lambda, file.lambda, LINK_LAMBDA),
            ..FitConfig::default()
        },
        method: pick(args.method, file.method, FitMethod::Auto),
        seed,
        ..RobotFitConfig::default()
    };
    cfg.grid_resolution = args.grid_resolution.or(file.grid_resolution);
    let holdout = pick(args.holdout, file.holdout, 10_000);
    if holdout < 1 {
        return Err(CliError::Validation("--holdout must be at least 1".into()));
    }

    let chain = KinematicChain::load(&chain_path)?;
    let geoms = link_geometries(&chain)?;
    let model = fit_robot(&chain, &geoms, &cfg)?;
    let dir = out_dir(&args.common)?;
    model.save(dir.join(MODEL_FILE))?;

    let mut w = csv::Writer::from_path(dir.join(REPORT_FILE))?;
    for (i, (g, l)) in geoms.iter().zip(&model.links).enumerate() {
        // Training used link_seed(seed, i); the complement gives a separate stream.
        let holdout_seed = link_seed(!seed, i);
        let set = sample_training_set(
            &g.shape,
            &SamplingConfig::with_split(holdout, uniform_fraction),
            &l.field.cfg.domain,
            holdout_seed,
        )?;
        let pred: Vec<f64> = set.iter().map(|s| l.field.value(&s.position)).collect();
        let truth: Vec<f64> = set
            .iter()
            .map(|s| g.shape.signed_distance(&s.position))
            .collect();
        let r = accuracy_report(&pred, &truth, DEFAULT_NEAR_THRESHOLD)?;
        let mm = |s: Option<linkfield_core::geometry::ErrorStats>, rmse: bool| {
            s.map_or(f64::NAN, |s| if rmse { s.rmse * 1e3 } else { s.mae * 1e3 })
        };
        w.serialize(LinkRow {
            link: &g.name,
            frame: g.frame,
            n_per_axis: n,
            method: &model.metadata.fit_method,
            training_samples: model.metadata.samples_per_link[i],
            holdout_points: set.len(),
            mae_mm: mm(r.all, false),
            rmse_mm: mm(r.all, true),
            mae_near_mm: mm(r.near, false),
            mae_far_mm: mm(r.far, false),
        })?;
    }
    w.flush()?;

    let options = FitOptions {
        chain: chain_path.display().to_string(),
        n,
        method: cfg.method,
        samples,
        uniform_fraction,
        lambda: cfg.fit.lambda,
        grid_resolution: cfg.grid_resolution(),
        holdout,
    };
    write_manifest(
        &dir,
        "fit",
        &args.common,
        seed,
        &options,
        &[MODEL_FILE, REPORT_FILE],
    )?;
    println!(
        "wrote {} ({} links, N = {n})",
        dir.join(MODEL_FILE).display(),
        model.links.len()
    );
    Ok(())
}
