use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use linkfield_core::basis::AxisBox;
use linkfield_core::robotsdf::{export_level_set_grid, posed_domain_bounds, RobotSdfModel};

use super::{parse_list, pick, require_path, NumList};
use crate::manifest::{load_config, out_dir, write_manifest};
use crate::{CliError, CliResult, Common};

pub const GRID_FILE: &str = "grid.bin";

#[derive(Args, Debug)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Configuration as `q1,q2,...` (default: all zeros).
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    pub q: Option<NumList>,
    /// Lower corner `x,y,z` (default: box around the posed link domains).
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    pub min: Option<NumList>,
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    pub max: Option<NumList>,
    /// Nodes per axis, one value or `nx,ny,nz`.
    #[arg(long, value_parser = parse_list)]
    pub resolution: Option<NumList>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFileConfig {
    model: Option<PathBuf>,
    seed: Option<u64>,
    q: Option<Vec<f64>>,
    min: Option<Vec<f64>>,
    max: Option<Vec<f64>>,
    resolution: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct GridOptions {
    model: String,
    q: Vec<f64>,
    domain: AxisBox,
    resolution: [usize; 3],
}

fn corner(v: Vec<f64>, name: &str) -> CliResult<Vector3<f64>> {
    if v.len() != 3 {
        return Err(CliError::Validation(format!(
            "--{name} needs three values, got {}",
            v.len()
        )));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn resolution(v: Vec<f64>) -> CliResult<[usize; 3]> {
    let as_count = |x: f64| {
        if x.fract() == 0.0 && x >= 0.0 && x <= usize::MAX as f64 {
            Ok(x as usize)
        } else {
            Err(CliError::Validation(format!(
                "resolution must be a whole number, got {x}"
            )))
        }
    };
    match v.len() {
        1 => {
            let r = as_count(v[0])?;
            Ok([r; 3])
        }
        3 => Ok([as_count(v[0])?, as_count(v[1])?, as_count(v[2])?]),
        n => Err(CliError::Validation(format!(
            "--resolution takes one or three values, got {n}"
        ))),
    }
}

pub fn run(args: GridArgs) -> CliResult<()> {
    let file: GridFileConfig = load_config(&args.common)?;
    let model_path = require_path(args.model, file.model, "model")?;
    let seed = pick(args.common.seed, file.seed, 0);
    let model = RobotSdfModel::load(&model_path)?;
    let q = pick(args.q.map(|l| l.0), file.q, vec![0.0; model.n_joints()]);
    if q.len() != model.n_joints() {
        return Err(CliError::Validation(format!(
            "--q has {} values, the model has {} joints",
            q.len(),
            model.n_joints()
        )));
    }
    let default_box = posed_domain_bounds(&model, &model.chain.joint_frames(&q)?);
    let domain = AxisBox {
        min: args
            .min
            .map(|l| l.0)
            .or(file.min)
            .map(|v| corner(v, "min"))
            .transpose()?
            .unwrap_or(default_box.min),
        max: args
            .max
            .map(|l| l.0)
            .or(file.max)
            .map(|v| corner(v, "max"))
            .transpose()?
            .unwrap_or(default_box.max),
    };
    let res = resolution(pick(
        args.resolution.map(|l| l.0),
        file.resolution,
        vec![64.0],
    ))?;

    let grid = export_level_set_grid(&model, &q, &domain, res)?;
    let dir = out_dir(&args.common)?;
    let mut w = BufWriter::new(std::fs::File::create(dir.join(GRID_FILE))?);
    grid.write(&mut w)?;
    std::io::Write::flush(&mut w)?;
    let options = GridOptions {
        model: model_path.display().to_string(),
        q,
        domain,
        resolution: res,
    };
    write_manifest(&dir, "grid", &args.common, seed, &options, &[GRID_FILE])?;
    println!(
        "wrote {} values to {}",
        grid.values.len(),
        dir.join(GRID_FILE).display()
    );
    Ok(())
}
