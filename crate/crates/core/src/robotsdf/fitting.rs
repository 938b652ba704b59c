use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::field::BernsteinField;
use super::model::{LinkField, ModelMetadata, RobotSdfModel};
use crate::basis::{AxisBox, BasisConfig};
use crate::error::{config, precondition, Error, Result};
use crate::fit::{fit_recursive, fit_tensor_grid, FitConfig, TensorGrid};
use crate::geometry::{
    sample_training_set, DistanceOracle, PosedShape, SamplingConfig, Shape, TriangleMesh,
};
use crate::kinematics::{GeometrySource, KinematicChain, Pose};

/// Largest `N` the automatic choice still fits recursively. Beyond it the
/// recursive update's `N⁶` memory and per-sample cost become impractical.
pub const AUTO_RECURSIVE_MAX_N: usize = 10;

/// Ridge weight for link fits. Link distances are smooth and well sampled, so
/// the fit wants far less shrinkage than the generic default: at `N = 24` a
/// weight of 1e-2 costs about a millimetre of surface accuracy on a capsule.
pub const LINK_LAMBDA: f64 = 1e-8;

/// Training samples per link for the recursive fit.
pub const LINK_SAMPLES: usize = 65_536;

/// Share of uniform samples in a link's training set. Raised from the usual
/// 10% because whole-robot queries land anywhere in the cube, not only near
/// the surface.
pub const LINK_UNIFORM_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Recursive least squares over scattered samples.
    Recursive,
    /// Exact ridge solve on a regular grid of oracle samples.
    TensorGrid,
    /// Recursive up to [`AUTO_RECURSIVE_MAX_N`], tensor grid above.
    #[default]
    Auto,
}

impl FitMethod {
    pub fn resolve(self, n: usize) -> FitMethod {
        match self {
            FitMethod::Auto if n <= AUTO_RECURSIVE_MAX_N => FitMethod::Recursive,
            FitMethod::Auto => FitMethod::TensorGrid,
            m => m,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Recursive => "recursive",
            FitMethod::TensorGrid => "tensor_grid",
            FitMethod::Auto => "auto",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotFitConfig {
    pub n_per_axis: usize,
    pub sampling: SamplingConfig,
    pub fit: FitConfig,
    pub method: FitMethod,
    pub seed: u64,
    /// Cube margin as a fraction of the largest geometry extent.
    pub margin_fraction: f64,
    /// Lower bound on the cube margin (m).
    pub min_margin: f64,
    /// Grid nodes per axis for the tensor-grid solver; defaults to
    /// `max(64, 3N)`.
    pub grid_resolution: Option<usize>,
}

impl Default for RobotFitConfig {
    fn default() -> Self {
        RobotFitConfig {
            n_per_axis: 8,
            sampling: SamplingConfig::with_split(LINK_SAMPLES, LINK_UNIFORM_FRACTION),
            fit: FitConfig {
                lambda: LINK_LAMBDA,
                ..FitConfig::default()
            },
            method: FitMethod::Auto,
            seed: 0,
            margin_fraction: 0.25,
            min_margin: 0.05,
            grid_resolution: None,
        }
    }
}

impl RobotFitConfig {
    pub fn grid_resolution(&self) -> usize {
        self.grid_resolution
            .unwrap_or((3 * self.n_per_axis).max(64))
    }
}

/// Geometry of one link in its frame.
#[derive(Debug, Clone)]
pub struct LinkGeometry {
    pub name: String,
    pub frame: usize,
    pub shape: PosedShape,
}

/// Loads every attachment of `chain`, reading meshes from disk.
pub fn link_geometries(chain: &KinematicChain) -> Result<Vec<LinkGeometry>> {
    chain
        .attachments
        .iter()
        .map(|att| {
            let shape = match &att.geometry {
                GeometrySource::Primitive(p) => Shape::Primitive(*p),
                GeometrySource::Mesh { path } => {
                    Shape::Mesh(Arc::new(TriangleMesh::load(path).map_err(|e| {
                        prefix_error(e, &format!("link '{}': loading {path}", att.name))
                    })?))
                }
            };
            Ok(LinkGeometry {
                name: att.name.clone(),
                frame: att.frame,
                shape: PosedShape::new(shape, att.pose.unwrap_or_else(Pose::identity)),
            })
        })
        .collect()
}

fn prefix_error(e: Error, prefix: &str) -> Error {
    match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{prefix}: {io}"))),
        Error::Precondition(m) => Error::Precondition(format!("{prefix}: {m}")),
        Error::DimensionMismatch(m) => Error::DimensionMismatch(format!("{prefix}: {m}")),
        Error::InvalidConfig(m) => Error::InvalidConfig(format!("{prefix}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{prefix}: {m}")),
        Error::Format(m) => Error::Format(format!("{prefix}: {m}")),
        Error::Json(j) => Error::Format(format!("{prefix}: {j}")),
    }
}

/// The geometry AABB made cubic about its center, then padded on every side by
/// `max(margin_fraction · largest extent, min_margin)`.
pub fn link_domain(bounds: &AxisBox, margin_fraction: f64, min_margin: f64) -> Result<AxisBox> {
    let extent = bounds.extent().max();
    if !(extent.is_finite() && extent >= 0.0) {
        return Err(precondition("geometry bounds are not finite"));
    }
    let margin = (margin_fraction * extent).max(min_margin);
    let side = extent + 2.0 * margin;
    AxisBox::cube(bounds.center(), side)
}

/// Seed for link `index`, decorrelated from its neighbours.
pub fn link_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFitSummary {
    pub samples: usize,
    pub method: FitMethod,
}

/// Fits one field to `shape` on its default cube domain.
pub fn fit_link(
    shape: &dyn DistanceOracle,
    cfg: &RobotFitConfig,
    seed: u64,
) -> Result<(BernsteinField, LinkFitSummary)> {
    if !(cfg.margin_fraction >= 0.0 && cfg.min_margin > 0.0) {
        return Err(config(
            "domain margins must be non-negative with a positive minimum",
        ));
    }
    let domain = link_domain(&shape.bounding_box(), cfg.margin_fraction, cfg.min_margin)?;
    let basis = BasisConfig::new(cfg.n_per_axis, domain)?;
    let method = cfg.method.resolve(cfg.n_per_axis);
    let (weights, samples) = match method {
        FitMethod::Recursive => {
            let set = sample_training_set(shape, &cfg.sampling, &domain, seed)?;
            let points: Vec<Vector3<f64>> = set.iter().map(|s| s.position).collect();
            let d: Vec<f64> = set.iter().map(|s| s.distance).collect();
            (fit_recursive(&points, &d, &basis, &cfg.fit)?, set.len())
        }
        FitMethod::TensorGrid => {
            let r = cfg.grid_resolution();
            let grid = TensorGrid::sample(&basis, r, |p| shape.signed_distance(p))?;
            (fit_tensor_grid(&grid, &basis, &cfg.fit)?, r * r * r)
        }
        FitMethod::Auto => unreachable!("resolved above"),
    };
    Ok((
        BernsteinField::new(basis, weights)?,
        LinkFitSummary { samples, method },
    ))
}

/// Fits every link independently in its own frame and assembles the model.
pub fn fit_robot(
    chain: &KinematicChain,
    geometries: &[LinkGeometry],
    cfg: &RobotFitConfig,
) -> Result<RobotSdfModel> {
    chain.validate()?;
    if geometries.is_empty() {
        return Err(precondition("no link geometry to fit"));
    }
    let mut links = Vec::with_capacity(geometries.len());
    let mut samples = Vec::with_capacity(geometries.len());
    let mut method = cfg.method;
    for (i, g) in geometries.iter().enumerate() {
        log::info!(
            "fitting link '{}' (frame {}) at N = {}",
            g.name,
            g.frame,
            cfg.n_per_axis
        );
        let (field, summary) = fit_link(&g.shape, cfg, link_seed(cfg.seed, i))
            .map_err(|e| prefix_error(e, &format!("link '{}'", g.name)))?;
        links.push(LinkField {
            name: g.name.clone(),
            frame: g.frame,
            field,
        });
        samples.push(summary.samples);
        method = summary.method;
    }
    let metadata = ModelMetadata {
        provenance: format!(
            "fitted per link on a cube domain (margin {} of extent, min {} m)",
            cfg.margin_fraction, cfg.min_margin
        ),
        n_per_axis: cfg.n_per_axis,
        seed: cfg.seed,
        fit_method: method.name().into(),
        lambda: cfg.fit.lambda,
        samples_per_link: samples,
    };
    RobotSdfModel::new(chain.clone(), links, metadata)
}
