//! Whole-robot distance fields: one Bernstein field per link, composed through
//! the kinematic chain by a hard or soft minimum.

mod evaluate;
mod field;
mod fitting;
mod grid;
mod model;

pub use evaluate::{
    evaluate_accuracy, evaluate_with_truth, posed_domain_bounds, posed_geometry,
    random_configuration, surface_chamfer, AccuracyEvaluation, EvaluationConfig, QueryVolume,
    RobotOracle, SurfaceChamferConfig,
};
pub use field::{link_field_eval, BernsteinField};
pub use fitting::{
    fit_link, fit_robot, link_domain, link_geometries, link_seed, FitMethod, LinkFitSummary,
    LinkGeometry, RobotFitConfig, AUTO_RECURSIVE_MAX_N, LINK_LAMBDA, LINK_SAMPLES,
    LINK_UNIFORM_FRACTION,
};
pub use grid::{export_level_set_grid, LevelSetGrid, GRID_MAGIC, MAX_GRID_CELLS};
pub use model::{
    Composition, LinkField, ModelMetadata, QueryResult, RobotSdfModel, DEFAULT_RHO, FLATTENING,
    MODEL_FORMAT, MODEL_VERSION,
};
