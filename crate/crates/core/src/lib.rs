pub mod avoid;
pub mod basis;
pub mod error;
pub mod fit;
pub mod fixtures;
pub mod geometry;
pub mod kinematics;
pub mod planner;
pub mod robotsdf;

pub use error::{Error, Result};
