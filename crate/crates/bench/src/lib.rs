//! Shared inputs for the benchmarks.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linkfield_core::robotsdf::RobotSdfModel;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// The shipped N = 8 planar-arm model.
pub fn planar_model() -> Arc<RobotSdfModel> {
    Arc::new(RobotSdfModel::load(fixture("planar_arm_n8.json")).expect("fixture model"))
}

/// Query points spread over the planar arm's workspace.
pub fn workspace_points(count: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            Vector3::new(
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.2..0.2),
            )
        })
        .collect()
}
