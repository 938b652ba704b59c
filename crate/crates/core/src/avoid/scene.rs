use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{
    draw_episode, AvoidanceScene, ControllerConfig, EpisodeSampling, EpisodeSetup, Obstacle,
    ObstacleArm, TimedWaypoint, DEFAULT_OBSTACLE_SAMPLES,
};
use crate::error::{precondition, Error, Result};
use crate::kinematics::{KinematicChain, Pose};
use crate::robotsdf::RobotSdfModel;

pub const SCENE_FORMAT: &str = "linkfield-avoid-scene";
pub const SCENE_VERSION: u32 = 1;

/// File form of an avoidance experiment. When `q0`, `target` and (for an
/// arm obstacle) `script` are all given every episode replays them;
/// otherwise each episode draws its own from its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub format: String,
    pub version: u32,
    pub controlled: ControlledEntry,
    pub obstacle: ObstacleEntry,
    #[serde(default)]
    pub q0: Option<Vec<f64>>,
    #[serde(default)]
    pub target: Option<Vector3<f64>>,
    #[serde(default = "default_samples")]
    pub n_obstacle_samples: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub sampling: EpisodeSampling,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    DEFAULT_OBSTACLE_SAMPLES
}

fn default_max_steps() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledEntry {
    /// Model file, relative paths taken from the scene file's directory.
    pub model: String,
    #[serde(default = "Pose::identity")]
    pub base: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObstacleEntry {
    Arm {
        /// Chain file with geometry.
        chain: String,
        #[serde(default = "Pose::identity")]
        base: Pose,
        #[serde(default)]
        script: Option<Vec<TimedWaypoint>>,
    },
    Points {
        points: Vec<Vector3<f64>>,
    },
}

fn resolve(base_dir: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_relative() {
        base_dir.join(p)
    } else {
        p
    }
}

/// A scene file with its model and obstacle chain loaded.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub file: SceneFile,
    pub model: Arc<RobotSdfModel>,
    pub obstacle_chain: Option<KinematicChain>,
}

impl SceneFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("scene file: {e}")))?;
        if file.format != SCENE_FORMAT {
            return Err(Error::Format(format!(
                "expected format '{SCENE_FORMAT}', found '{}'",
                file.format
            )));
        }
        if file.version != SCENE_VERSION {
            return Err(Error::Format(format!(
                "unsupported scene version {}",
                file.version
            )));
        }
        if file.n_obstacle_samples < 1 || file.max_steps < 1 {
            return Err(precondition(
                "n_obstacle_samples and max_steps must be at least 1",
            ));
        }
        file.controller.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Reads the scene and everything it refers to. `model_override`
    /// replaces the controlled model path.
    pub fn load(path: impl AsRef<Path>, model_override: Option<&Path>) -> Result<LoadedScene> {
        let path = path.as_ref();
        let file = Self::from_json(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let model_path = model_override
            .map(Path::to_path_buf)
            .unwrap_or_else(|| resolve(&dir, &file.controlled.model));
        let model = RobotSdfModel::load(&model_path).map_err(|e| {
            Error::Format(format!("controlled model {}: {e}", model_path.display()))
        })?;
        let obstacle_chain =
            match &file.obstacle {
                ObstacleEntry::Arm { chain, .. } => {
                    let p = resolve(&dir, chain);
                    Some(KinematicChain::load(&p).map_err(|e| {
                        Error::Format(format!("obstacle chain {}: {e}", p.display()))
                    })?)
                }
                ObstacleEntry::Points { .. } => None,
            };
        Ok(LoadedScene {
            file,
            model: Arc::new(model),
            obstacle_chain,
        })
    }
}

impl LoadedScene {
    /// The scene and start state of the episode drawn from `seed`.
    pub fn episode(&self, seed: u64) -> Result<(AvoidanceScene, EpisodeSetup)> {
        let f = &self.file;
        let base = f.controlled.base;
        let (scene, setup) = match (&f.obstacle, &self.obstacle_chain) {
            (
                ObstacleEntry::Arm {
                    base: obase,
                    script,
                    ..
                },
                Some(chain),
            ) => match (&f.q0, &f.target, script) {
                (Some(q0), Some(target), Some(script)) => {
                    let arm = ObstacleArm::new(chain.clone(), *obase, script.clone())?;
                    let scene =
                        AvoidanceScene::new(self.model.clone(), base, Obstacle::Arm(arm), *target)?;
                    (
                        scene,
                        EpisodeSetup {
                            q0: q0.clone(),
                            target: *target,
                            script: script.clone(),
                        },
                    )
                }
                _ => draw_episode(
                    &self.model,
                    base,
                    chain,
                    *obase,
                    &f.controller,
                    &f.sampling,
                    seed,
                )?,
            },
            (ObstacleEntry::Points { points }, _) => {
                let (Some(q0), Some(target)) = (&f.q0, &f.target) else {
                    return Err(precondition("a point-cloud scene needs q0 and target"));
                };
                let scene = AvoidanceScene::new(
                    self.model.clone(),
                    base,
                    Obstacle::Points(points.clone()),
                    *target,
                )?;
                (
                    scene,
                    EpisodeSetup {
                        q0: q0.clone(),
                        target: *target,
                        script: vec![],
                    },
                )
            }
            _ => unreachable!("arm obstacles always load a chain"),
        };
        Ok((scene.with_samples(f.n_obstacle_samples)?, setup))
    }
}
