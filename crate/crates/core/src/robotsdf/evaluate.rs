use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::field::BernsteinField;
use super::fitting::LinkGeometry;
use super::model::{Composition, RobotSdfModel};
use crate::basis::AxisBox;
use crate::error::{config, precondition, Result};
use crate::geometry::{
    accuracy_report, chamfer_distance, AccuracyReport, DistanceOracle, DEFAULT_NEAR_THRESHOLD,
};
use crate::kinematics::{JointFrames, KinematicChain, Pose};

/// Exact whole-robot distance from the link geometries.
pub struct RobotOracle<'a> {
    pub geometries: &'a [LinkGeometry],
}

impl RobotOracle<'_> {
    pub fn distance(&self, frames: &JointFrames, p: &Vector3<f64>) -> f64 {
        self.geometries
            .iter()
            .map(|g| {
                g.shape
                    .signed_distance(&frames.poses[g.frame].apply_inverse(p))
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// World AABB of the posed geometry.
    pub fn world_bounds(&self, frames: &JointFrames) -> AxisBox {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for g in self.geometries {
            let b = g.shape.bounding_box();
            let pose = &frames.poses[g.frame];
            for i in 0..8 {
                let corner = Vector3::from_fn(|k, _| {
                    if (i >> k) & 1 == 1 {
                        b.max[k]
                    } else {
                        b.min[k]
                    }
                });
                let w = pose.apply(&corner);
                min = min.inf(&w);
                max = max.sup(&w);
            }
        }
        AxisBox { min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub n_configs: usize,
    pub n_points: usize,
    pub near_threshold: f64,
    /// Share of points drawn around the surface; the rest are uniform in
    /// `volume`.
    pub surface_fraction: f64,
    /// Noise added to surface points (m).
    pub surface_sigma: f64,
    pub volume: QueryVolume,
}

/// Where the uniformly drawn query points live.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QueryVolume {
    /// Union of the posed link domain cubes, i.e. the region the fields were
    /// fitted over.
    LinkDomains,
    /// World bounding box of the posed geometry grown by `padding` (m).
    PaddedBounds { padding: f64 },
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            n_configs: 20,
            n_points: 1000,
            near_threshold: DEFAULT_NEAR_THRESHOLD,
            surface_fraction: 0.5,
            surface_sigma: 0.02,
            volume: QueryVolume::LinkDomains,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEvaluation {
    pub report: AccuracyReport,
    pub n_queries: usize,
    /// Wall time spent inside the model queries.
    pub eval_seconds: f64,
}

impl AccuracyEvaluation {
    pub fn ms_per_kquery(&self) -> f64 {
        if self.n_queries == 0 {
            0.0
        } else {
            self.eval_seconds * 1e3 / (self.n_queries as f64 / 1e3)
        }
    }
}

/// Uniform configuration inside the chain's limits.
pub fn random_configuration(chain: &KinematicChain, rng: &mut impl Rng) -> Vec<f64> {
    chain
        .q_min
        .iter()
        .zip(&chain.q_max)
        .map(|(lo, hi)| rng.random_range(*lo..*hi))
        .collect()
}

/// Scores the model against the geometry oracle over random configurations.
pub fn evaluate_accuracy(
    model: &RobotSdfModel,
    geometries: &[LinkGeometry],
    cfg: &EvaluationConfig,
    seed: u64,
) -> Result<AccuracyEvaluation> {
    let oracle = RobotOracle { geometries };
    evaluate_with_truth(model, geometries, cfg, seed, |frames, p| {
        oracle.distance(frames, p)
    })
}

/// Same protocol with a caller-supplied ground truth; `geometries` only
/// drive where query points are placed.
pub fn evaluate_with_truth(
    model: &RobotSdfModel,
    geometries: &[LinkGeometry],
    cfg: &EvaluationConfig,
    seed: u64,
    truth: impl Fn(&JointFrames, &Vector3<f64>) -> f64,
) -> Result<AccuracyEvaluation> {
    if geometries.is_empty() {
        return Err(precondition("evaluation needs link geometry"));
    }
    let padding_ok = match cfg.volume {
        QueryVolume::LinkDomains => true,
        QueryVolume::PaddedBounds { padding } => padding >= 0.0,
    };
    if !(0.0..=1.0).contains(&cfg.surface_fraction) || !(cfg.surface_sigma >= 0.0) || !padding_ok {
        return Err(config("invalid evaluation point distribution"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle = RobotOracle { geometries };
    let areas: Vec<f64> = geometries.iter().map(|g| g.shape.surface_area()).collect();
    let total_area: f64 = areas.iter().sum();
    let noise = Normal::new(0.0, cfg.surface_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| config(e.to_string()))?;
    let n_surface = (cfg.n_points as f64 * cfg.surface_fraction).round() as usize;

    let mut predicted = Vec::with_capacity(cfg.n_configs * cfg.n_points);
    let mut truths = Vec::with_capacity(cfg.n_configs * cfg.n_points);
    let mut eval_seconds = 0.0;
    for _ in 0..cfg.n_configs {
        let q = random_configuration(&model.chain, &mut rng);
        let frames = model.chain.joint_frames(&q)?;
        let bounds = match cfg.volume {
            QueryVolume::LinkDomains => posed_domain_bounds(model, &frames),
            QueryVolume::PaddedBounds { padding } => oracle.world_bounds(&frames).expanded(padding),
        };
        let mut points = Vec::with_capacity(cfg.n_points);
        for i in 0..cfg.n_points {
            let p = if i < n_surface {
                let mut pick = rng.random::<f64>() * total_area;
                let mut link = geometries.len() - 1;
                for (k, a) in areas.iter().enumerate() {
                    if pick < *a {
                        link = k;
                        break;
                    }
                    pick -= a;
                }
                let g = &geometries[link];
                let local = g.shape.surface_point(&mut rng);
                let offset = Vector3::from_fn(|_, _| noise.sample(&mut rng));
                frames.poses[g.frame].apply(&local) + offset
            } else {
                // Rejection sampling from the bounding box is uniform on the union.
                loop {
                    let p = Vector3::from_fn(|k, _| rng.random_range(bounds.min[k]..bounds.max[k]));
                    if cfg.volume != QueryVolume::LinkDomains || in_some_domain(model, &frames, &p)
                    {
                        break p;
                    }
                }
            };
            points.push(p);
        }
        let start = Instant::now();
        let d = model.distances(&q, &points, Composition::HardMin)?;
        eval_seconds += start.elapsed().as_secs_f64();
        predicted.extend(d);
        truths.extend(points.iter().map(|p| truth(&frames, p)));
    }
    let report = accuracy_report(&predicted, &truths, cfg.near_threshold)?;
    Ok(AccuracyEvaluation {
        report,
        n_queries: predicted.len(),
        eval_seconds,
    })
}

fn posed_corners<'a>(
    domain: &'a AxisBox,
    pose: &'a Pose,
) -> impl Iterator<Item = Vector3<f64>> + 'a {
    (0..8).map(move |i| {
        pose.apply(&Vector3::from_fn(|k, _| {
            if (i >> k) & 1 == 1 {
                domain.max[k]
            } else {
                domain.min[k]
            }
        }))
    })
}

/// Bounding box of every link's fitting domain, posed at `frames`.
pub fn posed_domain_bounds(model: &RobotSdfModel, frames: &JointFrames) -> AxisBox {
    let mut min = Vector3::repeat(f64::INFINITY);
    let mut max = Vector3::repeat(f64::NEG_INFINITY);
    for l in &model.links {
        for w in posed_corners(&l.field.cfg.domain, &frames.poses[l.frame]) {
            min = min.inf(&w);
            max = max.sup(&w);
        }
    }
    AxisBox { min, max }
}

fn in_some_domain(model: &RobotSdfModel, frames: &JointFrames, p: &Vector3<f64>) -> bool {
    model.links.iter().any(|l| {
        l.field
            .cfg
            .domain
            .contains(&frames.poses[l.frame].apply_inverse(p))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceChamferConfig {
    /// Grid nodes per axis for extracting the fitted zero level set.
    pub resolution: usize,
    /// Points drawn from each surface. Two independent samplings of one
    /// surface already sit about `0.5 / sqrt(n / area)` apart on average, so
    /// this must be large for the score to reflect the fit.
    pub n_points: usize,
}

impl Default for SurfaceChamferConfig {
    fn default() -> Self {
        SurfaceChamferConfig {
            resolution: 128,
            n_points: 1_000_000,
        }
    }
}

/// Chamfer distance between the fitted zero level set and the true surface,
/// both sampled uniformly by area. `truth` lives in the field's frame.
pub fn surface_chamfer(
    field: &BernsteinField,
    truth: &dyn DistanceOracle,
    cfg: &SurfaceChamferConfig,
    seed: u64,
) -> Result<f64> {
    if cfg.n_points == 0 {
        return Err(config("surface chamfer needs at least one point"));
    }
    let surface = field.zero_level_surface(cfg.resolution)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fitted = surface.sample_points(cfg.n_points, &mut rng)?;
    let exact: Vec<Vector3<f64>> = (0..cfg.n_points)
        .map(|_| truth.surface_point(&mut rng))
        .collect();
    chamfer_distance(&fitted, &exact)
}

/// World poses of every link geometry at `q`.
pub fn posed_geometry(
    chain: &KinematicChain,
    geometries: &[LinkGeometry],
    q: &[f64],
) -> Result<Vec<Pose>> {
    let frames = chain.joint_frames(q)?;
    Ok(geometries
        .iter()
        .map(|g| frames.poses[g.frame].compose(&g.shape.pose))
        .collect())
}
