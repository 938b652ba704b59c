use std::io::Write;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Primitive, TriangleMesh};
use crate::basis::AxisBox;
use crate::error::{config, precondition, Error, Result};
use crate::kinematics::Pose;

/// Attempts per sample before giving up on keeping a perturbed point inside
/// the box.
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdfSample {
    pub position: Vector3<f64>,
    pub distance: f64,
}

/// Anything that can answer signed-distance queries and be sampled on its
/// surface.
pub trait DistanceOracle: Send + Sync {
    fn signed_distance(&self, p: &Vector3<f64>) -> f64;
    fn bounding_box(&self) -> AxisBox;
    fn surface_area(&self) -> f64;
    fn surface_point(&self, rng: &mut dyn RngCore) -> Vector3<f64>;
}

impl DistanceOracle for Primitive {
    fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.sdf(p)
    }
    fn bounding_box(&self) -> AxisBox {
        self.aabb()
    }
    fn surface_area(&self) -> f64 {
        Primitive::surface_area(self)
    }
    fn surface_point(&self, rng: &mut dyn RngCore) -> Vector3<f64> {
        self.sample_surface(rng)
    }
}

impl DistanceOracle for TriangleMesh {
    fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.sdf(p)
    }
    fn bounding_box(&self) -> AxisBox {
        self.aabb()
    }
    fn surface_area(&self) -> f64 {
        TriangleMesh::surface_area(self)
    }
    fn surface_point(&self, rng: &mut dyn RngCore) -> Vector3<f64> {
        self.sample_surface(rng)
    }
}

#[derive(Debug, Clone)]
pub enum Shape {
    Primitive(Primitive),
    Mesh(Arc<TriangleMesh>),
}

/// A shape placed in some frame by `pose` (shape coordinates → frame).
#[derive(Debug, Clone)]
pub struct PosedShape {
    pub shape: Shape,
    pub pose: Pose,
}

impl PosedShape {
    pub fn new(shape: Shape, pose: Pose) -> Self {
        PosedShape { shape, pose }
    }

    pub fn primitive(p: Primitive) -> Self {
        PosedShape {
            shape: Shape::Primitive(p),
            pose: Pose::identity(),
        }
    }

    fn inner(&self) -> &dyn DistanceOracle {
        match &self.shape {
            Shape::Primitive(p) => p,
            Shape::Mesh(m) => m.as_ref(),
        }
    }

    /// Primitive in the outer frame when the pose can be folded in exactly.
    pub fn as_placed_primitive(&self) -> Option<Primitive> {
        match &self.shape {
            Shape::Primitive(p) => p.translated_rotated(&self.pose),
            Shape::Mesh(_) => None,
        }
    }
}

impl DistanceOracle for PosedShape {
    fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.inner().signed_distance(&self.pose.apply_inverse(p))
    }

    fn bounding_box(&self) -> AxisBox {
        match &self.shape {
            Shape::Mesh(m) => {
                let mut min = Vector3::repeat(f64::INFINITY);
                let mut max = Vector3::repeat(f64::NEG_INFINITY);
                for v in m.vertices() {
                    let w = self.pose.apply(v);
                    min = min.inf(&w);
                    max = max.sup(&w);
                }
                AxisBox { min, max }
            }
            Shape::Primitive(p) => match p.translated_rotated(&self.pose) {
                Some(placed) => placed.aabb(),
                None => {
                    let b = p.aabb();
                    let mut min = Vector3::repeat(f64::INFINITY);
                    let mut max = Vector3::repeat(f64::NEG_INFINITY);
                    for i in 0..8 {
                        let corner = Vector3::from_fn(|k, _| {
                            if (i >> k) & 1 == 1 {
                                b.max[k]
                            } else {
                                b.min[k]
                            }
                        });
                        let w = self.pose.apply(&corner);
                        min = min.inf(&w);
                        max = max.sup(&w);
                    }
                    AxisBox { min, max }
                }
            },
        }
    }

    fn surface_area(&self) -> f64 {
        self.inner().surface_area()
    }

    fn surface_point(&self, rng: &mut dyn RngCore) -> Vector3<f64> {
        self.pose.apply(&self.inner().surface_point(rng))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_surface: usize,
    pub n_uniform: usize,
    pub sigma_near: f64,
    pub sigma_far: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_surface: 230_400,
            n_uniform: 25_600,
            sigma_near: 0.005,
            sigma_far: 0.05,
        }
    }
}

impl SamplingConfig {
    /// Keeps the 90/10 surface/uniform split for a total budget.
    /// `total` samples split 90/10 between surface and uniform points.
    pub fn with_total(total: usize) -> Self {
        Self::with_split(total, 0.1)
    }

    /// `total` samples with `uniform_fraction` of them uniform in the box.
    pub fn with_split(total: usize, uniform_fraction: f64) -> Self {
        let n_uniform = (total as f64 * uniform_fraction.clamp(0.0, 1.0)).round() as usize;
        SamplingConfig {
            n_surface: total - n_uniform,
            n_uniform,
            ..Default::default()
        }
    }

    pub fn total(&self) -> usize {
        self.n_surface + self.n_uniform
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("sigma_near", self.sigma_near),
            ("sigma_far", self.sigma_far),
        ] {
            if !(s.is_finite() && s > 0.0) {
                return Err(config(format!("{name} must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Surface points jittered at two noise scales plus uniform box points, all
/// labelled by the oracle. The first half of the surface budget uses
/// `sigma_near`, the rest `sigma_far`. Perturbed points that leave the box are
/// redrawn.
pub fn sample_training_set(
    shape: &dyn DistanceOracle,
    cfg: &SamplingConfig,
    domain: &AxisBox,
    seed: u64,
) -> Result<Vec<SdfSample>> {
    cfg.validate()?;
    domain.validate()?;
    let bb = shape.bounding_box();
    if !domain.contains_box(&bb) {
        return Err(precondition(format!(
            "sampling box [{:?}, {:?}] does not contain the shape bounds [{:?}, {:?}]",
            domain.min.as_slice(),
            domain.max.as_slice(),
            bb.min.as_slice(),
            bb.max.as_slice()
        )));
    }
    if cfg.n_surface > 0 && !(shape.surface_area() > 0.0) {
        return Err(precondition("shape has no surface to sample"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cfg.total());
    let n_near = cfg.n_surface / 2;
    let near = Normal::new(0.0, cfg.sigma_near).map_err(|e| config(e.to_string()))?;
    let far = Normal::new(0.0, cfg.sigma_far).map_err(|e| config(e.to_string()))?;
    for i in 0..cfg.n_surface {
        let noise = if i < n_near { &near } else { &far };
        let mut placed = None;
        for _ in 0..MAX_REDRAWS {
            let s = shape.surface_point(&mut rng);
            let p = s + Vector3::from_fn(|_, _| noise.sample(&mut rng));
            if domain.contains(&p) {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or_else(|| {
            Error::Precondition("perturbed surface samples keep leaving the sampling box".into())
        })?;
        out.push(SdfSample {
            position: p,
            distance: shape.signed_distance(&p),
        });
    }
    for _ in 0..cfg.n_uniform {
        let p = Vector3::from_fn(|k, _| rng.random_range(domain.min[k]..=domain.max[k]));
        out.push(SdfSample {
            position: p,
            distance: shape.signed_distance(&p),
        });
    }
    if out.iter().any(|s| !s.distance.is_finite()) {
        return Err(Error::Numerical(
            "oracle produced a non-finite distance".into(),
        ));
    }
    Ok(out)
}

/// Writes `x,y,z,d` rows with a header.
pub fn write_samples_csv(samples: &[SdfSample], mut w: impl Write) -> Result<()> {
    writeln!(w, "x,y,z,d")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{}",
            s.position.x, s.position.y, s.position.z, s.distance
        )?;
    }
    Ok(())
}
