use nalgebra::Vector3;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::AxisBox;
use crate::error::{config, Result};

/// Shapes with closed-form signed distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    Capsule {
        endpoint_a: Vector3<f64>,
        endpoint_b: Vector3<f64>,
        radius: f64,
    },
    /// Axis-aligned in its own frame; attach with a pose to rotate it.
    Box {
        center: Vector3<f64>,
        half_extents: Vector3<f64>,
    },
}

impl Primitive {
    pub fn sphere(center: Vector3<f64>, radius: f64) -> Result<Self> {
        let p = Primitive::Sphere { center, radius };
        p.validate()?;
        Ok(p)
    }

    pub fn capsule(
        endpoint_a: Vector3<f64>,
        endpoint_b: Vector3<f64>,
        radius: f64,
    ) -> Result<Self> {
        let p = Primitive::Capsule {
            endpoint_a,
            endpoint_b,
            radius,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn cuboid(center: Vector3<f64>, half_extents: Vector3<f64>) -> Result<Self> {
        let p = Primitive::Box {
            center,
            half_extents,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        match self {
            Primitive::Sphere { center, radius } => {
                if !finite(center) || !(radius.is_finite() && *radius > 0.0) {
                    return Err(config(format!(
                        "sphere needs a finite center and radius > 0, got {radius}"
                    )));
                }
            }
            Primitive::Capsule {
                endpoint_a,
                endpoint_b,
                radius,
            } => {
                if !finite(endpoint_a)
                    || !finite(endpoint_b)
                    || !(radius.is_finite() && *radius > 0.0)
                {
                    return Err(config("capsule needs finite endpoints and radius > 0"));
                }
                if endpoint_a == endpoint_b {
                    return Err(config("capsule endpoints must be distinct"));
                }
            }
            Primitive::Box {
                center,
                half_extents,
            } => {
                if !finite(center) || !half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
                    return Err(config(
                        "box needs a finite center and positive half extents",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => (p - center).norm() - radius,
            Primitive::Capsule {
                endpoint_a,
                endpoint_b,
                radius,
            } => (p - closest_on_segment(p, endpoint_a, endpoint_b)).norm() - radius,
            Primitive::Box {
                center,
                half_extents,
            } => {
                let q = (p - center).abs() - half_extents;
                let outside = q.map(|v| v.max(0.0)).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
        }
    }

    /// Analytic gradient of [`Primitive::sdf`]. On the medial axis an
    /// arbitrary valid subgradient is returned.
    pub fn gradient(&self, p: &Vector3<f64>) -> Vector3<f64> {
        match self {
            Primitive::Sphere { center, .. } => unit_or_x(p - center),
            Primitive::Capsule {
                endpoint_a,
                endpoint_b,
                ..
            } => unit_or_x(p - closest_on_segment(p, endpoint_a, endpoint_b)),
            Primitive::Box {
                center,
                half_extents,
            } => {
                let rel = p - center;
                let q = rel.abs() - half_extents;
                let sign = rel.map(|v| if v < 0.0 { -1.0 } else { 1.0 });
                if q.max() > 0.0 {
                    q.map(|v| v.max(0.0)).normalize().component_mul(&sign)
                } else {
                    let axis = q.imax();
                    let mut g = Vector3::zeros();
                    g[axis] = sign[axis];
                    g
                }
            }
        }
    }

    pub fn aabb(&self) -> AxisBox {
        match self {
            Primitive::Sphere { center, radius } => {
                let r = Vector3::repeat(*radius);
                AxisBox {
                    min: center - r,
                    max: center + r,
                }
            }
            Primitive::Capsule {
                endpoint_a,
                endpoint_b,
                radius,
            } => {
                let r = Vector3::repeat(*radius);
                AxisBox {
                    min: endpoint_a.inf(endpoint_b) - r,
                    max: endpoint_a.sup(endpoint_b) + r,
                }
            }
            Primitive::Box {
                center,
                half_extents,
            } => AxisBox {
                min: center - half_extents,
                max: center + half_extents,
            },
        }
    }

    pub fn surface_area(&self) -> f64 {
        use std::f64::consts::PI;
        match self {
            Primitive::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Primitive::Capsule {
                endpoint_a,
                endpoint_b,
                radius,
            } => {
                let len = (endpoint_b - endpoint_a).norm();
                4.0 * PI * radius * radius + 2.0 * PI * radius * len
            }
            Primitive::Box {
                half_extents: h, ..
            } => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
        }
    }

    /// One point drawn uniformly with respect to surface area.
    pub fn sample_surface(&self, rng: &mut dyn RngCore) -> Vector3<f64> {
        match self {
            Primitive::Sphere { center, radius } => center + random_unit(rng) * *radius,
            Primitive::Capsule {
                endpoint_a,
                endpoint_b,
                radius,
            } => {
                let axis = endpoint_b - endpoint_a;
                let len = axis.norm();
                let cap_area = 4.0 * radius * radius;
                let side_area = 2.0 * radius * len;
                if rng.random::<f64>() * (cap_area + side_area) < cap_area {
                    // Two hemispheres make one sphere; pick the end by side.
                    let u = random_unit(rng);
                    let end = if u.dot(&axis) >= 0.0 {
                        endpoint_b
                    } else {
                        endpoint_a
                    };
                    end + u * *radius
                } else {
                    let dir = axis / len;
                    let (e1, e2) = orthonormal_pair(&dir);
                    let phi = rng.random::<f64>() * std::f64::consts::TAU;
                    let t = rng.random::<f64>();
                    endpoint_a + axis * t + (e1 * phi.cos() + e2 * phi.sin()) * *radius
                }
            }
            Primitive::Box {
                center,
                half_extents: h,
            } => {
                let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random::<f64>() * total;
                let mut axis = 2;
                for (i, a) in areas.iter().enumerate() {
                    if pick < *a {
                        axis = i;
                        break;
                    }
                    pick -= a;
                }
                let mut local = Vector3::zeros();
                for i in 0..3 {
                    local[i] = if i == axis {
                        if rng.random_bool(0.5) {
                            h[i]
                        } else {
                            -h[i]
                        }
                    } else {
                        rng.random_range(-h[i]..=h[i])
                    };
                }
                center + local
            }
        }
    }

    /// Exact clearance between two sphere/capsule primitives (negative when
    /// they overlap). `None` when either is a box.
    pub fn distance_to(&self, other: &Primitive) -> Option<f64> {
        let (a0, a1, ra) = self.as_swept_sphere()?;
        let (b0, b1, rb) = other.as_swept_sphere()?;
        Some(segment_segment_distance(&a0, &a1, &b0, &b1) - ra - rb)
    }

    fn as_swept_sphere(&self) -> Option<(Vector3<f64>, Vector3<f64>, f64)> {
        match self {
            Primitive::Sphere { center, radius } => Some((*center, *center, *radius)),
            Primitive::Capsule {
                endpoint_a,
                endpoint_b,
                radius,
            } => Some((*endpoint_a, *endpoint_b, *radius)),
            Primitive::Box { .. } => None,
        }
    }

    /// Image under a rigid transform. Boxes only support rotations that map
    /// axes to axes, so general poses on boxes must go through the frame
    /// transform at query time instead.
    pub(crate) fn translated_rotated(&self, pose: &crate::kinematics::Pose) -> Option<Primitive> {
        match *self {
            Primitive::Sphere { center, radius } => Some(Primitive::Sphere {
                center: pose.apply(&center),
                radius,
            }),
            Primitive::Capsule {
                endpoint_a,
                endpoint_b,
                radius,
            } => Some(Primitive::Capsule {
                endpoint_a: pose.apply(&endpoint_a),
                endpoint_b: pose.apply(&endpoint_b),
                radius,
            }),
            Primitive::Box { .. } => None,
        }
    }
}

pub fn closest_on_segment(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Minimum distance between segments `[p1,q1]` and `[p2,q2]`; degenerate
/// segments (points) are allowed.
pub fn segment_segment_distance(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let eps = 1e-300;
    let (s, t);
    if a <= eps && e <= eps {
        return r.norm();
    }
    if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

pub(crate) fn random_unit(rng: &mut dyn RngCore) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng),
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng),
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng),
        );
        let n: f64 = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn orthonormal_pair(dir: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if dir.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = dir.cross(&helper).normalize();
    let e2 = dir.cross(&e1);
    (e1, e2)
}

fn unit_or_x(v: Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vector3::x()
    }
}
