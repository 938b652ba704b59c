use nalgebra::{DMatrix, Vector3};

use crate::basis::{bernstein_into, BasisConfig, PointFactors};
use crate::error::{dims, precondition, Result};
use crate::fit::mode_product;
use crate::geometry::{marching_tetrahedra, IsoSurface};

/// One link's distance field: Bernstein weights over a box in the link frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinField {
    pub cfg: BasisConfig,
    pub weights: Vec<f64>,
}

impl BernsteinField {
    pub fn new(cfg: BasisConfig, weights: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        if weights.len() != cfg.n_features() {
            return Err(dims(format!(
                "{} weights for a basis with {} features",
                weights.len(),
                cfg.n_features()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(precondition("field weights must be finite"));
        }
        Ok(BernsteinField { cfg, weights })
    }

    fn factors(&self, p_in_box: &Vector3<f64>) -> PointFactors {
        let d = &self.cfg.domain;
        let t = std::array::from_fn(|i| {
            ((p_in_box[i] - d.min[i]) / (d.max[i] - d.min[i])).clamp(0.0, 1.0)
        });
        PointFactors::at(&self.cfg, t)
    }

    /// Distance only; same exterior rule as [`BernsteinField::eval`].
    pub fn value(&self, p: &Vector3<f64>) -> f64 {
        let proj = self.cfg.domain.clamp(p);
        let inner = self.factors(&proj).value(&self.weights);
        if proj == *p {
            inner
        } else {
            (p - proj).norm() + inner
        }
    }

    /// Distance and gradient in the link frame.
    ///
    /// Outside the box the point is projected onto it and the Euclidean gap is
    /// added to the field value there. The gradient takes the gap direction on
    /// clamped axes and the field gradient on the others.
    pub fn eval(&self, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let proj = self.cfg.domain.clamp(p);
        let (inner, grad) = self.factors(&proj).value_and_grad(&self.weights);
        if proj == *p {
            return (inner, grad);
        }
        let gap = p - proj;
        let len = gap.norm();
        let mut g = grad;
        for i in 0..3 {
            if p[i] != proj[i] {
                g[i] = gap[i] / len;
            }
        }
        (len + inner, g)
    }

    /// Values on the tensor grid `axes[0] × axes[1] × axes[2]` (x slowest).
    /// Every coordinate must lie inside the domain.
    pub fn eval_grid(&self, axes: [&[f64]; 3]) -> Result<Vec<f64>> {
        let n = self.cfg.n_per_axis;
        let mut tensor = self.weights.clone();
        let mut shape = [n, n, n];
        for (a, coords) in axes.iter().enumerate() {
            let d = &self.cfg.domain;
            let mut m = DMatrix::zeros(coords.len(), n);
            let mut row = vec![0.0; n];
            for (r, &x) in coords.iter().enumerate() {
                let t = (x - d.min[a]) / (d.max[a] - d.min[a]);
                if !(-crate::basis::DOMAIN_TOL..=1.0 + crate::basis::DOMAIN_TOL).contains(&t) {
                    return Err(precondition(format!(
                        "grid coordinate {x} on axis {a} lies outside the domain"
                    )));
                }
                bernstein_into(t.clamp(0.0, 1.0), n, &mut row);
                for (c, v) in row.iter().enumerate() {
                    m[(r, c)] = *v;
                }
            }
            let (next, s) = mode_product(&tensor, shape, a, &m);
            tensor = next;
            shape = s;
        }
        Ok(tensor)
    }

    /// Points on the zero level set inside the domain: sign changes along the
    /// edges of a `resolution³` grid, linearly interpolated, then polished by a
    /// few Newton steps along the gradient.
    pub fn zero_level_set(&self, resolution: usize) -> Result<Vec<Vector3<f64>>> {
        if resolution < 2 {
            return Err(precondition("level-set resolution must be at least 2"));
        }
        let axes = self.grid_axes(resolution);
        let values = self.eval_grid([&axes[0], &axes[1], &axes[2]])?;
        let r = resolution;
        let idx = |i: usize, j: usize, k: usize| (i * r + j) * r + k;
        let mut out = Vec::new();
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    let v0 = values[idx(i, j, k)];
                    let p0 = Vector3::new(axes[0][i], axes[1][j], axes[2][k]);
                    let neighbors = [
                        (i + 1 < r).then(|| {
                            (
                                idx(i + 1, j, k),
                                Vector3::new(axes[0][(i + 1).min(r - 1)], p0.y, p0.z),
                            )
                        }),
                        (j + 1 < r).then(|| {
                            (
                                idx(i, j + 1, k),
                                Vector3::new(p0.x, axes[1][(j + 1).min(r - 1)], p0.z),
                            )
                        }),
                        (k + 1 < r).then(|| {
                            (
                                idx(i, j, k + 1),
                                Vector3::new(p0.x, p0.y, axes[2][(k + 1).min(r - 1)]),
                            )
                        }),
                    ];
                    for (n_idx, p1) in neighbors.into_iter().flatten() {
                        let v1 = values[n_idx];
                        if (v0 < 0.0) != (v1 < 0.0) {
                            let s = v0 / (v0 - v1);
                            out.push(self.polish(p0 + (p1 - p0) * s));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Triangulated zero level set from a `resolution³` grid over the domain.
    pub fn zero_level_surface(&self, resolution: usize) -> Result<IsoSurface> {
        if resolution < 2 {
            return Err(precondition("level-set resolution must be at least 2"));
        }
        let axes = self.grid_axes(resolution);
        let values = self.eval_grid([&axes[0], &axes[1], &axes[2]])?;
        marching_tetrahedra([&axes[0], &axes[1], &axes[2]], &values, 0.0)
    }

    fn grid_axes(&self, resolution: usize) -> [Vec<f64>; 3] {
        let d = self.cfg.domain;
        std::array::from_fn(|a| {
            (0..resolution)
                .map(|i| d.min[a] + (d.max[a] - d.min[a]) * i as f64 / (resolution - 1) as f64)
                .collect()
        })
    }

    fn polish(&self, mut p: Vector3<f64>) -> Vector3<f64> {
        for _ in 0..4 {
            let (v, g) = self.eval(&p);
            let g2 = g.norm_squared();
            if g2 < 1e-12 {
                break;
            }
            let next = self.cfg.domain.clamp(&(p - g * (v / g2)));
            if (next - p).norm() < 1e-12 {
                p = next;
                break;
            }
            p = next;
        }
        p
    }
}

/// Distance and link-frame gradient of one field at a link-frame point.
pub fn link_field_eval(field: &BernsteinField, p_local: &Vector3<f64>) -> (f64, Vector3<f64>) {
    field.eval(p_local)
}
