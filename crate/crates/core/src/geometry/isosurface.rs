//! Triangulated level sets of sampled scalar fields.

use std::collections::HashMap;

use nalgebra::Vector3;
use rand::RngCore;

use super::mesh::{pick_weighted, prefix_sums, sample_triangle, TriangleMesh};
use crate::error::{dims, precondition, Result};

/// Triangle soup with shared vertices, oriented so normals point toward
/// larger field values.
#[derive(Debug, Clone, Default)]
pub struct IsoSurface {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

/// Corner offsets of a grid cell, bit `a` of the index selects axis `a`.
const CORNER: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Six tetrahedra around the 0–7 diagonal, one per axis ordering. Every cell
/// is split the same way, so neighbouring cells agree on their shared faces.
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Extracts `{f = level}` from values on the grid `axes[0] × axes[1] × axes[2]`
/// (x slowest) by marching tetrahedra. Vertices are linear interpolates on
/// grid edges and are shared between neighbouring triangles.
pub fn marching_tetrahedra(axes: [&[f64]; 3], values: &[f64], level: f64) -> Result<IsoSurface> {
    let [nx, ny, nz] = axes.map(|a| a.len());
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(precondition(
            "level-set extraction needs at least two nodes per axis",
        ));
    }
    if values.len() != nx * ny * nz {
        return Err(dims(format!(
            "{} values for a {nx}×{ny}×{nz} grid",
            values.len()
        )));
    }
    let id = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;
    let node = |n: usize| {
        Vector3::new(
            axes[0][n / (ny * nz)],
            axes[1][(n / nz) % ny],
            axes[2][n % nz],
        )
    };
    let mut surface = IsoSurface::default();
    let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertex_on = |a: usize, b: usize, surface: &mut IsoSurface| -> usize {
        let key = if a < b { (a, b) } else { (b, a) };
        *edge_vertex.entry(key).or_insert_with(|| {
            let (va, vb) = (values[key.0] - level, values[key.1] - level);
            let s = va / (va - vb);
            surface
                .vertices
                .push(node(key.0) + (node(key.1) - node(key.0)) * s);
            surface.vertices.len() - 1
        })
    };

    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            for k in 0..nz - 1 {
                let corner = CORNER.map(|[a, b, c]| id(i + a, j + b, k + c));
                for tet in TETS {
                    let ids = tet.map(|c| corner[c]);
                    let (inside, outside): (Vec<usize>, Vec<usize>) =
                        ids.iter().partition(|&&n| values[n] < level);
                    if inside.is_empty() || outside.is_empty() {
                        continue;
                    }
                    let toward_outside = outside.iter().map(|&n| node(n)).sum::<Vector3<f64>>()
                        / outside.len() as f64
                        - inside.iter().map(|&n| node(n)).sum::<Vector3<f64>>()
                            / inside.len() as f64;
                    let emit = |tri: [usize; 3], surface: &mut IsoSurface| {
                        let [a, b, c] = tri.map(|v| surface.vertices[v]);
                        let n = (b - a).cross(&(c - a));
                        surface.triangles.push(if n.dot(&toward_outside) < 0.0 {
                            [tri[0], tri[2], tri[1]]
                        } else {
                            tri
                        });
                    };
                    match (inside.len(), outside.len()) {
                        (1, 3) | (3, 1) => {
                            let (lone, rest) = if inside.len() == 1 {
                                (inside[0], &outside)
                            } else {
                                (outside[0], &inside)
                            };
                            let tri = [0, 1, 2].map(|m| vertex_on(lone, rest[m], &mut surface));
                            emit(tri, &mut surface);
                        }
                        _ => {
                            // Quad across the four cut edges, split along one diagonal.
                            let v00 = vertex_on(inside[0], outside[0], &mut surface);
                            let v01 = vertex_on(inside[0], outside[1], &mut surface);
                            let v11 = vertex_on(inside[1], outside[1], &mut surface);
                            let v10 = vertex_on(inside[1], outside[0], &mut surface);
                            emit([v00, v01, v11], &mut surface);
                            emit([v00, v11, v10], &mut surface);
                        }
                    }
                }
            }
        }
    }
    Ok(surface)
}

impl IsoSurface {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn corners(&self, t: usize) -> [Vector3<f64>; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    fn triangle_areas(&self) -> Vec<f64> {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .collect()
    }

    pub fn area(&self) -> f64 {
        self.triangle_areas().iter().sum()
    }

    /// `count` points spread uniformly by area.
    pub fn sample_points(&self, count: usize, rng: &mut dyn RngCore) -> Result<Vec<Vector3<f64>>> {
        let prefix = prefix_sums(&self.triangle_areas());
        if !(prefix.last().copied().unwrap_or(0.0) > 0.0) {
            return Err(precondition("cannot sample an empty level set"));
        }
        Ok((0..count)
            .map(|_| sample_triangle(self.corners(pick_weighted(&prefix, rng)), rng))
            .collect())
    }

    /// The same surface as a [`TriangleMesh`], with zero-area slivers dropped.
    pub fn to_mesh(&self) -> Result<TriangleMesh> {
        let areas = self.triangle_areas();
        let kept = self
            .triangles
            .iter()
            .zip(&areas)
            .filter(|(_, &a)| a > 1e-12)
            .map(|(t, _)| *t)
            .collect();
        TriangleMesh::new(self.vertices.clone(), kept)
    }
}
