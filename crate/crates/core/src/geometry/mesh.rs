use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, RngCore};

use crate::basis::AxisBox;
use crate::error::{config, Error, Result};

const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Fixed ray directions for parity signing. Irrational slopes keep them off
/// axis-aligned edges and faces.
fn sign_rays() -> [Vector3<f64>; 3] {
    [
        Vector3::new(1.0, 2f64.sqrt(), 3f64.sqrt()).normalize(),
        Vector3::new(-5f64.sqrt(), 1.0, std::f64::consts::E / 2.0).normalize(),
        Vector3::new(7f64.sqrt() / 3.0, -std::f64::consts::PI / 2.0, -1.0).normalize(),
    ]
}

/// Which part of a triangle a closest point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangleFeature {
    Vertex(usize),
    /// Edge from local corner `i` to corner `(i + 1) % 3`.
    Edge(usize),
    Face,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshDistance {
    pub signed: f64,
    pub unsigned: f64,
    pub triangle: usize,
    pub closest: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vector3<f64>>,
    /// Running sum of triangle areas, for area-weighted picks.
    area_prefix: Vec<f64>,
    watertight: bool,
    /// Angle-weighted vertex pseudonormals.
    vertex_normals: Vec<Vector3<f64>>,
    /// Sum of adjacent face normals per undirected edge.
    edge_normals: HashMap<(usize, usize), Vector3<f64>>,
}

pub(crate) fn prefix_sums(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

/// Index drawn with probability proportional to its weight, given the
/// running sums of the weights.
pub(crate) fn pick_weighted(prefix: &[f64], rng: &mut dyn RngCore) -> usize {
    let total = prefix.last().copied().unwrap_or(0.0);
    let u = rng.random::<f64>() * total;
    prefix.partition_point(|&c| c <= u).min(prefix.len() - 1)
}

/// Uniform point on a triangle.
pub(crate) fn sample_triangle([a, b, c]: [Vector3<f64>; 3], rng: &mut dyn RngCore) -> Vector3<f64> {
    let r1 = rng.random::<f64>().sqrt();
    let r2 = rng.random::<f64>();
    a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(config("mesh has no triangles"));
        }
        if vertices.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(config("mesh has non-finite vertices"));
        }
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(config(format!(
                    "triangle {t} references a vertex out of range"
                )));
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(config(format!(
                    "triangle {t} is degenerate (area {area:e} m²)"
                )));
            }
            normals.push(cross.normalize());
            areas.push(area);
        }

        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_normals: HashMap<(usize, usize), Vector3<f64>> = HashMap::new();
        let mut vertex_normals = vec![Vector3::zeros(); vertices.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let key = edge_key(tri[i], tri[(i + 1) % 3]);
                *edge_count.entry(key).or_default() += 1;
                *edge_normals.entry(key).or_insert_with(Vector3::zeros) += normals[t];
                let v = vertices[tri[i]];
                let e1 = (vertices[tri[(i + 1) % 3]] - v).normalize();
                let e2 = (vertices[tri[(i + 2) % 3]] - v).normalize();
                let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
                vertex_normals[tri[i]] += normals[t] * angle;
            }
        }
        let watertight = edge_count.values().all(|&c| c == 2);
        if !watertight {
            log::warn!("mesh is not watertight; signs fall back to nearest-triangle pseudonormals");
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
            normals,
            area_prefix: prefix_sums(&areas),
            watertight,
            vertex_normals,
            edge_normals,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn surface_area(&self) -> f64 {
        self.area_prefix.last().copied().unwrap_or(0.0)
    }

    pub fn aabb(&self) -> AxisBox {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            min = min.inf(v);
            max = max.sup(v);
        }
        AxisBox { min, max }
    }

    pub fn transformed(&self, pose: &crate::kinematics::Pose) -> Result<Self> {
        TriangleMesh::new(
            self.vertices.iter().map(|v| pose.apply(v)).collect(),
            self.triangles.clone(),
        )
    }

    fn corners(&self, t: usize) -> [Vector3<f64>; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    /// Exact distance from `p` to triangle `t` and where it is attained.
    pub fn point_triangle_distance(
        &self,
        t: usize,
        p: &Vector3<f64>,
    ) -> (f64, Vector3<f64>, TriangleFeature) {
        let [a, b, c] = self.corners(t);
        let (q, feature) = closest_point_on_triangle(p, &a, &b, &c);
        ((p - q).norm(), q, feature)
    }

    /// Brute-force nearest triangle with sign.
    pub fn query(&self, p: &Vector3<f64>) -> MeshDistance {
        let mut best = (f64::INFINITY, 0, Vector3::zeros(), TriangleFeature::Face);
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.corners(t);
            let (q, feature) = closest_point_on_triangle(p, &a, &b, &c);
            let d2 = (p - q).norm_squared();
            if d2 < best.0 {
                best = (d2, t, q, feature);
            }
        }
        let (d2, t, closest, feature) = best;
        let unsigned = d2.sqrt();
        let inside = if self.watertight {
            self.inside_by_parity(p)
        } else {
            self.pseudonormal(t, feature).dot(&(p - closest)) < 0.0
        };
        MeshDistance {
            signed: if inside { -unsigned } else { unsigned },
            unsigned,
            triangle: t,
            closest,
        }
    }

    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        self.query(p).signed
    }

    fn pseudonormal(&self, t: usize, feature: TriangleFeature) -> Vector3<f64> {
        let tri = self.triangles[t];
        match feature {
            TriangleFeature::Face => self.normals[t],
            TriangleFeature::Vertex(i) => self.vertex_normals[tri[i]],
            TriangleFeature::Edge(i) => self.edge_normals[&edge_key(tri[i], tri[(i + 1) % 3])],
        }
    }

    /// Majority vote of crossing parity over the fixed rays.
    fn inside_by_parity(&self, p: &Vector3<f64>) -> bool {
        let votes = sign_rays()
            .iter()
            .filter(|dir| {
                let hits = (0..self.triangles.len())
                    .filter(|&t| {
                        let [a, b, c] = self.corners(t);
                        ray_hits_triangle(p, dir, &a, &b, &c)
                    })
                    .count();
                hits % 2 == 1
            })
            .count();
        votes >= 2
    }

    pub fn sample_surface(&self, rng: &mut dyn RngCore) -> Vector3<f64> {
        let t = pick_weighted(&self.area_prefix, rng);
        sample_triangle(self.corners(t), rng)
    }

    /// Loads OBJ or binary STL by file extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        let file = std::fs::File::open(path)?;
        match ext.as_str() {
            "obj" => Self::read_obj(BufReader::new(file)),
            "stl" => Self::read_stl(BufReader::new(file)),
            _ => Err(Error::Format(format!(
                "unrecognized mesh extension for {} (expected .obj or .stl)",
                path.display()
            ))),
        }
    }

    /// ASCII OBJ with `v` and triangular `f` records; other records are skipped.
    pub fn read_obj(reader: impl BufRead) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let bad = |msg: &str| Error::Format(format!("OBJ line {}: {msg}", lineno + 1));
            match parts.next() {
                Some("v") => {
                    let coords: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("bad vertex coordinate"))?;
                    if coords.len() != 3 {
                        return Err(bad("vertex needs three coordinates"));
                    }
                    vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<&str> = parts.collect();
                    if idx.len() != 3 {
                        return Err(bad("faces must be triangles"));
                    }
                    let mut tri = [0usize; 3];
                    for (k, tok) in idx.iter().enumerate() {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| bad("bad face index"))?;
                        let resolved = if i > 0 {
                            i - 1
                        } else if i < 0 {
                            vertices.len() as i64 + i
                        } else {
                            return Err(bad("face indices are 1-based"));
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(bad("face index out of range"));
                        }
                        tri[k] = resolved as usize;
                    }
                    triangles.push(tri);
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles)
    }

    /// Binary STL; coincident corners are merged so edges can be matched.
    pub fn read_stl(mut reader: impl Read) -> Result<Self> {
        let mut header = [0u8; 84];
        reader
            .read_exact(&mut header)
            .map_err(|_| Error::Format("STL file shorter than its header".into()))?;
        if header.starts_with(b"solid") {
            // ASCII files also start this way; a binary file may too, so only
            // bail if the size does not line up.
            log::debug!("STL header begins with 'solid'; trying binary layout anyway");
        }
        let count = u32::from_le_bytes([header[80], header[81], header[82], header[83]]) as usize;
        let mut body = Vec::new();
        reader.read_to_end(&mut body)?;
        if body.len() < count * 50 {
            return Err(Error::Format(format!(
                "binary STL declares {count} triangles but holds {} bytes",
                body.len()
            )));
        }
        let mut index: HashMap<[u64; 3], usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(count);
        for t in 0..count {
            let rec = &body[t * 50..t * 50 + 50];
            let mut tri = [0usize; 3];
            for (k, slot) in tri.iter_mut().enumerate() {
                let off = 12 + 12 * k;
                let f = |o: usize| {
                    f32::from_le_bytes([rec[o], rec[o + 1], rec[o + 2], rec[o + 3]]) as f64
                };
                let v = Vector3::new(f(off), f(off + 4), f(off + 8));
                let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
                *slot = *index.entry(key).or_insert_with(|| {
                    vertices.push(v);
                    vertices.len() - 1
                });
            }
            triangles.push(tri);
        }
        Self::new(vertices, triangles)
    }

    pub fn write_obj(&self, mut w: impl Write) -> Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    pub fn write_stl(&self, mut w: impl Write) -> Result<()> {
        let mut header = [0u8; 80];
        header[..9].copy_from_slice(b"linkfield");
        w.write_all(&header)?;
        w.write_all(&(self.triangles.len() as u32).to_le_bytes())?;
        for (t, tri) in self.triangles.iter().enumerate() {
            for x in self.normals[t].iter() {
                w.write_all(&(*x as f32).to_le_bytes())?;
            }
            for &i in tri {
                for x in self.vertices[i].iter() {
                    w.write_all(&(*x as f32).to_le_bytes())?;
                }
            }
            w.write_all(&[0, 0])?;
        }
        Ok(())
    }

    /// Axis-aligned cube `[min, min + size]³` with outward winding.
    pub fn cube(min: Vector3<f64>, size: f64) -> Result<Self> {
        let v: Vec<Vector3<f64>> = (0..8)
            .map(|i| {
                min + Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64)
                    * size
            })
            .collect();
        let t = vec![
            [0, 2, 1],
            [1, 2, 3], // z = 0
            [4, 5, 6],
            [5, 7, 6], // z = 1
            [0, 1, 4],
            [1, 5, 4], // y = 0
            [2, 6, 3],
            [3, 6, 7], // y = 1
            [0, 4, 2],
            [2, 4, 6], // x = 0
            [1, 3, 5],
            [3, 7, 5], // x = 1
        ];
        Self::new(v, t)
    }

    /// Subdivided icosahedron projected to a sphere; `20·4ˢ` triangles.
    pub fn icosphere(center: Vector3<f64>, radius: f64, subdivisions: u32) -> Result<Self> {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vector3<f64>> = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
        let mut tris: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
                *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(tris.len() * 4);
            for [a, b, c] in tris {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            tris = next;
        }
        Self::new(verts.iter().map(|v| center + v * radius).collect(), tris)
    }
}

/// Closest point on triangle `abc` to `p` by Voronoi-region tests.
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> (Vector3<f64>, TriangleFeature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, TriangleFeature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, TriangleFeature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, TriangleFeature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, TriangleFeature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, TriangleFeature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, TriangleFeature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, TriangleFeature::Face)
}

/// Möller–Trumbore, counting hits strictly in front of the origin.
fn ray_hits_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-18 {
        return false;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&h) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    e2.dot(&q) * inv > 0.0
}
