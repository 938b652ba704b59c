//! Serial-chain forward kinematics from Denavit–Hartenberg rows.
//!
//! Frame 0 is the base. Frame `k` (1-based) is the product of the first `k`
//! row transforms. Geometry attaches to frames; a world point is pulled into a
//! frame with `Rₖᵀ(p − tₖ)`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{config, dims, precondition, Error, Result};
use crate::geometry::Primitive;

pub const CHAIN_FORMAT: &str = "linkfield-chain";
pub const CHAIN_VERSION: u32 = 1;

/// Rigid transform `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Row-major on disk so files read naturally.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        Pose {
            rotation: Matrix3::from_fn(|i, j| r.rotation[i][j]),
            translation: Vector3::from(r.translation),
        }
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| p.rotation[(i, j)])),
            translation: p.translation.into(),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rot_z(theta: f64) -> Matrix3<f64> {
        let (s, c) = theta.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    pub fn rot_x(alpha: f64) -> Matrix3<f64> {
        let (s, c) = alpha.sin_cos();
        Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `Rᵀ(p − t)`.
    pub fn apply_inverse(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.tr_mul(&(p - self.translation))
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Largest deviation of `RᵀR` from identity, or of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        gram.abs()
            .max()
            .max((self.rotation.determinant() - 1.0).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    #[serde(default)]
    pub theta_offset: f64,
    pub joint: JointKind,
}

impl DhRow {
    pub fn revolute(a: f64, d: f64, alpha: f64, theta_offset: f64) -> Self {
        DhRow {
            a,
            d,
            alpha,
            theta_offset,
            joint: JointKind::Revolute,
        }
    }

    pub fn fixed(a: f64, d: f64, alpha: f64, theta_offset: f64) -> Self {
        DhRow {
            a,
            d,
            alpha,
            theta_offset,
            joint: JointKind::Fixed,
        }
    }

    fn theta(&self, q: f64) -> f64 {
        match self.joint {
            JointKind::Revolute => q + self.theta_offset,
            JointKind::Fixed => self.theta_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DhConvention {
    /// `Rot_z(θ)·Trans_z(d)·Trans_x(a)·Rot_x(α)`; the joint turns about the
    /// previous frame's z axis.
    #[default]
    Classic,
    /// `Rot_x(α)·Trans_x(a)·Rot_z(θ)·Trans_z(d)` (Craig); the joint turns
    /// about the new frame's z axis.
    Modified,
}

impl DhConvention {
    pub fn transform(&self, row: &DhRow, q: f64) -> Pose {
        let theta = row.theta(q);
        match self {
            DhConvention::Classic => {
                let (st, ct) = theta.sin_cos();
                Pose {
                    rotation: Pose::rot_z(theta) * Pose::rot_x(row.alpha),
                    translation: Vector3::new(row.a * ct, row.a * st, row.d),
                }
            }
            DhConvention::Modified => {
                let (sa, ca) = row.alpha.sin_cos();
                Pose {
                    rotation: Pose::rot_x(row.alpha) * Pose::rot_z(theta),
                    translation: Vector3::new(row.a, -sa * row.d, ca * row.d),
                }
            }
        }
    }
}

/// Classic DH transform of one row at joint value `q` (ignored for fixed rows).
pub fn dh_transform(row: &DhRow, q: f64) -> Pose {
    DhConvention::Classic.transform(row, q)
}

/// Where a link's geometry comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometrySource {
    Primitive(Primitive),
    /// OBJ or binary STL, resolved relative to the chain file on load.
    Mesh {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub name: String,
    /// Frame index the geometry is rigidly attached to.
    pub frame: usize,
    pub geometry: GeometrySource,
    /// Geometry pose within the frame; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub name: String,
    #[serde(default)]
    pub convention: DhConvention,
    pub rows: Vec<DhRow>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

#[derive(Serialize, Deserialize)]
struct ChainDocument {
    format: String,
    version: u32,
    #[serde(flatten)]
    chain: KinematicChain,
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        convention: DhConvention,
        rows: Vec<DhRow>,
        q_min: Vec<f64>,
        q_max: Vec<f64>,
        attachments: Vec<Attachment>,
    ) -> Result<Self> {
        let chain = KinematicChain {
            name: name.into(),
            convention,
            rows,
            q_min,
            q_max,
            attachments,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.rows.iter().all(|r| {
            [r.a, r.d, r.alpha, r.theta_offset]
                .iter()
                .all(|v| v.is_finite())
        });
        if !finite {
            return Err(config("DH rows must be finite"));
        }
        let c = self.n_joints();
        if c == 0 {
            return Err(config("a chain needs at least one revolute joint"));
        }
        if self.q_min.len() != c || self.q_max.len() != c {
            return Err(dims(format!(
                "chain has {c} joints but {} lower and {} upper limits",
                self.q_min.len(),
                self.q_max.len()
            )));
        }
        for (j, (lo, hi)) in self.q_min.iter().zip(&self.q_max).enumerate() {
            if !(lo < hi) {
                return Err(config(format!(
                    "joint {j}: q_min {lo} must be below q_max {hi}"
                )));
            }
        }
        for att in &self.attachments {
            if att.frame > self.rows.len() {
                return Err(config(format!(
                    "attachment '{}' references frame {} but the chain has {} frames",
                    att.name,
                    att.frame,
                    self.rows.len()
                )));
            }
            if let GeometrySource::Primitive(p) = &att.geometry {
                p.validate()?;
            }
        }
        Ok(())
    }

    /// Actuated joint count `C`.
    pub fn n_joints(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.joint == JointKind::Revolute)
            .count()
    }

    /// Non-base frame count `K`.
    pub fn n_frames(&self) -> usize {
        self.rows.len()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(self.q_min.iter().zip(&self.q_max))
            .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    fn check_q(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n_joints() {
            return Err(dims(format!(
                "expected {} joint values, got {}",
                self.n_joints(),
                q.len()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(precondition("joint vector contains non-finite values"));
        }
        Ok(())
    }

    fn check_frame(&self, k: usize) -> Result<()> {
        if k > self.rows.len() {
            return Err(precondition(format!(
                "frame {k} out of range (chain has frames 0..={})",
                self.rows.len()
            )));
        }
        Ok(())
    }

    /// Base-to-frame poses for frames `0..=K`.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Vec<Pose>> {
        Ok(self.joint_frames(q)?.poses)
    }

    /// Poses plus world joint axes, computed once per configuration.
    pub fn joint_frames(&self, q: &[f64]) -> Result<JointFrames> {
        self.check_q(q)?;
        let mut poses = Vec::with_capacity(self.rows.len() + 1);
        let mut axes = Vec::with_capacity(q.len());
        let mut joint_rows = Vec::with_capacity(q.len());
        poses.push(Pose::identity());
        let mut j = 0;
        for (r, row) in self.rows.iter().enumerate() {
            let prev = poses[r];
            let qj = if row.joint == JointKind::Revolute {
                q[j]
            } else {
                0.0
            };
            let next = prev.compose(&self.convention.transform(row, qj));
            if row.joint == JointKind::Revolute {
                let axis_frame = match self.convention {
                    DhConvention::Classic => prev,
                    DhConvention::Modified => next,
                };
                axes.push(JointAxis {
                    direction: axis_frame.rotation.column(2).into_owned(),
                    origin: axis_frame.translation,
                });
                joint_rows.push(r + 1);
                j += 1;
            }
            poses.push(next);
        }
        Ok(JointFrames {
            poses,
            axes,
            joint_rows,
        })
    }

    /// `ᵇTₖ(q)⁻¹ p`.
    pub fn point_to_link_frame(
        &self,
        q: &[f64],
        k: usize,
        p_world: &Vector3<f64>,
    ) -> Result<Vector3<f64>> {
        self.check_frame(k)?;
        let poses = self.forward_kinematics(q)?;
        Ok(poses[k].apply_inverse(p_world))
    }

    /// `∂/∂q [Rₖᵀ(p − tₖ)]` for a fixed world point, 3 × C.
    pub fn point_frame_jacobian(
        &self,
        q: &[f64],
        k: usize,
        p_world: &Vector3<f64>,
    ) -> Result<DMatrix<f64>> {
        self.check_frame(k)?;
        let frames = self.joint_frames(q)?;
        let mut jac = DMatrix::zeros(3, q.len());
        frames.local_point_jacobian(k, p_world, |j, col| {
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
        });
        Ok(jac)
    }

    /// `∂/∂q` of the world position of a point fixed in frame `k`, 3 × C.
    pub fn world_point_jacobian(
        &self,
        q: &[f64],
        k: usize,
        p_local: &Vector3<f64>,
    ) -> Result<DMatrix<f64>> {
        self.check_frame(k)?;
        let frames = self.joint_frames(q)?;
        let x = frames.poses[k].apply(p_local);
        let mut jac = DMatrix::zeros(3, q.len());
        for (j, axis) in frames.axes.iter().enumerate() {
            if frames.joint_rows[j] <= k {
                let col = axis.direction.cross(&(x - axis.origin));
                jac.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
            }
        }
        Ok(jac)
    }

    /// Reads a versioned chain file, resolving mesh paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut chain = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        chain.resolve_mesh_paths(&base);
        Ok(chain)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ChainDocument = serde_json::from_str(text)?;
        if doc.format != CHAIN_FORMAT {
            return Err(Error::Format(format!(
                "expected format '{CHAIN_FORMAT}', found '{}'",
                doc.format
            )));
        }
        if doc.version != CHAIN_VERSION {
            return Err(Error::Format(format!(
                "unsupported chain file version {} (this build reads {CHAIN_VERSION})",
                doc.version
            )));
        }
        doc.chain.validate()?;
        Ok(doc.chain)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ChainDocument {
            format: CHAIN_FORMAT.to_string(),
            version: CHAIN_VERSION,
            chain: self.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    fn resolve_mesh_paths(&mut self, base: &Path) {
        for att in &mut self.attachments {
            if let GeometrySource::Mesh { path } = &mut att.geometry {
                let p = PathBuf::from(&*path);
                if p.is_relative() {
                    let joined = base.join(&p);
                    let resolved = joined.canonicalize().unwrap_or(joined);
                    *path = resolved.to_string_lossy().into_owned();
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAxis {
    /// Unit rotation axis in the base frame.
    pub direction: Vector3<f64>,
    /// A point on the axis in the base frame.
    pub origin: Vector3<f64>,
}

/// Kinematic state at one configuration.
#[derive(Debug, Clone)]
pub struct JointFrames {
    pub poses: Vec<Pose>,
    pub axes: Vec<JointAxis>,
    /// First frame moved by each joint.
    pub joint_rows: Vec<usize>,
}

impl JointFrames {
    /// Calls `sink(j, column)` with `−Rₖᵀ(z_j × (p − o_j))` for every joint `j`
    /// that moves frame `k`. Joints beyond `k` are skipped (their columns are
    /// zero).
    pub fn local_point_jacobian(
        &self,
        k: usize,
        p_world: &Vector3<f64>,
        mut sink: impl FnMut(usize, Vector3<f64>),
    ) {
        let rt = self.poses[k].rotation.transpose();
        for (j, axis) in self.axes.iter().enumerate() {
            if self.joint_rows[j] > k {
                break;
            }
            let v = axis.direction.cross(&(p_world - axis.origin));
            sink(j, -(rt * v));
        }
    }
}
