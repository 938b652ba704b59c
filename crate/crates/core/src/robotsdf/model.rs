use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::field::BernsteinField;
use crate::basis::{AxisBox, BasisConfig};
use crate::error::{config, dims, precondition, Error, Result};
use crate::kinematics::{JointFrames, KinematicChain};

pub const MODEL_FORMAT: &str = "linkfield-model";
pub const MODEL_VERSION: u32 = 1;
pub const FLATTENING: &str = "row-major (i, j, k) -> i*N*N + j*N + k, x slowest";
pub const DEFAULT_RHO: f64 = 100.0;

/// A fitted field rigidly attached to one frame of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkField {
    pub name: String,
    pub frame: usize,
    pub field: BernsteinField,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Free-form description of how the model was produced.
    pub provenance: String,
    pub n_per_axis: usize,
    pub seed: u64,
    pub fit_method: String,
    pub lambda: f64,
    /// Training samples used per link, in link order.
    pub samples_per_link: Vec<usize>,
}

/// How per-link distances are combined.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Composition {
    #[default]
    HardMin,
    /// `−(1/ρ) log Σ exp(−ρ dₖ)`.
    SoftMin { rho: f64 },
}

impl Composition {
    pub fn soft(rho: f64) -> Self {
        Composition::SoftMin { rho }
    }

    fn validate(&self) -> Result<()> {
        if let Composition::SoftMin { rho } = self {
            if !(rho.is_finite() && *rho > 0.0) {
                return Err(config(format!(
                    "soft-min sharpness must be positive, got {rho}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub distance: f64,
    /// Link with the smallest distance (lowest index on ties).
    pub link_index: usize,
    /// World-frame spatial gradient.
    pub grad_p: Vector3<f64>,
    /// Joint-space gradient, when requested.
    pub grad_q: Option<Vec<f64>>,
}

/// Whole-robot distance: per-link fields composed through the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotSdfModel {
    pub chain: KinematicChain,
    pub links: Vec<LinkField>,
    pub metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct LinkRecord {
    name: String,
    frame: usize,
    n_per_axis: usize,
    domain: AxisBox,
    weights_b64: String,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    flattening: String,
    weight_encoding: String,
    metadata: ModelMetadata,
    chain: KinematicChain,
    links: Vec<LinkRecord>,
}

impl RobotSdfModel {
    pub fn new(
        chain: KinematicChain,
        links: Vec<LinkField>,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        chain.validate()?;
        if links.is_empty() {
            return Err(precondition("a robot model needs at least one link field"));
        }
        for l in &links {
            if l.frame > chain.n_frames() {
                return Err(config(format!(
                    "link '{}' sits on frame {} but the chain has {} frames",
                    l.name,
                    l.frame,
                    chain.n_frames()
                )));
            }
        }
        Ok(RobotSdfModel {
            chain,
            links,
            metadata,
        })
    }

    pub fn n_joints(&self) -> usize {
        self.chain.n_joints()
    }

    fn check_points(&self, points: &[Vector3<f64>]) -> Result<()> {
        if points.is_empty() {
            return Err(precondition("no query points"));
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(precondition("query points must be finite"));
        }
        Ok(())
    }

    /// Distance of every link at one world point, in link order.
    pub fn link_distances(&self, frames: &JointFrames, p: &Vector3<f64>) -> Vec<f64> {
        self.links
            .iter()
            .map(|l| l.field.value(&frames.poses[l.frame].apply_inverse(p)))
            .collect()
    }

    /// Distances only.
    pub fn distances(
        &self,
        q: &[f64],
        points: &[Vector3<f64>],
        mode: Composition,
    ) -> Result<Vec<f64>> {
        mode.validate()?;
        self.check_points(points)?;
        let frames = self.chain.joint_frames(q)?;
        let mut d = vec![0.0; self.links.len()];
        Ok(points
            .iter()
            .map(|p| {
                for (slot, l) in d.iter_mut().zip(&self.links) {
                    *slot = l.field.value(&frames.poses[l.frame].apply_inverse(p));
                }
                compose(&d, mode).0
            })
            .collect())
    }

    pub fn eval_points(
        &self,
        q: &[f64],
        points: &[Vector3<f64>],
        want_grad_q: bool,
        mode: Composition,
    ) -> Result<Vec<QueryResult>> {
        mode.validate()?;
        self.check_points(points)?;
        let frames = self.chain.joint_frames(q)?;
        let k = self.links.len();
        let mut d = vec![0.0; k];
        let mut g_local = vec![Vector3::zeros(); k];
        let mut out = Vec::with_capacity(points.len());
        for p in points {
            for (i, l) in self.links.iter().enumerate() {
                let (v, g) = l.field.eval(&frames.poses[l.frame].apply_inverse(p));
                d[i] = v;
                g_local[i] = g;
            }
            let (distance, weights, link_index) = compose(&d, mode);
            let mut grad_p = Vector3::zeros();
            let mut grad_q = want_grad_q.then(|| vec![0.0; q.len()]);
            for (i, l) in self.links.iter().enumerate() {
                let s = weights[i];
                if s == 0.0 {
                    continue;
                }
                grad_p += frames.poses[l.frame].rotation * g_local[i] * s;
                if let Some(gq) = grad_q.as_mut() {
                    frames.local_point_jacobian(l.frame, p, |j, col| {
                        gq[j] += s * g_local[i].dot(&col);
                    });
                }
            }
            out.push(QueryResult {
                distance,
                link_index,
                grad_p,
                grad_q,
            });
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let links = self
            .links
            .iter()
            .map(|l| {
                let mut bytes = Vec::with_capacity(l.field.weights.len() * 8);
                for w in &l.field.weights {
                    bytes.extend_from_slice(&w.to_le_bytes());
                }
                LinkRecord {
                    name: l.name.clone(),
                    frame: l.frame,
                    n_per_axis: l.field.cfg.n_per_axis,
                    domain: l.field.cfg.domain,
                    weights_b64: BASE64.encode(bytes),
                }
            })
            .collect();
        let doc = ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            flattening: FLATTENING.into(),
            weight_encoding: "base64 of little-endian IEEE-754 binary64".into(),
            metadata: self.metadata.clone(),
            chain: self.chain.clone(),
            links,
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "expected format '{MODEL_FORMAT}', found '{}'",
                doc.format
            )));
        }
        if doc.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {} (this build reads {MODEL_VERSION})",
                doc.version
            )));
        }
        if doc.flattening != FLATTENING {
            return Err(Error::Format(format!(
                "unsupported weight flattening '{}'",
                doc.flattening
            )));
        }
        let links = doc
            .links
            .into_iter()
            .map(|r| {
                let bytes = BASE64.decode(r.weights_b64.as_bytes()).map_err(|e| {
                    Error::Format(format!("link '{}': bad weight encoding: {e}", r.name))
                })?;
                if bytes.len() % 8 != 0 {
                    return Err(Error::Format(format!(
                        "link '{}': weight bytes not a multiple of 8",
                        r.name
                    )));
                }
                let weights: Vec<f64> = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect();
                let cfg = BasisConfig::new(r.n_per_axis, r.domain)?;
                if weights.len() != cfg.n_features() {
                    return Err(dims(format!(
                        "link '{}': {} weights for N = {}",
                        r.name,
                        weights.len(),
                        r.n_per_axis
                    )));
                }
                Ok(LinkField {
                    name: r.name,
                    frame: r.frame,
                    field: BernsteinField::new(cfg, weights)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RobotSdfModel::new(doc.chain, links, doc.metadata)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Combined distance, per-link blend weights and the argmin link.
pub(crate) fn compose(d: &[f64], mode: Composition) -> (f64, Vec<f64>, usize) {
    let mut best = 0;
    for (i, v) in d.iter().enumerate() {
        if *v < d[best] {
            best = i;
        }
    }
    let m = d[best];
    match mode {
        Composition::HardMin => {
            let mut w = vec![0.0; d.len()];
            w[best] = 1.0;
            (m, w, best)
        }
        Composition::SoftMin { rho } => {
            let e: Vec<f64> = d.iter().map(|v| (-rho * (v - m)).exp()).collect();
            let sum: f64 = e.iter().sum();
            let w = e.iter().map(|x| x / sum).collect();
            (m - sum.ln() / rho, w, best)
        }
    }
}
