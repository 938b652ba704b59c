//! Dense distance grids.
//!
//! File layout, all integers and floats little-endian:
//!
//! ```text
//! LINKFIELD-GRID 1\n
//! <one line of JSON: {"box":{"min":[..],"max":[..]},"resolution":[nx,ny,nz],"q":[..],"order":"...","dtype":"f32le"}>\n
//! nx*ny*nz binary32 values, x slowest, z fastest
//! ```
//!
//! Node `(i, j, k)` sits at `min + (max - min) * (i/(nx-1), j/(ny-1), k/(nz-1))`.

use std::io::{BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::model::{Composition, RobotSdfModel};
use crate::basis::AxisBox;
use crate::error::{config, Error, Result};

pub const GRID_MAGIC: &str = "LINKFIELD-GRID 1";
pub const MAX_GRID_CELLS: usize = 100_000_000;
const ORDER: &str = "row-major, x slowest, z fastest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GridHeader {
    #[serde(rename = "box")]
    domain: AxisBox,
    resolution: [usize; 3],
    q: Vec<f64>,
    order: String,
    dtype: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetGrid {
    pub domain: AxisBox,
    pub resolution: [usize; 3],
    /// Configuration the grid was taken at.
    pub q: Vec<f64>,
    pub values: Vec<f32>,
}

impl LevelSetGrid {
    pub fn node(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        grid_node(&self.domain, self.resolution, i, j, k)
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f32 {
        let [_, ny, nz] = self.resolution;
        self.values[(i * ny + j) * nz + k]
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let header = GridHeader {
            domain: self.domain,
            resolution: self.resolution,
            q: self.q.clone(),
            order: ORDER.into(),
            dtype: "f32le".into(),
        };
        writeln!(w, "{GRID_MAGIC}")?;
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read(mut r: impl BufRead) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end_matches('\n') != GRID_MAGIC {
            return Err(Error::Format(format!(
                "not a grid file (expected '{GRID_MAGIC}')"
            )));
        }
        line.clear();
        r.read_line(&mut line)?;
        let header: GridHeader = serde_json::from_str(line.trim_end())?;
        if header.dtype != "f32le" || header.order != ORDER {
            return Err(Error::Format("unsupported grid layout".into()));
        }
        let count: usize = header.resolution.iter().product();
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 4 {
            return Err(Error::Format(format!(
                "grid body holds {} bytes, header implies {}",
                bytes.len(),
                count * 4
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect();
        Ok(LevelSetGrid {
            domain: header.domain,
            resolution: header.resolution,
            q: header.q,
            values,
        })
    }
}

fn grid_node(b: &AxisBox, res: [usize; 3], i: usize, j: usize, k: usize) -> Vector3<f64> {
    let idx = [i, j, k];
    Vector3::from_fn(|a, _| b.min[a] + (b.max[a] - b.min[a]) * idx[a] as f64 / (res[a] - 1) as f64)
}

/// Samples the hard-min robot distance at configuration `q` on a regular grid.
pub fn export_level_set_grid(
    model: &RobotSdfModel,
    q: &[f64],
    domain: &AxisBox,
    resolution: [usize; 3],
) -> Result<LevelSetGrid> {
    domain.validate()?;
    if resolution.iter().any(|&r| r < 2) {
        return Err(config("grid resolution must be at least 2 on every axis"));
    }
    let cells = resolution
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r))
        .filter(|&c| c <= MAX_GRID_CELLS)
        .ok_or_else(|| {
            config(format!(
                "grid of {resolution:?} exceeds {MAX_GRID_CELLS} cells"
            ))
        })?;
    let [nx, ny, nz] = resolution;
    let mut values = Vec::with_capacity(cells);
    let mut slab = Vec::with_capacity(ny * nz);
    for i in 0..nx {
        slab.clear();
        for j in 0..ny {
            for k in 0..nz {
                slab.push(grid_node(domain, resolution, i, j, k));
            }
        }
        values.extend(
            model
                .distances(q, &slab, Composition::HardMin)?
                .into_iter()
                .map(|d| d as f32),
        );
    }
    Ok(LevelSetGrid {
        domain: *domain,
        resolution,
        q: q.to_vec(),
        values,
    })
}
