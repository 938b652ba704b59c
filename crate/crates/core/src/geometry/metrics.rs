use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{dims, precondition, Result};

pub const DEFAULT_NEAR_THRESHOLD: f64 = 0.03;

/// Symmetric Chamfer distance: the two directed mean nearest-neighbour
/// distances, averaged. Nearest neighbours are exact; large sets go through
/// a [`PointIndex`] instead of the quadratic scan.
pub fn chamfer_distance(set_a: &[Vector3<f64>], set_b: &[Vector3<f64>]) -> Result<f64> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(precondition(
            "chamfer distance needs two non-empty point sets",
        ));
    }
    Ok(0.5 * (directed_mean(set_a, set_b) + directed_mean(set_b, set_a)))
}

/// Below this many pairs the quadratic loop is used directly.
const BRUTE_FORCE_PAIRS: usize = 1 << 22;

fn directed_mean(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> f64 {
    let total: f64 = if from.len() * to.len() <= BRUTE_FORCE_PAIRS {
        from.iter().map(|a| brute_nearest(to, a).sqrt()).sum()
    } else {
        let index = PointIndex::new(to);
        // Visiting queries cell by cell keeps the searched buckets in cache.
        let mut visit: Vec<(usize, usize)> = from
            .iter()
            .enumerate()
            .map(|(i, a)| (index.flat(index.key(a)), i))
            .collect();
        visit.sort_unstable();
        let mut nearest = vec![0.0; from.len()];
        for (_, i) in visit {
            nearest[i] = index.nearest_squared(&from[i]).sqrt();
        }
        nearest.iter().sum()
    };
    total / from.len() as f64
}

fn brute_nearest(set: &[Vector3<f64>], p: &Vector3<f64>) -> f64 {
    set.iter()
        .map(|b| (p - b).norm_squared())
        .fold(f64::INFINITY, f64::min)
}

/// Uniform-grid bucketing for exact nearest-neighbour queries. Returns the
/// same squared distance as a full scan, only faster on large sets.
pub struct PointIndex<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    origin: Vector3<f64>,
    dims: [i64; 3],
    /// Points of cell `c` are `order[starts[c]..starts[c + 1]]`.
    starts: Vec<u32>,
    order: Vec<u32>,
}

impl<'a> PointIndex<'a> {
    pub fn new(points: &'a [Vector3<f64>]) -> Self {
        assert!(points.len() < u32::MAX as usize, "too many points to index");
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        if points.is_empty() {
            min = Vector3::zeros();
            max = Vector3::zeros();
        }
        let extent = (max - min).map(|e| e.max(1e-9));
        let n = points.len().max(1) as f64;
        // A few points per occupied cell on surface-like sets, while keeping
        // the dense cell table within a small multiple of the point count.
        let mut cell = (extent.max() / n.sqrt() * 2.0).max(extent.max() * 1e-6);
        let dims = loop {
            let dims: [i64; 3] = std::array::from_fn(|a| (extent[a] / cell).floor() as i64 + 1);
            if (dims.iter().product::<i64>() as f64) <= 8.0 * n + 1000.0 {
                break dims;
            }
            cell *= 1.25;
        };
        let mut index = PointIndex {
            points,
            cell,
            origin: min,
            dims,
            starts: Vec::new(),
            order: Vec::new(),
        };
        let cells = dims.iter().product::<i64>() as usize;
        let ids: Vec<usize> = points.iter().map(|p| index.flat(index.key(p))).collect();
        let mut starts = vec![0u32; cells + 1];
        for &c in &ids {
            starts[c + 1] += 1;
        }
        for c in 0..cells {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut order = vec![0u32; points.len()];
        for (i, &c) in ids.iter().enumerate() {
            order[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        index.starts = starts;
        index.order = order;
        index
    }

    fn key(&self, p: &Vector3<f64>) -> [i64; 3] {
        std::array::from_fn(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64)
    }

    fn flat(&self, k: [i64; 3]) -> usize {
        let k: [i64; 3] = std::array::from_fn(|a| k[a].clamp(0, self.dims[a] - 1));
        ((k[0] * self.dims[1] + k[1]) * self.dims[2] + k[2]) as usize
    }

    /// Squared distance to the closest indexed point.
    pub fn nearest_squared(&self, p: &Vector3<f64>) -> f64 {
        let c = self.key(p);
        let hi = self.dims.map(|d| d - 1);
        // Shells closer than the occupied block hold nothing; start at the block.
        let first = (0..3)
            .map(|a| (-c[a]).max(c[a] - hi[a]).max(0))
            .max()
            .unwrap_or(0);
        let reach = (0..3)
            .map(|a| c[a].abs().max((hi[a] - c[a]).abs()))
            .max()
            .unwrap_or(0);
        let range = |a: usize, shell: i64| (-shell).max(-c[a])..=shell.min(hi[a] - c[a]);
        let mut best = f64::INFINITY;
        let visit = |dx: i64, dy: i64, dz: i64, best: &mut f64| {
            let f = self.flat([c[0] + dx, c[1] + dy, c[2] + dz]);
            for &i in &self.order[self.starts[f] as usize..self.starts[f + 1] as usize] {
                *best = best.min((p - self.points[i as usize]).norm_squared());
            }
        };
        for shell in first..=reach {
            let zs = range(2, shell);
            for dx in range(0, shell) {
                for dy in range(1, shell) {
                    if dx.abs().max(dy.abs()) == shell {
                        for dz in zs.clone() {
                            visit(dx, dy, dz, &mut best);
                        }
                    } else {
                        for dz in [-shell, shell] {
                            if zs.contains(&dz) {
                                visit(dx, dy, dz, &mut best);
                            }
                        }
                    }
                }
            }
            // Anything in a further shell is at least `shell` cells away.
            let bound = shell as f64 * self.cell;
            if best <= bound * bound {
                break;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mae: f64,
    pub rmse: f64,
}

impl ErrorStats {
    fn from_residuals(res: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut n, mut abs, mut sq) = (0usize, 0.0, 0.0);
        for r in res {
            n += 1;
            abs += r.abs();
            sq += r * r;
        }
        (n > 0).then(|| ErrorStats {
            count: n,
            mae: abs / n as f64,
            rmse: (sq / n as f64).sqrt(),
        })
    }
}

/// Errors split by how close the true distance is to the surface. A partition
/// with no points is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub near_threshold: f64,
    pub near: Option<ErrorStats>,
    pub far: Option<ErrorStats>,
    pub all: Option<ErrorStats>,
}

impl AccuracyReport {
    /// Unweighted mean of the near and far figures, `(mae, rmse)`.
    pub fn mean_of_partitions(&self) -> Option<(f64, f64)> {
        let (n, f) = (self.near?, self.far?);
        Some(((n.mae + f.mae) / 2.0, (n.rmse + f.rmse) / 2.0))
    }
}

/// Near points satisfy `|truth| < near_threshold`.
pub fn accuracy_report(
    predicted: &[f64],
    truth: &[f64],
    near_threshold: f64,
) -> Result<AccuracyReport> {
    if predicted.len() != truth.len() {
        return Err(dims(format!(
            "{} predictions for {} ground-truth values",
            predicted.len(),
            truth.len()
        )));
    }
    if !(near_threshold.is_finite() && near_threshold > 0.0) {
        return Err(precondition(format!(
            "near threshold must be positive, got {near_threshold}"
        )));
    }
    let pairs = || predicted.iter().zip(truth);
    let near = ErrorStats::from_residuals(
        pairs()
            .filter(|(_, t)| t.abs() < near_threshold)
            .map(|(p, t)| p - t),
    );
    let far = ErrorStats::from_residuals(
        pairs()
            .filter(|(_, t)| t.abs() >= near_threshold)
            .map(|(p, t)| p - t),
    );
    let all = ErrorStats::from_residuals(pairs().map(|(p, t)| p - t));
    Ok(AccuracyReport {
        near_threshold,
        near,
        far,
        all,
    })
}
