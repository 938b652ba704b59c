//! Tensor-product Bernstein features on an axis-aligned box.
//!
//! A point `p` inside the box is mapped to normalized coordinates
//! `t_i = (x_i - min_i) / (max_i - min_i)`, and its feature row is
//! `φ(t₁) ⊗ φ(t₂) ⊗ φ(t₃)`. Rows are flattened with the axis-1 index varying
//! slowest: feature `(i, j, k)` is stored at `i·N² + j·N + k`. Weight files
//! depend on this order.
//!
//! Gradients returned here are with respect to metric coordinates, i.e. the
//! derivative in `t_i` multiplied by `1 / (max_i - min_i)`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{config, precondition, Result};

/// Largest supported per-axis basis count. Beyond this the binomial
/// coefficients lose integer exactness in `f64`.
pub const MAX_BASIS: usize = 32;
pub const MIN_BASIS: usize = 2;

/// Slack allowed on `t ∈ [0, 1]` before a point counts as outside.
pub(crate) const DOMAIN_TOL: f64 = 1e-12;

const fn binomial_table() -> [[f64; MAX_BASIS]; MAX_BASIS] {
    let mut table = [[0.0; MAX_BASIS]; MAX_BASIS];
    let mut n = 0;
    while n < MAX_BASIS {
        table[n][0] = 1.0;
        let mut k = 1;
        while k <= n {
            table[n][k] = table[n - 1][k - 1] + table[n - 1][k];
            k += 1;
        }
        n += 1;
    }
    table
}

/// `BINOMIAL[n][k]` is `C(n, k)` for `n < MAX_BASIS`.
static BINOMIAL: [[f64; MAX_BASIS]; MAX_BASIS] = binomial_table();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl AxisBox {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        let b = AxisBox { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.min[i].is_finite() && self.max[i].is_finite()) {
                return Err(config(format!("box bound on axis {i} is not finite")));
            }
            if self.max[i] <= self.min[i] {
                return Err(config(format!(
                    "box max must exceed min on axis {i} ({} <= {})",
                    self.max[i], self.min[i]
                )));
            }
        }
        Ok(())
    }

    /// Cube of side `side` centered on `center`.
    pub fn cube(center: Vector3<f64>, side: f64) -> Result<Self> {
        let h = Vector3::repeat(side / 2.0);
        Self::new(center - h, center + h)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) / 2.0
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &AxisBox) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Nearest point of the box to `p`.
    pub fn clamp(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| p[i].clamp(self.min[i], self.max[i]))
    }

    pub fn union(&self, other: &AxisBox) -> AxisBox {
        AxisBox {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn expanded(&self, margin: f64) -> AxisBox {
        AxisBox {
            min: self.min - Vector3::repeat(margin),
            max: self.max + Vector3::repeat(margin),
        }
    }
}

/// A family of 1-D basis functions on `[0, 1]`.
///
/// Only Bernstein polynomials ship, but the tensor machinery below is written
/// against this trait.
pub trait UnivariateBasis {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the `len()` basis values at `t` into `out`.
    fn eval_into(&self, t: f64, out: &mut [f64]);

    /// Writes the `len()` derivatives with respect to `t` into `out`.
    fn grad_into(&self, t: f64, out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bernstein {
    n: usize,
}

impl Bernstein {
    pub fn new(n: usize) -> Result<Self> {
        check_count(n)?;
        Ok(Bernstein { n })
    }
}

impl UnivariateBasis for Bernstein {
    fn len(&self) -> usize {
        self.n
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        bernstein_into(t, self.n, out);
    }

    fn grad_into(&self, t: f64, out: &mut [f64]) {
        bernstein_grad_into(t, self.n, out);
    }
}

fn check_count(n: usize) -> Result<()> {
    if !(MIN_BASIS..=MAX_BASIS).contains(&n) {
        return Err(config(format!(
            "basis count must lie in [{MIN_BASIS}, {MAX_BASIS}], got {n}"
        )));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(precondition(format!(
            "normalized coordinate {t} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Degree `n - 1` Bernstein values. `n` may be 1 here (the constant basis),
/// which the derivative uses as its lowered-degree basis.
pub(crate) fn bernstein_into(t: f64, n: usize, out: &mut [f64]) {
    let deg = n - 1;
    let s = 1.0 - t;
    let mut t_pow = [1.0; MAX_BASIS];
    let mut s_pow = [1.0; MAX_BASIS];
    for k in 1..n {
        t_pow[k] = t_pow[k - 1] * t;
        s_pow[k] = s_pow[k - 1] * s;
    }
    let binom = &BINOMIAL[deg];
    for k in 0..n {
        out[k] = binom[k] * t_pow[k] * s_pow[deg - k];
    }
}

/// Derivative through the lowered-degree identity
/// `φ'_k = (n-1)(ψ_{k-1} - ψ_k)` with `ψ` the degree `n-2` basis. Unlike the
/// closed form this has no `0^-1` terms at `t = 0` or `t = 1`.
fn bernstein_grad_into(t: f64, n: usize, out: &mut [f64]) {
    let mut lower = [0.0; MAX_BASIS];
    bernstein_into(t, n - 1, &mut lower);
    let scale = (n - 1) as f64;
    for k in 0..n {
        let left = if k > 0 { lower[k - 1] } else { 0.0 };
        let right = if k < n - 1 { lower[k] } else { 0.0 };
        out[k] = scale * (left - right);
    }
}

/// Bernstein basis values `C(N-1, n) tⁿ (1-t)^(N-1-n)` for `n = 0..N`.
pub fn eval_1d(t: f64, n: usize) -> Result<Vec<f64>> {
    check_count(n)?;
    check_t(t)?;
    let mut out = vec![0.0; n];
    bernstein_into(t, n, &mut out);
    Ok(out)
}

/// Derivatives of [`eval_1d`] with respect to `t`.
pub fn grad_1d(t: f64, n: usize) -> Result<Vec<f64>> {
    check_count(n)?;
    check_t(t)?;
    let mut out = vec![0.0; n];
    bernstein_grad_into(t, n, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub n_per_axis: usize,
    pub domain: AxisBox,
}

impl BasisConfig {
    pub fn new(n_per_axis: usize, domain: AxisBox) -> Result<Self> {
        let cfg = BasisConfig { n_per_axis, domain };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_count(self.n_per_axis)?;
        self.domain.validate()
    }

    /// `N³`, the length of a feature row.
    pub fn n_features(&self) -> usize {
        self.n_per_axis.pow(3)
    }

    /// Normalized coordinates of a point inside the domain.
    pub fn normalize(&self, p: &Vector3<f64>) -> Result<[f64; 3]> {
        let mut t = [0.0; 3];
        for i in 0..3 {
            let ti = (p[i] - self.domain.min[i]) / (self.domain.max[i] - self.domain.min[i]);
            if !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&ti) {
                return Err(precondition(format!(
                    "point ({}, {}, {}) lies outside the basis domain on axis {i}",
                    p[0], p[1], p[2]
                )));
            }
            t[i] = ti.clamp(0.0, 1.0);
        }
        Ok(t)
    }
}

/// Per-axis basis values at one point, from which feature rows and weighted
/// contractions are assembled without materializing the `N³` row.
pub(crate) struct PointFactors {
    n: usize,
    phi: [[f64; MAX_BASIS]; 3],
    dphi: [[f64; MAX_BASIS]; 3],
    inv_extent: [f64; 3],
}

impl PointFactors {
    /// `t` must already be inside `[0, 1]³`.
    pub(crate) fn at(cfg: &BasisConfig, t: [f64; 3]) -> Self {
        let n = cfg.n_per_axis;
        let mut phi = [[0.0; MAX_BASIS]; 3];
        let mut dphi = [[0.0; MAX_BASIS]; 3];
        let extent = cfg.domain.extent();
        for a in 0..3 {
            bernstein_into(t[a], n, &mut phi[a]);
            bernstein_grad_into(t[a], n, &mut dphi[a]);
        }
        PointFactors {
            n,
            phi,
            dphi,
            inv_extent: [1.0 / extent[0], 1.0 / extent[1], 1.0 / extent[2]],
        }
    }

    pub(crate) fn row_into(&self, out: &mut [f64]) {
        let n = self.n;
        let (p1, p2, p3) = (&self.phi[0], &self.phi[1], &self.phi[2]);
        for i in 0..n {
            for j in 0..n {
                let a = p1[i] * p2[j];
                let base = (i * n + j) * n;
                for k in 0..n {
                    out[base + k] = a * p3[k];
                }
            }
        }
    }

    fn grad_row_into(&self, axis: usize, out: &mut [f64]) {
        let n = self.n;
        let pick = |a: usize| {
            if a == axis {
                &self.dphi[a]
            } else {
                &self.phi[a]
            }
        };
        let (p1, p2, p3) = (pick(0), pick(1), pick(2));
        let s = self.inv_extent[axis];
        for i in 0..n {
            for j in 0..n {
                let a = p1[i] * p2[j] * s;
                let base = (i * n + j) * n;
                for k in 0..n {
                    out[base + k] = a * p3[k];
                }
            }
        }
    }

    /// `⟨Ψ_p, w⟩`.
    pub(crate) fn value(&self, w: &[f64]) -> f64 {
        let n = self.n;
        let (p1, p2, p3) = (&self.phi[0], &self.phi[1], &self.phi[2]);
        let mut total = 0.0;
        for i in 0..n {
            let mut acc_i = 0.0;
            for j in 0..n {
                let base = (i * n + j) * n;
                let row = &w[base..base + n];
                let inner: f64 = row.iter().zip(&p3[..n]).map(|(w, p)| w * p).sum();
                acc_i += p2[j] * inner;
            }
            total += p1[i] * acc_i;
        }
        total
    }

    /// `⟨Ψ_p, w⟩` and its metric gradient.
    pub(crate) fn value_and_grad(&self, w: &[f64]) -> (f64, Vector3<f64>) {
        let n = self.n;
        let (p1, p2, p3) = (&self.phi[0], &self.phi[1], &self.phi[2]);
        let (d1, d2, d3) = (&self.dphi[0], &self.dphi[1], &self.dphi[2]);
        let (mut v, mut g1, mut g2, mut g3) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let (mut s, mut s2, mut s3) = (0.0, 0.0, 0.0);
            for j in 0..n {
                let base = (i * n + j) * n;
                let row = &w[base..base + n];
                let mut inner = 0.0;
                let mut inner_d = 0.0;
                for k in 0..n {
                    inner += row[k] * p3[k];
                    inner_d += row[k] * d3[k];
                }
                s += p2[j] * inner;
                s2 += d2[j] * inner;
                s3 += p2[j] * inner_d;
            }
            v += p1[i] * s;
            g1 += d1[i] * s;
            g2 += p1[i] * s2;
            g3 += p1[i] * s3;
        }
        let grad = Vector3::new(
            g1 * self.inv_extent[0],
            g2 * self.inv_extent[1],
            g3 * self.inv_extent[2],
        );
        (v, grad)
    }
}

/// One row of the design matrix: `Ψ_p`, length `N³`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub values: Vec<f64>,
}

impl std::ops::Deref for FeatureRow {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

pub fn features(p: &Vector3<f64>, cfg: &BasisConfig) -> Result<FeatureRow> {
    cfg.validate()?;
    let t = cfg.normalize(p)?;
    let mut values = vec![0.0; cfg.n_features()];
    PointFactors::at(cfg, t).row_into(&mut values);
    Ok(FeatureRow { values })
}

/// Metric gradients of the feature row, one row per axis.
pub fn features_grad(p: &Vector3<f64>, cfg: &BasisConfig) -> Result<[FeatureRow; 3]> {
    cfg.validate()?;
    let t = cfg.normalize(p)?;
    let factors = PointFactors::at(cfg, t);
    let rows = std::array::from_fn(|axis| {
        let mut values = vec![0.0; cfg.n_features()];
        factors.grad_row_into(axis, &mut values);
        FeatureRow { values }
    });
    Ok(rows)
}

/// Writes `Ψ_p` into `out` (length `N³`).
pub(crate) fn features_into(p: &Vector3<f64>, cfg: &BasisConfig, out: &mut [f64]) -> Result<()> {
    let t = cfg.normalize(p)?;
    PointFactors::at(cfg, t).row_into(out);
    Ok(())
}
