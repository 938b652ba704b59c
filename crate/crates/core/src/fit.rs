//! Ridge regression of Bernstein weights from `(point, signed distance)`
//! samples.
//!
//! Three solvers target the same objective
//! `‖Ψw − f‖² + λ‖w − w₀‖²`:
//!
//! * [`fit_batch`] forms the normal equations and factors them once.
//! * [`RlsState`] consumes mini-batches recursively through a Kalman-gain
//!   update, starting from `B₀ = I/λ`, `w = w₀`. After all data is seen it
//!   holds the same minimizer as the batch solve.
//! * [`fit_tensor_grid`] exploits the Kronecker structure of samples laid out
//!   on a tensor grid, which keeps large `N` tractable.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};

use crate::basis::{bernstein_into, features_into, BasisConfig};
use crate::error::{config, dims, precondition, Error, Result};

/// Rows of the design matrix materialized at once by the batch solver.
const BATCH_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Ridge strength; also the inverse of the initial `B` scale.
    pub lambda: f64,
    /// Samples per recursive update.
    pub batch_size: usize,
    /// Prior weights `w₀`; zero when absent.
    pub w_init: Option<Vec<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: 1e-2,
            batch_size: 256,
            w_init: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.batch_size == 0 {
            return Err(config("batch_size must be at least 1"));
        }
        if let Some(w) = &self.w_init {
            if w.len() != n_features {
                return Err(dims(format!(
                    "w_init has {} entries, basis has {n_features} features",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(precondition("w_init contains non-finite values"));
            }
        }
        Ok(())
    }

    fn prior(&self, n_features: usize) -> DVector<f64> {
        match &self.w_init {
            Some(w) => DVector::from_column_slice(w),
            None => DVector::zeros(n_features),
        }
    }
}

fn check_samples(points: &[Vector3<f64>], distances: &[f64]) -> Result<()> {
    if points.len() != distances.len() {
        return Err(dims(format!(
            "{} points but {} distances",
            points.len(),
            distances.len()
        )));
    }
    if points.is_empty() {
        return Err(precondition("at least one sample is required"));
    }
    let finite = points.iter().all(|p| p.iter().all(|v| v.is_finite()))
        && distances.iter().all(|d| d.is_finite());
    if !finite {
        return Err(precondition("samples contain non-finite values"));
    }
    Ok(())
}

/// Transposed design matrix `Ψᵀ` (features × samples). Column-major storage
/// makes each sample's feature row contiguous.
pub fn design_matrix_transposed(
    points: &[Vector3<f64>],
    cfg: &BasisConfig,
) -> Result<DMatrix<f64>> {
    let f = cfg.n_features();
    let mut psi_t = DMatrix::<f64>::zeros(f, points.len());
    for (c, p) in points.iter().enumerate() {
        let col = psi_t.column_mut(c);
        features_into(p, cfg, col.data.into_slice_mut())?;
    }
    Ok(psi_t)
}

/// `w* = (ΨᵀΨ + λI)⁻¹ (Ψᵀf + λw₀)`.
pub fn fit_batch(
    points: &[Vector3<f64>],
    distances: &[f64],
    cfg: &BasisConfig,
    fit_cfg: &FitConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let nf = cfg.n_features();
    fit_cfg.validate(nf)?;
    check_samples(points, distances)?;

    let mut gram = DMatrix::<f64>::zeros(nf, nf);
    let mut rhs = DVector::<f64>::zeros(nf);
    for (pts, ds) in points
        .chunks(BATCH_CHUNK)
        .zip(distances.chunks(BATCH_CHUNK))
    {
        let psi_t = design_matrix_transposed(pts, cfg)?;
        gram.gemm(1.0, &psi_t, &psi_t.transpose(), 1.0);
        rhs.gemv(1.0, &psi_t, &DVector::from_column_slice(ds), 1.0);
    }
    let prior = fit_cfg.prior(nf);
    for i in 0..nf {
        gram[(i, i)] += fit_cfg.lambda;
    }
    rhs.axpy(fit_cfg.lambda, &prior, 1.0);
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal equations are not positive definite".into()))?;
    Ok(chol.solve(&rhs).as_slice().to_vec())
}

/// Recursive least-squares state.
#[derive(Debug, Clone)]
pub struct RlsState {
    cfg: BasisConfig,
    /// `(ΨᵀΨ + λI)⁻¹` over the samples seen so far.
    b_matrix: DMatrix<f64>,
    weights: DVector<f64>,
    n_samples_seen: usize,
}

impl RlsState {
    /// `B = I/λ`, `w = w₀`.
    pub fn new(cfg: &BasisConfig, fit_cfg: &FitConfig) -> Result<Self> {
        cfg.validate()?;
        let nf = cfg.n_features();
        fit_cfg.validate(nf)?;
        Ok(RlsState {
            cfg: *cfg,
            b_matrix: DMatrix::identity(nf, nf) / fit_cfg.lambda,
            weights: fit_cfg.prior(nf),
            n_samples_seen: 0,
        })
    }

    pub fn b_matrix(&self) -> &DMatrix<f64> {
        &self.b_matrix
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights.as_slice().to_vec()
    }

    pub fn n_samples_seen(&self) -> usize {
        self.n_samples_seen
    }

    pub fn basis(&self) -> &BasisConfig {
        &self.cfg
    }

    /// Absorbs one mini-batch:
    /// `K = BΨ̃ᵀ(I + Ψ̃BΨ̃ᵀ)⁻¹`, `B ← B − KΨ̃B`, `w ← w + K(f̃ − Ψ̃w)`.
    ///
    /// With `LLᵀ = I + Ψ̃BΨ̃ᵀ` and `V = L⁻¹Ψ̃B` this is `B ← B − VᵀV` and
    /// `w ← w + VᵀL⁻¹(f̃ − Ψ̃w)`, which keeps the heavy work in products.
    pub fn update(&mut self, points: &[Vector3<f64>], distances: &[f64]) -> Result<()> {
        check_samples(points, distances)?;
        let psi_t = design_matrix_transposed(points, &self.cfg)?;
        let m = points.len();

        // B symmetric, so BΨ̃ᵀ doubles as (Ψ̃B)ᵀ.
        let b_psi_t = &self.b_matrix * &psi_t;
        // An explicit transpose lets the product take the blocked kernel.
        let mut inner = psi_t.transpose() * &b_psi_t;
        for i in 0..m {
            inner[(i, i)] += 1.0;
        }
        let chol = inner.cholesky().ok_or_else(|| {
            Error::Numerical("innovation covariance lost positive definiteness".into())
        })?;
        let l = chol.l();

        let mut innovation = DVector::from_column_slice(distances) - psi_t.tr_mul(&self.weights);
        l.solve_lower_triangular_mut(&mut innovation);
        let mut v = b_psi_t.transpose();
        solve_lower_blocked(&l, &mut v);
        self.weights.gemv_tr(1.0, &v, &innovation, 1.0);

        let v_t = v.transpose();
        self.b_matrix.gemm(-1.0, &v_t, &v, 1.0);
        symmetrize(&mut self.b_matrix);

        self.n_samples_seen += m;
        Ok(())
    }

    /// Feeds the samples through in `batch_size` chunks.
    pub fn update_all(
        &mut self,
        points: &[Vector3<f64>],
        distances: &[f64],
        batch_size: usize,
    ) -> Result<()> {
        if batch_size == 0 {
            return Err(config("batch_size must be at least 1"));
        }
        check_samples(points, distances)?;
        for (pts, ds) in points.chunks(batch_size).zip(distances.chunks(batch_size)) {
            self.update(pts, ds)?;
        }
        Ok(())
    }
}

/// Rows of `L` handled per substitution block; the rest goes through `gemm`.
const TRSM_BLOCK: usize = 48;

/// `X ← L⁻¹X` for lower-triangular `L`, blocked so most of the work is a
/// matrix product.
fn solve_lower_blocked(l: &DMatrix<f64>, x: &mut DMatrix<f64>) {
    let m = l.nrows();
    let mut start = 0;
    while start < m {
        let size = TRSM_BLOCK.min(m - start);
        let diag = l.view((start, start), (size, size)).into_owned();
        let mut rows = x.rows(start, size).into_owned();
        diag.solve_lower_triangular_mut(&mut rows);
        x.rows_mut(start, size).copy_from(&rows);
        let rest = m - start - size;
        if rest > 0 {
            let below = l.view((start + size, start), (rest, size));
            x.rows_mut(start + size, rest)
                .gemm(-1.0, &below, &rows, 1.0);
        }
        start += size;
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Convenience wrapper: a fresh [`RlsState`] fed all samples in
/// `fit_cfg.batch_size` chunks.
pub fn fit_recursive(
    points: &[Vector3<f64>],
    distances: &[f64],
    cfg: &BasisConfig,
    fit_cfg: &FitConfig,
) -> Result<Vec<f64>> {
    let mut state = RlsState::new(cfg, fit_cfg)?;
    state.update_all(points, distances, fit_cfg.batch_size)?;
    Ok(state.into_weights())
}

/// Samples on a tensor grid: `values[(a·n₂ + b)·n₃ + c]` is the distance at
/// `(axes[0][a], axes[1][b], axes[2][c])`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    pub axes: [Vec<f64>; 3],
    pub values: Vec<f64>,
}

impl TensorGrid {
    /// Evenly spaced grid with `resolution` nodes per axis spanning `cfg`'s
    /// domain, labelled by `sdf`.
    pub fn sample(
        cfg: &BasisConfig,
        resolution: usize,
        mut sdf: impl FnMut(&Vector3<f64>) -> f64,
    ) -> Result<Self> {
        if resolution < 2 {
            return Err(config("grid resolution must be at least 2"));
        }
        let d = &cfg.domain;
        let axes: [Vec<f64>; 3] = std::array::from_fn(|a| {
            (0..resolution)
                .map(|i| d.min[a] + (d.max[a] - d.min[a]) * i as f64 / (resolution - 1) as f64)
                .collect()
        });
        let mut values = Vec::with_capacity(resolution.pow(3));
        for &x in &axes[0] {
            for &y in &axes[1] {
                for &z in &axes[2] {
                    values.push(sdf(&Vector3::new(x, y, z)));
                }
            }
        }
        Ok(TensorGrid { axes, values })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }
}

/// Applies `m` (rows × dims[axis]) along `axis` of a flat row-major 3-tensor.
pub(crate) fn mode_product(
    tensor: &[f64],
    shape: [usize; 3],
    axis: usize,
    m: &DMatrix<f64>,
) -> (Vec<f64>, [usize; 3]) {
    debug_assert_eq!(m.ncols(), shape[axis]);
    let mut out_shape = shape;
    out_shape[axis] = m.nrows();
    let mut out = vec![0.0; out_shape.iter().product()];
    let [s0, s1, s2] = shape;
    let [o0, o1, o2] = out_shape;
    match axis {
        0 => {
            for r in 0..o0 {
                for a in 0..s0 {
                    let coef = m[(r, a)];
                    if coef == 0.0 {
                        continue;
                    }
                    let src = &tensor[a * s1 * s2..(a + 1) * s1 * s2];
                    let dst = &mut out[r * o1 * o2..(r + 1) * o1 * o2];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += coef * s;
                    }
                }
            }
        }
        1 => {
            for a in 0..s0 {
                for r in 0..o1 {
                    for b in 0..s1 {
                        let coef = m[(r, b)];
                        let src = &tensor[(a * s1 + b) * s2..(a * s1 + b + 1) * s2];
                        let dst = &mut out[(a * o1 + r) * o2..(a * o1 + r + 1) * o2];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += coef * s;
                        }
                    }
                }
            }
        }
        _ => {
            for ab in 0..s0 * s1 {
                let src = &tensor[ab * s2..(ab + 1) * s2];
                let dst = &mut out[ab * o2..(ab + 1) * o2];
                for (r, d) in dst.iter_mut().enumerate() {
                    *d = (0..s2).map(|c| m[(r, c)] * src[c]).sum();
                }
            }
        }
    }
    (out, out_shape)
}

/// Per-axis basis matrix: row `g` holds `φ(t(x_g))`.
pub(crate) fn axis_basis_matrix(
    cfg: &BasisConfig,
    axis: usize,
    coords: &[f64],
) -> Result<DMatrix<f64>> {
    let n = cfg.n_per_axis;
    let (lo, hi) = (cfg.domain.min[axis], cfg.domain.max[axis]);
    let mut m = DMatrix::zeros(coords.len(), n);
    let mut buf = vec![0.0; n];
    for (g, &x) in coords.iter().enumerate() {
        let t = (x - lo) / (hi - lo);
        if !(-1e-12..=1.0 + 1e-12).contains(&t) {
            return Err(precondition(format!(
                "grid coordinate {x} outside the basis domain on axis {axis}"
            )));
        }
        bernstein_into(t.clamp(0.0, 1.0), n, &mut buf);
        for k in 0..n {
            m[(g, k)] = buf[k];
        }
    }
    Ok(m)
}

/// Exact ridge solution for tensor-grid samples.
///
/// With `Ψ = Φ₁ ⊗ Φ₂ ⊗ Φ₃`, the normal matrix is `G₁ ⊗ G₂ ⊗ G₃ + λI` and is
/// diagonalized by the per-axis eigenvectors of `Gᵢ = ΦᵢᵀΦᵢ`, so the solve
/// costs `O(N⁴)` plus a few mode products instead of `O(N⁹)`.
pub fn fit_tensor_grid(
    grid: &TensorGrid,
    cfg: &BasisConfig,
    fit_cfg: &FitConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let nf = cfg.n_features();
    fit_cfg.validate(nf)?;
    let shape = grid.shape();
    if shape.iter().any(|&s| s == 0) || grid.values.len() != shape.iter().product::<usize>() {
        return Err(dims("grid values do not match its axes"));
    }
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(precondition("grid values contain non-finite entries"));
    }
    let n = cfg.n_per_axis;

    let mut eig_vectors = Vec::with_capacity(3);
    let mut eig_values = Vec::with_capacity(3);
    let mut rhs = grid.values.clone();
    let mut rhs_shape = shape;
    for axis in 0..3 {
        let phi = axis_basis_matrix(cfg, axis, &grid.axes[axis])?;
        let (next, next_shape) = mode_product(&rhs, rhs_shape, axis, &phi.transpose());
        rhs = next;
        rhs_shape = next_shape;
        let gram = phi.transpose() * &phi;
        let eig = SymmetricEigen::new(gram);
        eig_vectors.push(eig.eigenvectors);
        eig_values.push(eig.eigenvalues);
    }
    // rhs now holds Ψᵀf with shape (N, N, N)
    let prior = fit_cfg.prior(nf);
    for (r, p) in rhs.iter_mut().zip(prior.iter()) {
        *r += fit_cfg.lambda * p;
    }

    let mut y = rhs;
    let mut y_shape = [n, n, n];
    for axis in 0..3 {
        let (next, s) = mode_product(&y, y_shape, axis, &eig_vectors[axis].transpose());
        y = next;
        y_shape = s;
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let denom = eig_values[0][i] * eig_values[1][j] * eig_values[2][k] + fit_cfg.lambda;
                y[(i * n + j) * n + k] /= denom;
            }
        }
    }
    for axis in 0..3 {
        let (next, s) = mode_product(&y, y_shape, axis, &eig_vectors[axis]);
        y = next;
        y_shape = s;
    }
    Ok(y)
}

/// `Ψw` at each point.
pub fn predict(points: &[Vector3<f64>], cfg: &BasisConfig, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != cfg.n_features() {
        return Err(dims("weight count does not match basis"));
    }
    points
        .iter()
        .map(|p| {
            let t = cfg.normalize(p)?;
            Ok(crate::basis::PointFactors::at(cfg, t).value(weights))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::AxisBox;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_cfg(n: usize) -> BasisConfig {
        BasisConfig::new(
            n,
            AxisBox::new(Vector3::zeros(), Vector3::repeat(1.0)).unwrap(),
        )
        .unwrap()
    }

    fn sphere(p: &Vector3<f64>) -> f64 {
        (p - Vector3::repeat(0.5)).norm() - 0.25
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rls_init_scales_identity() {
        let cfg = unit_cfg(2);
        let s = RlsState::new(
            &cfg,
            &FitConfig {
                lambda: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.b_matrix(), &DMatrix::identity(8, 8));
        assert!(s.weights().iter().all(|w| *w == 0.0));
        assert_eq!(s.n_samples_seen(), 0);
        let s = RlsState::new(
            &cfg,
            &FitConfig {
                lambda: 0.01,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((0..8).all(|i| (s.b_matrix()[(i, i)] - 100.0).abs() < 1e-12));
    }

    #[test]
    fn config_validation() {
        let cfg = unit_cfg(2);
        assert!(RlsState::new(
            &cfg,
            &FitConfig {
                lambda: 0.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(RlsState::new(
            &cfg,
            &FitConfig {
                batch_size: 0,
                ..Default::default()
            }
        )
        .is_err());
        let bad_prior = FitConfig {
            w_init: Some(vec![0.0; 7]),
            ..Default::default()
        };
        assert!(matches!(
            fit_batch(&[Vector3::zeros()], &[0.0], &cfg, &bad_prior),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(fit_batch(
            &[Vector3::zeros()],
            &[0.0, 1.0],
            &cfg,
            &FitConfig::default()
        )
        .is_err());
        assert!(fit_batch(&[], &[], &cfg, &FitConfig::default()).is_err());
        assert!(fit_batch(&[Vector3::repeat(2.0)], &[0.0], &cfg, &FitConfig::default()).is_err());
    }

    #[test]
    fn single_sample_is_interpolated() {
        let cfg = unit_cfg(2);
        let p = Vector3::new(0.3, 0.6, 0.1);
        let fc = FitConfig {
            lambda: 1e-12,
            ..Default::default()
        };
        let w = fit_batch(&[p], &[0.42], &cfg, &fc).unwrap();
        let pred = predict(&[p], &cfg, &w).unwrap()[0];
        assert!((pred - 0.42).abs() < 1e-6, "{pred}");
    }

    #[test]
    fn trilinear_field_is_reproduced() {
        let cfg = unit_cfg(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 200);
        let d: Vec<f64> = pts.iter().map(|p| p.x).collect();
        let fc = FitConfig {
            lambda: 1e-12,
            ..Default::default()
        };
        let w = fit_batch(&pts, &d, &cfg, &fc).unwrap();
        let held = random_points(&mut rng, 50);
        let pred = predict(&held, &cfg, &w).unwrap();
        for (p, v) in held.iter().zip(pred) {
            assert!((v - p.x).abs() < 1e-8);
        }
    }

    #[test]
    fn blocked_triangular_solve_matches_substitution() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for m in [1, TRSM_BLOCK, TRSM_BLOCK + 1, 3 * TRSM_BLOCK + 7] {
            let l = DMatrix::from_fn(m, m, |i, j| match i.cmp(&j) {
                std::cmp::Ordering::Less => 0.0,
                std::cmp::Ordering::Equal => rng.random_range(1.0..2.0),
                std::cmp::Ordering::Greater => rng.random_range(-0.5..0.5),
            });
            let x = DMatrix::from_fn(m, 5, |_, _| rng.random_range(-1.0..1.0));
            let mut blocked = x.clone();
            solve_lower_blocked(&l, &mut blocked);
            let direct = l.solve_lower_triangular(&x).unwrap();
            assert!((blocked - direct).amax() < 1e-10, "m = {m}");
        }
    }

    #[test]
    fn recursive_matches_batch_on_sphere() {
        let cfg = unit_cfg(4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 3000);
        let d: Vec<f64> = pts.iter().map(sphere).collect();
        let fc = FitConfig {
            batch_size: 97,
            ..Default::default()
        };
        let batch = fit_batch(&pts, &d, &cfg, &fc).unwrap();
        let rec = fit_recursive(&pts, &d, &cfg, &fc).unwrap();
        assert!(max_abs_diff(&batch, &rec) < 1e-6);
    }

    #[test]
    fn recursive_matches_batch_with_prior() {
        let cfg = unit_cfg(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = random_points(&mut rng, 400);
        let d: Vec<f64> = pts.iter().map(sphere).collect();
        let prior: Vec<f64> = (0..27).map(|i| 0.01 * i as f64).collect();
        let fc = FitConfig {
            lambda: 0.5,
            batch_size: 33,
            w_init: Some(prior),
        };
        let batch = fit_batch(&pts, &d, &cfg, &fc).unwrap();
        let rec = fit_recursive(&pts, &d, &cfg, &fc).unwrap();
        assert!(max_abs_diff(&batch, &rec) < 1e-9);
    }

    #[test]
    fn zero_innovation_leaves_weights() {
        let cfg = unit_cfg(3);
        let prior: Vec<f64> = (0..27).map(|i| (i as f64 * 0.37).sin()).collect();
        let fc = FitConfig {
            w_init: Some(prior.clone()),
            ..Default::default()
        };
        let mut state = RlsState::new(&cfg, &fc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = random_points(&mut rng, 20);
        let d = predict(&pts, &cfg, &prior).unwrap();
        state.update(&pts, &d).unwrap();
        assert!(max_abs_diff(state.weights(), &prior) < 1e-12);
    }

    #[test]
    fn update_reduces_batch_residual() {
        let cfg = unit_cfg(3);
        let mut state = RlsState::new(&cfg, &FitConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts = random_points(&mut rng, 40);
        let d: Vec<f64> = pts.iter().map(sphere).collect();
        let norm = |w: &[f64]| {
            let pr = predict(&pts, &cfg, w).unwrap();
            pr.iter()
                .zip(&d)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let before = norm(state.weights());
        state.update(&pts, &d).unwrap();
        assert!(norm(state.weights()) < before);
    }

    #[test]
    fn b_matrix_stays_positive_definite() {
        let cfg = unit_cfg(2);
        let mut state = RlsState::new(&cfg, &FitConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..120 {
            let pts = random_points(&mut rng, 5);
            let d: Vec<f64> = pts.iter().map(sphere).collect();
            state.update(&pts, &d).unwrap();
            let b = state.b_matrix();
            assert!((b - b.transpose()).abs().max() < 1e-9);
            let min_eig = SymmetricEigen::new(b.clone()).eigenvalues.min();
            assert!(min_eig > 0.0);
        }
        assert_eq!(state.n_samples_seen(), 600);
    }

    #[test]
    fn non_finite_rejected() {
        let cfg = unit_cfg(2);
        let mut state = RlsState::new(&cfg, &FitConfig::default()).unwrap();
        assert!(state.update(&[Vector3::repeat(0.5)], &[f64::NAN]).is_err());
        assert!(state
            .update(&[Vector3::new(f64::INFINITY, 0.0, 0.0)], &[0.0])
            .is_err());
    }

    #[test]
    fn tensor_grid_matches_batch() {
        let dom = AxisBox::new(Vector3::new(-0.2, 0.0, 0.1), Vector3::new(0.4, 0.5, 0.9)).unwrap();
        let cfg = BasisConfig::new(4, dom).unwrap();
        let f = |p: &Vector3<f64>| (p - Vector3::new(0.1, 0.2, 0.5)).norm() - 0.15;
        let grid = TensorGrid::sample(&cfg, 7, f).unwrap();
        let prior: Vec<f64> = (0..64).map(|i| 0.001 * i as f64).collect();
        let fc = FitConfig {
            lambda: 0.03,
            w_init: Some(prior),
            ..Default::default()
        };
        let fast = fit_tensor_grid(&grid, &cfg, &fc).unwrap();

        let mut pts = Vec::new();
        for &x in &grid.axes[0] {
            for &y in &grid.axes[1] {
                for &z in &grid.axes[2] {
                    pts.push(Vector3::new(x, y, z));
                }
            }
        }
        let slow = fit_batch(&pts, &grid.values, &cfg, &fc).unwrap();
        assert!(
            max_abs_diff(&fast, &slow) < 1e-9,
            "{}",
            max_abs_diff(&fast, &slow)
        );
    }

    #[test]
    fn mode_product_matches_dense_kronecker() {
        let shape = [2, 3, 4];
        let t: Vec<f64> = (0..24).map(|i| i as f64 * 0.5 - 3.0).collect();
        let m = DMatrix::from_fn(5, 3, |r, c| (r * 3 + c) as f64 - 4.0);
        let (out, s) = mode_product(&t, shape, 1, &m);
        assert_eq!(s, [2, 5, 4]);
        for a in 0..2 {
            for r in 0..5 {
                for c in 0..4 {
                    let expect: f64 = (0..3).map(|b| m[(r, b)] * t[(a * 3 + b) * 4 + c]).sum();
                    assert!((out[(a * 5 + r) * 4 + c] - expect).abs() < 1e-12);
                }
            }
        }
    }
}
