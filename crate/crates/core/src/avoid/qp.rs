//! Dense strictly convex QP: `min ½ xᵀHx + gᵀx` s.t. `A x ≤ b`, `lo ≤ x ≤ hi`.
//!
//! Primal active-set method. A feasible start comes from a phase-1 problem
//! in `(x, t)` whose starting point is always feasible; an optimal `t > 0`
//! means the constraints cannot all hold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dims, precondition, Result};

/// Stationarity, feasibility and complementarity bound checked on every solve.
pub const KKT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    /// Inequality rows `A x ≤ b`.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Variable bounds; infinite entries are ignored.
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
    /// Most negative multiplier, as a positive number (0 when none is negative).
    pub dual: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.complementarity)
            .max(self.dual)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    /// Active constraints: rows of `A` first, then `m + j` for an active
    /// upper bound on `x_j` and `m + n + j` for an active lower bound.
    pub active: Vec<usize>,
    /// Multipliers for the same numbering as `active`, all constraints.
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt: Option<KktResiduals>,
    pub diagnostics: Option<String>,
}

/// All constraints as rows `c_iᵀ x ≤ d_i`, plus a map back to user numbering.
struct Rows {
    c: DMatrix<f64>,
    d: DVector<f64>,
    id: Vec<usize>,
}

impl QpProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.gradient.len();
        if self.hessian.shape() != (n, n) {
            return Err(dims(format!(
                "hessian is {:?}, gradient has {n} entries",
                self.hessian.shape()
            )));
        }
        if self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return Err(dims("inequality rows do not match the variables or bounds"));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(dims("variable bounds must have one entry per variable"));
        }
        let finite = self
            .hessian
            .iter()
            .chain(self.gradient.iter())
            .chain(self.a.iter())
            .chain(self.b.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(precondition("QP data must be finite"));
        }
        if self
            .lower
            .iter()
            .chain(self.upper.iter())
            .any(|v| v.is_nan())
        {
            return Err(precondition("variable bounds must not be NaN"));
        }
        if (&self.hessian - self.hessian.transpose()).abs().max()
            > 1e-12 * (1.0 + self.hessian.abs().max())
        {
            return Err(precondition("hessian must be symmetric"));
        }
        if self.hessian.clone().cholesky().is_none() {
            return Err(precondition("hessian must be positive definite"));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }

    fn rows(&self) -> Rows {
        let (m, n) = self.a.shape();
        let mut c = Vec::new();
        let mut d = Vec::new();
        let mut id = Vec::new();
        for i in 0..m {
            c.push(self.a.row(i).transpose());
            d.push(self.b[i]);
            id.push(i);
        }
        for j in 0..n {
            if self.upper[j].is_finite() {
                let mut e = DVector::zeros(n);
                e[j] = 1.0;
                c.push(e);
                d.push(self.upper[j]);
                id.push(m + j);
            }
        }
        for j in 0..n {
            if self.lower[j].is_finite() {
                let mut e = DVector::zeros(n);
                e[j] = -1.0;
                c.push(e);
                d.push(-self.lower[j]);
                id.push(m + n + j);
            }
        }
        let mut cm = DMatrix::zeros(c.len(), n);
        for (r, row) in c.iter().enumerate() {
            cm.row_mut(r).copy_from(&row.transpose());
        }
        Rows {
            c: cm,
            d: DVector::from_vec(d),
            id,
        }
    }

    /// KKT residuals of `(x, λ)` in user numbering.
    pub fn kkt_residuals(&self, x: &DVector<f64>, multipliers: &DVector<f64>) -> KktResiduals {
        let (m, n) = self.a.shape();
        let mut grad = &self.hessian * x + &self.gradient;
        let mut primal: f64 = 0.0;
        let mut comp: f64 = 0.0;
        let mut dual: f64 = 0.0;
        // Multipliers of absent bounds must be zero; count them as dual error.
        let mut stray: f64 = 0.0;
        let mut visit = |lam: f64, slack: f64| {
            primal = primal.max(-slack);
            comp = comp.max((lam * slack).abs());
            dual = dual.max(-lam);
        };
        for i in 0..m {
            let lam = multipliers[i];
            grad += self.a.row(i).transpose() * lam;
            visit(lam, self.b[i] - self.a.row(i).dot(&x.transpose()));
        }
        for j in 0..n {
            let up = multipliers[m + j];
            let lo = multipliers[m + n + j];
            grad[j] += up - lo;
            if self.upper[j].is_finite() {
                visit(up, self.upper[j] - x[j]);
            } else {
                stray = stray.max(up.abs());
            }
            if self.lower[j].is_finite() {
                visit(lo, x[j] - self.lower[j]);
            } else {
                stray = stray.max(lo.abs());
            }
        }
        let dual = dual.max(stray);
        KktResiduals {
            stationarity: grad.amax(),
            primal,
            complementarity: comp,
            dual,
        }
    }
}

struct ActiveSetResult {
    x: DVector<f64>,
    working: Vec<usize>,
    lambda: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Primal active-set iterations from a feasible `x`.
fn active_set(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    rows: &Rows,
    mut x: DVector<f64>,
    max_iters: usize,
) -> ActiveSetResult {
    let n = g.len();
    let mut working: Vec<usize> = Vec::new();
    for it in 0..max_iters {
        // Equality-constrained step: [H Wᵀ; W 0][p; λ] = [−(Hx + g); 0].
        let k = working.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for (r, &i) in working.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = rows.c[(i, j)];
                kkt[(j, n + r)] = rows.c[(i, j)];
            }
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&-(h * &x + g));
        let Some(sol) = kkt.lu().solve(&rhs) else {
            return ActiveSetResult {
                x,
                working,
                lambda: vec![],
                iterations: it,
                converged: false,
            };
        };
        let p = sol.rows(0, n).into_owned();
        let lambda: Vec<f64> = sol.rows(n, k).iter().copied().collect();
        let scale = 1.0 + x.amax();
        if p.amax() <= 1e-12 * scale {
            // Taking the tiny step keeps the stationarity residual at rounding level.
            x += &p;
            // Stationary on the working set: drop the most negative multiplier.
            let worst = lambda
                .iter()
                .enumerate()
                .filter(|(_, l)| **l < -1e-12)
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)));
            match worst {
                None => {
                    return ActiveSetResult {
                        x,
                        working,
                        lambda,
                        iterations: it,
                        converged: true,
                    };
                }
                Some((r, _)) => {
                    working.remove(r);
                }
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..rows.d.len() {
            if working.contains(&i) {
                continue;
            }
            let ap = rows.c.row(i).transpose().dot(&p);
            if ap > 1e-14 {
                let slack = (rows.d[i] - rows.c.row(i).transpose().dot(&x)).max(0.0);
                let t = slack / ap;
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        x += &p * alpha;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    ActiveSetResult {
        x,
        working,
        lambda: vec![],
        iterations: max_iters,
        converged: false,
    }
}

fn iteration_cap(n: usize, m: usize) -> usize {
    50 * (n + m) + 100
}

/// Finds `x` with `C x ≤ d`, or reports the smallest uniform violation.
fn phase_one(rows: &Rows, n: usize) -> (DVector<f64>, f64, bool) {
    // Variables (x, t): min ½ε‖x‖² + ½εt² + t  s.t. C x − t ≤ d, −t ≤ 0.
    let eps = 1e-8;
    let m = rows.d.len();
    let mut c = DMatrix::zeros(m + 1, n + 1);
    c.view_mut((0, 0), (m, n)).copy_from(&rows.c);
    for i in 0..m {
        c[(i, n)] = -1.0;
    }
    c[(m, n)] = -1.0;
    let mut d = DVector::zeros(m + 1);
    d.rows_mut(0, m).copy_from(&rows.d);
    let ext = Rows { c, d, id: vec![] };
    let h = DMatrix::identity(n + 1, n + 1) * eps;
    let mut g = DVector::zeros(n + 1);
    g[n] = 1.0;
    let mut start = DVector::zeros(n + 1);
    start[n] = rows.d.iter().fold(0.0f64, |acc, v| acc.max(-v)) + 1.0;
    let res = active_set(&h, &g, &ext, start, iteration_cap(n + 1, m + 1));
    let t = res.x[n];
    (res.x.rows(0, n).into_owned(), t, res.converged)
}

pub fn solve_qp(prob: &QpProblem) -> Result<QpSolution> {
    prob.validate()?;
    let (m, n) = prob.a.shape();
    let rows = prob.rows();
    let total = m + 2 * n;
    let infeasible = |x: DVector<f64>, iterations: usize, why: String| QpSolution {
        objective: prob.objective(&x),
        x,
        status: QpStatus::Infeasible,
        active: vec![],
        multipliers: DVector::zeros(total),
        iterations,
        kkt: None,
        diagnostics: Some(why),
    };
    let scale = 1.0 + rows.d.amax();
    let (x0, t, ok) = if rows.d.iter().all(|v| *v >= 0.0) {
        (DVector::zeros(n), 0.0, true)
    } else {
        phase_one(&rows, n)
    };
    if !ok {
        return Ok(infeasible(x0, 0, "phase-1 iteration limit reached".into()));
    }
    if t > 1e-9 * scale {
        return Ok(infeasible(
            x0,
            0,
            format!("constraints violated by at least {t:e}"),
        ));
    }
    let res = active_set(
        &prob.hessian,
        &prob.gradient,
        &rows,
        x0,
        iteration_cap(n, rows.d.len()),
    );
    if !res.converged {
        return Ok(infeasible(
            res.x,
            res.iterations,
            "active-set iteration limit or singular KKT system".into(),
        ));
    }
    let mut multipliers = DVector::zeros(total);
    let mut active: Vec<usize> = Vec::with_capacity(res.working.len());
    for (&i, &l) in res.working.iter().zip(&res.lambda) {
        multipliers[rows.id[i]] = l;
        active.push(rows.id[i]);
    }
    active.sort_unstable();
    let kkt = prob.kkt_residuals(&res.x, &multipliers);
    Ok(QpSolution {
        objective: prob.objective(&res.x),
        x: res.x,
        status: QpStatus::Optimal,
        active,
        multipliers,
        iterations: res.iterations,
        kkt: Some(kkt),
        diagnostics: None,
    })
}
