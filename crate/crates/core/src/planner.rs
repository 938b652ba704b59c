//! Whole-body contact planning: Gauss–Newton on a stack of reaching,
//! penetration, joint-limit and regularisation residuals over one or two arms.
//!
//! Residual order in the stacked vector: reaching (one per contact), penetration
//! (one per interior point and arm, arm-major), upper limits, lower limits,
//! regularisation. Every block is multiplied by its weight in
//! [`ResidualWeights`]; [`ResidualBlocks`] holds the unweighted values.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, dims, precondition, Error, Result};
use crate::kinematics::Pose;
use crate::robotsdf::{Composition, RobotSdfModel, DEFAULT_RHO};

pub const PROBLEM_FORMAT: &str = "linkfield-lift-problem";
pub const PROBLEM_VERSION: u32 = 1;

/// One arm taking part in the plan.
#[derive(Debug, Clone)]
pub struct PlannerArm {
    pub name: String,
    pub model: Arc<RobotSdfModel>,
    /// Pose of the arm's base frame in the world.
    pub base: Pose,
    pub q_init: Vec<f64>,
}

/// A point on the object the robot surface should touch. `normal` is the unit
/// direction the robot's distance gradient should take there, i.e. pointing
/// from the robot into the object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualWeights {
    pub reach: f64,
    pub penetration: f64,
    pub limits: f64,
    pub regularization: f64,
}

impl Default for ResidualWeights {
    fn default() -> Self {
        ResidualWeights {
            reach: 1.0,
            penetration: 10.0,
            limits: 10.0,
            regularization: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiftProblem {
    pub arms: Vec<PlannerArm>,
    pub contacts: Vec<Contact>,
    /// Points inside the object the robot must stay out of.
    pub interior: Vec<Vector3<f64>>,
    pub weights: ResidualWeights,
    /// Soft-min sharpness used for every distance in the residuals.
    pub rho: f64,
    /// Contacts are planned this far inside the object along their normal
    /// (m), which makes the planned grip squeeze a slightly smaller object.
    pub inward_offset: f64,
    assignment: Vec<usize>,
    columns: Vec<usize>,
}

/// Unweighted residual blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlocks {
    pub reach: Vec<f64>,
    pub penetration: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub regularization: Vec<f64>,
}

/// Euclidean norms of the unweighted blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockNorms {
    pub reach: f64,
    pub penetration: f64,
    pub upper: f64,
    pub lower: f64,
    pub regularization: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl ResidualBlocks {
    pub fn norms(&self) -> BlockNorms {
        BlockNorms {
            reach: norm(&self.reach),
            penetration: norm(&self.penetration),
            upper: norm(&self.upper),
            lower: norm(&self.lower),
            regularization: norm(&self.regularization),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationTolerances {
    /// Bound on `r_rᵀ r_r` (m²).
    pub reach_sq: f64,
    /// Bound on `r_pᵀ r_p` (m²).
    pub penetration_sq: f64,
    /// Bound on `Σ (1 − ⟨ĝ, n⟩)` over contacts.
    pub normal_sum: f64,
}

impl Default for TerminationTolerances {
    fn default() -> Self {
        TerminationTolerances {
            reach_sq: 0.01,
            penetration_sq: 0.01,
            normal_sum: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationFlags {
    pub reach: bool,
    pub penetration: bool,
    /// Every joint strictly inside its limits.
    pub limits: bool,
    pub normals: bool,
    pub reach_sq: f64,
    pub penetration_sq: f64,
    /// Infinite when some contact gradient could not be normalised.
    pub normal_sum: f64,
}

impl TerminationFlags {
    pub fn all(&self) -> bool {
        self.reach && self.penetration && self.limits && self.normals
    }

    /// Shared decision rule; `normals` are the distance gradients at the
    /// contacts, in contact order.
    pub fn evaluate(
        blocks_reach: &[f64],
        blocks_penetration: &[f64],
        strictly_inside: bool,
        contacts: &[Contact],
        gradients: &[Vector3<f64>],
        tol: &TerminationTolerances,
    ) -> Self {
        let reach_sq: f64 = blocks_reach.iter().map(|r| r * r).sum();
        let penetration_sq: f64 = blocks_penetration.iter().map(|r| r * r).sum();
        let mut normal_sum = 0.0;
        for (c, g) in contacts.iter().zip(gradients) {
            let len = g.norm();
            if !(len > 0.0 && len.is_finite()) {
                normal_sum = f64::INFINITY;
                break;
            }
            normal_sum += 1.0 - (g / len).dot(&c.normal);
        }
        TerminationFlags {
            reach: reach_sq < tol.reach_sq,
            penetration: penetration_sq < tol.penetration_sq,
            limits: strictly_inside,
            normals: normal_sum < tol.normal_sum,
            reach_sq,
            penetration_sq,
            normal_sum,
        }
    }
}

/// Distances (and optionally joint gradients) of one arm at world points.
struct ArmQuery {
    distance: Vec<f64>,
    grad_p: Vec<Vector3<f64>>,
    grad_q: Vec<Vec<f64>>,
}

impl LiftProblem {
    pub fn new(
        arms: Vec<PlannerArm>,
        contacts: Vec<Contact>,
        interior: Vec<Vector3<f64>>,
        weights: ResidualWeights,
    ) -> Result<Self> {
        if arms.is_empty() {
            return Err(precondition("a lift problem needs at least one arm"));
        }
        if contacts.is_empty() {
            return Err(precondition(
                "a lift problem needs at least one contact point",
            ));
        }
        if interior.is_empty() {
            return Err(precondition(
                "a lift problem needs at least one interior point",
            ));
        }
        for (i, c) in contacts.iter().enumerate() {
            if c.position
                .iter()
                .chain(c.normal.iter())
                .any(|v| !v.is_finite())
            {
                return Err(precondition(format!("contact {i} is not finite")));
            }
            if (c.normal.norm() - 1.0).abs() > 1e-9 {
                return Err(precondition(format!(
                    "contact {i}: normal must have unit length"
                )));
            }
        }
        if interior.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(precondition("interior points must be finite"));
        }
        let w = [
            weights.reach,
            weights.penetration,
            weights.limits,
            weights.regularization,
        ];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(config("residual weights must be finite and non-negative"));
        }
        let mut columns = Vec::with_capacity(arms.len() + 1);
        columns.push(0);
        for a in &arms {
            let chain = &a.model.chain;
            if a.q_init.len() != chain.n_joints() {
                return Err(dims(format!(
                    "arm '{}': q_init has {} entries for {} joints",
                    a.name,
                    a.q_init.len(),
                    chain.n_joints()
                )));
            }
            if !chain.within_limits(&a.q_init) {
                return Err(precondition(format!(
                    "arm '{}': q_init violates the joint limits",
                    a.name
                )));
            }
            columns.push(columns.last().unwrap() + chain.n_joints());
        }
        // Each contact goes to the arm whose base is closest.
        let assignment = contacts
            .iter()
            .map(|c| {
                let mut best = 0;
                for (i, a) in arms.iter().enumerate() {
                    if (c.position - a.base.translation).norm()
                        < (c.position - arms[best].base.translation).norm()
                    {
                        best = i;
                    }
                }
                best
            })
            .collect();
        Ok(LiftProblem {
            arms,
            contacts,
            interior,
            weights,
            rho: DEFAULT_RHO,
            inward_offset: 0.0,
            assignment,
            columns,
        })
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(config("soft-min sharpness must be positive"));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn with_inward_offset(mut self, offset: f64) -> Result<Self> {
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(config("inward offset must be finite and non-negative"));
        }
        self.inward_offset = offset;
        Ok(self)
    }

    /// Arm index each contact is assigned to.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn n_vars(&self) -> usize {
        *self.columns.last().unwrap()
    }

    fn arm_q<'a>(&self, q: &'a [f64], a: usize) -> &'a [f64] {
        &q[self.columns[a]..self.columns[a + 1]]
    }

    pub fn q_init(&self) -> Vec<f64> {
        self.arms
            .iter()
            .flat_map(|a| a.q_init.iter().copied())
            .collect()
    }

    pub fn q_min(&self) -> Vec<f64> {
        self.arms
            .iter()
            .flat_map(|a| a.model.chain.q_min.iter().copied())
            .collect()
    }

    pub fn q_max(&self) -> Vec<f64> {
        self.arms
            .iter()
            .flat_map(|a| a.model.chain.q_max.iter().copied())
            .collect()
    }

    /// Where contact `i` is planned: its position pushed `inward_offset` into
    /// the object.
    pub fn planned_contact(&self, i: usize) -> Vector3<f64> {
        let c = &self.contacts[i];
        c.position + c.normal * self.inward_offset
    }

    fn check_q(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n_vars() {
            return Err(dims(format!(
                "configuration has {} entries, problem has {}",
                q.len(),
                self.n_vars()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(precondition("configuration must be finite"));
        }
        Ok(())
    }

    fn query(
        &self,
        q: &[f64],
        a: usize,
        points: &[Vector3<f64>],
        want_grad_q: bool,
    ) -> Result<ArmQuery> {
        let arm = &self.arms[a];
        let local: Vec<Vector3<f64>> = points.iter().map(|p| arm.base.apply_inverse(p)).collect();
        let res = arm.model.eval_points(
            self.arm_q(q, a),
            &local,
            want_grad_q,
            Composition::soft(self.rho),
        )?;
        Ok(ArmQuery {
            distance: res.iter().map(|r| r.distance).collect(),
            grad_p: res.iter().map(|r| arm.base.rotation * r.grad_p).collect(),
            grad_q: res
                .into_iter()
                .map(|r| r.grad_q.unwrap_or_default())
                .collect(),
        })
    }

    /// Contact points of arm `a`, as (contact index, planned position).
    fn contacts_of(&self, a: usize) -> Vec<(usize, Vector3<f64>)> {
        (0..self.contacts.len())
            .filter(|&i| self.assignment[i] == a)
            .map(|i| (i, self.planned_contact(i)))
            .collect()
    }

    pub fn blocks(&self, q: &[f64]) -> Result<ResidualBlocks> {
        self.check_q(q)?;
        let mut reach = vec![0.0; self.contacts.len()];
        let mut penetration = Vec::with_capacity(self.interior.len() * self.arms.len());
        for a in 0..self.arms.len() {
            let own = self.contacts_of(a);
            if !own.is_empty() {
                let pts: Vec<_> = own.iter().map(|(_, p)| *p).collect();
                let res = self.query(q, a, &pts, false)?;
                for ((i, _), d) in own.iter().zip(res.distance) {
                    reach[*i] = d;
                }
            }
            let res = self.query(q, a, &self.interior, false)?;
            penetration.extend(res.distance.iter().map(|d| relu(-d)));
        }
        let (lo, hi) = (self.q_min(), self.q_max());
        let init = self.q_init();
        Ok(ResidualBlocks {
            reach,
            penetration,
            upper: q.iter().zip(&hi).map(|(v, h)| relu(v - h)).collect(),
            lower: q.iter().zip(&lo).map(|(v, l)| relu(l - v)).collect(),
            regularization: q.iter().zip(&init).map(|(v, i)| v - i).collect(),
        })
    }

    /// Weighted stacked residual vector.
    pub fn residuals(&self, q: &[f64]) -> Result<DVector<f64>> {
        let b = self.blocks(q)?;
        let w = &self.weights;
        let parts: [(&[f64], f64); 5] = [
            (&b.reach, w.reach),
            (&b.penetration, w.penetration),
            (&b.upper, w.limits),
            (&b.lower, w.limits),
            (&b.regularization, w.regularization),
        ];
        Ok(DVector::from_iterator(
            self.n_residuals(),
            parts.iter().flat_map(|(v, s)| v.iter().map(move |x| x * s)),
        ))
    }

    pub fn n_residuals(&self) -> usize {
        self.contacts.len() + self.interior.len() * self.arms.len() + 3 * self.n_vars()
    }

    /// `c(q) = rᵀ r` of the weighted residuals.
    pub fn cost(&self, q: &[f64]) -> Result<f64> {
        Ok(self.residuals(q)?.norm_squared())
    }

    /// Analytic `∂r/∂q`. Inactive ReLU entries give exactly zero rows.
    pub fn residual_jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        self.check_q(q)?;
        let n = self.n_vars();
        let w = &self.weights;
        let mut jac = DMatrix::zeros(self.n_residuals(), n);
        let n_contacts = self.contacts.len();
        let n_interior = self.interior.len();
        for a in 0..self.arms.len() {
            let c0 = self.columns[a];
            let own = self.contacts_of(a);
            if !own.is_empty() {
                let pts: Vec<_> = own.iter().map(|(_, p)| *p).collect();
                let res = self.query(q, a, &pts, true)?;
                for ((i, _), g) in own.iter().zip(&res.grad_q) {
                    for (j, v) in g.iter().enumerate() {
                        jac[(*i, c0 + j)] = w.reach * v;
                    }
                }
            }
            let res = self.query(q, a, &self.interior, true)?;
            for (k, (d, g)) in res.distance.iter().zip(&res.grad_q).enumerate() {
                if *d < 0.0 {
                    let row = n_contacts + a * n_interior + k;
                    for (j, v) in g.iter().enumerate() {
                        jac[(row, c0 + j)] = -w.penetration * v;
                    }
                }
            }
        }
        let base = n_contacts + n_interior * self.arms.len();
        let (lo, hi) = (self.q_min(), self.q_max());
        for j in 0..n {
            if q[j] > hi[j] {
                jac[(base + j, j)] = w.limits;
            }
            if q[j] < lo[j] {
                jac[(base + n + j, j)] = -w.limits;
            }
            jac[(base + 2 * n + j, j)] = w.regularization;
        }
        Ok(jac)
    }

    /// The four stopping criteria at `q`, using the planner's own field.
    pub fn termination_check(
        &self,
        q: &[f64],
        tol: &TerminationTolerances,
    ) -> Result<TerminationFlags> {
        let blocks = self.blocks(q)?;
        let mut gradients = vec![Vector3::zeros(); self.contacts.len()];
        for a in 0..self.arms.len() {
            let own = self.contacts_of(a);
            if own.is_empty() {
                continue;
            }
            let pts: Vec<_> = own.iter().map(|(_, p)| *p).collect();
            let res = self.query(q, a, &pts, false)?;
            for ((i, _), g) in own.iter().zip(res.grad_p) {
                gradients[*i] = g;
            }
        }
        let (lo, hi) = (self.q_min(), self.q_max());
        let inside = q
            .iter()
            .zip(lo.iter().zip(&hi))
            .all(|(v, (l, h))| l < v && v < h);
        Ok(TerminationFlags::evaluate(
            &blocks.reach,
            &blocks.penetration,
            inside,
            &self.contacts,
            &gradients,
            tol,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnConfig {
    pub max_iters: usize,
    /// Step scale factor applied after each rejected trial step.
    pub backtrack: f64,
    /// Smallest step scale tried before the damping is raised.
    pub min_step: f64,
    /// Levenberg damping added to `JᵀJ`.
    pub damping: f64,
    /// Damping ceiling; at this level a failed line search stops the run.
    pub max_damping: f64,
    /// Step norm below which the run counts as stalled (rad).
    pub stall_tol: f64,
    pub tolerances: TerminationTolerances,
}

impl Default for GnConfig {
    fn default() -> Self {
        GnConfig {
            max_iters: 200,
            backtrack: 0.5,
            min_step: 1.0 / 1024.0,
            damping: 1e-6,
            max_damping: 1e-2,
            stall_tol: 1e-8,
            tolerances: TerminationTolerances::default(),
        }
    }
}

impl GnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(config("max_iters must be at least 1"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(config("backtracking factor must lie in (0, 1)"));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(config("min_step must lie in (0, 1]"));
        }
        if !(self.damping >= 0.0
            && self.max_damping >= self.damping
            && self.max_damping.is_finite())
        {
            return Err(config("damping must be non-negative and below its ceiling"));
        }
        if !(self.stall_tol >= 0.0) {
            return Err(config("stall tolerance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Converged,
    MaxIters,
    Stalled,
}

impl PlanStatus {
    pub fn name(self) -> &'static str {
        match self {
            PlanStatus::Converged => "converged",
            PlanStatus::MaxIters => "max_iters",
            PlanStatus::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSolution {
    /// Restart index within a batch (0 for a single run).
    pub seed_index: usize,
    pub q_start: Vec<f64>,
    pub q_final: Vec<f64>,
    pub status: PlanStatus,
    pub iterations: usize,
    pub cost: f64,
    pub norms: BlockNorms,
    pub flags: TerminationFlags,
    /// Why a stalled run stopped.
    pub diagnostics: Option<String>,
}

fn finish(
    problem: &LiftProblem,
    cfg: &GnConfig,
    q_start: Vec<f64>,
    q: Vec<f64>,
    status: PlanStatus,
    iterations: usize,
    diagnostics: Option<String>,
) -> Result<PlanSolution> {
    let blocks = problem.blocks(&q)?;
    let flags = problem.termination_check(&q, &cfg.tolerances)?;
    Ok(PlanSolution {
        seed_index: 0,
        cost: problem.cost(&q)?,
        norms: blocks.norms(),
        flags,
        q_start,
        q_final: q,
        status,
        iterations,
        diagnostics,
    })
}

/// Damped Gauss–Newton with backtracking on `c(q) = rᵀ r`.
pub fn gauss_newton(problem: &LiftProblem, cfg: &GnConfig, q0: &[f64]) -> Result<PlanSolution> {
    cfg.validate()?;
    problem.check_q(q0)?;
    let n = problem.n_vars();
    let mut q = q0.to_vec();
    let mut r = problem.residuals(&q)?;
    let mut cost = r.norm_squared();
    let mut mu = cfg.damping;
    let stalled = |q: Vec<f64>, it: usize, why: String| {
        finish(
            problem,
            cfg,
            q0.to_vec(),
            q,
            PlanStatus::Stalled,
            it,
            Some(why),
        )
    };
    for it in 0..cfg.max_iters {
        if problem.termination_check(&q, &cfg.tolerances)?.all() {
            return finish(
                problem,
                cfg,
                q0.to_vec(),
                q,
                PlanStatus::Converged,
                it,
                None,
            );
        }
        let jac = problem.residual_jacobian(&q)?;
        let grad = jac.tr_mul(&r);
        let jtj = jac.tr_mul(&jac);
        let mut accepted = None;
        loop {
            let mut lhs = jtj.clone();
            for j in 0..n {
                lhs[(j, j)] += mu;
            }
            let Some(chol) = lhs.cholesky() else {
                if mu >= cfg.max_damping {
                    return stalled(q, it, "normal matrix not positive definite".into());
                }
                mu = (mu * 10.0).max(1e-12).min(cfg.max_damping);
                continue;
            };
            let step = chol.solve(&grad);
            if !step.iter().all(|v| v.is_finite()) {
                return stalled(q, it, "non-finite Gauss-Newton step".into());
            }
            let mut alpha = 1.0;
            while alpha >= cfg.min_step {
                let trial: Vec<f64> = q
                    .iter()
                    .zip(step.iter())
                    .map(|(v, s)| v - alpha * s)
                    .collect();
                let r_trial = problem.residuals(&trial)?;
                let c_trial = r_trial.norm_squared();
                if !c_trial.is_finite() {
                    return stalled(q, it, "non-finite residuals during line search".into());
                }
                if c_trial < cost {
                    accepted = Some((trial, r_trial, c_trial, alpha * step.norm()));
                    break;
                }
                alpha *= cfg.backtrack;
            }
            if accepted.is_some() || mu >= cfg.max_damping {
                break;
            }
            mu = (mu * 10.0).max(1e-12).min(cfg.max_damping);
        }
        let Some((trial, r_trial, c_trial, step_norm)) = accepted else {
            return stalled(q, it, "line search found no decrease".into());
        };
        q = trial;
        r = r_trial;
        cost = c_trial;
        mu = (mu / 10.0).max(cfg.damping);
        if step_norm < cfg.stall_tol {
            return stalled(
                q,
                it + 1,
                format!("step norm {step_norm:e} below tolerance"),
            );
        }
    }
    if problem.termination_check(&q, &cfg.tolerances)?.all() {
        return finish(
            problem,
            cfg,
            q0.to_vec(),
            q,
            PlanStatus::Converged,
            cfg.max_iters,
            None,
        );
    }
    finish(
        problem,
        cfg,
        q0.to_vec(),
        q,
        PlanStatus::MaxIters,
        cfg.max_iters,
        None,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    /// Converged runs first, each group by increasing cost.
    pub solutions: Vec<PlanSolution>,
    pub n_seeds: usize,
    pub n_converged: usize,
}

impl BatchReport {
    pub fn success_rate(&self) -> f64 {
        self.n_converged as f64 / self.n_seeds as f64
    }
}

/// Gauss–Newton from `n_seeds` configurations drawn uniformly within limits.
pub fn batch_plan(
    problem: &LiftProblem,
    cfg: &GnConfig,
    n_seeds: usize,
    seed: u64,
) -> Result<BatchReport> {
    if n_seeds < 1 {
        return Err(config("batch planning needs at least one seed"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (problem.q_min(), problem.q_max());
    let mut solutions = Vec::with_capacity(n_seeds);
    for s in 0..n_seeds {
        let q0: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| rng.random_range(*l..*h))
            .collect();
        let mut sol = gauss_newton(problem, cfg, &q0)?;
        sol.seed_index = s;
        solutions.push(sol);
    }
    solutions.sort_by(|a, b| {
        let rank = |s: &PlanSolution| s.status != PlanStatus::Converged;
        rank(a)
            .cmp(&rank(b))
            .then(a.cost.total_cmp(&b.cost))
            .then(a.seed_index.cmp(&b.seed_index))
    });
    let n_converged = solutions
        .iter()
        .filter(|s| s.status == PlanStatus::Converged)
        .count();
    Ok(BatchReport {
        solutions,
        n_seeds,
        n_converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub q: Vec<f64>,
}

/// Per-joint cubic from `q_start` to `q_goal` with zero end velocities,
/// sampled every `dt` plus the exact end time.
pub fn cubic_spline_trajectory(
    q_start: &[f64],
    q_goal: &[f64],
    duration: f64,
    dt: f64,
) -> Result<Vec<Waypoint>> {
    if q_start.len() != q_goal.len() {
        return Err(dims("start and goal configurations differ in length"));
    }
    if !(duration.is_finite() && duration > 0.0) || !(dt.is_finite() && dt > 0.0) {
        return Err(config("duration and dt must be positive"));
    }
    if dt > duration {
        return Err(config(format!("dt {dt} exceeds the duration {duration}")));
    }
    let steps = (duration / dt).floor() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    if duration - times.last().unwrap() > 1e-12 * duration {
        times.push(duration);
    } else {
        *times.last_mut().unwrap() = duration;
    }
    Ok(times
        .into_iter()
        .map(|t| Waypoint {
            t,
            q: spline_point(q_start, q_goal, duration, t),
        })
        .collect())
}

/// The cubic `q_start + (q_goal − q_start)(3s² − 2s³)`, `s = t / duration`.
pub fn spline_point(q_start: &[f64], q_goal: &[f64], duration: f64, t: f64) -> Vec<f64> {
    let s = t / duration;
    let h = s * s * (3.0 - 2.0 * s);
    q_start
        .iter()
        .zip(q_goal)
        .map(|(a, b)| a + (b - a) * h)
        .collect()
}

/// File form of a lift problem; arms refer to model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub format: String,
    pub version: u32,
    pub arms: Vec<ArmEntry>,
    pub contacts: Vec<Contact>,
    pub interior_points: Vec<Vector3<f64>>,
    #[serde(default)]
    pub weights: ResidualWeights,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub inward_offset: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEntry {
    pub name: String,
    /// Model file, relative paths taken from the problem file's directory.
    pub model: String,
    #[serde(default = "Pose::identity")]
    pub base: Pose,
    pub q_init: Vec<f64>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("problem file: {e}")))?;
        if file.format != PROBLEM_FORMAT {
            return Err(Error::Format(format!(
                "expected format '{PROBLEM_FORMAT}', found '{}'",
                file.format
            )));
        }
        if file.version != PROBLEM_VERSION {
            return Err(Error::Format(format!(
                "unsupported problem version {}",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let file = Self::from_json(&std::fs::read_to_string(path)?)?;
        Ok((
            file,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ))
    }

    /// Loads the referenced models and builds the problem.
    pub fn build(&self, base_dir: &Path) -> Result<LiftProblem> {
        let arms = self
            .arms
            .iter()
            .map(|a| {
                let p = PathBuf::from(&a.model);
                let p = if p.is_relative() { base_dir.join(p) } else { p };
                let model = RobotSdfModel::load(&p).map_err(|e| {
                    Error::Format(format!("arm '{}': model {}: {e}", a.name, p.display()))
                })?;
                Ok(PlannerArm {
                    name: a.name.clone(),
                    model: Arc::new(model),
                    base: a.base,
                    q_init: a.q_init.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LiftProblem::new(
            arms,
            self.contacts.clone(),
            self.interior_points.clone(),
            self.weights,
        )?
        .with_rho(self.rho)?
        .with_inward_offset(self.inward_offset)
    }
}
