//! Velocity-level collision avoidance: each control step solves a small QP
//! that tracks a reaching velocity while keeping sampled obstacle points
//! outside a safety margin of the fitted robot field, then integrates the
//! joint velocities kinematically.
//!
//! The QP over `x = [q̇; s]` is
//!
//! ```text
//! min ‖J_ee q̇ − v_des‖² + μ‖q̇‖² + w s²
//! s.t. −∇_q fᵀ q̇ − s ≤ ξ (f − d_safe) + ∇_p fᵀ ṗ   (worst K points)
//!      max(−q̇_max, (q_min − q)/dt) ≤ q̇ ≤ min(q̇_max, (q_max − q)/dt),  s ≥ 0
//! ```
//!
//! It is first solved with `s` pinned to zero. The slack is released only when
//! that fails, so a step reports slack exactly when the margin could not be
//! kept.

mod qp;
mod scene;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use qp::{solve_qp, KktResiduals, QpProblem, QpSolution, QpStatus, KKT_TOL};
pub use scene::{
    ControlledEntry, LoadedScene, ObstacleEntry, SceneFile, SCENE_FORMAT, SCENE_VERSION,
};

use crate::error::{config, dims, precondition, Result};
use crate::geometry::{DistanceOracle, Primitive};
use crate::kinematics::{KinematicChain, Pose};
use crate::robotsdf::{link_geometries, Composition, LinkGeometry, RobotSdfModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Distance the controller tries to keep from every obstacle point (m).
    pub d_safe: f64,
    /// Constraint gain (1/s).
    pub xi: f64,
    /// Control period (s).
    pub dt: f64,
    /// Joint speed bound (rad/s).
    pub qd_max: f64,
    pub slack_weight: f64,
    /// Joint velocity damping `μ`.
    pub damping: f64,
    /// Number of closest obstacle points turned into constraints.
    pub worst_k: usize,
    /// Proportional reaching gain (1/s).
    pub gain: f64,
    /// Cap on the desired end-effector speed (m/s).
    pub v_max: f64,
    /// End-effector distance counted as reached (m).
    pub reach_tol: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            d_safe: 0.05,
            xi: 5.0,
            dt: 0.01,
            qd_max: 1.0,
            slack_weight: 1e4,
            damping: 0.01,
            worst_k: 8,
            gain: 2.0,
            v_max: 0.3,
            reach_tol: 0.01,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_safe", self.d_safe),
            ("xi", self.xi),
            ("dt", self.dt),
            ("qd_max", self.qd_max),
            ("slack_weight", self.slack_weight),
            ("gain", self.gain),
            ("v_max", self.v_max),
            ("reach_tol", self.reach_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(config(format!(
                    "controller {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(config("controller damping must be non-negative"));
        }
        if self.worst_k < 1 {
            return Err(config("worst_k must be at least 1"));
        }
        Ok(())
    }

    /// Lowest exact clearance an episode may reach while every step was
    /// solved without slack: `d_safe` minus the field error budget (2 mm)
    /// and one step of motion at full speed.
    pub fn audit_threshold(&self) -> f64 {
        self.d_safe - FIELD_ERROR_BUDGET - self.qd_max * self.dt
    }
}

/// Field error allowance used by [`ControllerConfig::audit_threshold`] (m).
pub const FIELD_ERROR_BUDGET: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWaypoint {
    pub t: f64,
    pub q: Vec<f64>,
}

/// A second arm moving along a piecewise-linear joint script.
#[derive(Debug, Clone)]
pub struct ObstacleArm {
    pub chain: KinematicChain,
    pub base: Pose,
    pub script: Vec<TimedWaypoint>,
    geometry: Vec<LinkGeometry>,
}

impl ObstacleArm {
    pub fn new(chain: KinematicChain, base: Pose, script: Vec<TimedWaypoint>) -> Result<Self> {
        if script.is_empty() {
            return Err(precondition("obstacle script needs at least one waypoint"));
        }
        for (i, w) in script.iter().enumerate() {
            if w.q.len() != chain.n_joints() {
                return Err(dims(format!(
                    "obstacle waypoint {i} has {} joints, chain has {}",
                    w.q.len(),
                    chain.n_joints()
                )));
            }
            if !w.t.is_finite() || w.q.iter().any(|v| !v.is_finite()) {
                return Err(precondition(format!("obstacle waypoint {i} is not finite")));
            }
            if i > 0 && w.t <= script[i - 1].t {
                return Err(precondition("obstacle waypoint times must increase"));
            }
        }
        let geometry = link_geometries(&chain)?;
        if geometry.is_empty() {
            return Err(precondition("obstacle chain has no geometry"));
        }
        Ok(ObstacleArm {
            chain,
            base,
            script,
            geometry,
        })
    }

    fn segment(&self, t: f64) -> Option<(usize, f64)> {
        let s = &self.script;
        if s.len() < 2 || t < s[0].t || t >= s[s.len() - 1].t {
            return None;
        }
        let i = s.partition_point(|w| w.t <= t) - 1;
        Some((i, (t - s[i].t) / (s[i + 1].t - s[i].t)))
    }

    /// Joint configuration at time `t`, held constant outside the script.
    pub fn config_at(&self, t: f64) -> Vec<f64> {
        let s = &self.script;
        match self.segment(t) {
            Some((i, u)) => s[i]
                .q
                .iter()
                .zip(&s[i + 1].q)
                .map(|(a, b)| a + (b - a) * u)
                .collect(),
            None if t < s[0].t => s[0].q.clone(),
            None => s[s.len() - 1].q.clone(),
        }
    }

    pub fn velocity_at(&self, t: f64) -> Vec<f64> {
        let s = &self.script;
        match self.segment(t) {
            Some((i, _)) => {
                let span = s[i + 1].t - s[i].t;
                s[i].q
                    .iter()
                    .zip(&s[i + 1].q)
                    .map(|(a, b)| (b - a) / span)
                    .collect()
            }
            None => vec![0.0; self.chain.n_joints()],
        }
    }
}

#[derive(Debug, Clone)]
pub enum Obstacle {
    Arm(ObstacleArm),
    /// Fixed world points used as-is every step.
    Points(Vec<Vector3<f64>>),
}

#[derive(Debug, Clone)]
pub struct AvoidanceScene {
    pub model: Arc<RobotSdfModel>,
    pub base: Pose,
    pub obstacle: Obstacle,
    /// End-effector goal in the world (m); the end effector is the origin
    /// of the chain's last frame.
    pub target: Vector3<f64>,
    pub n_obstacle_samples: usize,
    geometry: Vec<LinkGeometry>,
}

pub const DEFAULT_OBSTACLE_SAMPLES: usize = 256;

impl AvoidanceScene {
    pub fn new(
        model: Arc<RobotSdfModel>,
        base: Pose,
        obstacle: Obstacle,
        target: Vector3<f64>,
    ) -> Result<Self> {
        if target.iter().any(|v| !v.is_finite()) {
            return Err(precondition("target must be finite"));
        }
        if let Obstacle::Points(p) = &obstacle {
            if p.is_empty() || p.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
                return Err(precondition(
                    "obstacle point cloud must be nonempty and finite",
                ));
            }
        }
        let geometry = link_geometries(&model.chain)?;
        Ok(AvoidanceScene {
            model,
            base,
            obstacle,
            target,
            n_obstacle_samples: DEFAULT_OBSTACLE_SAMPLES,
            geometry,
        })
    }

    pub fn with_samples(mut self, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(config("n_obstacle_samples must be at least 1"));
        }
        self.n_obstacle_samples = n;
        Ok(self)
    }

    /// World position of the end effector.
    pub fn end_effector(&self, q: &[f64]) -> Result<Vector3<f64>> {
        let poses = self.model.chain.forward_kinematics(q)?;
        Ok(self
            .base
            .apply(&poses[self.model.chain.n_frames()].translation))
    }

    /// Exact clearance between the robot geometry and the obstacle at time
    /// `t`, negative on overlap. Sphere and capsule pairs are solved in
    /// closed form; any other pair falls back to the robot's exact distance
    /// at a dense fixed sample of the obstacle surface.
    pub fn exact_clearance(&self, q: &[f64], t: f64) -> Result<f64> {
        let frames = self.model.chain.joint_frames(q)?;
        let robot_dist = |p: &Vector3<f64>| {
            let local = self.base.apply_inverse(p);
            self.geometry
                .iter()
                .map(|g| {
                    g.shape
                        .signed_distance(&frames.poses[g.frame].apply_inverse(&local))
                })
                .fold(f64::INFINITY, f64::min)
        };
        match &self.obstacle {
            Obstacle::Points(points) => {
                Ok(points.iter().map(robot_dist).fold(f64::INFINITY, f64::min))
            }
            Obstacle::Arm(arm) => {
                let robot = placed(&self.geometry, &self.base, &frames.poses);
                let obs_frames = arm.chain.joint_frames(&arm.config_at(t))?;
                let other = placed(&arm.geometry, &arm.base, &obs_frames.poses);
                if let (Some(a), Some(b)) = (robot, other) {
                    let mut best = f64::INFINITY;
                    for pa in &a {
                        for pb in &b {
                            best = best.min(pa.distance_to(pb).expect("sphere or capsule"));
                        }
                    }
                    return Ok(best);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let pts = sample_arm_surface(arm, t, 4096, &mut rng)?;
                Ok(pts
                    .iter()
                    .map(|s| robot_dist(&s.position))
                    .fold(f64::INFINITY, f64::min))
            }
        }
    }
}

/// World-placed spheres and capsules, or `None` if any geometry is another kind.
fn placed(geometry: &[LinkGeometry], base: &Pose, poses: &[Pose]) -> Option<Vec<Primitive>> {
    geometry
        .iter()
        .map(|g| {
            let local = g.shape.as_placed_primitive()?;
            match local {
                Primitive::Box { .. } => None,
                _ => local.translated_rotated(&base.compose(&poses[g.frame])),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleSample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

fn sample_arm_surface(
    arm: &ObstacleArm,
    t: f64,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<ObstacleSample>> {
    let q = arm.config_at(t);
    let qd = DVector::from_vec(arm.velocity_at(t));
    let frames = arm.chain.joint_frames(&q)?;
    let mut prefix = Vec::with_capacity(arm.geometry.len());
    let mut total = 0.0;
    for g in &arm.geometry {
        total += g.shape.surface_area();
        prefix.push(total);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        // Points buried inside another link are not on the arm's surface;
        // redraw them, giving up after a bounded number of tries.
        let mut chosen = None;
        for _ in 0..64 {
            let u = rng.random::<f64>() * total;
            let k = prefix.partition_point(|c| *c <= u).min(prefix.len() - 1);
            let g = &arm.geometry[k];
            let local = g.shape.surface_point(rng);
            let in_frame = |h: &LinkGeometry| {
                frames.poses[h.frame].apply_inverse(&frames.poses[g.frame].apply(&local))
            };
            let buried = arm
                .geometry
                .iter()
                .enumerate()
                .any(|(i, h)| i != k && h.shape.signed_distance(&in_frame(h)) < -1e-9);
            chosen = Some((g.frame, local));
            if !buried {
                break;
            }
        }
        let (frame, local) = chosen.expect("at least one draw");
        let jac = arm.chain.world_point_jacobian(&q, frame, &local)?;
        let v = &jac * &qd;
        out.push(ObstacleSample {
            position: arm.base.apply(&frames.poses[frame].apply(&local)),
            velocity: arm.base.rotation * Vector3::new(v[0], v[1], v[2]),
        });
    }
    Ok(out)
}

/// Area-uniform points on the obstacle's surface at time `t`, with their
/// world velocities. A point cloud obstacle returns its points, at rest.
pub fn sample_obstacle_points(
    scene: &AvoidanceScene,
    t: f64,
    rng: &mut dyn RngCore,
) -> Result<Vec<ObstacleSample>> {
    match &scene.obstacle {
        Obstacle::Points(p) => Ok(p
            .iter()
            .map(|&position| ObstacleSample {
                position,
                velocity: Vector3::zeros(),
            })
            .collect()),
        Obstacle::Arm(arm) => sample_arm_surface(arm, t, scene.n_obstacle_samples, rng),
    }
}

#[derive(Debug, Clone)]
pub struct BuiltQp {
    pub qp: QpProblem,
    pub v_des: Vector3<f64>,
    pub end_effector: Vector3<f64>,
    /// Field distance and joint gradient of each constrained point, in row order.
    pub distances: Vec<f64>,
    pub grad_q: Vec<Vec<f64>>,
    /// `∇_p fᵀ ṗ` of each constrained point.
    pub obstacle_rates: Vec<f64>,
}

/// The QP for one control step; the slack may move freely.
pub fn build_qp(
    scene: &AvoidanceScene,
    cfg: &ControllerConfig,
    q: &[f64],
    samples: &[ObstacleSample],
) -> Result<BuiltQp> {
    cfg.validate()?;
    let chain = &scene.model.chain;
    let c = chain.n_joints();
    if q.len() != c {
        return Err(dims(format!(
            "configuration has {} entries, chain has {c}",
            q.len()
        )));
    }
    if !chain.within_limits(q) {
        return Err(precondition("configuration violates the joint limits"));
    }
    let ee = scene.end_effector(q)?;
    let last = chain.n_frames();
    let jac = scene.base.rotation * chain.world_point_jacobian(q, last, &Vector3::zeros())?;
    let to_go = scene.target - ee;
    let v_des = if to_go.norm() * cfg.gain > cfg.v_max {
        to_go.normalize() * cfg.v_max
    } else {
        to_go * cfg.gain
    };
    let n = c + 1;
    let mut h = DMatrix::zeros(n, n);
    let jtj = jac.transpose() * &jac;
    for i in 0..c {
        for j in 0..c {
            h[(i, j)] = 2.0 * jtj[(i, j)];
        }
        h[(i, i)] += 2.0 * cfg.damping;
    }
    h[(c, c)] = 2.0 * cfg.slack_weight;
    let mut g = DVector::zeros(n);
    let jtv = jac.transpose() * v_des;
    for i in 0..c {
        g[i] = -2.0 * jtv[i];
    }

    // Worst-K points by field distance; ties keep sample order.
    let (mut distances, mut grad_q, mut obstacle_rates) = (Vec::new(), Vec::new(), Vec::new());
    if !samples.is_empty() {
        let local: Vec<Vector3<f64>> = samples
            .iter()
            .map(|s| scene.base.apply_inverse(&s.position))
            .collect();
        let d = scene.model.distances(q, &local, Composition::HardMin)?;
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|a, b| d[*a].total_cmp(&d[*b]).then(a.cmp(b)));
        order.truncate(cfg.worst_k);
        let pts: Vec<Vector3<f64>> = order.iter().map(|&i| local[i]).collect();
        let res = scene
            .model
            .eval_points(q, &pts, true, Composition::HardMin)?;
        for (&i, r) in order.iter().zip(res) {
            let grad_world = scene.base.rotation * r.grad_p;
            distances.push(r.distance);
            obstacle_rates.push(grad_world.dot(&samples[i].velocity));
            grad_q.push(r.grad_q.expect("requested"));
        }
    }
    let m = distances.len();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    for r in 0..m {
        for j in 0..c {
            a[(r, j)] = -grad_q[r][j];
        }
        a[(r, c)] = -1.0;
        b[r] = cfg.xi * (distances[r] - cfg.d_safe) + obstacle_rates[r];
    }
    let mut lower = DVector::zeros(n);
    let mut upper = DVector::zeros(n);
    for j in 0..c {
        lower[j] = (-cfg.qd_max).max((chain.q_min[j] - q[j]) / cfg.dt);
        upper[j] = cfg.qd_max.min((chain.q_max[j] - q[j]) / cfg.dt);
    }
    lower[c] = 0.0;
    upper[c] = f64::INFINITY;
    Ok(BuiltQp {
        qp: QpProblem {
            hessian: h,
            gradient: g,
            a,
            b,
            lower,
            upper,
        },
        v_des,
        end_effector: ee,
        distances,
        grad_q,
        obstacle_rates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlStep {
    pub qd: Vec<f64>,
    pub slack: f64,
    pub status: QpStatus,
    /// True when the zero-slack problem was infeasible.
    pub used_slack: bool,
}

/// Solves the step with the slack pinned to zero, then with it released.
pub fn control_step(built: &BuiltQp) -> Result<ControlStep> {
    let c = built.qp.gradient.len() - 1;
    let mut hard = built.qp.clone();
    hard.upper[c] = 0.0;
    let sol = solve_qp(&hard)?;
    if sol.status == QpStatus::Optimal {
        return Ok(ControlStep {
            qd: sol.x.rows(0, c).iter().copied().collect(),
            slack: 0.0,
            status: QpStatus::Optimal,
            used_slack: false,
        });
    }
    let sol = solve_qp(&built.qp)?;
    Ok(ControlStep {
        qd: sol.x.rows(0, c).iter().copied().collect(),
        slack: if sol.status == QpStatus::Optimal {
            sol.x[c]
        } else {
            0.0
        },
        status: sol.status,
        used_slack: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub clearance: f64,
    pub used_slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub reached: bool,
    /// Steps whose QP had no solution even with slack (at most 1; the
    /// episode stops there).
    pub qp_infeasible: usize,
    pub slack_steps: usize,
    pub steps: usize,
    /// Smallest exact clearance over every visited state (m).
    pub min_distance: f64,
    pub final_error: f64,
    pub trajectory: Vec<StepRecord>,
}

impl EpisodeReport {
    /// Every step solved without slack and none infeasible.
    pub fn all_steps_clean(&self) -> bool {
        self.qp_infeasible == 0 && self.slack_steps == 0
    }
}

/// Integrates `q ← q + dt·q̇` from `q0` until the end effector is within
/// `reach_tol` of the target, a QP is infeasible, or `max_steps` steps pass.
pub fn run_episode(
    scene: &AvoidanceScene,
    cfg: &ControllerConfig,
    q0: &[f64],
    max_steps: usize,
    seed: u64,
) -> Result<EpisodeReport> {
    cfg.validate()?;
    if max_steps < 1 {
        return Err(config("max_steps must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = q0.to_vec();
    let first = scene.exact_clearance(&q, 0.0)?;
    let mut report = EpisodeReport {
        reached: false,
        qp_infeasible: 0,
        slack_steps: 0,
        steps: 0,
        min_distance: first,
        final_error: (scene.end_effector(&q)? - scene.target).norm(),
        trajectory: vec![StepRecord {
            t: 0.0,
            q: q.clone(),
            clearance: first,
            used_slack: false,
        }],
    };
    if report.final_error < cfg.reach_tol {
        report.reached = true;
        return Ok(report);
    }
    for k in 0..max_steps {
        let t = k as f64 * cfg.dt;
        let samples = sample_obstacle_points(scene, t, &mut rng)?;
        let built = build_qp(scene, cfg, &q, &samples)?;
        let step = control_step(&built)?;
        if step.status == QpStatus::Infeasible {
            report.qp_infeasible += 1;
            break;
        }
        for (v, d) in q.iter_mut().zip(&step.qd) {
            *v += cfg.dt * d;
        }
        // The bounds keep q inside the limits up to rounding.
        let chain = &scene.model.chain;
        for (j, v) in q.iter_mut().enumerate() {
            *v = v.clamp(chain.q_min[j], chain.q_max[j]);
        }
        report.steps = k + 1;
        report.slack_steps += step.used_slack as usize;
        let t_next = (k + 1) as f64 * cfg.dt;
        let clearance = scene.exact_clearance(&q, t_next)?;
        report.min_distance = report.min_distance.min(clearance);
        report.trajectory.push(StepRecord {
            t: t_next,
            q: q.clone(),
            clearance,
            used_slack: step.used_slack,
        });
        report.final_error = (scene.end_effector(&q)? - scene.target).norm();
        if report.final_error < cfg.reach_tol {
            report.reached = true;
            break;
        }
    }
    Ok(report)
}

/// Start state, goal and obstacle motion of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSetup {
    pub q0: Vec<f64>,
    pub target: Vector3<f64>,
    pub script: Vec<TimedWaypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeSampling {
    /// Obstacle joints move at most this far from their start (rad).
    pub obstacle_travel: f64,
    /// Duration of the obstacle's move (s).
    pub obstacle_duration: f64,
    /// Required exact clearance at the start, beyond `d_safe` (m).
    pub start_margin: f64,
    pub max_attempts: usize,
}

impl Default for EpisodeSampling {
    fn default() -> Self {
        EpisodeSampling {
            obstacle_travel: 1.0,
            obstacle_duration: 4.0,
            start_margin: 0.02,
            max_attempts: 1000,
        }
    }
}

/// Random start configurations for both arms, a reachable target (the end
/// effector at another random configuration) and a straight-line obstacle
/// move; redrawn until the arms start clear of each other.
pub fn draw_episode(
    model: &Arc<RobotSdfModel>,
    base: Pose,
    obstacle_chain: &KinematicChain,
    obstacle_base: Pose,
    cfg: &ControllerConfig,
    sampling: &EpisodeSampling,
    seed: u64,
) -> Result<(AvoidanceScene, EpisodeSetup)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = &model.chain;
    let uniform = |ch: &KinematicChain, rng: &mut ChaCha8Rng| -> Vec<f64> {
        ch.q_min
            .iter()
            .zip(&ch.q_max)
            .map(|(l, h)| rng.random_range(*l..*h))
            .collect()
    };
    for _ in 0..sampling.max_attempts {
        let q0 = uniform(chain, &mut rng);
        let q_goal = uniform(chain, &mut rng);
        let qa = uniform(obstacle_chain, &mut rng);
        let qb: Vec<f64> = qa
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let step = rng.random_range(-sampling.obstacle_travel..sampling.obstacle_travel);
                (v + step).clamp(obstacle_chain.q_min[j], obstacle_chain.q_max[j])
            })
            .collect();
        let script = vec![
            TimedWaypoint { t: 0.0, q: qa },
            TimedWaypoint {
                t: sampling.obstacle_duration,
                q: qb,
            },
        ];
        let target = base.apply(&chain.forward_kinematics(&q_goal)?[chain.n_frames()].translation);
        let arm = ObstacleArm::new(obstacle_chain.clone(), obstacle_base, script.clone())?;
        let scene = AvoidanceScene::new(model.clone(), base, Obstacle::Arm(arm), target)?;
        if scene.exact_clearance(&q0, 0.0)? >= cfg.d_safe + sampling.start_margin {
            return Ok((scene, EpisodeSetup { q0, target, script }));
        }
    }
    Err(precondition(
        "could not draw a collision-free episode start",
    ))
}
