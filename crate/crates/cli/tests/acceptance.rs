//! Acceptance run: every numbered criterion at its stated tolerance and time
//! budget, one PASS/FAIL line each. Expected values come from oracles written
//! here, not from the library under test.
//!
//! Set `LINKFIELD_FRANKA_MESH_DIR` to a directory of Franka link meshes
//! (OBJ or STL) to add the mesh branch of criterion 3.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linkfield_core::avoid::{run_episode, solve_qp, QpProblem, QpStatus, SceneFile, TimedWaypoint};
use linkfield_core::basis::{eval_1d, grad_1d, AxisBox, BasisConfig, MAX_BASIS, MIN_BASIS};
use linkfield_core::fit::{FitConfig, RlsState};
use linkfield_core::fixtures;
use linkfield_core::geometry::{PosedShape, Primitive, TriangleMesh};
use linkfield_core::kinematics::{DhConvention, DhRow, GeometrySource, KinematicChain, Pose};
use linkfield_core::planner::{batch_plan, GnConfig, LiftProblem, PlanStatus, PlannerArm};
use linkfield_core::robotsdf::{
    evaluate_accuracy, fit_link, fit_robot, link_geometries, random_configuration, surface_chamfer,
    Composition, EvaluationConfig, LevelSetGrid, RobotFitConfig, RobotOracle, RobotSdfModel,
    SurfaceChamferConfig, DEFAULT_RHO,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn planar_model() -> Arc<RobotSdfModel> {
    Arc::new(RobotSdfModel::load(fixture_path("planar_arm_n8.json")).expect("shipped planar model"))
}

// ---------------------------------------------------------------- oracles

/// Bernstein basis by the binomial formula, independent of the library.
fn bernstein(t: f64, n: usize) -> Vec<f64> {
    let deg = n - 1;
    (0..n)
        .map(|i| {
            let mut c = 1.0;
            for k in 0..i {
                c = c * (deg - k) as f64 / (k + 1) as f64;
            }
            c * t.powi(i as i32) * (1.0 - t).powi((deg - i) as i32)
        })
        .collect()
}

/// Tensor feature row, x slowest.
fn tensor_row(p: &Vector3<f64>, n: usize, domain: &AxisBox) -> Vec<f64> {
    let t: Vec<Vec<f64>> = (0..3)
        .map(|a| bernstein((p[a] - domain.min[a]) / (domain.max[a] - domain.min[a]), n))
        .collect();
    let mut row = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                row.push(t[0][i] * t[1][j] * t[2][k]);
            }
        }
    }
    row
}

/// Dense homogeneous DH transform.
fn dh_matrix(conv: DhConvention, row: &DhRow, q: f64) -> Matrix4<f64> {
    let theta = row.theta_offset
        + if matches!(row.joint, linkfield_core::kinematics::JointKind::Revolute) {
            q
        } else {
            0.0
        };
    let rz = |th: f64| {
        let (s, c) = th.sin_cos();
        Matrix4::new(
            c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        )
    };
    let rx = |al: f64| {
        let (s, c) = al.sin_cos();
        Matrix4::new(
            1.0, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0,
        )
    };
    let tr = |x: f64, z: f64| {
        Matrix4::new(
            1.0, 0.0, 0.0, x, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, z, 0.0, 0.0, 0.0, 1.0,
        )
    };
    match conv {
        DhConvention::Classic => rz(theta) * tr(0.0, row.d) * tr(row.a, 0.0) * rx(row.alpha),
        DhConvention::Modified => rx(row.alpha) * tr(row.a, 0.0) * rz(theta) * tr(0.0, row.d),
    }
}

/// Closest distance between segments `p1q1` and `p2q2` (clamped
/// parametric solution).
fn segment_distance(p1: Vector3<f64>, q1: Vector3<f64>, p2: Vector3<f64>, q2: Vector3<f64>) -> f64 {
    let (d1, d2, r) = (q1 - p1, q2 - p2, p1 - p2);
    let (a, e, f) = (d1.dot(&d1), d2.dot(&d2), d2.dot(&r));
    let eps = 1e-15;
    let (s, t);
    if a <= eps && e <= eps {
        return r.norm();
    }
    if a <= eps {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > eps {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// World capsules `(a, b, radius)` of a capsule-only chain at `q`.
fn world_capsules(
    chain: &KinematicChain,
    base: &Pose,
    q: &[f64],
) -> Vec<(Vector3<f64>, Vector3<f64>, f64)> {
    let poses = chain.forward_kinematics(q).unwrap();
    chain
        .attachments
        .iter()
        .map(|att| {
            let GeometrySource::Primitive(Primitive::Capsule {
                endpoint_a,
                endpoint_b,
                radius,
            }) = att.geometry
            else {
                panic!("capsule chains only");
            };
            let local = att.pose.unwrap_or_else(Pose::identity);
            let world = base.compose(&poses[att.frame]).compose(&local);
            (world.apply(&endpoint_a), world.apply(&endpoint_b), radius)
        })
        .collect()
}

fn script_config(script: &[TimedWaypoint], t: f64) -> Vec<f64> {
    if t <= script[0].t {
        return script[0].q.clone();
    }
    for w in script.windows(2) {
        if t <= w[1].t {
            let u = (t - w[0].t) / (w[1].t - w[0].t);
            return w[0]
                .q
                .iter()
                .zip(&w[1].q)
                .map(|(a, b)| a + (b - a) * u)
                .collect();
        }
    }
    script[script.len() - 1].q.clone()
}

/// Convex QP optimum by enumerating every subset of rows held as
/// equalities; the best feasible stationary point is the optimum.
fn enumerated_optimum(p: &QpProblem) -> Option<f64> {
    let (m, n) = p.a.shape();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let k = set.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
        let mut rhs = DVector::zeros(n + k);
        for j in 0..n {
            rhs[j] = -p.gradient[j];
        }
        for (r, &i) in set.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = p.a[(i, j)];
                kkt[(j, n + r)] = p.a[(i, j)];
            }
            rhs[n + r] = p.b[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        if (0..m).all(|i| p.a.row(i).transpose().dot(&x) <= p.b[i] + 1e-9) {
            let f = 0.5 * x.dot(&(&p.hessian * &x)) + p.gradient.dot(&x);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

/// A QP with `m` rows that a random point satisfies, so it is feasible.
fn random_qp(n: usize, m: usize, rng: &mut ChaCha8Rng) -> QpProblem {
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let slack = DVector::from_fn(m, |_, _| rng.random_range(0.0..0.5));
    QpProblem {
        hessian: random_spd(n, rng),
        gradient: DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0)),
        b: &a * &x0 + slack,
        a,
        lower: DVector::from_element(n, f64::NEG_INFINITY),
        upper: DVector::from_element(n, f64::INFINITY),
    }
}

/// Relative gradient error with a floor for near-zero gradients.
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
    diff / scale.max(1e-4)
}

// ---------------------------------------------------------------- criteria

fn basis_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut pou, mut dsum) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let n = rng.random_range(MIN_BASIS..=MAX_BASIS);
        let t: f64 = rng.random();
        pou = pou.max((eval_1d(t, n).unwrap().iter().sum::<f64>() - 1.0).abs());
        dsum = dsum.max(grad_1d(t, n).unwrap().iter().sum::<f64>().abs());
    }
    outcome(
        pou <= 1e-12 && dsum <= 1e-10,
        format!("max |Σb−1| = {pou:.2e}, max |Σb'| = {dsum:.2e}"),
    )
}

fn recursive_equals_batch() -> Outcome {
    let n = 8;
    let domain = AxisBox::new(Vector3::zeros(), Vector3::repeat(1.0)).unwrap();
    let basis = BasisConfig::new(n, domain).unwrap();
    let fit_cfg = FitConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<Vector3<f64>> = (0..10_000)
        .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
        .collect();
    let d: Vec<f64> = pts
        .iter()
        .map(|p| (p - Vector3::repeat(0.5)).norm() - 0.3)
        .collect();

    // Normal equations (ΨᵀΨ + λI) w = Ψᵀf built from the oracle basis.
    let oracle_start = Instant::now();
    let f = n * n * n;
    let psi_t = DMatrix::from_iterator(
        f,
        pts.len(),
        pts.iter().flat_map(|p| tensor_row(p, n, &domain)),
    );
    let gram = &psi_t * psi_t.transpose() + DMatrix::<f64>::identity(f, f) * fit_cfg.lambda;
    let rhs = &psi_t * DVector::from_column_slice(&d);
    let w_batch = gram.cholesky().expect("SPD normal matrix").solve(&rhs);
    let oracle_secs = oracle_start.elapsed().as_secs_f64();

    let rls_start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let mut state = RlsState::new(&basis, &fit_cfg).unwrap();
        let mut start = 0;
        while start < pts.len() {
            let end = (start + rng.random_range(1..=700)).min(pts.len());
            state.update(&pts[start..end], &d[start..end]).unwrap();
            start = end;
        }
        let dw = state
            .weights()
            .iter()
            .zip(w_batch.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dw);
    }
    outcome(
        worst <= 1e-6,
        format!(
            "max |Δw| = {worst:.2e} over 5 partitions (λ = {}); oracle {oracle_secs:.1}s, recursive {:.1}s",
            fit_cfg.lambda,
            rls_start.elapsed().as_secs_f64()
        ),
    )
}

fn capsule_chamfer() -> Outcome {
    let shape = PosedShape::primitive(fixtures::capsule_link());
    let cd = |n: usize| {
        let cfg = RobotFitConfig {
            n_per_axis: n,
            ..Default::default()
        };
        let (field, _) = fit_link(&shape, &cfg, 3).unwrap();
        surface_chamfer(&field, &shape, &SurfaceChamferConfig::default(), 4).unwrap()
    };
    let (c8, c24) = (cd(8), cd(24));
    let mut pass = c8 <= 2e-3 && c24 <= 1e-3 && c24 < c8;
    let mut detail = format!(
        "capsule CD N=8 {:.3} mm, N=24 {:.3} mm",
        c8 * 1e3,
        c24 * 1e3
    );
    match std::env::var_os("LINKFIELD_FRANKA_MESH_DIR") {
        None => detail.push_str("; Franka meshes not supplied"),
        Some(dir) => {
            let mut cds = Vec::new();
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map(|it| it.filter_map(|e| e.ok().map(|e| e.path())).collect())
                .unwrap_or_default();
            files.retain(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("obj" | "stl" | "OBJ" | "STL")
                )
            });
            files.sort();
            for f in &files {
                let mesh = Arc::new(TriangleMesh::load(f).expect("readable mesh"));
                let shape = PosedShape::new(
                    linkfield_core::geometry::Shape::Mesh(mesh),
                    Pose::identity(),
                );
                let cfg = RobotFitConfig {
                    n_per_axis: 24,
                    ..Default::default()
                };
                let (field, _) = fit_link(&shape, &cfg, 3).unwrap();
                cds.push(
                    surface_chamfer(&field, &shape, &SurfaceChamferConfig::default(), 4).unwrap(),
                );
            }
            if cds.is_empty() {
                pass = false;
                detail.push_str("; mesh directory has no OBJ/STL files");
            } else {
                let mean = cds.iter().sum::<f64>() / cds.len() as f64;
                pass &= mean <= 1e-3;
                detail.push_str(&format!(
                    "; Franka mean CD N=24 {:.3} mm over {} meshes",
                    mean * 1e3,
                    cds.len()
                ));
            }
        }
    }
    outcome(pass, detail)
}

fn whole_robot_accuracy() -> Outcome {
    let chain = fixtures::planar_arm();
    let geoms = link_geometries(&chain).unwrap();
    let eval_cfg = EvaluationConfig::default();
    let mae = |n: usize| {
        let model = fit_robot(
            &chain,
            &geoms,
            &RobotFitConfig {
                n_per_axis: n,
                ..Default::default()
            },
        )
        .unwrap();
        let ev = evaluate_accuracy(&model, &geoms, &eval_cfg, 5).unwrap();
        ev.report.all.unwrap().mae
    };
    let (m8, m24) = (mae(8), mae(24));
    outcome(
        m8 <= 3e-3 && m24 <= 2e-3,
        format!(
            "MAE N=8 {:.3} mm, N=24 {:.3} mm ({} configs × {} points, near < {} m)",
            m8 * 1e3,
            m24 * 1e3,
            eval_cfg.n_configs,
            eval_cfg.n_points,
            eval_cfg.near_threshold
        ),
    )
}

/// True when `p` sits at least `margin` away from every face plane of every
/// link domain, so a small finite-difference stencil never straddles the
/// field's exterior extension.
fn clear_of_domain_faces(model: &RobotSdfModel, q: &[f64], p: &Vector3<f64>, margin: f64) -> bool {
    let poses = model.chain.forward_kinematics(q).unwrap();
    model.links.iter().all(|l| {
        let local = poses[l.frame].apply_inverse(p);
        let b = &l.field.cfg.domain;
        (0..3).all(|a| (local[a] - b.min[a]).abs() > margin && (local[a] - b.max[a]).abs() > margin)
    })
}

fn gradient_fidelity() -> Outcome {
    let model = planar_model();
    let mode = Composition::soft(DEFAULT_RHO);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-6;
    let (mut worst_p, mut worst_q, mut count) = (0.0f64, 0.0f64, 0);
    while count < 500 {
        let q = random_configuration(&model.chain, &mut rng);
        let p = Vector3::new(
            rng.random_range(-0.9..0.9),
            rng.random_range(-0.9..0.9),
            rng.random_range(-0.3..0.3),
        );
        if !clear_of_domain_faces(&model, &q, &p, 1e-3) {
            continue;
        }
        let r = &model.eval_points(&q, &[p], true, mode).unwrap()[0];
        let f = |q: &[f64], p: Vector3<f64>| model.distances(q, &[p], mode).unwrap()[0];
        let fd_p: Vec<f64> = (0..3)
            .map(|a| {
                let e = Vector3::ith(a, h);
                (f(&q, p + e) - f(&q, p - e)) / (2.0 * h)
            })
            .collect();
        let fd_q: Vec<f64> = (0..q.len())
            .map(|j| {
                let (mut a, mut b) = (q.clone(), q.clone());
                a[j] += h;
                b[j] -= h;
                (f(&a, p) - f(&b, p)) / (2.0 * h)
            })
            .collect();
        worst_p = worst_p.max(rel_err(r.grad_p.as_slice(), &fd_p));
        worst_q = worst_q.max(rel_err(r.grad_q.as_ref().unwrap(), &fd_q));
        count += 1;
    }

    // Residual Jacobian of the lift problem where no ReLU switches within the
    // stencil and no query point is near a domain face.
    let problem = lift_problem(&model);
    let mut worst_j = 0.0f64;
    let mut checked = 0;
    let mut tries = 0;
    let query_points: Vec<Vector3<f64>> = (0..problem.contacts.len())
        .map(|i| problem.planned_contact(i))
        .chain(problem.interior.iter().copied())
        .collect();
    while checked < 100 && tries < 10_000 {
        tries += 1;
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-2.8..2.8)).collect();
        if !query_points
            .iter()
            .all(|p| clear_of_domain_faces(&model, &q, p, 1e-3))
        {
            continue;
        }
        let active = |q: &[f64]| -> Vec<bool> {
            let b = problem.blocks(q).unwrap();
            b.penetration
                .iter()
                .chain(&b.upper)
                .chain(&b.lower)
                .map(|v| *v > 0.0)
                .collect()
        };
        let pattern = active(&q);
        let mut smooth = true;
        let jac = problem.residual_jacobian(&q).unwrap();
        let mut fd = DMatrix::zeros(jac.nrows(), jac.ncols());
        for j in 0..q.len() {
            let (mut a, mut b) = (q.clone(), q.clone());
            a[j] += h;
            b[j] -= h;
            smooth &= active(&a) == pattern && active(&b) == pattern;
            let col = (problem.residuals(&a).unwrap() - problem.residuals(&b).unwrap()) / (2.0 * h);
            fd.set_column(j, &col);
        }
        if !smooth {
            continue;
        }
        worst_j = worst_j.max((&jac - &fd).norm() / fd.norm().max(jac.norm()).max(1e-4));
        checked += 1;
    }
    outcome(
        worst_p <= 1e-4 && worst_q <= 1e-4 && worst_j <= 1e-4 && checked == 100,
        format!(
            "max rel err grad_p {worst_p:.2e}, grad_q {worst_q:.2e} (500 samples); residual Jacobian {worst_j:.2e} ({checked} samples)"
        ),
    )
}

fn soft_min_bracketing() -> Outcome {
    let model = planar_model();
    let k = model.links.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rhos = [1e2, 1e3, 1e4];
    let (mut bracket_ok, mut monotone_ok) = (true, true);
    let mut worst_gap = [0.0f64; 3];
    for _ in 0..10_000 {
        let q = random_configuration(&model.chain, &mut rng);
        let p = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.4..0.4),
        );
        let frames = model.chain.joint_frames(&q).unwrap();
        let hard = model
            .link_distances(&frames, &p)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let soft: Vec<f64> = rhos
            .iter()
            .map(|r| model.distances(&q, &[p], Composition::soft(*r)).unwrap()[0])
            .collect();
        let tol = 1e-12 * (1.0 + hard.abs());
        for (i, (s, r)) in soft.iter().zip(&rhos).enumerate() {
            bracket_ok &= hard - k.ln() / r - tol <= *s && *s <= hard + tol;
            worst_gap[i] = worst_gap[i].max(hard - s);
        }
        monotone_ok &= soft[0] <= soft[1] + tol && soft[1] <= soft[2] + tol;
    }
    outcome(
        bracket_ok && monotone_ok,
        format!(
            "bracket {bracket_ok}, monotone {monotone_ok}; max gap {:.2e} / {:.2e} / {:.2e} m (bounds {:.2e} / {:.2e} / {:.2e})",
            worst_gap[0],
            worst_gap[1],
            worst_gap[2],
            k.ln() / rhos[0],
            k.ln() / rhos[1],
            k.ln() / rhos[2]
        ),
    )
}

fn kinematics_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut fk_err, mut jac_err, mut ortho) = (0.0f64, 0.0f64, 0.0f64);
    let h = 1e-6;
    for c in 0..100 {
        let n_rows = rng.random_range(1..=30);
        let mut rows: Vec<DhRow> = (0..n_rows)
            .map(|_| {
                let (a, d) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                let (al, off) = (rng.random_range(-3.2..3.2), rng.random_range(-3.2..3.2));
                if rng.random_bool(0.15) {
                    DhRow::fixed(a, d, al, off)
                } else {
                    DhRow::revolute(a, d, al, off)
                }
            })
            .collect();
        rows[0] = DhRow::revolute(rows[0].a, rows[0].d, rows[0].alpha, rows[0].theta_offset);
        let conv = if c % 2 == 0 {
            DhConvention::Classic
        } else {
            DhConvention::Modified
        };
        let n_joints = rows
            .iter()
            .filter(|r| matches!(r.joint, linkfield_core::kinematics::JointKind::Revolute))
            .count();
        let chain = KinematicChain::new(
            "random",
            conv,
            rows.clone(),
            vec![-10.0; n_joints],
            vec![10.0; n_joints],
            vec![],
        )
        .unwrap();
        let q: Vec<f64> = (0..n_joints).map(|_| rng.random_range(-3.0..3.0)).collect();
        let poses = chain.forward_kinematics(&q).unwrap();
        let mut m = Matrix4::identity();
        let mut j = 0;
        for (r, row) in rows.iter().enumerate() {
            let qj = if matches!(row.joint, linkfield_core::kinematics::JointKind::Revolute) {
                j += 1;
                q[j - 1]
            } else {
                0.0
            };
            m *= dh_matrix(conv, row, qj);
            fk_err = fk_err.max((poses[r + 1].to_homogeneous() - m).abs().max());
        }
        for pose in &poses {
            ortho = ortho.max(pose.orthonormality_error());
        }
        let p = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let k = rng.random_range(0..=n_rows);
        let jac = chain.point_frame_jacobian(&q, k, &p).unwrap();
        for jj in 0..n_joints {
            let (mut a, mut b) = (q.clone(), q.clone());
            a[jj] += h;
            b[jj] -= h;
            let fd = (chain.point_to_link_frame(&a, k, &p).unwrap()
                - chain.point_to_link_frame(&b, k, &p).unwrap())
                / (2.0 * h);
            jac_err = jac_err.max((jac.column(jj) - fd).abs().max());
        }
    }
    outcome(
        fk_err <= 1e-6 && jac_err <= 1e-6 && ortho <= 1e-9,
        format!("FK err {fk_err:.2e}, point Jacobian vs FD {jac_err:.2e}, orthonormality drift {ortho:.2e}"),
    )
}

fn lift_problem(model: &Arc<RobotSdfModel>) -> LiftProblem {
    let file = fixtures::planar_lift_problem("unused");
    LiftProblem::new(
        vec![PlannerArm {
            name: "arm".into(),
            model: model.clone(),
            base: Pose::identity(),
            q_init: file.arms[0].q_init.clone(),
        }],
        file.contacts,
        file.interior_points,
        file.weights,
    )
    .unwrap()
    .with_rho(file.rho)
    .unwrap()
}

fn planner_success() -> Outcome {
    let model = planar_model();
    let problem = lift_problem(&model);
    let cfg = GnConfig::default();
    let report = batch_plan(&problem, &cfg, 50, 0).unwrap();

    // Recheck every converged run against the exact capsule geometry.
    let chain = &model.chain;
    let geoms = link_geometries(chain).unwrap();
    let oracle = RobotOracle { geometries: &geoms };
    let tol = cfg.tolerances;
    let mut verified = 0;
    let mut iters = Vec::new();
    for s in report
        .solutions
        .iter()
        .filter(|s| s.status == PlanStatus::Converged)
    {
        let q = &s.q_final;
        let frames = chain.joint_frames(q).unwrap();
        let dist = |p: &Vector3<f64>| oracle.distance(&frames, p);
        let reach: f64 = (0..problem.contacts.len())
            .map(|i| dist(&problem.planned_contact(i)).powi(2))
            .sum();
        let pen: f64 = problem
            .interior
            .iter()
            .map(|p| (-dist(p)).max(0.0).powi(2))
            .sum();
        let limits = q
            .iter()
            .zip(chain.q_min.iter().zip(&chain.q_max))
            .all(|(v, (lo, hi))| lo < v && v < hi);
        let h = 1e-6;
        let normals: f64 = problem
            .contacts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let p = problem.planned_contact(i);
                let g = Vector3::from_fn(|a, _| {
                    let e = Vector3::ith(a, h);
                    (dist(&(p + e)) - dist(&(p - e))) / (2.0 * h)
                });
                1.0 - g.normalize().dot(&c.normal)
            })
            .sum();
        if reach < tol.reach_sq && pen < tol.penetration_sq && limits && normals < tol.normal_sum {
            verified += 1;
            iters.push(s.iterations);
        }
    }
    iters.sort_unstable();
    let median = if iters.is_empty() {
        f64::INFINITY
    } else if iters.len() % 2 == 1 {
        iters[iters.len() / 2] as f64
    } else {
        (iters[iters.len() / 2 - 1] + iters[iters.len() / 2]) as f64 / 2.0
    };
    let rate = verified as f64 / 50.0;
    outcome(
        rate >= 0.5 && median <= 200.0,
        format!(
            "{verified}/50 verified against exact geometry ({} reported converged), median {median} iterations",
            report.n_converged
        ),
    )
}

fn qp_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_kkt = 0.0f64;
    let mut all_optimal = true;
    for i in 0..1000 {
        let n = rng.random_range(1..=12);
        let m = rng.random_range(0..=10);
        let mut p = random_qp(n, m, &mut rng);
        if i % 2 == 0 {
            // Box bounds containing the origin keep the instance feasible.
            for j in 0..n {
                if rng.random_bool(0.5) {
                    p.lower[j] = -rng.random_range(0.1..2.0);
                }
                if rng.random_bool(0.5) {
                    p.upper[j] = rng.random_range(0.1..2.0);
                }
            }
            p.b = p.b.map(|v| v.abs() + 0.01);
        }
        let s = solve_qp(&p).unwrap();
        all_optimal &= s.status == QpStatus::Optimal;
        let kkt = p.kkt_residuals(&s.x, &s.multipliers).max();
        worst_kkt = worst_kkt.max(kkt);
    }
    let mut worst_obj = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let p = random_qp(n, 5, &mut rng);
        let s = solve_qp(&p).unwrap();
        let best = enumerated_optimum(&p).expect("feasible by construction");
        worst_obj = worst_obj.max((s.objective - best).abs() / (1.0 + best.abs()));
    }
    outcome(
        all_optimal && worst_kkt <= 1e-8 && worst_obj <= 1e-6,
        format!("max KKT residual {worst_kkt:.2e} (1000 QPs), max objective gap {worst_obj:.2e} (100 QPs, 5 rows)"),
    )
}

fn avoidance_safety() -> Outcome {
    let loaded = SceneFile::load(fixture_path("two_arm_scene.json"), None).unwrap();
    let cfg = loaded.file.controller;
    let threshold = cfg.audit_threshold();
    let obstacle_chain = loaded.obstacle_chain.clone().unwrap();
    let linkfield_core::avoid::ObstacleEntry::Arm {
        base: obstacle_base,
        ..
    } = loaded.file.obstacle
    else {
        panic!("two-arm scene has an arm obstacle");
    };
    let controlled = &loaded.model.chain;
    let (mut violations, mut reached, mut clean, mut slack, mut infeasible) = (0, 0, 0, 0, 0);
    let mut worst_clean = f64::INFINITY;
    let mut oracle_gap = 0.0f64;
    for seed in 0..100u64 {
        let (scene, setup) = loaded.episode(seed).unwrap();
        let r = run_episode(&scene, &cfg, &setup.q0, loaded.file.max_steps, seed).unwrap();
        reached += r.reached as usize;
        slack += (r.slack_steps > 0) as usize;
        infeasible += r.qp_infeasible;
        // Clearance recomputed from segment distances along the trajectory.
        let mut min_d = f64::INFINITY;
        for step in &r.trajectory {
            let mine = world_capsules(controlled, &loaded.file.controlled.base, &step.q);
            let theirs = world_capsules(
                &obstacle_chain,
                &obstacle_base,
                &script_config(&setup.script, step.t),
            );
            for (a, b, ra) in &mine {
                for (c, d, rc) in &theirs {
                    min_d = min_d.min(segment_distance(*a, *b, *c, *d) - ra - rc);
                }
            }
        }
        oracle_gap = oracle_gap.max((min_d - r.min_distance).abs());
        if r.all_steps_clean() {
            clean += 1;
            worst_clean = worst_clean.min(min_d);
            violations += (min_d < threshold) as usize;
        }
    }
    outcome(
        violations == 0,
        format!(
            "{violations} violations in {clean} clean episodes (worst clearance {:.1} mm, threshold {:.1} mm); reached {reached}/100, slack used in {slack}, infeasible QPs {infeasible}; oracle vs library clearance {oracle_gap:.1e} m",
            worst_clean * 1e3,
            threshold * 1e3
        ),
    )
}

fn run_cli(args: &[&str], out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_linkfield"))
        .args(args)
        .args(["--out", out.to_str().unwrap(), "--no-timing"])
        .env_remove("LINKFIELD_OUT")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn files_in(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn determinism_and_formats() -> Outcome {
    let chain = fixture_path("planar_arm.json");
    let model = fixture_path("planar_arm_n8.json");
    let problem = fixture_path("planar_lift.json");
    let scene = fixture_path("two_arm_scene.json");
    let (chain, model, problem, scene) = (
        chain.to_str().unwrap(),
        model.to_str().unwrap(),
        problem.to_str().unwrap(),
        scene.to_str().unwrap(),
    );
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "fit",
            "--chain",
            chain,
            "--n",
            "6",
            "--method",
            "tensor_grid",
            "--grid-resolution",
            "24",
            "--seed",
            "1",
        ],
        vec![
            "fit",
            "--chain",
            chain,
            "--n",
            "3",
            "--method",
            "recursive",
            "--samples",
            "4000",
            "--seed",
            "2",
        ],
        vec!["eval", "--model", model, "--seed", "3"],
        vec!["plan", "--problem", problem, "--seeds", "20", "--seed", "4"],
        vec![
            "avoid",
            "--scene",
            scene,
            "--episodes",
            "3",
            "--seed",
            "5",
            "--trajectories",
        ],
        vec![
            "grid",
            "--model",
            model,
            "--q",
            "0.3,-0.6,0.9",
            "--resolution",
            "40",
        ],
    ];
    let mut failures = Vec::new();
    for args in &commands {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        if !(run_cli(args, a.path()) && run_cli(args, b.path())) {
            failures.push(format!("{} failed to run", args[0]));
            continue;
        }
        let (fa, fb) = (files_in(a.path()), files_in(b.path()));
        if fa.is_empty() || fa != fb {
            failures.push(format!("{} output differs", args[0]));
        }
    }

    // Model and grid files: read then write gives the same bytes.
    let text = std::fs::read_to_string(fixture_path("planar_arm_n8.json")).unwrap();
    if RobotSdfModel::from_json(&text).unwrap().to_json().unwrap() != text {
        failures.push("model file does not round-trip".into());
    }
    let dir = tempfile::tempdir().unwrap();
    run_cli(
        &["grid", "--model", model, "--resolution", "7,5,3"],
        dir.path(),
    );
    let bytes = std::fs::read(dir.path().join("grid.bin")).unwrap_or_default();
    let mut again = Vec::new();
    match LevelSetGrid::read(&bytes[..]) {
        Ok(g) => {
            g.write(&mut again).unwrap();
            if again != bytes {
                failures.push("grid file does not round-trip".into());
            }
        }
        Err(e) => failures.push(format!("grid file unreadable: {e}")),
    }
    let detail = if failures.is_empty() {
        format!(
            "{} commands byte-identical across reruns; model and grid files round-trip",
            commands.len()
        )
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 11] = [
        (1, "basis identities", 1, basis_identities),
        (2, "recursive fit equals batch", 10, recursive_equals_batch),
        (3, "zero level set accuracy", 120, capsule_chamfer),
        (4, "whole-robot accuracy", 120, whole_robot_accuracy),
        (5, "gradient fidelity", 30, gradient_fidelity),
        (6, "soft-min bracketing", 10, soft_min_bracketing),
        (7, "kinematics", 10, kinematics_agreement),
        (8, "planner success", 120, planner_success),
        (9, "QP solver", 60, qp_solver),
        (10, "avoidance safety", 300, avoidance_safety),
        (11, "determinism and formats", 60, determinism_and_formats),
    ];
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(budget);
        let pass = o.pass && in_time;
        failed += !pass as usize;
        println!(
            "criterion {id:>2} {:<28} {}  {:.1}s/{budget}s{}  {}",
            name,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            if in_time { "" } else { " (over budget)" },
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
