//! Built-in robots and shapes whose distance oracles are all analytic.
//!
//! The same chains ship as JSON under `fixtures/` in the repository.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use nalgebra::Vector3;

use crate::avoid::{
    ControlledEntry, ControllerConfig, EpisodeSampling, ObstacleEntry, SceneFile, SCENE_FORMAT,
    SCENE_VERSION,
};
use crate::geometry::Primitive;
use crate::kinematics::{Attachment, DhConvention, DhRow, GeometrySource, KinematicChain, Pose};
use crate::planner::{
    ArmEntry, Contact, ProblemFile, ResidualWeights, PROBLEM_FORMAT, PROBLEM_VERSION,
};
use crate::robotsdf::DEFAULT_RHO;

fn capsule(a: [f64; 3], b: [f64; 3], r: f64) -> GeometrySource {
    GeometrySource::Primitive(Primitive::Capsule {
        endpoint_a: Vector3::from(a),
        endpoint_b: Vector3::from(b),
        radius: r,
    })
}

fn attach(name: &str, frame: usize, geometry: GeometrySource) -> Attachment {
    Attachment {
        name: name.into(),
        frame,
        geometry,
        pose: None,
    }
}

/// Link lengths of [`planar_arm`].
pub const PLANAR_LINK_LENGTHS: [f64; 3] = [0.30, 0.25, 0.20];
/// Capsule radii of [`planar_arm`].
pub const PLANAR_LINK_RADII: [f64; 3] = [0.08, 0.07, 0.06];

/// Three revolute joints about parallel z axes; each link is a capsule from
/// its joint to the next.
pub fn planar_arm() -> KinematicChain {
    let rows = PLANAR_LINK_LENGTHS
        .iter()
        .map(|&a| DhRow::revolute(a, 0.0, 0.0, 0.0))
        .collect();
    let attachments = (0..3)
        .map(|k| {
            let a = PLANAR_LINK_LENGTHS[k];
            attach(
                &format!("link{}", k + 1),
                k + 1,
                capsule([-a, 0.0, 0.0], [0.0, 0.0, 0.0], PLANAR_LINK_RADII[k]),
            )
        })
        .collect();
    KinematicChain::new(
        "planar3",
        DhConvention::Classic,
        rows,
        vec![-2.6; 3],
        vec![2.6; 3],
        attachments,
    )
    .expect("planar fixture is valid")
}

/// A single capsule shaped roughly like a forearm link.
pub fn capsule_link() -> Primitive {
    Primitive::Capsule {
        endpoint_a: Vector3::new(0.0, 0.0, 0.0),
        endpoint_b: Vector3::new(0.25, 0.0, 0.0),
        radius: 0.07,
    }
}

/// Seven-joint arm with the published Franka Emika Panda modified-DH
/// parameters and limits, plus a fixed flange row.
///
/// Geometry is a coarse capsule per link and a box for the hand, nine bodies
/// in all; the gripper fingers are left out. Each capsule roughly spans from
/// its frame origin toward the next joint.
pub fn franka_capsules() -> KinematicChain {
    let rows = vec![
        DhRow::revolute(0.0, 0.333, 0.0, 0.0),
        DhRow::revolute(0.0, 0.0, -FRAC_PI_2, 0.0),
        DhRow::revolute(0.0, 0.316, FRAC_PI_2, 0.0),
        DhRow::revolute(0.0825, 0.0, FRAC_PI_2, 0.0),
        DhRow::revolute(-0.0825, 0.384, -FRAC_PI_2, 0.0),
        DhRow::revolute(0.0, 0.0, FRAC_PI_2, 0.0),
        DhRow::revolute(0.088, 0.0, FRAC_PI_2, 0.0),
        DhRow::fixed(0.0, 0.107, 0.0, 0.0),
    ];
    let q_min = vec![
        -2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973,
    ];
    let q_max = vec![2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973];
    let hand = Attachment {
        name: "hand".into(),
        frame: 8,
        geometry: GeometrySource::Primitive(Primitive::Box {
            center: Vector3::new(0.0, 0.0, 0.06),
            half_extents: Vector3::new(0.04, 0.1, 0.035),
        }),
        pose: Some(Pose::new(Pose::rot_z(-FRAC_PI_4), Vector3::zeros())),
    };
    let attachments = vec![
        attach("link0", 0, capsule([0.0, 0.0, 0.03], [0.0, 0.0, 0.2], 0.08)),
        attach(
            "link1",
            1,
            capsule([0.0, 0.0, -0.15], [0.0, 0.0, 0.0], 0.07),
        ),
        attach(
            "link2",
            2,
            capsule([0.0, 0.0, 0.0], [0.0, -0.16, 0.0], 0.07),
        ),
        attach(
            "link3",
            3,
            capsule([0.0, 0.0, -0.15], [0.0825, 0.0, 0.0], 0.065),
        ),
        attach(
            "link4",
            4,
            capsule([0.0, 0.0, 0.0], [-0.0825, 0.12, 0.0], 0.065),
        ),
        attach(
            "link5",
            5,
            capsule([0.0, 0.0, -0.25], [0.0, 0.0, -0.03], 0.06),
        ),
        attach(
            "link6",
            6,
            capsule([0.0, 0.0, -0.03], [0.088, 0.0, 0.0], 0.06),
        ),
        attach(
            "link7",
            7,
            capsule([0.0, 0.0, -0.04], [0.0, 0.0, 0.08], 0.055),
        ),
        hand,
    ];
    KinematicChain::new(
        "franka_capsules",
        DhConvention::Modified,
        rows,
        q_min,
        q_max,
        attachments,
    )
    .expect("franka fixture is valid")
}

/// Box lifted in the planar lift problem, in the arm's base frame.
pub const PLANAR_LIFT_CENTER: [f64; 3] = [0.45, 0.30, 0.0];
pub const PLANAR_LIFT_HALF_EXTENTS: [f64; 3] = [0.12, 0.10, 0.10];

/// One contact in the middle of the box's bottom face, pushed from below.
pub fn planar_lift_contacts() -> Vec<Contact> {
    let [cx, cy, cz] = PLANAR_LIFT_CENTER;
    vec![Contact {
        position: Vector3::new(cx, cy - PLANAR_LIFT_HALF_EXTENTS[1], cz),
        normal: Vector3::new(0.0, 1.0, 0.0),
    }]
}

/// 3×3×3 grid over the box at three quarters of its half extents.
pub fn planar_lift_interior() -> Vec<Vector3<f64>> {
    let c = Vector3::from(PLANAR_LIFT_CENTER);
    let h = Vector3::from(PLANAR_LIFT_HALF_EXTENTS) * 0.75;
    let mut out = Vec::with_capacity(27);
    for i in [-1.0, 0.0, 1.0] {
        for j in [-1.0, 0.0, 1.0] {
            for k in [-1.0, 0.0, 1.0] {
                out.push(c + Vector3::new(i * h.x, j * h.y, k * h.z));
            }
        }
    }
    out
}

/// Planar lift problem for one planar arm at the origin, starting straight.
pub fn planar_lift_problem(model: &str) -> ProblemFile {
    ProblemFile {
        format: PROBLEM_FORMAT.into(),
        version: PROBLEM_VERSION,
        arms: vec![ArmEntry {
            name: "arm".into(),
            model: model.into(),
            base: Pose::identity(),
            q_init: vec![0.0; 3],
        }],
        contacts: planar_lift_contacts(),
        interior_points: planar_lift_interior(),
        weights: ResidualWeights::default(),
        rho: DEFAULT_RHO,
        inward_offset: 0.0,
        seed: 0,
    }
}

/// Base of the obstacle arm in the two-arm scene: a second planar arm
/// facing the controlled one from 0.9 m along x.
pub fn two_arm_obstacle_base() -> Pose {
    Pose::new(
        Pose::rot_z(std::f64::consts::PI),
        Vector3::new(0.9, 0.0, 0.0),
    )
}

/// Two planar arms sharing a plane; every episode draws its own start,
/// target and obstacle script.
pub fn two_arm_scene(model: &str, obstacle_chain: &str) -> SceneFile {
    SceneFile {
        format: SCENE_FORMAT.into(),
        version: SCENE_VERSION,
        controlled: ControlledEntry {
            model: model.into(),
            base: Pose::identity(),
        },
        obstacle: ObstacleEntry::Arm {
            chain: obstacle_chain.into(),
            base: two_arm_obstacle_base(),
            script: None,
        },
        q0: None,
        target: None,
        n_obstacle_samples: crate::avoid::DEFAULT_OBSTACLE_SAMPLES,
        max_steps: 1000,
        controller: ControllerConfig::default(),
        sampling: EpisodeSampling::default(),
        seed: 0,
    }
}
