//! Ground-truth oracle for executing an action: a flying parallel gripper
//! that grasps and pulls, or pokes and pushes, one articulated part.
//!
//! Gripper frame convention: column 0 of the rotation is the approach
//! axis, column 1 the finger closing axis, column 2 the palm axis.

use crate::math::{rot6d_to_matrix, Mat3, Vec3};
use crate::scene::{surface_point_query, JointKind, Scene};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    PullOpen,
    PushClose,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::PullOpen, Task::PushClose];

    pub fn name(self) -> &'static str {
        match self {
            Task::PullOpen => "pull_open",
            Task::PushClose => "push_close",
        }
    }

    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Task::PullOpen => [1.0, 0.0],
            Task::PushClose => [0.0, 1.0],
        }
    }
}

impl std::str::FromStr for Task {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Task> {
        match s {
            "pull_open" => Ok(Task::PullOpen),
            "push_close" => Ok(Task::PushClose),
            other => Err(crate::Error::Argument(format!("unknown task '{other}'"))),
        }
    }
}

/// Manipulation point plus 6D gripper orientation plus task tag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Action {
    pub p: Vec3,
    /// First two columns of the gripper rotation before orthonormalization.
    pub rot6d: [f64; 6],
    pub task: Task,
}

impl Action {
    pub fn rotation(&self) -> Mat3 {
        rot6d_to_matrix(&self.rot6d)
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !self.p.is_finite() || self.rot6d.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::Argument("action contains non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NoGrasp,
    WrongDirection,
    InsufficientMotion,
    AlreadyAtLimit,
    None,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Outcome {
    pub gt: bool,
    pub joint_delta: f64,
    pub failure_reason: FailureReason,
}

/// Geometry thresholds of the gripper abstraction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionParams {
    /// Max distance from p to the part surface for a grasp (m).
    pub eps_grasp: f64,
    /// Finger opening: max graspable material thickness (m).
    pub finger_gap: f64,
    /// Max angle between approach axis and inward surface normal (rad).
    pub theta_max: f64,
    /// Post-grasp / push travel (m).
    pub stroke: f64,
    /// Grasp breaks when the grasped point's path deviates from the pull
    /// direction by more than this angle (rad).
    pub break_angle: f64,
    /// Success thresholds on joint motion.
    pub tau_revolute: f64,
    pub tau_prismatic: f64,
}

impl Default for InteractionParams {
    fn default() -> Self {
        InteractionParams {
            eps_grasp: 0.015,
            finger_gap: 0.04,
            theta_max: 45f64.to_radians(),
            stroke: 0.25,
            break_angle: 60f64.to_radians(),
            tau_revolute: 0.1,
            tau_prismatic: 0.05,
        }
    }
}

impl InteractionParams {
    pub fn tau(&self, kind: JointKind) -> f64 {
        match kind {
            JointKind::Revolute => self.tau_revolute,
            JointKind::Prismatic => self.tau_prismatic,
        }
    }
}

/// Material thickness along the closing axis through the grasped surface
/// patch: length of the solid interval of the part containing the anchor,
/// measured on a line through a point nudged just inside the surface.
/// Returns infinity when no enclosing interval exists.
pub fn patch_thickness(scene: &Scene, anchor: Vec3, inward: Vec3, closing: Vec3) -> f64 {
    let part = scene.part_world();
    let start = anchor + inward * 1e-4;
    let ts = part.line_intersections(start, closing);
    // consecutive intersection pairs bound material intervals for a closed
    // mesh; fall back to the tightest bracket around 0
    for pair in ts.chunks_exact(2) {
        if pair[0] <= 1e-9 && pair[1] >= -1e-9 {
            return pair[1] - pair[0];
        }
    }
    let mut t_in = f64::NEG_INFINITY;
    let mut t_out = f64::INFINITY;
    for &t in &ts {
        if t <= 0.0 && t > t_in {
            t_in = t;
        }
        if t >= 0.0 && t < t_out {
            t_out = t;
        }
    }
    if t_in.is_finite() && t_out.is_finite() {
        t_out - t_in
    } else {
        f64::INFINITY
    }
}

/// Three-clause grasp test: surface proximity, finger-gap thickness, and
/// approach alignment with the inward normal. Handle bars and panel rims
/// pass the thickness clause; flat face interiors never do.
pub fn grasp_test(scene: &Scene, p: Vec3, rot: &Mat3, params: &InteractionParams) -> bool {
    let part = scene.part_world();
    let nearest = match part.nearest_point(p) {
        Some(n) => n,
        None => return false,
    };
    if nearest.distance > params.eps_grasp {
        return false;
    }
    let approach = rot.col(0);
    let inward = -nearest.normal;
    if approach.angle_to(inward) > params.theta_max {
        return false;
    }
    let closing = rot.col(1);
    patch_thickness(scene, nearest.point, inward, closing) <= params.finger_gap
}

/// Execute an action and judge success. Pure in (scene, action, params).
pub fn execute(scene: &Scene, action: &Action, params: &InteractionParams) -> Outcome {
    let rot = action.rotation();
    match action.task {
        Task::PullOpen => pull_open(scene, action.p, &rot, params),
        Task::PushClose => push_close(scene, action.p, &rot, params),
    }
}

fn outcome(gt: bool, delta: f64, reason: FailureReason) -> Outcome {
    Outcome {
        gt,
        joint_delta: delta,
        failure_reason: if gt { FailureReason::None } else { reason },
    }
}

fn pull_open(scene: &Scene, p: Vec3, rot: &Mat3, params: &InteractionParams) -> Outcome {
    let joint = &scene.joint;
    let q0 = joint.q;
    let hi = joint.limits[1];
    if q0 >= hi - 1e-9 {
        return outcome(false, 0.0, FailureReason::AlreadyAtLimit);
    }
    if !grasp_test(scene, p, rot, params) {
        return outcome(false, 0.0, FailureReason::NoGrasp);
    }
    // horizontal backward motion in the world frame: straight away from
    // the object, toward the far camera
    let pull_dir = scene.front;
    let part = scene.part_world();
    let anchor0 = part.nearest_point(p).expect("grasped part has triangles").point;
    let anchor_rest = scene.part_point_to_rest(anchor0, q0);
    let tau = params.tau(joint.kind);

    let steps = 2000;
    let dq = (hi - q0) / steps as f64;
    let mut q = q0;
    for _ in 0..steps {
        let q_next = (q + dq).min(hi);
        let anchor_next = joint.transform_point(anchor_rest, q_next);
        let chord = anchor_next - anchor0;
        if chord.norm() > 1e-12 && chord.angle_to(pull_dir) > params.break_angle {
            break; // grasp slips off
        }
        q = q_next;
        if chord.norm() >= params.stroke || q >= hi {
            break;
        }
    }
    let delta = q - q0;
    if delta <= 1e-12 {
        return outcome(false, 0.0, FailureReason::WrongDirection);
    }
    outcome(delta > tau, delta, FailureReason::InsufficientMotion)
}

fn push_close(scene: &Scene, p: Vec3, rot: &Mat3, params: &InteractionParams) -> Outcome {
    let joint = &scene.joint;
    let q0 = joint.q;
    let lo = joint.limits[0];
    if q0 <= lo + 1e-9 {
        return outcome(false, 0.0, FailureReason::AlreadyAtLimit);
    }
    let approach = rot.col(0);
    let tau = params.tau(joint.kind);
    // fingertip ray starts slightly behind p so noisy points just inside
    // the surface still make contact
    let back = 0.02;
    let start = p - approach * back;
    let part = scene.part_world();
    let hit_part = part.ray_cast(start, approach, 1e-9);
    let hit_base = scene.base.ray_cast(start, approach, 1e-9);
    let hit = match (hit_part, hit_base) {
        (Some(hp), Some(hb)) if hb.t < hp.t => None, // fingertip jams on the base
        (hp, _) => hp,
    };
    let hit = match hit {
        Some(h) if h.t <= back + params.stroke && h.normal.dot(approach) < 0.0 => h,
        _ => return outcome(false, 0.0, FailureReason::WrongDirection),
    };
    let budget = params.stroke - (hit.t - back).max(0.0);
    let contact_rest = scene.part_point_to_rest(hit.point, q0);

    let steps = 2000;
    let dq = (q0 - lo) / steps as f64;
    let mut q = q0;
    let mut consumed = 0.0;
    for _ in 0..steps {
        let q_next = (q - dq).max(lo);
        let moved = joint.transform_point(contact_rest, q_next)
            - joint.transform_point(contact_rest, q);
        let proj = moved.dot(approach);
        if proj <= 1e-12 {
            break; // part no longer yields along the push direction
        }
        consumed += proj;
        q = q_next;
        if consumed >= budget || q <= lo {
            break;
        }
    }
    let delta = q0 - q;
    if delta <= 1e-12 {
        return outcome(false, 0.0, FailureReason::WrongDirection);
    }
    outcome(delta > tau, delta, FailureReason::InsufficientMotion)
}

/// Construct a well-aligned action at a surface point: approach along the
/// inward normal, closing axis chosen among perpendicular candidates (the
/// first that passes the grasp test for pulls).
pub fn oracle_action(scene: &Scene, p: Vec3, task: Task, params: &InteractionParams) -> Action {
    let q = surface_point_query(scene, p);
    let inward = -q.normal;
    let seed_axis = if inward.x.abs() < 0.9 { Vec3::X } else { Vec3::Z };
    let c0 = (seed_axis - inward * inward.dot(seed_axis))
        .normalized()
        .unwrap_or(Vec3::Z);
    let c1 = inward.cross(c0);
    let mut fallback = None;
    for i in 0..8 {
        let th = std::f64::consts::PI * (i as f64) / 8.0;
        let closing = c0 * th.cos() + c1 * th.sin();
        let rot = Mat3::from_cols(inward, closing, inward.cross(closing));
        let action = Action { p, rot6d: crate::math::matrix_to_rot6d(&rot), task };
        if fallback.is_none() {
            fallback = Some(action.clone());
        }
        if task == Task::PushClose || grasp_test(scene, p, &rot, params) {
            return action;
        }
    }
    fallback.expect("at least one candidate")
}
