//! Planar quasi-static task environments: hammering, pushing and reaching.
//!
//! A scene is a set of wall boxes and movable target disks around the
//! environment keypoints. [`execute`] moves a grasped tool cloud along the
//! desired force direction and reports the binary task outcome used as the
//! self-supervision label.

mod execute;
mod grasp;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::v2::{self, P2};
use crate::geometry::PlanarPose;
use crate::rng;

pub use execute::{execute, placed_cloud, EpisodeOutcome, STANDOFF, SWEEP_STEPS};
pub use grasp::{
    boundary_points, grasp_feasible, sample_grasp_candidates, GraspPose, GRIPPER_MAX_WIDTH,
};

pub const NAIL_RADIUS: f64 = 0.01;
pub const SLOT_GAP: f64 = 0.025;
pub const D_NAIL: f64 = 0.03;
/// Distance from the target point to the board face in the hammering scene.
pub const BOARD_OFFSET: f64 = D_NAIL + 0.005;
pub const PUSH_RADIUS: f64 = 0.02;
pub const PUSH_SPACING: f64 = 0.05;
pub const D_PUSH: f64 = 0.05;
pub const TUNNEL_GAP: f64 = 0.04;
pub const TUNNEL_DEPTH: f64 = 0.12;
pub const REACH_TARGET_DEPTH: f64 = 0.10;
pub const REACH_RADIUS: f64 = 0.01;
pub const D_REACH: f64 = 0.03;
pub const THIN_MARGIN: f64 = 0.005;
/// Length of the environment force vector x_r - x_t.
pub const RECEIVER_OFFSET: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Hammering,
    Pushing,
    Reaching,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Hammering, TaskKind::Pushing, TaskKind::Reaching];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Hammering => "hammering",
            TaskKind::Pushing => "pushing",
            TaskKind::Reaching => "reaching",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hammering" => Ok(TaskKind::Hammering),
            "pushing" => Ok(TaskKind::Pushing),
            "reaching" => Ok(TaskKind::Reaching),
            _ => Err(Error::Parse(format!("unknown task {s:?}"))),
        }
    }

    /// Target displacement required for success.
    pub fn required_displacement(self) -> f64 {
        match self {
            TaskKind::Hammering => D_NAIL,
            TaskKind::Pushing => D_PUSH,
            TaskKind::Reaching => D_REACH,
        }
    }
}

/// Environment keypoints: target point and receiver point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvKeypoints {
    pub target: P2,
    pub receiver: P2,
}

impl EnvKeypoints {
    pub fn new(target: P2, receiver: P2) -> Result<Self> {
        if v2::dist(target, receiver) > 0.0 {
            Ok(Self { target, receiver })
        } else {
            Err(Error::InvalidInput("receiver coincides with target".into()))
        }
    }

    /// Desired force vector x_r - x_t (not normalized).
    pub fn force(&self) -> P2 {
        v2::sub(self.receiver, self.target)
    }

    pub fn direction(&self) -> P2 {
        v2::normalized(self.force())
    }
}

/// Oriented wall box. Interior is open: touching the surface is not a collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub center: P2,
    /// Unit vector of the first half extent.
    pub axis: P2,
    pub half: [f64; 2],
}

impl Wall {
    pub fn contains(&self, p: P2) -> bool {
        let d = v2::sub(p, self.center);
        v2::dot(d, self.axis).abs() < self.half[0] && v2::cross(self.axis, d).abs() < self.half[1]
    }

    pub fn corners(&self) -> [P2; 4] {
        let a = v2::scale(self.axis, self.half[0]);
        let b = v2::scale(v2::perp(self.axis), self.half[1]);
        [
            v2::add(self.center, v2::add(a, b)),
            v2::add(self.center, v2::sub(a, b)),
            v2::sub(self.center, v2::add(a, b)),
            v2::sub(self.center, v2::sub(a, b)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetDisk {
    pub center: P2,
    pub radius: f64,
}

/// Reaching corridor between the two tunnel walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tunnel {
    pub mouth: P2,
    pub direction: P2,
    pub gap: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace {
    pub min: P2,
    pub max: P2,
}

impl Workspace {
    pub fn contains(&self, p: P2) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn translated(&self, t: P2) -> Workspace {
        Workspace { min: v2::add(self.min, t), max: v2::add(self.max, t) }
    }
}

pub const DEFAULT_WORKSPACE: Workspace = Workspace { min: [-1.0, -0.6], max: [0.6, 0.6] };

/// Final tool configuration plus the follow-through along the force direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManipAction {
    /// Final position of the grasped point.
    pub grasp_target: P2,
    /// Final orientation of the tool frame (world).
    pub theta: f64,
    /// Distance driven along the force direction past the final pose.
    pub drive: f64,
}

pub const MAX_DRIVE: f64 = 0.2;

impl ManipAction {
    pub fn new(grasp_target: P2, theta: f64, drive: f64) -> Result<Self> {
        let a = Self { grasp_target, theta: crate::geometry::normalize_angle(theta), drive };
        if !a.is_finite() || !(0.0..=MAX_DRIVE).contains(&drive) {
            return Err(Error::InvalidAction);
        }
        Ok(a)
    }

    pub fn is_finite(&self) -> bool {
        self.grasp_target.iter().all(|c| c.is_finite()) && self.theta.is_finite() && self.drive.is_finite()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.grasp_target[0], self.grasp_target[1], self.theta, self.drive]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { grasp_target: [a[0], a[1]], theta: a[2], drive: a[3] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskScene {
    pub kind: TaskKind,
    pub env: EnvKeypoints,
    pub walls: Vec<Wall>,
    pub targets: Vec<TargetDisk>,
    pub tunnel: Option<Tunnel>,
    pub required_displacement: f64,
    pub tool_pose: PlanarPose,
    pub workspace: Workspace,
    pub seed: u64,
}

/// Deterministic scene for `(kind, seed)`. The force direction is drawn
/// uniformly; the tool starts in a staging region clear of all obstacles.
pub fn make_task(kind: TaskKind, seed: u64) -> TaskScene {
    use std::f64::consts::PI;
    let mut r = rng::rng(rng::derive(seed, kind.name(), 0));
    let u = v2::rotate([1.0, 0.0], r.gen_range(-PI..PI));
    let n = v2::perp(u);
    let target = [r.gen_range(-0.05..0.05), r.gen_range(-0.05..0.05)];
    let at = |along: f64, lateral: f64| v2::add(target, v2::add(v2::scale(u, along), v2::scale(n, lateral)));
    let mut walls = Vec::new();
    let mut targets = Vec::new();
    let mut tunnel = None;
    match kind {
        TaskKind::Hammering => {
            targets.push(TargetDisk { center: at(NAIL_RADIUS, 0.0), radius: NAIL_RADIUS });
            let depth = 0.05;
            let outer = 0.15;
            let half_lat = 0.5 * (outer - 0.5 * SLOT_GAP);
            for side in [-1.0, 1.0] {
                walls.push(Wall {
                    center: at(BOARD_OFFSET + 0.5 * depth, side * (0.5 * SLOT_GAP + half_lat)),
                    axis: u,
                    half: [0.5 * depth, half_lat],
                });
            }
        }
        TaskKind::Pushing => {
            for k in [-1.0, 0.0, 1.0] {
                targets.push(TargetDisk { center: at(PUSH_RADIUS, k * PUSH_SPACING), radius: PUSH_RADIUS });
            }
        }
        TaskKind::Reaching => {
            let mouth_along = -(REACH_TARGET_DEPTH - REACH_RADIUS);
            targets.push(TargetDisk { center: at(REACH_RADIUS, 0.0), radius: REACH_RADIUS });
            let thickness = 0.05;
            for side in [-1.0, 1.0] {
                walls.push(Wall {
                    center: at(
                        mouth_along + 0.5 * TUNNEL_DEPTH,
                        side * (0.5 * TUNNEL_GAP + 0.5 * thickness),
                    ),
                    axis: u,
                    half: [0.5 * TUNNEL_DEPTH, 0.5 * thickness],
                });
            }
            tunnel = Some(Tunnel {
                mouth: at(mouth_along, 0.0),
                direction: u,
                gap: TUNNEL_GAP,
                depth: TUNNEL_DEPTH,
            });
        }
    }
    let tool_pose = PlanarPose::new(
        r.gen_range(-0.75..-0.55),
        r.gen_range(-0.15..0.15),
        r.gen_range(-PI..PI),
    );
    TaskScene {
        kind,
        env: EnvKeypoints { target, receiver: v2::add(target, v2::scale(u, RECEIVER_OFFSET)) },
        walls,
        targets,
        tunnel,
        required_displacement: kind.required_displacement(),
        tool_pose,
        workspace: DEFAULT_WORKSPACE,
        seed,
    }
}
