use serde::{Deserialize, Serialize};

use super::grasp::{grasp_feasible, GraspPose};
use super::{ManipAction, TaskKind, TaskScene, Wall, THIN_MARGIN};
use crate::error::{Error, Result};
use crate::geometry::v2::{self, P2};
use crate::geometry::{normalize_angle, PointCloud};

/// Distance the tool is backed off along the force direction before the sweep.
pub const STANDOFF: f64 = 0.05;
pub const SWEEP_STEPS: usize = 200;
const SUCCESS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub grasp_ok: bool,
    pub collision: bool,
    /// Displacement of the task-critical target (the least displaced disk
    /// when pushing).
    pub displacement: f64,
    pub diagnostics: String,
}

impl EpisodeOutcome {
    fn failure(grasp_ok: bool, collision: bool, displacement: f64, msg: impl Into<String>) -> Self {
        Self { success: false, grasp_ok, collision, displacement, diagnostics: msg.into() }
    }
}

/// Rigid map taking the observed tool to its final pose: the grasp point
/// lands on `action.grasp_target` and the tool frame turns to `action.theta`.
fn placement(scene: &TaskScene, grasp: &GraspPose, action: &ManipAction) -> impl Fn(P2) -> P2 {
    let delta = normalize_angle(action.theta - scene.tool_pose.theta);
    let g = grasp.position;
    let x = action.grasp_target;
    move |p: P2| v2::add(v2::rotate(v2::sub(p, g), delta), x)
}

/// Tool cloud at the final pose (before the stand-off and sweep).
pub fn placed_cloud(scene: &TaskScene, cloud: &PointCloud, grasp: &GraspPose, action: &ManipAction) -> PointCloud {
    let place = placement(scene, grasp, action);
    PointCloud::new(
        cloud
            .points
            .iter()
            .map(|p| {
                let q = place([p[0], p[1]]);
                [q[0], q[1], p[2]]
            })
            .collect(),
    )
}

/// Open interval of sweep offsets `s` for which `p + s*u` is inside `wall`.
fn wall_interval(wall: &Wall, p: P2, u: P2) -> Option<(f64, f64)> {
    let d = v2::sub(p, wall.center);
    let axes = [wall.axis, v2::perp(wall.axis)];
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (k, a) in axes.iter().enumerate() {
        let pos = v2::dot(d, *a);
        let vel = v2::dot(u, *a);
        let h = wall.half[k];
        if vel.abs() < 1e-15 {
            if pos.abs() >= h {
                return None;
            }
        } else {
            let t0 = (-h - pos) / vel;
            let t1 = (h - pos) / vel;
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
    }
    (lo < hi).then_some((lo, hi))
}

/// First sweep offset at which `p + s*u` touches the disk, if any.
fn disk_contact(center: P2, radius: f64, p: P2, u: P2) -> Option<f64> {
    let w = v2::sub(p, center);
    let b = v2::dot(w, u);
    let c = v2::dot(w, w) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let exit = -b + root;
    if exit < 0.0 {
        return None;
    }
    Some((-b - root).max(0.0))
}

/// Runs one grasp + manipulation attempt and labels it.
///
/// The tool is placed at its final pose, backed off by [`STANDOFF`] along the
/// desired force direction and swept forward by the stand-off plus the drive
/// distance. Wall collisions are tested at [`SWEEP_STEPS`] + 1 evenly spaced
/// offsets for every tool point. A disk first touched at offset `s` moves by
/// the remaining sweep; the nail is capped at its drive depth and stops the
/// tool once fully driven.
pub fn execute(
    scene: &TaskScene,
    tool_cloud: &PointCloud,
    grasp: &GraspPose,
    action: &ManipAction,
) -> Result<EpisodeOutcome> {
    if !grasp.is_finite() || !action.is_finite() || !tool_cloud.is_valid() {
        return Err(Error::InvalidAction);
    }
    if !grasp_feasible(tool_cloud, grasp) {
        return Ok(EpisodeOutcome::failure(false, false, 0.0, "grasp-infeasible"));
    }
    let u = scene.env.direction();
    let place = placement(scene, grasp, action);
    let back = v2::scale(u, -STANDOFF);
    let tool: Vec<P2> = tool_cloud
        .points
        .iter()
        .map(|p| v2::add(place([p[0], p[1]]), back))
        .collect();
    let sweep = STANDOFF + action.drive;

    let contacts: Vec<Option<f64>> = scene
        .targets
        .iter()
        .map(|t| {
            tool.iter()
                .filter_map(|p| disk_contact(t.center, t.radius, *p, u))
                .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.min(s))))
                .filter(|s| *s <= sweep)
        })
        .collect();

    let mut effective = sweep;
    if scene.kind == TaskKind::Hammering {
        if let Some(s) = contacts[0] {
            effective = effective.min(s + scene.required_displacement);
        }
    }

    let step = sweep / SWEEP_STEPS as f64;
    let last_step = (0..=SWEEP_STEPS).rev().find(|k| *k as f64 * step <= effective + 1e-15).unwrap_or(0);
    for p in &tool {
        for w in &scene.walls {
            if let Some((lo, hi)) = wall_interval(w, *p, u) {
                // any sampled offset strictly inside (lo, hi)?
                let k0 = ((lo / step).floor() + 1.0).max(0.0) as usize;
                let hit = (k0..=last_step).next().map_or(false, |k| (k as f64 * step) < hi);
                if hit {
                    return Ok(EpisodeOutcome::failure(true, true, 0.0, "collision"));
                }
            }
        }
    }

    let displacements: Vec<f64> = contacts
        .iter()
        .map(|c| match c {
            Some(s) if *s <= effective => {
                let d = effective - s;
                if scene.kind == TaskKind::Hammering {
                    d.min(scene.required_displacement)
                } else {
                    d
                }
            }
            _ => 0.0,
        })
        .collect();
    let achieved = displacements.iter().copied().fold(f64::INFINITY, f64::min);
    let achieved = if achieved.is_finite() { achieved } else { 0.0 };
    let reached = displacements.iter().all(|d| *d >= scene.required_displacement - SUCCESS_EPS);

    if let (TaskKind::Reaching, Some(t)) = (scene.kind, scene.tunnel) {
        let n = v2::perp(t.direction);
        let shift = v2::scale(u, effective);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &tool {
            let d = v2::sub(v2::add(*p, shift), t.mouth);
            let depth = v2::dot(d, t.direction);
            let lat = v2::dot(d, n);
            if (0.0..=t.depth).contains(&depth) && lat.abs() < 0.5 * t.gap {
                lo = lo.min(lat);
                hi = hi.max(lat);
            }
        }
        if hi > lo && hi - lo >= t.gap - THIN_MARGIN {
            return Ok(EpisodeOutcome::failure(true, false, achieved, "thin-part-violation"));
        }
    }

    if reached {
        Ok(EpisodeOutcome {
            success: true,
            grasp_ok: true,
            collision: false,
            displacement: achieved,
            diagnostics: "ok".into(),
        })
    } else {
        let msg = if contacts.iter().all(Option::is_none) { "no-contact" } else { "insufficient-displacement" };
        Ok(EpisodeOutcome::failure(true, false, achieved, msg))
    }
}
