use rand::Rng as _;

use super::pipeline::{attempt, observe_tool};
use super::record::{EpisodeRecord, PolicyTag};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::keypoints::{heuristic_keypoints, TemplateLibrary, ToolKeypoints};
use crate::learner::{predict_keypoints, NetParams};
use crate::rng;
use crate::simulator::{execute, make_task, TaskKind, TaskScene};
use crate::toolgen::ToolSpec;

/// The two learned heads and the number of proposals scored per prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub proposal: NetParams,
    pub evaluation: NetParams,
    pub proposals: usize,
}

impl Models {
    pub fn predict(&self, cloud: &PointCloud, seed: u64) -> Result<ToolKeypoints> {
        predict_keypoints(cloud, self.proposals, seed, &self.proposal, &self.evaluation)
    }
}

#[derive(Clone, Copy)]
pub enum Policy<'a> {
    Heuristic,
    Learned(&'a Models),
    /// Heuristic with probability `p`, learned otherwise.
    Mixed(f64, &'a Models),
    Template(&'a TemplateLibrary<'a>),
}

impl Policy<'_> {
    pub fn tag(&self) -> PolicyTag {
        match self {
            Policy::Heuristic => PolicyTag::Heuristic,
            Policy::Learned(_) => PolicyTag::Learned,
            Policy::Mixed(..) => PolicyTag::Mixed,
            Policy::Template(_) => PolicyTag::Template,
        }
    }
}

/// Everything that identifies one episode besides the policy.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSpec<'a> {
    pub id: u64,
    pub task: TaskKind,
    pub tool: &'a ToolSpec,
    pub seed: u64,
    /// Points rendered per observed cloud.
    pub points: usize,
}

/// A record with the cloud it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub record: EpisodeRecord,
    pub cloud: PointCloud,
}

pub fn scene_for(task: TaskKind, seed: u64) -> TaskScene {
    make_task(task, rng::derive(seed, "scene", 0))
}

fn keypoints_for(cloud: &PointCloud, ep: &EpisodeSpec, policy: Policy) -> Result<ToolKeypoints> {
    let heuristic = || heuristic_keypoints(cloud, ep.task, rng::derive(ep.seed, "heuristic", 0));
    let learned = |m: &Models| m.predict(cloud, rng::derive(ep.seed, "proposal", 0));
    match policy {
        Policy::Heuristic => heuristic(),
        Policy::Learned(m) => learned(m),
        Policy::Mixed(p, m) => {
            if rng::rng(rng::derive(ep.seed, "mix", 0)).gen_bool(p.clamp(0.0, 1.0)) {
                heuristic()
            } else {
                learned(m)
            }
        }
        Policy::Template(lib) => lib.query(cloud).map(|m| m.keypoints),
    }
}

/// Renders the tool in the episode's scene, picks keypoints with `policy`,
/// then plans, executes and labels the attempt. Every failure short of I/O
/// becomes a negative record.
pub fn run_episode(ep: &EpisodeSpec, policy: Policy) -> Result<Episode> {
    let scene = scene_for(ep.task, ep.seed);
    let cloud = observe_tool(ep.tool, &scene, ep.points, rng::derive(ep.seed, "render", 0))?;
    let k = keypoints_for(&cloud, ep, policy);
    finish(ep, &scene, cloud, k, policy.tag())
}

/// Same as [`run_episode`] with externally supplied keypoints.
pub fn run_with_keypoints(ep: &EpisodeSpec, k: ToolKeypoints, tag: PolicyTag) -> Result<Episode> {
    let scene = scene_for(ep.task, ep.seed);
    let cloud = observe_tool(ep.tool, &scene, ep.points, rng::derive(ep.seed, "render", 0))?;
    finish(ep, &scene, cloud, Ok(k), tag)
}

fn finish(
    ep: &EpisodeSpec,
    scene: &TaskScene,
    cloud: PointCloud,
    k: Result<ToolKeypoints>,
    policy: PolicyTag,
) -> Result<Episode> {
    let mut record = EpisodeRecord {
        episode_id: ep.id,
        task: ep.task,
        tool_id: ep.tool.id.clone(),
        seed: ep.seed,
        cloud: 0,
        keypoints: None,
        grasp: None,
        grasp_width: None,
        action: None,
        success: false,
        policy,
        diagnostics: String::new(),
    };
    match k {
        Ok(k) => {
            let a = attempt(scene, &cloud, &k, rng::derive(ep.seed, "grasp", 0))?;
            record.keypoints = Some(k.to_array());
            record.grasp = a.grasp.map(|g| [g.position[0], g.position[1], g.theta]);
            record.grasp_width = a.grasp.map(|g| g.width);
            record.action = a.action.map(|a| a.to_array());
            record.success = a.outcome.success;
            record.diagnostics = a.outcome.diagnostics;
        }
        Err(e) if e.is_io() => return Err(e),
        Err(e) => record.diagnostics = e.to_string(),
    }
    Ok(Episode { record, cloud })
}

/// Re-executes a stored record on its cloud and returns the success bit.
pub fn replay(record: &EpisodeRecord, cloud: &PointCloud) -> Result<bool> {
    match (record.grasp_pose(), record.manip_action()) {
        (Some(g), Some(a)) => Ok(execute(&scene_for(record.task, record.seed), cloud, &g, &a)?.success),
        (None, None) => Ok(false),
        _ => Err(Error::Format(format!("episode {} has a partial plan", record.episode_id))),
    }
}
