use crate::error::{Error, Result};
use crate::geometry::{transform_cloud, PointCloud};
use crate::keypoints::{validate_keypoints, ToolKeypoints};
use crate::optimizer::{build_qp, default_drive, recover_action, select_grasp, solve_qp, Anchor};
use crate::simulator::{execute, sample_grasp_candidates, EpisodeOutcome, GraspPose, ManipAction, TaskScene};
use crate::toolgen::{render_cloud, ToolSpec, DEFAULT_NOISE_SD};

/// Grasp candidates sampled per episode.
pub const GRASP_CANDIDATES: usize = 64;

/// The tool's cloud as seen at the scene's staging pose, stored at 32-bit
/// precision so that records replay exactly from the sidecar file.
pub fn observe_tool(spec: &ToolSpec, scene: &TaskScene, m: usize, seed: u64) -> Result<PointCloud> {
    let local = render_cloud(spec, m, DEFAULT_NOISE_SD, seed)?;
    Ok(transform_cloud(&local, &scene.tool_pose, [0.0, 0.0]).quantized())
}

/// Everything one keypoint-driven attempt produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub grasp: Option<GraspPose>,
    pub action: Option<ManipAction>,
    pub outcome: EpisodeOutcome,
}

impl Attempt {
    fn rejected(err: Error) -> Self {
        Attempt {
            grasp: None,
            action: None,
            outcome: EpisodeOutcome {
                success: false,
                grasp_ok: false,
                collision: false,
                displacement: 0.0,
                diagnostics: err.to_string(),
            },
        }
    }
}

/// Grasp and action for keypoints on an observed cloud.
pub fn plan(scene: &TaskScene, cloud: &PointCloud, k: &ToolKeypoints, seed: u64) -> Result<(GraspPose, ManipAction)> {
    if !validate_keypoints(k, cloud) {
        return Err(Error::InvalidKeypoints);
    }
    let grasp = select_grasp(&sample_grasp_candidates(cloud, GRASP_CANDIDATES, seed), k.grasp)?;
    let held = ToolKeypoints { grasp: grasp.position, ..*k };
    let sol = solve_qp(&build_qp(&held, &scene.env, &scene.workspace)?)?;
    let action = recover_action(&sol, &held, &scene.tool_pose, Anchor::Function, default_drive(scene.kind))?;
    Ok((grasp, action))
}

/// Plans and executes; planning errors become failed outcomes carrying the
/// error name.
pub fn attempt(scene: &TaskScene, cloud: &PointCloud, k: &ToolKeypoints, seed: u64) -> Result<Attempt> {
    match plan(scene, cloud, k, seed) {
        Ok((grasp, action)) => {
            let outcome = execute(scene, cloud, &grasp, &action)?;
            Ok(Attempt { grasp: Some(grasp), action: Some(action), outcome })
        }
        Err(e) if e.is_io() => Err(e),
        Err(e) => Ok(Attempt::rejected(e)),
    }
}
