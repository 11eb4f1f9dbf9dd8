use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keypoints::ToolKeypoints;
use crate::simulator::{GraspPose, ManipAction, TaskKind};

/// Which keypoint generator drove an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyTag {
    Heuristic,
    Learned,
    Mixed,
    Template,
}

impl PolicyTag {
    pub fn name(self) -> &'static str {
        match self {
            PolicyTag::Heuristic => "heuristic",
            PolicyTag::Learned => "learned",
            PolicyTag::Mixed => "mixed",
            PolicyTag::Template => "template",
        }
    }
}

mod bit {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*v as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(serde::de::Error::custom(format!("success must be 0 or 1, got {v}"))),
        }
    }
}

/// One labeled attempt. Keypoints, grasp and action are absent when the
/// pipeline stopped before producing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: u64,
    pub task: TaskKind,
    pub tool_id: String,
    pub seed: u64,
    /// Ordinal of the observed cloud in the dataset's cloud file.
    pub cloud: usize,
    pub keypoints: Option<[f64; 6]>,
    /// `[x, y, theta]` of the selected grasp.
    pub grasp: Option<[f64; 3]>,
    pub grasp_width: Option<f64>,
    pub action: Option<[f64; 4]>,
    #[serde(with = "bit")]
    pub success: bool,
    pub policy: PolicyTag,
    pub diagnostics: String,
}

impl EpisodeRecord {
    pub fn tool_keypoints(&self) -> Option<ToolKeypoints> {
        self.keypoints.map(ToolKeypoints::from_array)
    }

    pub fn grasp_pose(&self) -> Option<GraspPose> {
        let g = self.grasp?;
        Some(GraspPose { position: [g[0], g[1]], theta: g[2], width: self.grasp_width?, quality: 0.0 })
    }

    pub fn manip_action(&self) -> Option<ManipAction> {
        self.action.map(ManipAction::from_array)
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[EpisodeRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<EpisodeRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("record line {}: {e}", n + 1)))?);
    }
    Ok(out)
}
