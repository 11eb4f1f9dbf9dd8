//! Tool keypoints (grasp, function, effect) and the non-learned generators.

mod heuristic;
mod template;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::v2::{self, P2};
use crate::geometry::PointCloud;

pub use heuristic::heuristic_keypoints;
pub use template::{template_keypoints, template_match, TemplateLibrary, TemplateMatch, TEMPLATE_POINTS, TEMPLATE_ROTATIONS};

/// Grasp and function points must lie this close to the cloud.
pub const SNAP_RADIUS: f64 = 0.010;
pub const MIN_GRASP_FUNCTION_DISTANCE: f64 = 0.02;
const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolKeypoints {
    pub grasp: P2,
    pub function: P2,
    /// Stored one unit away from `function`; only its direction matters.
    pub effect: P2,
}

impl ToolKeypoints {
    /// Builds keypoints with the effect point normalized to unit distance
    /// from the function point.
    pub fn new(grasp: P2, function: P2, effect: P2) -> Self {
        let dir = v2::normalized(v2::sub(effect, function));
        Self { grasp, function, effect: v2::add(function, dir) }
    }

    /// Force direction e = x_e - x_f.
    pub fn effect_dir(&self) -> P2 {
        v2::sub(self.effect, self.function)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.grasp[0],
            self.grasp[1],
            self.function[0],
            self.function[1],
            self.effect[0],
            self.effect[1],
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { grasp: [a[0], a[1]], function: [a[2], a[3]], effect: [a[4], a[5]] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// Six comma-separated floats: grasp, function, effect.
    pub fn to_text(&self) -> String {
        self.to_array().map(|v| format!("{v}")).join(",")
    }

    pub fn parse(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("keypoints: {e}")))?;
        let arr: [f64; 6] = vals
            .try_into()
            .map_err(|v: Vec<f64>| Error::Parse(format!("keypoints: expected 6 values, got {}", v.len())))?;
        Ok(Self::from_array(arr))
    }

    /// Re-snaps grasp and function points onto the cloud and re-normalizes
    /// the effect direction.
    pub fn snapped(&self, cloud: &PointCloud) -> Self {
        let f = cloud.snap(self.function);
        Self::new(cloud.snap(self.grasp), f, v2::add(f, self.effect_dir()))
    }
}

/// True iff every keypoint invariant holds for `cloud`.
pub fn validate_keypoints(k: &ToolKeypoints, cloud: &PointCloud) -> bool {
    if !k.is_finite() || cloud.is_empty() {
        return false;
    }
    cloud.planar_distance(k.grasp) <= SNAP_RADIUS
        && cloud.planar_distance(k.function) <= SNAP_RADIUS
        && (v2::norm(k.effect_dir()) - 1.0).abs() <= UNIT_TOLERANCE
        && v2::dist(k.function, k.grasp) >= MIN_GRASP_FUNCTION_DISTANCE
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stick() -> PointCloud {
        PointCloud::new((0..=100).map(|i| [0.002 * i as f64, 0.0, 0.02]).collect())
    }

    #[test]
    fn validate_accepts_good_keypoints() {
        let k = ToolKeypoints::new([0.02, 0.0], [0.18, 0.0], [0.18, 1.0]);
        assert!(validate_keypoints(&k, &stick()));
    }

    #[test]
    fn validate_rejects_off_cloud_grasp() {
        let k = ToolKeypoints::new([0.02, 0.05], [0.18, 0.0], [0.18, 1.0]);
        assert!(!validate_keypoints(&k, &stick()));
    }

    #[test]
    fn validate_rejects_close_points() {
        let k = ToolKeypoints::new([0.10, 0.0], [0.11, 0.0], [0.11, 1.0]);
        assert!(!validate_keypoints(&k, &stick()));
    }

    #[test]
    fn validate_rejects_non_unit_effect() {
        let k = ToolKeypoints { grasp: [0.02, 0.0], function: [0.18, 0.0], effect: [0.18, 0.5] };
        assert!(!validate_keypoints(&k, &stick()));
    }

    #[test]
    fn text_round_trip() {
        let k = ToolKeypoints::new([0.1, -0.2], [0.3, 0.25], [1.3, 0.25]);
        assert_eq!(ToolKeypoints::parse(&k.to_text()).unwrap(), k);
        assert!(ToolKeypoints::parse("1,2,3").is_err());
        assert!(ToolKeypoints::parse("1,2,3,4,5,x").is_err());
    }
}
