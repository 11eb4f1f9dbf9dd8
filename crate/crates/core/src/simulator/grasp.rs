//! Top-down antipodal grasps on planar tool clouds.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::geometry::v2::{self, P2};
use crate::geometry::{normalize_angle, PointCloud};
use crate::rng;

pub const GRIPPER_MAX_WIDTH: f64 = 0.08;
const MIN_WIDTH: f64 = 0.004;
const NEIGHBOR_RADIUS: f64 = 0.008;
const BOUNDARY_OFFSET: f64 = 0.25 * NEIGHBOR_RADIUS;
const MIN_BOUNDARY_GAP: f64 = 2.0 * PI / 3.0;
const JAW_STRIP: f64 = 0.004;
const JAW_TOLERANCE: f64 = 0.002;
const JAW_DEPTH: f64 = 0.02;
const MAX_BOUNDARY_SAMPLES: usize = 320;
/// Normals must lie within this angle of the closing axis.
const FRICTION_HALF_ANGLE: f64 = 30.0 * PI / 180.0;
const NMS_DISTANCE: f64 = 0.003;
const NMS_ANGLE: f64 = 10.0 * PI / 180.0;
pub const MATCH_DISTANCE: f64 = 0.005;
pub const MATCH_ANGLE: f64 = 10.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    /// Midpoint between the finger contacts, world frame.
    pub position: P2,
    /// Gripper orientation, perpendicular to the closing axis.
    pub theta: f64,
    pub width: f64,
    pub quality: f64,
}

impl GraspPose {
    /// Unit vector along which the jaws close.
    pub fn closing_axis(&self) -> P2 {
        v2::rotate([1.0, 0.0], self.theta - std::f64::consts::FRAC_PI_2)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.theta.is_finite()
            && self.width.is_finite()
            && self.quality.is_finite()
    }
}

/// Boundary point with its estimated outward normal.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub index: usize,
    pub position: P2,
    pub normal: P2,
}

fn grid_of(pts: &[P2], idx: impl Iterator<Item = usize>) -> HashMap<(i64, i64), Vec<usize>> {
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for i in idx {
        grid.entry(cell(pts[i])).or_default().push(i);
    }
    grid
}

fn cell(p: P2) -> (i64, i64) {
    ((p[0] / NEIGHBOR_RADIUS).floor() as i64, (p[1] / NEIGHBOR_RADIUS).floor() as i64)
}

/// Indices within the neighbour radius of `p`, excluding `skip`.
fn neighbors(pts: &[P2], grid: &HashMap<(i64, i64), Vec<usize>>, p: P2, skip: usize) -> Vec<usize> {
    let (cx, cy) = cell(p);
    let mut out = Vec::new();
    for dx in -1..=1 {
        for dy in -1..=1 {
            if let Some(b) = grid.get(&(cx + dx, cy + dy)) {
                out.extend(
                    b.iter()
                        .copied()
                        .filter(|&j| j != skip && v2::dist2(pts[j], p) <= NEIGHBOR_RADIUS * NEIGHBOR_RADIUS),
                );
            }
        }
    }
    out
}

/// Unit vector perpendicular to the principal direction of `pts`.
fn minor_axis(pts: impl Iterator<Item = P2> + Clone) -> P2 {
    let n = pts.clone().count().max(1) as f64;
    let mean = v2::scale(pts.clone().fold([0.0, 0.0], v2::add), 1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for q in pts {
        let d = v2::sub(q, mean);
        sxx += d[0] * d[0];
        sxy += d[0] * d[1];
        syy += d[1] * d[1];
    }
    v2::rotate([0.0, 1.0], 0.5 * (2.0 * sxy).atan2(sxx - syy))
}

/// Points with a wide empty angular sector in their neighbourhood whose
/// neighbourhood centroid is also offset from them. The outward normal is
/// perpendicular to the local run of boundary points.
pub fn boundary_points(cloud: &PointCloud) -> Vec<BoundaryPoint> {
    let pts = cloud.planar();
    let grid = grid_of(&pts, 0..pts.len());
    let mut found = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let nb = neighbors(&pts, &grid, *p, i);
        let mut angles: Vec<f64> = nb
            .iter()
            .map(|&j| v2::sub(pts[j], *p))
            .filter(|d| v2::dot(*d, *d) > 1e-18)
            .map(v2::angle)
            .collect();
        if angles.len() < 4 {
            continue;
        }
        let mean = v2::scale(nb.iter().fold([0.0, 0.0], |s, &j| v2::add(s, pts[j])), 1.0 / nb.len() as f64);
        let outward = v2::sub(*p, mean);
        if v2::norm(outward) <= BOUNDARY_OFFSET {
            continue;
        }
        angles.sort_by(f64::total_cmp);
        let mut gap = angles[0] + 2.0 * PI - angles[angles.len() - 1];
        for w in angles.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        if gap >= MIN_BOUNDARY_GAP {
            found.push((i, outward, nb));
        }
    }
    let bgrid = grid_of(&pts, found.iter().map(|f| f.0));
    found
        .into_iter()
        .map(|(i, outward, nb)| {
            let run = neighbors(&pts, &bgrid, pts[i], usize::MAX);
            let mut normal = if run.len() >= 3 {
                minor_axis(run.iter().map(|&j| pts[j]))
            } else {
                minor_axis(nb.iter().map(|&j| pts[j]))
            };
            if v2::dot(normal, outward) < 0.0 {
                normal = v2::scale(normal, -1.0);
            }
            BoundaryPoint { index: i, position: pts[i], normal }
        })
        .collect()
}

fn pair_grasp(a: &BoundaryPoint, b: &BoundaryPoint) -> Option<GraspPose> {
    let d = v2::sub(b.position, a.position);
    let w = v2::norm(d);
    if !(MIN_WIDTH..=GRIPPER_MAX_WIDTH).contains(&w) {
        return None;
    }
    let axis = v2::scale(d, 1.0 / w);
    let cone = FRICTION_HALF_ANGLE.cos();
    if v2::dot(a.normal, v2::scale(axis, -1.0)) < cone || v2::dot(b.normal, axis) < cone {
        return None;
    }
    let misalign = (-v2::dot(a.normal, b.normal)).clamp(-1.0, 1.0);
    let quality = 0.5 * (1.0 + misalign) * (1.0 - 0.5 * w / GRIPPER_MAX_WIDTH);
    Some(GraspPose {
        position: v2::scale(v2::add(a.position, b.position), 0.5),
        theta: normalize_angle(v2::angle(axis) + std::f64::consts::FRAC_PI_2),
        width: w,
        quality: quality.clamp(0.0, 1.0),
    })
}

/// No cloud points in the finger approach regions just outside either contact.
fn jaws_clear(pts: &[P2], g: &GraspPose) -> bool {
    let axis = g.closing_axis();
    let half = 0.5 * g.width;
    pts.iter().all(|p| {
        let d = v2::sub(*p, g.position);
        let along = v2::dot(d, axis).abs() - half;
        !(v2::cross(axis, d).abs() < JAW_STRIP && along > JAW_TOLERANCE && along < JAW_DEPTH)
    })
}

/// Angular distance between two jaw orientations (jaws are symmetric under pi).
pub fn jaw_angle_diff(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b).abs();
    d.min(std::f64::consts::PI - d)
}

/// Up to `n` antipodal grasps, best quality first. A seeded subset of the
/// boundary is paired exhaustively and near-duplicates are suppressed.
pub fn sample_grasp_candidates(cloud: &PointCloud, n: usize, seed: u64) -> Vec<GraspPose> {
    if cloud.is_empty() || n == 0 {
        return Vec::new();
    }
    let mut boundary = boundary_points(cloud);
    if boundary.len() > MAX_BOUNDARY_SAMPLES {
        let mut r = rng::rng(seed);
        boundary.shuffle(&mut r);
        boundary.truncate(MAX_BOUNDARY_SAMPLES);
        boundary.sort_by_key(|b| b.index);
    }
    let pts = cloud.planar();
    let mut all = Vec::new();
    for i in 0..boundary.len() {
        for j in i + 1..boundary.len() {
            if let Some(g) = pair_grasp(&boundary[i], &boundary[j]) {
                all.push(g);
            }
        }
    }
    // stable sort keeps pair order among equal qualities
    all.sort_by(|a, b| b.quality.total_cmp(&a.quality));
    let mut kept: Vec<GraspPose> = Vec::new();
    for g in all {
        if kept.len() >= n {
            break;
        }
        let dup = kept.iter().any(|k| {
            v2::dist(k.position, g.position) < NMS_DISTANCE && jaw_angle_diff(k.theta, g.theta) < NMS_ANGLE
        });
        if !dup && jaws_clear(&pts, &g) {
            kept.push(g);
        }
    }
    kept
}

/// True when `grasp` matches some antipodal pair of the full boundary within
/// 5 mm and 10 degrees.
pub fn grasp_feasible(cloud: &PointCloud, grasp: &GraspPose) -> bool {
    if !grasp.is_finite() || grasp.width > GRIPPER_MAX_WIDTH {
        return false;
    }
    let boundary = boundary_points(cloud);
    let pts = cloud.planar();
    let reach = 0.5 * GRIPPER_MAX_WIDTH + MATCH_DISTANCE;
    let near: Vec<&BoundaryPoint> = boundary
        .iter()
        .filter(|b| v2::dist(b.position, grasp.position) <= reach)
        .collect();
    for i in 0..near.len() {
        for j in i + 1..near.len() {
            if let Some(g) = pair_grasp(near[i], near[j]) {
                if v2::dist(g.position, grasp.position) <= MATCH_DISTANCE
                    && jaw_angle_diff(g.theta, grasp.theta) <= MATCH_ANGLE
                    && jaws_clear(&pts, &g)
                {
                    return true;
                }
            }
        }
    }
    false
}
