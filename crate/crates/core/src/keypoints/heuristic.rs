use rand::Rng as _;

use super::{validate_keypoints, ToolKeypoints, MIN_GRASP_FUNCTION_DISTANCE};
use crate::error::{Error, Result};
use crate::geometry::v2::{self, P2};
use crate::geometry::{euclidean_cluster, ransac_line, PointCloud, Segment2};
use crate::rng;
use crate::simulator::TaskKind;

const RANSAC_ITERATIONS: usize = 200;
const RANSAC_TOL: f64 = 0.008;
/// Half-width of the band treated as the main part when looking for
/// off-axis clusters; wider than the RANSAC tolerance so the handle rim is
/// not mistaken for a separate part.
const MAIN_BAND: f64 = 0.016;
const CLUSTER_RADIUS: f64 = 0.015;
const CLUSTER_MIN_POINTS: usize = 5;
const GRASP_FRACTION: f64 = 0.25;

/// Hand-written keypoint generator.
///
/// The main part is the RANSAC line; the grasp sits a quarter of the way
/// along it from the end away from the largest off-axis cluster. Function
/// point candidates are the points of each off-axis cluster farthest from the
/// main axis (or the far end of the main segment when there are none); one is
/// picked with `seed`. Hammering and pushing push perpendicular to the main
/// axis, reaching pushes along it.
pub fn heuristic_keypoints(cloud: &PointCloud, kind: TaskKind, seed: u64) -> Result<ToolKeypoints> {
    if cloud.len() < 32 {
        return Err(Error::DegenerateInput);
    }
    let pts = cloud.planar();
    let (seg, _) = ransac_line(&pts, RANSAC_ITERATIONS, RANSAC_TOL, rng::derive(seed, "ransac", 0))?;
    let mut r = rng::rng(rng::derive(seed, "heuristic", 0));
    let dir = seg.direction();
    let len = seg.length();

    let off_axis: Vec<usize> = (0..pts.len())
        .filter(|&i| {
            let d = v2::sub(pts[i], seg.a);
            let t = v2::dot(d, dir);
            v2::cross(dir, d).abs() > MAIN_BAND || t < -MAIN_BAND || t > len + MAIN_BAND
        })
        .collect();
    let off_pts: Vec<P2> = off_axis.iter().map(|&i| pts[i]).collect();
    let clusters: Vec<Vec<usize>> = euclidean_cluster(&off_pts, CLUSTER_RADIUS, CLUSTER_MIN_POINTS)
        .into_iter()
        .map(|c| c.into_iter().map(|k| off_axis[k]).collect())
        .collect();

    let (butt, tip) = match clusters.first() {
        Some(big) => {
            let mut c = [0.0, 0.0];
            for &i in big {
                c = v2::add(c, pts[i]);
            }
            let c = v2::scale(c, 1.0 / big.len() as f64);
            if v2::dist(c, seg.a) >= v2::dist(c, seg.b) {
                (seg.a, seg.b)
            } else {
                (seg.b, seg.a)
            }
        }
        None if r.gen_bool(0.5) => (seg.a, seg.b),
        None => (seg.b, seg.a),
    };
    let main = Segment2::new(butt, tip)?;
    let grasp = cloud.snap(main.lerp(GRASP_FRACTION));

    let mut candidates: Vec<P2> = clusters
        .iter()
        .map(|c| {
            let far = c
                .iter()
                .copied()
                .max_by(|&a, &b| main.signed_offset(pts[a]).abs().total_cmp(&main.signed_offset(pts[b]).abs()))
                .expect("clusters are non-empty");
            pts[far]
        })
        .filter(|p| v2::dist(*p, grasp) >= MIN_GRASP_FUNCTION_DISTANCE)
        .collect();
    if candidates.is_empty() {
        candidates.push(cloud.snap(tip));
    }
    let function = candidates[r.gen_range(0..candidates.len())];

    let axis = main.direction();
    let effect_dir = match kind {
        TaskKind::Hammering | TaskKind::Pushing => {
            let off = main.signed_offset(function);
            let side = if off.abs() > 1e-3 {
                off.signum()
            } else if r.gen_bool(0.5) {
                1.0
            } else {
                -1.0
            };
            v2::scale(v2::perp(axis), side)
        }
        TaskKind::Reaching => {
            if v2::dot(v2::sub(function, grasp), axis) >= 0.0 {
                axis
            } else {
                v2::scale(axis, -1.0)
            }
        }
    };
    let k = ToolKeypoints::new(grasp, function, v2::add(function, effect_dir));
    if validate_keypoints(&k, cloud) {
        Ok(k)
    } else {
        Err(Error::DegenerateInput)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PlanarPose;
    use crate::toolgen::{generate_tool, render_cloud, Category, Shape, ToolPart, ToolSpec};

    fn t_hammer_cloud() -> PointCloud {
        let spec = ToolSpec {
            id: "t".into(),
            category: Category::Hammer,
            seed: 0,
            parts: vec![
                ToolPart {
                    shape: Shape::Box { length: 0.2, width: 0.02 },
                    height: 0.02,
                    pose: PlanarPose::identity(),
                },
                ToolPart {
                    shape: Shape::Box { length: 0.08, width: 0.03 },
                    height: 0.03,
                    pose: PlanarPose::new(0.09, 0.0, std::f64::consts::FRAC_PI_2),
                },
            ],
        };
        render_cloud(&spec, 1024, 0.0, 4).unwrap()
    }

    #[test]
    fn t_hammer_keypoints() {
        let cloud = t_hammer_cloud();
        for seed in 0..10 {
            let k = heuristic_keypoints(&cloud, TaskKind::Hammering, seed).unwrap();
            // grasp on the handle, towards the butt
            assert!(k.grasp[0] < 0.0 && k.grasp[1].abs() <= 0.011, "{k:?}");
            // function point at one of the head extremities
            let tips = [[0.09, 0.04], [0.09, -0.04]];
            let near_tip = tips.iter().any(|t| v2::dist(*t, k.function) < 0.016);
            assert!(near_tip && k.function[1].abs() > 0.03, "{k:?}");
            // effect perpendicular to the handle
            assert!(k.effect_dir()[0].abs() < 0.05, "{k:?}");
            assert!(validate_keypoints(&k, &cloud));
        }
    }

    #[test]
    fn stick_falls_back_to_endpoint() {
        let spec = ToolSpec {
            id: "s".into(),
            category: Category::NonHammer,
            seed: 0,
            parts: vec![ToolPart {
                shape: Shape::Box { length: 0.2, width: 0.015 },
                height: 0.02,
                pose: PlanarPose::new(0.0, 0.0, 0.7),
            }],
        };
        let cloud = render_cloud(&spec, 512, 0.0, 1).unwrap();
        let axis = v2::rotate([1.0, 0.0], 0.7);
        let k = heuristic_keypoints(&cloud, TaskKind::Reaching, 3).unwrap();
        assert!((v2::dot(k.function, axis).abs() - 0.1).abs() < 0.01, "{k:?}");
        assert!(v2::cross(axis, k.effect_dir()).abs() < 0.05, "{k:?}");
        assert!(v2::dot(k.effect_dir(), v2::sub(k.function, k.grasp)) > 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let cloud = t_hammer_cloud();
        for kind in TaskKind::ALL {
            assert_eq!(
                heuristic_keypoints(&cloud, kind, 8).unwrap(),
                heuristic_keypoints(&cloud, kind, 8).unwrap()
            );
        }
    }

    #[test]
    fn generated_tools_pass_validation() {
        for seed in 0..60 {
            let cat = if seed % 2 == 0 { Category::Hammer } else { Category::NonHammer };
            let spec = generate_tool(cat, seed).unwrap();
            let cloud = render_cloud(&spec, 1024, 0.001, seed).unwrap();
            for kind in TaskKind::ALL {
                let k = heuristic_keypoints(&cloud, kind, seed).unwrap();
                assert!(validate_keypoints(&k, &cloud));
            }
        }
    }

    #[test]
    fn small_cloud_is_degenerate() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 0.0]; 10]);
        assert!(matches!(
            heuristic_keypoints(&cloud, TaskKind::Pushing, 0),
            Err(Error::DegenerateInput)
        ));
    }
}
