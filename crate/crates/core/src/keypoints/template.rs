use super::ToolKeypoints;
use crate::error::{Error, Result};
use crate::geometry::v2::{self, P2};
use crate::geometry::PointCloud;

pub const TEMPLATE_ROTATIONS: usize = 36;
/// Clouds are thinned to this many points before Chamfer matching.
pub const TEMPLATE_POINTS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateMatch {
    pub index: usize,
    pub distance: f64,
    /// Rotation taking the library cloud onto the query.
    pub rotation: f64,
    pub keypoints: ToolKeypoints,
}

struct Prepared {
    centroid: P2,
    /// Centered, thinned cloud at each of the discrete rotations.
    rotated: Vec<Vec<[f64; 3]>>,
}

fn centered(cloud: &PointCloud) -> (P2, Vec<[f64; 3]>) {
    let c = cloud.planar_centroid();
    let pts = cloud
        .strided(TEMPLATE_POINTS)
        .points
        .into_iter()
        .map(|p| [p[0] - c[0], p[1] - c[1], p[2]])
        .collect();
    (c, pts)
}

fn rotation_angle(k: usize) -> f64 {
    2.0 * std::f64::consts::PI * k as f64 / TEMPLATE_ROTATIONS as f64
}

fn sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Chamfer distance that gives up (returning infinity) once it exceeds `bound`.
fn chamfer_bounded(a: &[[f64; 3]], b: &[[f64; 3]], bound: f64) -> f64 {
    let mut sa = 0.0;
    let na = a.len() as f64;
    let nb = b.len() as f64;
    for p in a {
        sa += b.iter().map(|q| sq(p, q)).fold(f64::INFINITY, f64::min);
        if sa / na > bound {
            return f64::INFINITY;
        }
    }
    let mut sb = 0.0;
    for q in b {
        sb += a.iter().map(|p| sq(p, q)).fold(f64::INFINITY, f64::min);
        if sa / na + sb / nb > bound {
            return f64::INFINITY;
        }
    }
    sa / na + sb / nb
}

/// Nearest-neighbour keypoint transfer over a fixed library.
pub struct TemplateLibrary<'a> {
    entries: &'a [(PointCloud, ToolKeypoints)],
    prepared: Vec<Prepared>,
}

impl<'a> TemplateLibrary<'a> {
    pub fn new(entries: &'a [(PointCloud, ToolKeypoints)]) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        let prepared = entries
            .iter()
            .map(|(cloud, _)| {
                let (centroid, pts) = centered(cloud);
                let rotated = (0..TEMPLATE_ROTATIONS)
                    .map(|k| {
                        let (s, c) = rotation_angle(k).sin_cos();
                        pts.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]).collect()
                    })
                    .collect();
                Prepared { centroid, rotated }
            })
            .collect();
        Ok(Self { entries, prepared })
    }

    /// Global minimum over entries and rotations; ties go to the earlier
    /// entry, then the smaller rotation.
    pub fn query(&self, cloud: &PointCloud) -> Result<TemplateMatch> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let (qc, qpts) = centered(cloud);
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for (i, prep) in self.prepared.iter().enumerate() {
            for (k, rot) in prep.rotated.iter().enumerate() {
                let d = chamfer_bounded(&qpts, rot, best.0);
                if d < best.0 {
                    best = (d, i, k);
                }
            }
        }
        let (distance, index, k) = best;
        if !distance.is_finite() {
            return Err(Error::DegenerateInput);
        }
        let rotation = rotation_angle(k);
        let lib = &self.entries[index].1;
        let c = self.prepared[index].centroid;
        let map = |p: P2| v2::add(v2::rotate(v2::sub(p, c), rotation), qc);
        let function = map(lib.function);
        let moved = ToolKeypoints::new(
            map(lib.grasp),
            function,
            v2::add(function, v2::rotate(lib.effect_dir(), rotation)),
        );
        Ok(TemplateMatch { index, distance, rotation, keypoints: moved.snapped(cloud) })
    }
}

pub fn template_match(cloud: &PointCloud, library: &[(PointCloud, ToolKeypoints)]) -> Result<TemplateMatch> {
    TemplateLibrary::new(library)?.query(cloud)
}

/// Keypoints of the Chamfer-nearest library entry, aligned and snapped onto
/// `cloud`.
pub fn template_keypoints(cloud: &PointCloud, library: &[(PointCloud, ToolKeypoints)]) -> Result<ToolKeypoints> {
    template_match(cloud, library).map(|m| m.keypoints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{transform_cloud, PlanarPose};
    use crate::keypoints::heuristic_keypoints;
    use crate::simulator::TaskKind;
    use crate::toolgen::{generate_tool, render_cloud, Category};

    fn library() -> Vec<(PointCloud, ToolKeypoints)> {
        (0..6)
            .map(|s| {
                let cat = if s % 2 == 0 { Category::Hammer } else { Category::NonHammer };
                let cloud = render_cloud(&generate_tool(cat, 40 + s).unwrap(), 512, 0.001, s).unwrap();
                let k = heuristic_keypoints(&cloud, TaskKind::Hammering, s).unwrap();
                (cloud, k)
            })
            .collect()
    }

    #[test]
    fn self_retrieval_is_exact() {
        let lib = library();
        for (i, (cloud, k)) in lib.iter().enumerate() {
            let m = template_match(cloud, &lib).unwrap();
            assert_eq!(m.index, i);
            assert_eq!(m.distance, 0.0);
            for (a, b) in m.keypoints.to_array().iter().zip(k.to_array()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rotated_query_finds_entry_and_rotates_keypoints() {
        let lib = library();
        let (cloud, k) = &lib[2];
        let c = cloud.planar_centroid();
        let quarter = std::f64::consts::FRAC_PI_2;
        let q = transform_cloud(cloud, &PlanarPose::new(0.3, -0.2, quarter), c);
        let m = template_match(&q, &lib).unwrap();
        assert_eq!(m.index, 2);
        let err = crate::geometry::normalize_angle(m.rotation - quarter).abs();
        assert!(err <= 10f64.to_radians() / 2.0 + 1e-9);
        let expect = v2::rotate(k.effect_dir(), quarter);
        assert!(v2::signed_angle(expect, m.keypoints.effect_dir()).abs() <= 10f64.to_radians());
    }

    #[test]
    fn ties_go_to_first_entry() {
        let lib = library();
        let dup = vec![lib[1].clone(), lib[1].clone()];
        assert_eq!(template_match(&lib[1].0, &dup).unwrap().index, 0);
    }

    #[test]
    fn empty_library_errors() {
        let lib = library();
        assert!(matches!(template_keypoints(&lib[0].0, &[]), Err(Error::EmptyLibrary)));
    }
}
