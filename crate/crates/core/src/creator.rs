//! Composing a tool from separate parts by gradient ascent of the evaluation
//! score over each part's planar translation and rotation.

use crate::error::{Error, Result};
use crate::geometry::v2::{self, P2};
use crate::geometry::{PlanarPose, PointCloud};
use crate::keypoints::{heuristic_keypoints, ToolKeypoints};
use crate::learner::{score_gradient, HeadKind, Net, NetParams};
use crate::rng;
use crate::simulator::TaskKind;
use crate::toolgen::{generate_tool, render_cloud, Category, ToolPart, ToolSpec};

pub const MAX_TRANSLATION: f64 = 0.5;
/// Step halvings tried before the line search gives up.
pub const MAX_HALVINGS: usize = 20;

/// Rigid motion of one part: rotation `phi` about the part's centroid, then
/// translation `t`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PartPose {
    pub t: P2,
    pub phi: f64,
}

impl PartPose {
    pub fn new(tx: f64, ty: f64, phi: f64) -> Self {
        Self { t: [tx, ty], phi }
    }

    pub fn is_valid(&self) -> bool {
        self.t.iter().all(|c| c.is_finite()) && self.phi.is_finite() && v2::norm(self.t) <= MAX_TRANSLATION
    }

    /// Adds `step * dir`, pulling the translation back inside the allowed disk.
    fn stepped(self, dir: [f64; 3], step: f64) -> Self {
        let mut t = [self.t[0] + step * dir[0], self.t[1] + step * dir[1]];
        let n = v2::norm(t);
        if n > MAX_TRANSLATION {
            t = v2::scale(t, MAX_TRANSLATION / n);
        }
        Self { t, phi: self.phi + step * dir[2] }
    }
}

fn part_centroid(cloud: &PointCloud) -> P2 {
    cloud.planar_centroid()
}

/// `p + t + (R(phi) - I)(p - c)`, exact for the identity pose.
fn moved(p: P2, c: P2, pose: &PartPose) -> P2 {
    let (s, co) = pose.phi.sin_cos();
    let d = v2::sub(p, c);
    [
        p[0] + pose.t[0] + (co - 1.0) * d[0] - s * d[1],
        p[1] + pose.t[1] + s * d[0] + (co - 1.0) * d[1],
    ]
}

/// Moves each part rigidly about its own centroid and concatenates them in
/// order; per-part point counts are preserved.
pub fn assemble(parts: &[PointCloud], poses: &[PartPose]) -> Result<PointCloud> {
    if parts.len() != poses.len() || parts.is_empty() {
        return Err(Error::BadParts);
    }
    let mut points = Vec::with_capacity(parts.iter().map(PointCloud::len).sum());
    for (cloud, pose) in parts.iter().zip(poses) {
        let c = part_centroid(cloud);
        points.extend(cloud.points.iter().map(|p| {
            let q = moved([p[0], p[1]], c, pose);
            [q[0], q[1], p[2]]
        }));
    }
    Ok(PointCloud::new(points))
}

/// Score of the assembled tool and its gradient w.r.t. `(t_x, t_y, phi)` of
/// every part, through the per-point score gradient.
pub fn score_and_gradient<T: crate::learner::nn::Scalar>(
    parts: &[PointCloud],
    poses: &[PartPose],
    k: &ToolKeypoints,
    net: &Net<T>,
) -> Result<(f64, Vec<[f64; 3]>)> {
    let cloud = assemble(parts, poses)?;
    let (score, dp) = score_gradient(&cloud, k, net)?;
    let mut out = Vec::with_capacity(parts.len());
    let mut offset = 0;
    for (part, pose) in parts.iter().zip(poses) {
        let c = part_centroid(part);
        let (s, co) = pose.phi.sin_cos();
        let mut g = [0.0; 3];
        for (p, d) in part.points.iter().zip(&dp[offset..offset + part.len()]) {
            let r = v2::sub([p[0], p[1]], c);
            // d(moved)/d(phi) = R'(phi) (p - c)
            let dr = [-s * r[0] - co * r[1], co * r[0] - s * r[1]];
            g[0] += d[0];
            g[1] += d[1];
            g[2] += d[0] * dr[0] + d[1] * dr[1];
        }
        offset += part.len();
        out.push(g);
    }
    Ok((score, out))
}

/// Gradient of the evaluation score of the assembled tool w.r.t. every part
/// pose, computed on a 64-bit copy of the parameters.
pub fn creation_gradient(
    parts: &[PointCloud],
    poses: &[PartPose],
    k: &ToolKeypoints,
    params: &NetParams,
) -> Result<Vec<[f64; 3]>> {
    params.expect(HeadKind::Evaluation)?;
    Ok(score_and_gradient(parts, poses, k, &params.cast::<f64>())?.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreateOptions {
    pub max_iters: usize,
    /// Initial step of every line search.
    pub step: f64,
    /// Gradient norm at which the ascent stops as converged.
    pub tol: f64,
}

impl Default for CreateOptions {
    fn default() -> Self {
        Self { max_iters: 200, step: 0.05, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreationResult {
    pub poses: Vec<PartPose>,
    /// Initial score followed by the score after each accepted step.
    pub scores: Vec<f64>,
    /// Poses before the first and after each accepted step.
    pub history: Vec<Vec<PartPose>>,
    pub cloud: PointCloud,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl CreationResult {
    pub fn accepted_steps(&self) -> usize {
        self.scores.len() - 1
    }
}

fn norm3(g: &[[f64; 3]]) -> f64 {
    g.iter().flat_map(|v| v.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Backtracking gradient ascent from `start`. Each iteration halves the step
/// until the score strictly increases, giving up after [`MAX_HALVINGS`].
pub fn create_tool(
    parts: &[PointCloud],
    start: &[PartPose],
    k: &ToolKeypoints,
    params: &NetParams,
    opts: &CreateOptions,
) -> Result<CreationResult> {
    params.expect(HeadKind::Evaluation)?;
    if parts.is_empty() || start.iter().any(|p| !p.is_valid()) {
        return Err(Error::BadParts);
    }
    let net = params.cast::<f64>();
    let mut poses = start.to_vec();
    let (mut score, mut grad) = score_and_gradient(parts, &poses, k, &net)?;
    let mut scores = vec![score];
    let mut history = vec![poses.clone()];
    let mut converged = false;
    for _ in 0..opts.max_iters {
        if !score.is_finite() {
            return Err(Error::Diverged);
        }
        if norm3(&grad) <= opts.tol {
            converged = true;
            break;
        }
        let mut step = opts.step;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<PartPose> = poses.iter().zip(&grad).map(|(p, g)| p.stepped(*g, step)).collect();
            let (s, g) = score_and_gradient(parts, &cand, k, &net)?;
            if s.is_nan() {
                return Err(Error::Diverged);
            }
            if s > score {
                accepted = Some((cand, s, g));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, s, g)) = accepted else { break };
        poses = cand;
        score = s;
        grad = g;
        scores.push(s);
        history.push(poses.clone());
    }
    if !converged && norm3(&grad) <= opts.tol {
        converged = true;
    }
    Ok(CreationResult {
        cloud: assemble(parts, &poses)?,
        gradient_norm: norm3(&grad),
        poses,
        scores,
        history,
        converged,
    })
}

/// The created tool in the toolgen format: each source part moved by its
/// pose about the centroid of its cloud.
pub fn created_spec(id: &str, source: &[ToolPart], parts: &[PointCloud], poses: &[PartPose]) -> Result<ToolSpec> {
    if source.len() != parts.len() || parts.len() != poses.len() {
        return Err(Error::BadParts);
    }
    let moved_parts = source
        .iter()
        .zip(parts)
        .zip(poses)
        .map(|((part, cloud), pose)| {
            let at = moved([part.pose.x, part.pose.y], part_centroid(cloud), pose);
            ToolPart { pose: PlanarPose::new(at[0], at[1], part.pose.theta + pose.phi), ..part.clone() }
        })
        .collect();
    Ok(ToolSpec { id: id.into(), category: crate::toolgen::Category::NonHammer, seed: 0, parts: moved_parts })
}

/// Each part rendered on its own without noise.
pub fn part_clouds(parts: &[ToolPart], points: usize, seed: u64) -> Result<Vec<PointCloud>> {
    parts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let one = ToolSpec { id: String::new(), category: Category::NonHammer, seed, parts: vec![p.clone()] };
            render_cloud(&one, points, 0.0, rng::derive(seed, "part", i as u64))
        })
        .collect()
}

/// Separate parts plus the keypoints the assembled tool should realise.
#[derive(Debug, Clone)]
pub struct CreationInstance {
    pub source: Vec<ToolPart>,
    pub parts: Vec<PointCloud>,
    pub desired: ToolKeypoints,
}

/// A generated hammer whose head (second part) is moved away by `detach`.
/// The desired keypoints are the heuristic hammering keypoints of the intact
/// hammer.
pub fn detached_hammer(seed: u64, detach: PartPose, points_per_part: usize) -> Result<CreationInstance> {
    let spec = generate_tool(Category::Hammer, seed)?;
    let intact = render_cloud(&spec, 2 * points_per_part, 0.0, rng::derive(seed, "intact", 0))?;
    let desired = heuristic_keypoints(&intact, TaskKind::Hammering, rng::derive(seed, "desired", 0))?;
    let clouds = part_clouds(&spec.parts, points_per_part, seed)?;
    let mut poses = vec![PartPose::default(); spec.parts.len()];
    poses[1] = detach;
    let source = created_spec(&spec.id, &spec.parts, &clouds, &poses)?.parts;
    let parts = part_clouds(&source, points_per_part, seed)?;
    Ok(CreationInstance { source, parts, desired })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::chamfer_distance;
    use crate::rng;
    use rand::Rng;

    fn blob(n: usize, seed: u64, at: P2) -> PointCloud {
        let mut r = rng::rng(seed);
        PointCloud::new(
            (0..n)
                .map(|_| [at[0] + r.gen_range(-0.05..0.05), at[1] + r.gen_range(-0.01..0.01), r.gen_range(0.0..0.02)])
                .collect(),
        )
    }

    #[test]
    fn identity_poses_concatenate_verbatim() {
        let parts = [blob(10, 1, [0.0, 0.0]), blob(7, 2, [0.1, 0.05])];
        let c = assemble(&parts, &[PartPose::default(); 2]).unwrap();
        let expect: Vec<[f64; 3]> = parts.iter().flat_map(|p| p.points.clone()).collect();
        assert_eq!(c.points, expect);
    }

    #[test]
    fn translation_shifts_every_point() {
        let part = blob(20, 3, [0.02, 0.0]);
        let c = assemble(std::slice::from_ref(&part), &[PartPose::new(0.1, 0.0, 0.0)]).unwrap();
        for (a, b) in part.points.iter().zip(&c.points) {
            assert!((b[0] - a[0] - 0.1).abs() < 1e-15 && b[1] == a[1] && b[2] == a[2]);
        }
    }

    #[test]
    fn parts_move_rigidly() {
        let mut r = rng::rng(4);
        for trial in 0..50 {
            let parts = [blob(30, trial, [0.0, 0.0]), blob(25, trial + 100, [0.1, 0.0])];
            let poses: Vec<PartPose> = (0..2)
                .map(|_| PartPose::new(r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3), r.gen_range(-3.0..3.0)))
                .collect();
            let c = assemble(&parts, &poses).unwrap();
            let mut off = 0;
            for p in &parts {
                for i in 0..p.len() {
                    for j in 0..p.len() {
                        let d0 = v2::dist([p.points[i][0], p.points[i][1]], [p.points[j][0], p.points[j][1]]);
                        let (a, b) = (c.points[off + i], c.points[off + j]);
                        assert!((v2::dist([a[0], a[1]], [b[0], b[1]]) - d0).abs() <= 1e-9);
                    }
                }
                off += p.len();
            }
            // rotation pivot is the part centroid
            let moved_centroid = PointCloud::new(c.points[..30].to_vec()).planar_centroid();
            let expect = v2::add(parts[0].planar_centroid(), poses[0].t);
            assert!(v2::dist(moved_centroid, expect) < 1e-12);
        }
    }

    #[test]
    fn assembly_is_permutation_covariant() {
        let parts = [blob(30, 5, [0.0, 0.0]), blob(20, 6, [0.1, 0.0]), blob(10, 7, [0.0, 0.1])];
        let poses = [PartPose::new(0.01, 0.02, 0.3), PartPose::new(-0.05, 0.0, -1.0), PartPose::new(0.0, 0.1, 2.0)];
        let reference = blob(40, 8, [0.05, 0.05]);
        let a = assemble(&parts, &poses).unwrap();
        let order = [2, 0, 1];
        let b = assemble(
            &order.map(|i| parts[i].clone()),
            &order.map(|i| poses[i]),
        )
        .unwrap();
        let da = chamfer_distance(&a, &reference).unwrap();
        let db = chamfer_distance(&b, &reference).unwrap();
        assert!((da - db).abs() <= 1e-12);
    }

    #[test]
    fn mismatched_parts_are_rejected() {
        let parts = [blob(10, 1, [0.0, 0.0])];
        assert!(matches!(assemble(&parts, &[]), Err(Error::BadParts)));
        assert!(matches!(assemble(&[], &[]), Err(Error::BadParts)));
    }

    #[test]
    fn created_spec_matches_assembled_geometry() {
        use crate::toolgen::{render_cloud, Shape};
        let source = vec![
            ToolPart { shape: Shape::Box { length: 0.2, width: 0.02 }, height: 0.02, pose: PlanarPose::identity() },
            ToolPart {
                shape: Shape::Box { length: 0.08, width: 0.03 },
                height: 0.03,
                pose: PlanarPose::new(0.2, 0.1, 0.4),
            },
        ];
        let parts: Vec<PointCloud> = source
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let one = ToolSpec { id: String::new(), category: crate::toolgen::Category::NonHammer, seed: 0, parts: vec![p.clone()] };
                render_cloud(&one, 256, 0.0, i as u64).unwrap()
            })
            .collect();
        let poses = [PartPose::new(0.01, -0.02, 0.5), PartPose::new(-0.1, 0.0, -0.7)];
        let spec = created_spec("made", &source, &parts, &poses).unwrap();
        let cloud = assemble(&parts, &poses).unwrap();
        for p in &cloud.points {
            assert!(spec.parts.iter().any(|q| q.contains([p[0], p[1]]) || {
                // points on the boundary may round either way
                let l = q.pose.inverse_apply([p[0], p[1]]);
                q.shape.contains_local([l[0] * 0.999, l[1] * 0.999])
            }));
        }
    }
}
