//! Point clouds and the planar geometry shared by every other module.

mod chamfer;
mod cluster;
pub mod io;
mod ransac;
pub mod v2;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use chamfer::chamfer_distance;
pub use cluster::euclidean_cluster;
pub use ransac::ransac_line;
pub use v2::P2;

/// Sampled surface points of a tool in meters; `z` is height above the table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Planar projection of the cloud.
    pub fn planar(&self) -> Vec<P2> {
        self.points.iter().map(|p| [p[0], p[1]]).collect()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.points.len().max(1) as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            c[0] += p[0];
            c[1] += p[1];
            c[2] += p[2];
        }
        [c[0] / n, c[1] / n, c[2] / n]
    }

    pub fn planar_centroid(&self) -> P2 {
        let c = self.centroid();
        [c[0], c[1]]
    }

    /// Rounds every coordinate to the nearest 32-bit float so the cloud
    /// survives a trip through the binary format unchanged.
    pub fn quantized(mut self) -> Self {
        for p in &mut self.points {
            for c in p.iter_mut() {
                *c = *c as f32 as f64;
            }
        }
        self
    }

    /// All coordinates finite and no point below the table.
    pub fn is_valid(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.iter().all(|c| c.is_finite()) && p[2] >= 0.0)
    }

    /// Index of the point nearest to `q` in the plane.
    pub fn nearest_planar(&self, q: P2) -> Option<usize> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = v2::dist2([p[0], p[1]], q);
            if d < best_d {
                best_d = d;
                best = Some(i);
            }
        }
        best
    }

    /// Planar distance from `q` to the nearest cloud point.
    pub fn planar_distance(&self, q: P2) -> f64 {
        self.nearest_planar(q)
            .map(|i| v2::dist([self.points[i][0], self.points[i][1]], q))
            .unwrap_or(f64::INFINITY)
    }

    /// Replaces `q` by the planar coordinates of its nearest cloud point.
    pub fn snap(&self, q: P2) -> P2 {
        match self.nearest_planar(q) {
            Some(i) => [self.points[i][0], self.points[i][1]],
            None => q,
        }
    }

    /// At most `n` points taken with a uniform index stride; order preserved.
    pub fn strided(&self, n: usize) -> PointCloud {
        let len = self.points.len();
        if len <= n {
            return self.clone();
        }
        PointCloud::new((0..n).map(|k| self.points[k * len / n]).collect())
    }

    pub fn concat(clouds: &[PointCloud]) -> PointCloud {
        PointCloud::new(clouds.iter().flat_map(|c| c.points.iter().copied()).collect())
    }
}

/// SE(2) configuration; `theta` is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: normalize_angle(theta) }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Maps a point expressed in this pose's frame to the parent frame.
    pub fn apply(&self, p: P2) -> P2 {
        v2::add(v2::rotate(p, self.theta), [self.x, self.y])
    }

    /// Inverse of [`PlanarPose::apply`].
    pub fn inverse_apply(&self, p: P2) -> P2 {
        v2::rotate(v2::sub(p, [self.x, self.y]), -self.theta)
    }

    pub fn compose(&self, inner: &PlanarPose) -> PlanarPose {
        let t = self.apply([inner.x, inner.y]);
        PlanarPose::new(t[0], t[1], self.theta + inner.theta)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if !a.is_finite() {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Non-degenerate planar segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment2 {
    pub a: P2,
    pub b: P2,
}

impl Segment2 {
    pub fn new(a: P2, b: P2) -> Result<Self> {
        if v2::dist(a, b) > 0.0 {
            Ok(Self { a, b })
        } else {
            Err(Error::DegenerateInput)
        }
    }

    pub fn length(&self) -> f64 {
        v2::dist(self.a, self.b)
    }

    pub fn direction(&self) -> P2 {
        v2::normalized(v2::sub(self.b, self.a))
    }

    /// Point at fraction `t` from `a` towards `b`.
    pub fn lerp(&self, t: f64) -> P2 {
        v2::add(self.a, v2::scale(v2::sub(self.b, self.a), t))
    }

    /// Signed perpendicular offset of `p` (positive on the left of a->b).
    pub fn signed_offset(&self, p: P2) -> f64 {
        v2::cross(self.direction(), v2::sub(p, self.a))
    }
}

/// Draws `m` points uniformly with replacement from `cloud`.
pub fn sample_points(cloud: &PointCloud, m: usize, seed: u64) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if m == 0 {
        return Err(Error::InvalidInput("m must be positive".into()));
    }
    let mut r = rng::rng(seed);
    let n = cloud.len();
    Ok(PointCloud::new(
        (0..m).map(|_| cloud.points[r.gen_range(0..n)]).collect(),
    ))
}

/// Rotates every point about `pivot` by `delta.theta`, then translates by
/// `(delta.x, delta.y)`. Heights are untouched.
pub fn transform_cloud(cloud: &PointCloud, delta: &PlanarPose, pivot: P2) -> PointCloud {
    let (s, c) = delta.theta.sin_cos();
    PointCloud::new(
        cloud
            .points
            .iter()
            .map(|p| {
                let dx = p[0] - pivot[0];
                let dy = p[1] - pivot[1];
                [
                    pivot[0] + c * dx - s * dy + delta.x,
                    pivot[1] + s * dx + c * dy + delta.y,
                    p[2],
                ]
            })
            .collect(),
    )
}
