//! Per-cloud canonical frame: centroid, principal-axis heading and a fixed
//! model scale. Keypoints are expressed in the same frame.

use crate::geometry::v2::{self, P2};
use crate::keypoints::ToolKeypoints;

/// Second-moment anisotropy below which the heading is left at zero.
const ISOTROPY_FLOOR: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudFrame {
    pub centroid: P2,
    /// World heading of the canonical x axis.
    pub theta: f64,
    pub scale: f64,
    /// Second-moment terms `A = Sxx - Syy`, `B = 2 Sxy` (per point).
    moments: [f64; 2],
    count: usize,
}

impl CloudFrame {
    /// Frame of `points`: major principal axis as x, oriented so the third
    /// moment along it is non-negative. With `canonical` unset only the
    /// centroid is removed.
    pub fn fit(points: &[[f64; 3]], scale: f64, canonical: bool) -> Self {
        let n = points.len().max(1);
        let c = v2::scale(points.iter().fold([0.0, 0.0], |s, p| v2::add(s, [p[0], p[1]])), 1.0 / n as f64);
        let (mut a, mut b) = (0.0, 0.0);
        for p in points {
            let d = [p[0] - c[0], p[1] - c[1]];
            a += d[0] * d[0] - d[1] * d[1];
            b += 2.0 * d[0] * d[1];
        }
        a /= n as f64;
        b /= n as f64;
        let mut theta = 0.0;
        if canonical && a * a + b * b > ISOTROPY_FLOOR {
            theta = 0.5 * b.atan2(a);
            let axis = v2::rotate([1.0, 0.0], theta);
            let m3: f64 = points.iter().map(|p| v2::dot([p[0] - c[0], p[1] - c[1]], axis).powi(3)).sum();
            if m3 < 0.0 {
                theta += std::f64::consts::PI;
            }
        } else {
            a = 0.0;
            b = 0.0;
        }
        Self { centroid: c, theta, scale, moments: [a, b], count: n }
    }

    pub fn to_local(&self, p: P2) -> P2 {
        v2::scale(v2::rotate(v2::sub(p, self.centroid), -self.theta), 1.0 / self.scale)
    }

    pub fn to_world(&self, q: P2) -> P2 {
        v2::add(self.centroid, v2::rotate(v2::scale(q, self.scale), self.theta))
    }

    pub fn point(&self, p: &[f64; 3]) -> [f64; 3] {
        let q = self.to_local([p[0], p[1]]);
        [q[0], q[1], p[2] / self.scale]
    }

    /// Normalized 6-vector: grasp and function positions, unit effect direction.
    pub fn keypoints(&self, k: &ToolKeypoints) -> [f64; 6] {
        let g = self.to_local(k.grasp);
        let f = self.to_local(k.function);
        let e = v2::rotate(v2::normalized(k.effect_dir()), -self.theta);
        [g[0], g[1], f[0], f[1], e[0], e[1]]
    }

    /// Inverse of [`CloudFrame::keypoints`]; the effect direction is re-normalized.
    pub fn world_keypoints(&self, v: &[f64; 6]) -> ToolKeypoints {
        let g = self.to_world([v[0], v[1]]);
        let f = self.to_world([v[2], v[3]]);
        let e = v2::rotate([v[4], v[5]], self.theta);
        ToolKeypoints::new(g, f, v2::add(f, e))
    }

    /// Chains gradients w.r.t. normalized points (`dq`, 3 per point) and
    /// normalized keypoints (`dk`) back to the world coordinates of the
    /// points the frame was fitted on (`points`, same order as `dq`).
    pub fn backprop(&self, points: &[[f64; 3]], dq: &[[f64; 3]], k: Option<(&[f64; 6], &[f64; 6])>) -> Vec<[f64; 3]> {
        let n = self.count as f64;
        let s = self.scale;
        let mut dtheta = 0.0;
        let mut dc_local = [0.0, 0.0];
        for (p, g) in points.iter().zip(dq) {
            let q = self.to_local([p[0], p[1]]);
            dtheta -= v2::dot([g[0], g[1]], v2::perp(q));
            dc_local = v2::add(dc_local, [g[0], g[1]]);
        }
        if let Some((kn, dk)) = k {
            for i in 0..3 {
                let q = [kn[2 * i], kn[2 * i + 1]];
                let g = [dk[2 * i], dk[2 * i + 1]];
                dtheta -= v2::dot(g, v2::perp(q));
                if i < 2 {
                    dc_local = v2::add(dc_local, g);
                }
            }
        }
        // dL/dc = -R(theta) sum(g) / s, shared equally by every point
        let dc = v2::scale(v2::rotate(dc_local, self.theta), -1.0 / (s * n));
        let [a, b] = self.moments;
        let den = a * a + b * b;
        points
            .iter()
            .zip(dq)
            .map(|(p, g)| {
                let direct = v2::scale(v2::rotate([g[0], g[1]], self.theta), 1.0 / s);
                let mut out = v2::add(direct, dc);
                if den > 0.0 {
                    let d = [p[0] - self.centroid[0], p[1] - self.centroid[1]];
                    let da = v2::scale([d[0], -d[1]], 2.0 / n);
                    let db = v2::scale([d[1], d[0]], 2.0 / n);
                    let dth = v2::scale(v2::sub(v2::scale(db, a), v2::scale(da, b)), 0.5 / den);
                    out = v2::add(out, v2::scale(dth, dtheta));
                }
                [out[0], out[1], g[2] / s]
            })
            .collect()
    }
}
