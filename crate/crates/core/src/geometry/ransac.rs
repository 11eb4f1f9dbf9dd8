use rand::Rng as _;

use super::v2::{self, P2};
use super::Segment2;
use crate::error::{Error, Result};
use crate::rng;

/// Fixed-budget RANSAC line fit over planar points.
///
/// Each iteration samples two distinct indices and counts the points within
/// `inlier_tol` of the line through them. The first hypothesis with the
/// maximal count wins; the returned segment spans the extreme inlier
/// projections. Inlier indices are ascending.
pub fn ransac_line(
    points: &[P2],
    iterations: usize,
    inlier_tol: f64,
    seed: u64,
) -> Result<(Segment2, Vec<usize>)> {
    let n = points.len();
    if n < 2 || iterations == 0 || !(inlier_tol > 0.0) {
        return Err(Error::DegenerateInput);
    }
    let mut r = rng::rng(seed);
    let mut best: Option<(usize, usize, usize)> = None;
    for _ in 0..iterations {
        let i = r.gen_range(0..n);
        let mut j = r.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let d = v2::sub(points[j], points[i]);
        let len = v2::norm(d);
        if len == 0.0 {
            continue;
        }
        let dir = v2::scale(d, 1.0 / len);
        let count = points
            .iter()
            .filter(|p| v2::cross(dir, v2::sub(**p, points[i])).abs() <= inlier_tol)
            .count();
        if best.map_or(true, |(_, _, c)| count > c) {
            best = Some((i, j, count));
        }
    }
    let (i, j, _) = best.ok_or(Error::DegenerateInput)?;
    let origin = points[i];
    let dir = v2::normalized(v2::sub(points[j], origin));
    let inliers: Vec<usize> = (0..n)
        .filter(|&k| v2::cross(dir, v2::sub(points[k], origin)).abs() <= inlier_tol)
        .collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &k in &inliers {
        let t = v2::dot(dir, v2::sub(points[k], origin));
        lo = lo.min(t);
        hi = hi.max(t);
    }
    let seg = Segment2::new(
        v2::add(origin, v2::scale(dir, lo)),
        v2::add(origin, v2::scale(dir, hi)),
    )?;
    Ok((seg, inliers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn collinear_with_outliers() -> Vec<P2> {
        let mut pts: Vec<P2> = (0..100).map(|i| [0.01 * i as f64, 0.5 * 0.01 * i as f64]).collect();
        let mut r = rng::rng(5);
        for _ in 0..10 {
            pts.push([r.gen_range(0.0..1.0), r.gen_range(1.0..2.0)]);
        }
        pts
    }

    #[test]
    fn recovers_collinear_inliers() {
        let pts = collinear_with_outliers();
        let (seg, inl) = ransac_line(&pts, 200, 1e-3, 9).unwrap();
        // exhaustive check: exactly the first 100 lie on the generating line
        let expect: Vec<usize> = (0..100).collect();
        assert_eq!(inl, expect);
        assert!((seg.length() - (0.99f64.powi(2) * 1.25).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn two_points_give_their_segment() {
        let pts = [[0.0, 0.0], [1.0, 1.0]];
        let (seg, inl) = ransac_line(&pts, 3, 1e-6, 0).unwrap();
        assert_eq!(inl, vec![0, 1]);
        assert!((seg.length() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_for_seed() {
        let pts = collinear_with_outliers();
        let a = ransac_line(&pts, 50, 1e-2, 4).unwrap();
        let b = ransac_line(&pts, 50, 1e-2, 4).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(ransac_line(&[[0.0, 0.0]], 10, 0.1, 0), Err(Error::DegenerateInput)));
    }
}
