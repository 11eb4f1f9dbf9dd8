use super::PointCloud;
use crate::error::{Error, Result};

fn sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn mean_nearest(a: &PointCloud, b: &PointCloud) -> f64 {
    let mut total = 0.0;
    for p in &a.points {
        let mut best = f64::INFINITY;
        for q in &b.points {
            let d = sq(p, q);
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total / a.len() as f64
}

/// Symmetric Chamfer distance: mean squared nearest-neighbour distance from
/// `a` to `b` plus the same from `b` to `a`.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(mean_nearest(a, b) + mean_nearest(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_cloud(seed: u64, n: usize) -> PointCloud {
        let mut r = rng::rng(seed);
        PointCloud::new((0..n).map(|_| [r.gen(), r.gen(), r.gen()]).collect())
    }

    // Independent double loop written without the helper above.
    fn oracle(a: &PointCloud, b: &PointCloud) -> f64 {
        let dir = |x: &PointCloud, y: &PointCloud| {
            x.points
                .iter()
                .map(|p| {
                    y.points
                        .iter()
                        .map(|q| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>())
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / x.points.len() as f64
        };
        dir(a, b) + dir(b, a)
    }

    #[test]
    fn self_distance_is_zero() {
        let c = random_cloud(1, 40);
        assert_eq!(chamfer_distance(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn single_point_pair() {
        let a = PointCloud::new(vec![[0.0, 0.0, 0.0]]);
        let b = PointCloud::new(vec![[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn matches_brute_force_oracle() {
        for s in 0..10 {
            let a = random_cloud(100 + s, 50);
            let b = random_cloud(200 + s, 50);
            let d = chamfer_distance(&a, &b).unwrap();
            assert!((d - oracle(&a, &b)).abs() < 1e-9);
            assert!((d - chamfer_distance(&b, &a).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_is_rejected() {
        let a = random_cloud(3, 4);
        assert!(matches!(
            chamfer_distance(&a, &PointCloud::default()),
            Err(Error::EmptyCloud)
        ));
    }
}
