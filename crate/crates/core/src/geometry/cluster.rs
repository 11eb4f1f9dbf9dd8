use std::collections::{HashMap, VecDeque};

use super::v2::{self, P2};

/// Connected components of the graph linking points closer than `radius`.
///
/// Components smaller than `min_points` are dropped. Each index set is
/// ascending; clusters are ordered by descending size, then by their
/// smallest index.
pub fn euclidean_cluster(points: &[P2], radius: f64, min_points: usize) -> Vec<Vec<usize>> {
    if points.is_empty() || !(radius > 0.0) {
        return Vec::new();
    }
    let cell = |p: P2| ((p[0] / radius).floor() as i64, (p[1] / radius).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(*p)).or_default().push(i);
    }
    let r2 = radius * radius;
    let mut label = vec![usize::MAX; points.len()];
    let mut clusters = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..points.len() {
        if label[start] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        label[start] = id;
        queue.push_back(start);
        let mut members = vec![start];
        while let Some(i) = queue.pop_front() {
            let (cx, cy) = cell(points[i]);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else { continue };
                    for &j in bucket {
                        if label[j] == usize::MAX && v2::dist2(points[i], points[j]) <= r2 {
                            label[j] = id;
                            members.push(j);
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    let mut kept: Vec<Vec<usize>> = clusters
        .into_iter()
        .filter(|c| c.len() >= min_points.max(1))
        .collect();
    kept.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    // Plain O(n^2) BFS used as the oracle.
    fn bfs_components(points: &[P2], radius: f64) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut comp = vec![];
            while let Some(i) = stack.pop() {
                comp.push(i);
                for j in 0..n {
                    if !seen[j] && v2::dist(points[i], points[j]) <= radius {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    #[test]
    fn two_separated_blobs() {
        let r = 0.01;
        let mut pts = Vec::new();
        for i in 0..30 {
            pts.push([0.002 * (i % 6) as f64, 0.002 * (i / 6) as f64]);
        }
        for i in 0..20 {
            pts.push([0.1 + 0.002 * (i % 5) as f64, 0.002 * (i / 5) as f64]);
        }
        let got = euclidean_cluster(&pts, r, 1);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0], (0..30).collect::<Vec<_>>());
        assert_eq!(got[1], (30..50).collect::<Vec<_>>());
        let mut oracle = bfs_components(&pts, r);
        oracle.sort_by(|a, b| b.len().cmp(&a.len()));
        assert_eq!(got, oracle);
    }

    #[test]
    fn single_point_thresholds() {
        assert_eq!(euclidean_cluster(&[[0.0, 0.0]], 0.1, 1), vec![vec![0]]);
        assert!(euclidean_cluster(&[[0.0, 0.0]], 0.1, 2).is_empty());
        assert!(euclidean_cluster(&[], 0.1, 1).is_empty());
    }
}
