//! Synthetic datasets shared by the integration and acceptance tests.
#![allow(dead_code)]

use kptool::creator;
use kptool::geometry::{transform_cloud, PlanarPose, PointCloud};
use kptool::keypoints::ToolKeypoints;
use kptool::learner::{CloudFrame, HeadKind, Net, Normalization};
use kptool::rng;
use kptool::toolgen::{generate_tool, render_cloud, Category, Shape, ToolPart, ToolSpec};
use rand::Rng;

/// Random tool clouds at random planar poses.
pub fn random_clouds(n: usize, points: usize, seed: u64) -> Vec<PointCloud> {
    let mut r = rng::rng(seed);
    (0..n)
        .map(|i| {
            let cat = if i % 2 == 0 { Category::Hammer } else { Category::NonHammer };
            let spec = generate_tool(cat, rng::derive(seed, "tool", i as u64)).unwrap();
            let local = render_cloud(&spec, points, 0.001, rng::derive(seed, "render", i as u64)).unwrap();
            let pose = PlanarPose::new(r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3), r.gen_range(-3.14..3.14));
            transform_cloud(&local, &pose, [0.0, 0.0])
        })
        .collect()
}

/// Keypoints with grasp and function points on the cloud and a random
/// effect direction.
pub fn random_keypoints(cloud: &PointCloud, r: &mut rng::Rng) -> ToolKeypoints {
    loop {
        let g = cloud.points[r.gen_range(0..cloud.len())];
        let f = cloud.points[r.gen_range(0..cloud.len())];
        let a: f64 = r.gen_range(-3.14..3.14);
        let k = ToolKeypoints::new([g[0], g[1]], [f[0], f[1]], [f[0] + a.cos(), f[1] + a.sin()]);
        if kptool::keypoints::validate_keypoints(&k, cloud) {
            return k;
        }
    }
}

/// Label = function point on the positive side of the cloud's canonical x
/// axis (the right half-plane of the normalized frame).
pub fn separable(n: usize, seed: u64) -> Vec<(PointCloud, ToolKeypoints, bool)> {
    let clouds = random_clouds(n, 256, seed);
    let mut r = rng::rng(rng::derive(seed, "keypoints", 0));
    clouds
        .into_iter()
        .map(|c| {
            let k = random_keypoints(&c, &mut r);
            let frame = CloudFrame::fit(&c.points, 1.0, true);
            let label = frame.to_local(k.function)[0] > 0.0;
            (c, k, label)
        })
        .collect()
}

/// Labels drawn by a fair coin, independent of the inputs.
pub fn coin_flips(n: usize, seed: u64) -> Vec<(PointCloud, ToolKeypoints, bool)> {
    let clouds = random_clouds(n, 256, seed);
    let mut r = rng::rng(rng::derive(seed, "keypoints", 0));
    clouds
        .into_iter()
        .map(|c| {
            let k = random_keypoints(&c, &mut r);
            let label = r.gen_bool(0.5);
            (c, k, label)
        })
        .collect()
}

pub fn refs(v: &[(PointCloud, ToolKeypoints, bool)]) -> Vec<(&PointCloud, ToolKeypoints, bool)> {
    v.iter().map(|(c, k, l)| (c, *k, *l)).collect()
}

/// Random parameters with a non-zero final layer so every parameter
/// carries gradient.
pub fn randomized(kind: HeadKind, seed: u64, points: usize) -> Net<f64> {
    let mut net = Net::<f64>::init(kind, Normalization { scale: 0.12, input_points: points, canonical: true }, seed);
    let mut r = rng::rng(seed ^ 77);
    for l in net.layers_mut() {
        for v in l.b.iter_mut() {
            *v = r.gen_range(-0.3..0.3);
        }
        if l.w.iter().all(|w| *w == 0.0) {
            for v in l.w.iter_mut() {
                *v = r.gen_range(-0.3..0.3);
            }
        }
    }
    net
}


/// Tool parts at random poses with keypoints on the assembled cloud.
pub fn random_instance(seed: u64, points: usize) -> (Vec<PointCloud>, Vec<creator::PartPose>, ToolKeypoints) {
    let mut r = rng::rng(seed);
    let cat = if seed % 2 == 0 { Category::Hammer } else { Category::NonHammer };
    let spec = generate_tool(cat, seed).unwrap();
    let parts = creator::part_clouds(&spec.parts, points, seed).unwrap();
    let poses = parts
        .iter()
        .map(|_| creator::PartPose::new(r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1), r.gen_range(-3.0..3.0)))
        .collect::<Vec<_>>();
    let cloud = creator::assemble(&parts, &poses).unwrap();
    let k = random_keypoints(&cloud, &mut r);
    (parts, poses, k)
}

/// Relative errors of every pose-gradient component against central
/// differences with step `h` on `instances` random instances.
pub fn pose_fd_errors(instances: u64, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for seed in 0..instances {
        let net = randomized(HeadKind::Evaluation, 100 + seed, 64);
        let (parts, poses, k) = random_instance(seed, 64);
        let score = |p: &[creator::PartPose]| creator::score_and_gradient(&parts, p, &k, &net).unwrap().0;
        let (_, g) = creator::score_and_gradient(&parts, &poses, &k, &net).unwrap();
        for (i, gp) in g.iter().enumerate() {
            for c in 0..3 {
                let at = |d: f64| {
                    let mut p = poses.clone();
                    match c {
                        0 => p[i].t[0] += d,
                        1 => p[i].t[1] += d,
                        _ => p[i].phi += d,
                    }
                    score(&p)
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                out.push((gp[c] - fd).abs() / gp[c].abs().max(fd.abs()).max(1e-6));
            }
        }
    }
    out
}

/// A plain T-shaped hammer: 20 cm handle with a crosswise head at one end.
pub fn t_hammer() -> ToolSpec {
    ToolSpec {
        id: "golden".into(),
        category: Category::Hammer,
        seed: 0,
        parts: vec![
            ToolPart { shape: Shape::Box { length: 0.2, width: 0.02 }, height: 0.02, pose: PlanarPose::identity() },
            ToolPart {
                shape: Shape::Box { length: 0.08, width: 0.03 },
                height: 0.03,
                pose: PlanarPose::new(0.09, 0.0, std::f64::consts::FRAC_PI_2),
            },
        ],
    }
}

/// One central-difference probe of a parameter gradient.
pub struct Probe {
    pub layer: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    /// Relative disagreement with a floor for vanishing gradients.
    pub fn error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(1e-6)
    }
}

/// Central differences (step 1e-5) on `probes` random parameters of every
/// layer.
pub fn layer_fd_probes(
    net: &Net<f64>,
    grad: &Net<f64>,
    probes: usize,
    seed: u64,
    loss: &dyn Fn(&Net<f64>) -> f64,
) -> Vec<Probe> {
    let mut r = rng::rng(seed);
    let mut out = Vec::new();
    for (li, (layer, g)) in net.layers().zip(grad.layers()).enumerate() {
        let nw = layer.w.len();
        for _ in 0..probes {
            let index = r.gen_range(0..nw + layer.b.len());
            let h = 1e-5;
            let at = |delta: f64| {
                let mut p = net.clone();
                let l = p.layers_mut().nth(li).unwrap();
                if index < nw {
                    l.w[index] += delta;
                } else {
                    l.b[index - nw] += delta;
                }
                loss(&p)
            };
            let numeric = (at(h) - at(-h)) / (2.0 * h);
            let analytic = if index < nw { g.w[index] } else { g.b[index - nw] };
            out.push(Probe { layer: li, index, analytic, numeric });
        }
    }
    out
}
