mod common;

use kptool::creator::*;
use kptool::geometry::PointCloud;
use kptool::keypoints::ToolKeypoints;
use kptool::learner::{score_gradient, HeadKind, NetParams};
use kptool::toolgen::{generate_tool, Category};
use kptool::Error;

#[test]
fn translation_gradient_is_the_sum_of_point_gradients() {
    let net = common::randomized(HeadKind::Evaluation, 3, 64);
    for seed in 0..10 {
        let (parts, poses, k) = common::random_instance(seed, 64);
        let (_, g) = score_and_gradient(&parts, &poses, &k, &net).unwrap();
        let (_, dp) = score_gradient(&assemble(&parts, &poses).unwrap(), &k, &net).unwrap();
        let mut off = 0;
        for (part, gp) in parts.iter().zip(&g) {
            let sum = dp[off..off + part.len()].iter().fold([0.0, 0.0], |s, d| [s[0] + d[0], s[1] + d[1]]);
            assert!((sum[0] - gp[0]).abs() <= 1e-12 && (sum[1] - gp[1]).abs() <= 1e-12);
            off += part.len();
        }
    }
}

#[test]
fn pose_gradients_match_finite_differences() {
    let errors = common::pose_fd_errors(40, 1e-6);
    assert!(errors.len() >= 100, "{} probes", errors.len());
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    assert!(worst <= 1e-3, "worst relative error {worst:e}");
}

#[test]
fn coarse_differences_disagree_only_across_pooling_switches() {
    // a 1e-4 step sometimes crosses a change of max-pool winner
    let errors = common::pose_fd_errors(40, 1e-4);
    let within = errors.iter().filter(|e| **e <= 1e-3).count();
    assert!(within as f64 >= 0.85 * errors.len() as f64, "{within} of {}", errors.len());
}

fn disk(rings: usize, per_ring: usize, radius: f64) -> PointCloud {
    let mut pts = vec![[0.0, 0.0, 0.02]];
    for i in 1..=rings {
        let r = radius * i as f64 / rings as f64;
        for j in 0..per_ring {
            let a = std::f64::consts::TAU * j as f64 / per_ring as f64;
            pts.push([r * a.cos(), r * a.sin(), 0.02]);
        }
    }
    PointCloud::new(pts)
}

#[test]
fn disk_rotation_gradient_is_small_relative_to_translation() {
    let net = common::randomized(HeadKind::Evaluation, 11, 128);
    let part = [disk(4, 32, 0.04)];
    let k = ToolKeypoints::new([0.0, 0.02], [0.02, -0.01], [0.02, -0.05]);
    let (_, g) = score_and_gradient(&part, &[PartPose::default()], &k, &net).unwrap();
    let t = g[0][0].hypot(g[0][1]);
    // a sampled disk is only discretely symmetric, so the rotation gradient
    // is small but not zero
    assert!(g[0][2].abs() < 0.1 * t, "phi {:e} vs translation {t:e}", g[0][2]);
}

#[test]
fn creation_gradient_uses_the_evaluation_head() {
    let (parts, poses, k) = common::random_instance(0, 64);
    let net: NetParams = common::randomized(HeadKind::Evaluation, 1, 64).cast();
    let g = creation_gradient(&parts, &poses, &k, &net).unwrap();
    assert_eq!(g.len(), parts.len());
    let wrong: NetParams = common::randomized(HeadKind::Proposal, 1, 64).cast();
    assert!(matches!(creation_gradient(&parts, &poses, &k, &wrong), Err(Error::BadParams)));
    assert!(matches!(creation_gradient(&parts, &poses[..1], &k, &net), Err(Error::BadParts)));
}

#[test]
fn scores_never_decrease_along_the_ascent() {
    let opts = CreateOptions { max_iters: 15, ..CreateOptions::default() };
    for start in 0..100u64 {
        let net: NetParams = common::randomized(HeadKind::Evaluation, start % 5, 64).cast();
        let (parts, poses, k) = common::random_instance(start, 64);
        let res = create_tool(&parts, &poses, &k, &net, &opts).unwrap();
        assert!(res.scores.windows(2).all(|w| w[1] > w[0]), "start {start}: {:?}", res.scores);
        assert_eq!(res.history.len(), res.scores.len());
        assert!(res.poses.iter().all(PartPose::is_valid));
        if res.converged {
            assert!(res.gradient_norm <= opts.tol);
        }
    }
}

#[test]
fn converged_poses_are_a_fixed_point() {
    let opts = CreateOptions { max_iters: 5000, step: 0.05, tol: 1e-3 };
    let mut fixed = 0;
    for seed in 0..12u64 {
        let net: NetParams = common::randomized(HeadKind::Evaluation, 21 + seed, 64).cast();
        let (parts, poses, k) = common::random_instance(seed, 64);
        let first = create_tool(&parts, &poses, &k, &net, &opts).unwrap();
        if !first.converged {
            continue;
        }
        let again = create_tool(&parts, &first.poses, &k, &net, &opts).unwrap();
        assert!(again.converged);
        assert_eq!(again.accepted_steps(), 0);
        assert_eq!(again.poses, first.poses);
        fixed += 1;
        break;
    }
    assert!(fixed > 0);
}

#[test]
fn creation_is_deterministic() {
    let net: NetParams = common::randomized(HeadKind::Evaluation, 2, 64).cast();
    let (parts, poses, k) = common::random_instance(6, 64);
    let opts = CreateOptions { max_iters: 20, ..CreateOptions::default() };
    let a = create_tool(&parts, &poses, &k, &net, &opts).unwrap();
    let b = create_tool(&parts, &poses, &k, &net, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_starts_are_rejected() {
    let net: NetParams = common::randomized(HeadKind::Evaluation, 2, 64).cast();
    let (parts, _, k) = common::random_instance(6, 64);
    let opts = CreateOptions::default();
    assert!(matches!(create_tool(&[], &[], &k, &net, &opts), Err(Error::BadParts)));
    let far = vec![PartPose::new(0.6, 0.0, 0.0); parts.len()];
    assert!(matches!(create_tool(&parts, &far, &k, &net, &opts), Err(Error::BadParts)));
}

#[test]
fn detached_hammer_keeps_the_handle_in_place() {
    let inst = detached_hammer(0, PartPose::new(0.0, 0.12, 0.5), 256).unwrap();
    let intact = generate_tool(Category::Hammer, 0).unwrap();
    assert_eq!(inst.parts.len(), 2);
    assert_eq!(inst.source[0], intact.parts[0]);
    assert!((inst.source[1].pose.theta - intact.parts[1].pose.theta - 0.5).abs() < 1e-12);
}
