use super::QPSolution;
use crate::error::{Error, Result};
use crate::geometry::v2::{self, P2};
use crate::geometry::{normalize_angle, PlanarPose};
use crate::keypoints::ToolKeypoints;
use crate::simulator::{GraspPose, ManipAction, TaskKind};

/// Which optimized point the tool is pinned to; the other only sets heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Anchor {
    #[default]
    Function,
    Grasp,
}

/// World heading of the grasp-to-function segment in the optimized pose.
pub fn keypoint_heading(sol: &QPSolution) -> f64 {
    let z = sol.z;
    v2::angle([z[2] - z[0], z[3] - z[1]])
}

pub fn default_drive(kind: TaskKind) -> f64 {
    kind.required_displacement() + 0.02
}

/// Converts the optimized keypoint pose into a rigid tool action.
///
/// The tool is turned so its grasp-to-function segment matches the optimized
/// one. With [`Anchor::Function`] the function point lands exactly on the
/// optimized `x_f`; with [`Anchor::Grasp`] the grasp point lands on `x_g`.
pub fn recover_action(
    sol: &QPSolution,
    k: &ToolKeypoints,
    observed: &PlanarPose,
    anchor: Anchor,
    drive: f64,
) -> Result<ManipAction> {
    let z = sol.z;
    let zg = [z[0], z[1]];
    let zf = [z[2], z[3]];
    let seg = v2::sub(k.function, k.grasp);
    if v2::dist(zf, zg) < 1e-6 || v2::norm(seg) < 1e-9 {
        return Err(Error::DegenerateOrientation);
    }
    let delta = v2::angle(v2::sub(zf, zg)) - v2::angle(seg);
    let grasp_target = match anchor {
        Anchor::Function => v2::add(zf, v2::rotate(v2::scale(seg, -1.0), delta)),
        Anchor::Grasp => zg,
    };
    ManipAction::new(grasp_target, observed.theta + delta, drive)
}

/// Where the function keypoint ends up under `action`.
pub fn placed_function_point(k: &ToolKeypoints, observed: &PlanarPose, action: &ManipAction) -> P2 {
    let delta = normalize_angle(action.theta - observed.theta);
    v2::add(action.grasp_target, v2::rotate(v2::sub(k.function, k.grasp), delta))
}

/// Candidate closest to `point`; ties go to higher quality, then list order.
pub fn select_grasp(candidates: &[GraspPose], point: P2) -> Result<GraspPose> {
    let mut best: Option<(&GraspPose, f64)> = None;
    for c in candidates {
        let d = v2::dist(c.position, point);
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && c.quality > b.quality),
        };
        if better {
            best = Some((c, d));
        }
    }
    best.map(|(c, _)| *c).ok_or(Error::NoGrasp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{build_qp, solve_qp};
    use crate::rng;
    use crate::simulator::{EnvKeypoints, Workspace};
    use rand::Rng;

    fn sol(z: [f64; 4]) -> QPSolution {
        QPSolution { z, objective: 0.0, active: vec![], multipliers: vec![], iterations: 1 }
    }

    #[test]
    fn effect_aligns_with_force_at_free_optimum() {
        let ws = Workspace { min: [-5.0, -5.0], max: [5.0, 5.0] };
        let mut r = rng::rng(21);
        for _ in 0..200 {
            let mut p2 = || [r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1)];
            let k = ToolKeypoints::new(p2(), p2(), p2());
            if v2::dist(k.grasp, k.function) < 0.01 || v2::norm(k.effect) < 0.5 {
                continue;
            }
            let env = EnvKeypoints::new([0.0, 0.0], p2()).unwrap();
            let s = solve_qp(&build_qp(&k, &env, &ws).unwrap()).unwrap();
            let observed = PlanarPose::new(0.3, -0.2, 0.7);
            let a = recover_action(&s, &k, &observed, Anchor::Function, 0.05).unwrap();
            let delta = a.theta - observed.theta;
            let e = v2::rotate(k.effect_dir(), delta);
            assert!(v2::dist(e, env.direction()) < 1e-9);
            let f = placed_function_point(&k, &observed, &a);
            assert!(v2::dist(f, env.target) < 1e-9);
        }
    }

    #[test]
    fn grasp_anchor_pins_grasp_point() {
        let k = ToolKeypoints::new([0.0, 0.0], [0.1, 0.0], [0.0, 1.0]);
        let a = recover_action(&sol([1.0, 1.0, 1.0, 2.0]), &k, &PlanarPose::identity(), Anchor::Grasp, 0.0).unwrap();
        assert_eq!(a.grasp_target, [1.0, 1.0]);
        assert!((a.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn coincident_points_rejected() {
        let k = ToolKeypoints::new([0.0, 0.0], [0.1, 0.0], [0.0, 1.0]);
        let e = recover_action(&sol([0.5, 0.5, 0.5, 0.5]), &k, &PlanarPose::identity(), Anchor::Function, 0.0);
        assert!(matches!(e, Err(Error::DegenerateOrientation)));
    }

    #[test]
    fn grasp_selection_tie_breaks() {
        let g = |x: f64, q: f64| GraspPose { position: [x, 0.0], theta: 0.0, width: 0.02, quality: q };
        assert!(matches!(select_grasp(&[], [0.0, 0.0]), Err(Error::NoGrasp)));
        let c = [g(1.0, 0.1), g(-1.0, 0.5), g(0.2, 0.1), g(-0.2, 0.3), g(0.2, 0.9)];
        let s = select_grasp(&c, [0.0, 0.0]).unwrap();
        assert_eq!(s, c[4]);
    }
}
