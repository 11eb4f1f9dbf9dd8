//! Keypoints to grasp and final tool pose.
//!
//! The final pose z = [x_g, y_g, x_f, y_f] minimizes
//! `|x_f - x_t|^2 + |x_f - x_g|^2 - v.z` over a box, written as the
//! quadratic form `z'Qz + b'z`. The linear term `v.z` equals the projection
//! of the tool's force direction onto the desired one, with the tool
//! direction expressed through the rigid angle between `x_g - x_f` and `e`.

mod action;
mod qp;

use serde::{Deserialize, Serialize};

use crate::geometry::v2;
use crate::keypoints::ToolKeypoints;
use crate::simulator::EnvKeypoints;

pub use action::{
    default_drive, keypoint_heading, placed_function_point, recover_action, select_grasp, Anchor,
};
pub use qp::{
    build_qp, build_qp_with, dump_qp, parse_qp, solve_qp, QPProblem, QPSolution, FUNCTION_BOX_HALF,
    MAX_ACTIVE_SET_ITERATIONS, Q_MATRIX,
};

/// Desired force components and the tool's internal angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSpec {
    pub alpha: f64,
    pub beta: f64,
    /// Signed counter-clockwise angle from `x_g - x_f` to `e`.
    pub gamma: f64,
}

impl ForceSpec {
    pub fn from_keypoints(k: &ToolKeypoints, env: &EnvKeypoints) -> Self {
        let f = env.force();
        Self {
            alpha: f[0],
            beta: f[1],
            gamma: v2::signed_angle(v2::sub(k.grasp, k.function), k.effect_dir()),
        }
    }
}

/// Which linear-term coefficients to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VForm {
    /// Derived from the rotation identity; satisfies `v.z = e_hat . R(gamma)(x_g - x_f)`.
    #[default]
    Rotation,
    /// Coefficients as originally printed (beta in place of alpha in the
    /// second and fourth entries). Kept for comparison only.
    Printed,
}

pub fn compute_v(spec: &ForceSpec) -> [f64; 4] {
    let (s, c) = spec.gamma.sin_cos();
    let (a, b) = (spec.alpha, spec.beta);
    [a * c + b * s, -a * s + b * c, -a * c - b * s, a * s - b * c]
}

pub fn compute_v_printed(spec: &ForceSpec) -> [f64; 4] {
    let (s, c) = spec.gamma.sin_cos();
    let (a, b) = (spec.alpha, spec.beta);
    [a * c + b * s, -b * s + b * c, -a * c - b * s, b * s - b * c]
}

pub fn compute_v_form(spec: &ForceSpec, form: VForm) -> [f64; 4] {
    match form {
        VForm::Rotation => compute_v(spec),
        VForm::Printed => compute_v_printed(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    /// e_hat . R(gamma)(x_g - x_f) computed with an explicit rotation matrix.
    fn rotation_oracle(spec: &ForceSpec, z: [f64; 4]) -> f64 {
        let d = [z[0] - z[2], z[1] - z[3]];
        let (s, c) = spec.gamma.sin_cos();
        let m = [[c, -s], [s, c]];
        let rd = [m[0][0] * d[0] + m[0][1] * d[1], m[1][0] * d[0] + m[1][1] * d[1]];
        spec.alpha * rd[0] + spec.beta * rd[1]
    }

    fn dot4(a: [f64; 4], b: [f64; 4]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn v_for_identity_rotation() {
        let v = compute_v(&ForceSpec { alpha: 1.0, beta: 0.0, gamma: 0.0 });
        assert_eq!(v, [1.0, 0.0, -1.0, 0.0]);
        let v = compute_v(&ForceSpec { alpha: 0.0, beta: 1.0, gamma: 0.0 });
        assert_eq!(v, [0.0, 1.0, 0.0, -1.0]);
    }

    #[test]
    fn v_identity_holds_for_random_instances() {
        let mut r = rng::rng(1);
        for _ in 0..1000 {
            let spec = ForceSpec {
                alpha: r.gen_range(-1.0..1.0),
                beta: r.gen_range(-1.0..1.0),
                gamma: r.gen_range(-3.14..3.14),
            };
            let z = [0; 4].map(|_| r.gen_range(-1.0..1.0));
            assert!((dot4(compute_v(&spec), z) - rotation_oracle(&spec, z)).abs() <= 1e-9);
        }
    }

    #[test]
    fn printed_form_breaks_identity() {
        let spec = ForceSpec { alpha: 1.0, beta: 0.3, gamma: 0.8 };
        let z = [0.4, -0.2, 0.1, 0.5];
        assert!((dot4(compute_v_printed(&spec), z) - rotation_oracle(&spec, z)).abs() > 1e-3);
    }

    #[test]
    fn gamma_is_rigid_invariant() {
        let k = ToolKeypoints::new([0.0, 0.0], [0.1, 0.0], [0.1, 1.0]);
        let env = EnvKeypoints::new([0.0, 0.0], [0.0, 0.1]).unwrap();
        let g = ForceSpec::from_keypoints(&k, &env).gamma;
        let rot = |p| v2::add(v2::rotate(p, 1.1), [0.3, -0.4]);
        let k2 = ToolKeypoints::new(rot(k.grasp), rot(k.function), rot(k.effect));
        let g2 = ForceSpec::from_keypoints(&k2, &env).gamma;
        assert!((g - g2).abs() < 1e-12);
        assert!((g + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
