use std::fmt::Write as _;

use super::{compute_v_form, ForceSpec, VForm};
use crate::error::{Error, Result};
use crate::keypoints::ToolKeypoints;
use crate::simulator::{EnvKeypoints, Workspace};

/// Quadratic coefficients of `|x_f - x_t|^2 + |x_f - x_g|^2` in z.
pub const Q_MATRIX: [[f64; 4]; 4] = [
    [1.0, 0.0, -1.0, 0.0],
    [0.0, 1.0, 0.0, -1.0],
    [-1.0, 0.0, 2.0, 0.0],
    [0.0, -1.0, 0.0, 2.0],
];
/// The function point may move at most this far from the target per axis.
pub const FUNCTION_BOX_HALF: f64 = 0.1;
pub const MAX_ACTIVE_SET_ITERATIONS: usize = 100;

/// minimize z'Qz + b'z subject to Hz >= eps.
#[derive(Debug, Clone, PartialEq)]
pub struct QPProblem {
    pub q: [[f64; 4]; 4],
    pub b: [f64; 4],
    pub h: Vec<[f64; 4]>,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QPSolution {
    pub z: [f64; 4],
    pub objective: f64,
    /// Indices of constraint rows held with equality at the optimum.
    pub active: Vec<usize>,
    /// Lagrange multipliers, one per entry of `active`.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

impl QPProblem {
    pub fn objective(&self, z: &[f64; 4]) -> f64 {
        let mut f = 0.0;
        for i in 0..4 {
            f += self.b[i] * z[i];
            for j in 0..4 {
                f += z[i] * self.q[i][j] * z[j];
            }
        }
        f
    }

    /// 2Qz + b.
    pub fn gradient(&self, z: &[f64; 4]) -> [f64; 4] {
        let mut g = self.b;
        for i in 0..4 {
            for j in 0..4 {
                g[i] += 2.0 * self.q[i][j] * z[j];
            }
        }
        g
    }

    pub fn is_feasible(&self, z: &[f64; 4], tol: f64) -> bool {
        self.h
            .iter()
            .zip(&self.eps)
            .all(|(row, e)| dot(row, z) >= e - tol)
    }

    /// Per-variable bounds when every row is a signed unit vector.
    pub fn box_bounds(&self) -> Option<([f64; 4], [f64; 4])> {
        let mut lo = [f64::NEG_INFINITY; 4];
        let mut hi = [f64::INFINITY; 4];
        for (row, e) in self.h.iter().zip(&self.eps) {
            let nz: Vec<usize> = (0..4).filter(|&i| row[i] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let i = nz[0];
            let s = row[i];
            if s > 0.0 {
                lo[i] = lo[i].max(e / s);
            } else {
                hi[i] = hi[i].min(e / s);
            }
        }
        Some((lo, hi))
    }

    /// Stationarity residual `|2Qz + b - H_A' lambda|_inf` of a solution.
    pub fn kkt_residual(&self, sol: &QPSolution) -> f64 {
        let mut g = self.gradient(&sol.z);
        for (&i, &l) in sol.active.iter().zip(&sol.multipliers) {
            for k in 0..4 {
                g[k] -= l * self.h[i][k];
            }
        }
        g.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Builds the program from tool and environment keypoints with the
/// rotation-derived linear term.
pub fn build_qp(k: &ToolKeypoints, env: &EnvKeypoints, workspace: &Workspace) -> Result<QPProblem> {
    build_qp_with(k, env, workspace, VForm::Rotation)
}

pub fn build_qp_with(
    k: &ToolKeypoints,
    env: &EnvKeypoints,
    workspace: &Workspace,
    form: VForm,
) -> Result<QPProblem> {
    if !(workspace.min[0] < workspace.max[0] && workspace.min[1] < workspace.max[1]) {
        return Err(Error::InfeasibleConstraints);
    }
    let spec = ForceSpec::from_keypoints(k, env);
    let v = compute_v_form(&spec, form);
    let t = env.target;
    let b = [-v[0], -v[1], -v[2] - 2.0 * t[0], -v[3] - 2.0 * t[1]];
    let lo = [workspace.min[0], workspace.min[1], t[0] - FUNCTION_BOX_HALF, t[1] - FUNCTION_BOX_HALF];
    let hi = [workspace.max[0], workspace.max[1], t[0] + FUNCTION_BOX_HALF, t[1] + FUNCTION_BOX_HALF];
    let mut h = Vec::with_capacity(8);
    let mut eps = Vec::with_capacity(8);
    for i in 0..4 {
        let mut row = [0.0; 4];
        row[i] = 1.0;
        h.push(row);
        eps.push(lo[i]);
        row[i] = -1.0;
        h.push(row);
        eps.push(-hi[i]);
    }
    Ok(QPProblem { q: Q_MATRIX, b, h, eps })
}

/// Dense Gaussian elimination with partial pivoting; `None` if singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / a[r][r];
    }
    Some(x)
}

/// Step `p` and multipliers for the equality-constrained subproblem on the
/// working set: min 1/2 p'Gp + g'p s.t. a_i'p = 0, i in W.
fn subproblem(p: &QPProblem, z: &[f64; 4], working: &[usize]) -> Option<([f64; 4], Vec<f64>)> {
    let m = working.len();
    let n = 4 + m;
    let g = p.gradient(z);
    let mut a = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = 2.0 * p.q[i][j];
        }
        rhs[i] = -g[i];
    }
    for (k, &w) in working.iter().enumerate() {
        for i in 0..4 {
            a[i][4 + k] = -p.h[w][i];
            a[4 + k][i] = p.h[w][i];
        }
    }
    let x = solve_dense(a, rhs)?;
    Some(([x[0], x[1], x[2], x[3]], x[4..].to_vec()))
}

/// Primal active-set method for the strictly convex program.
///
/// Starts from the unconstrained minimizer clipped to the box, so the
/// constraint rows must be signed unit vectors.
pub fn solve_qp(p: &QPProblem) -> Result<QPSolution> {
    if p.h.len() != p.eps.len() {
        return Err(Error::InvalidInput("H and eps lengths differ".into()));
    }
    let (lo, hi) = p
        .box_bounds()
        .ok_or_else(|| Error::InvalidInput("constraints must be axis-aligned bounds".into()))?;
    if (0..4).any(|i| !(lo[i] <= hi[i])) {
        return Err(Error::InfeasibleConstraints);
    }
    let free = subproblem(p, &[0.0; 4], &[]).ok_or(Error::InvalidInput("Q is singular".into()))?.0;
    let mut z = [0.0; 4];
    for i in 0..4 {
        z[i] = free[i].clamp(lo[i], hi[i]);
    }
    let scale = 1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut working: Vec<usize> = Vec::new();
    for it in 0..MAX_ACTIVE_SET_ITERATIONS {
        let (step, lambda) = subproblem(p, &z, &working).ok_or(Error::SolverStalled)?;
        let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if step_norm <= 1e-13 * scale {
            match lambda
                .iter()
                .enumerate()
                .filter(|(_, l)| **l < -1e-12)
                .min_by(|a, b| a.1.total_cmp(b.1))
            {
                None => {
                    return Ok(QPSolution {
                        z,
                        objective: p.objective(&z),
                        active: working,
                        multipliers: lambda,
                        iterations: it + 1,
                    })
                }
                Some((k, _)) => {
                    working.remove(k);
                }
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for (i, row) in p.h.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let hp = dot(row, &step);
            if hp < 0.0 {
                let a = ((p.eps[i] - dot(row, &z)) / hp).max(0.0);
                if a < alpha {
                    alpha = a;
                    blocking = Some(i);
                }
            }
        }
        for i in 0..4 {
            z[i] += alpha * step[i];
        }
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Err(Error::SolverStalled)
}

/// Plain-text dump: Q (4 rows), b, then one `h | eps` line per constraint,
/// every value with 17 significant digits.
pub fn dump_qp(p: &QPProblem) -> String {
    let fmt = |v: f64| format!("{v:.16e}");
    let mut s = String::new();
    let _ = writeln!(s, "Q 4 4");
    for row in &p.q {
        let _ = writeln!(s, "{}", row.map(fmt).join(" "));
    }
    let _ = writeln!(s, "b 4");
    let _ = writeln!(s, "{}", p.b.map(fmt).join(" "));
    let _ = writeln!(s, "H {} 4", p.h.len());
    for (row, e) in p.h.iter().zip(&p.eps) {
        let _ = writeln!(s, "{} | {}", row.map(fmt).join(" "), fmt(*e));
    }
    s
}

pub fn parse_qp(text: &str) -> Result<QPProblem> {
    let bad = |m: &str| Error::Parse(format!("qp dump: {m}"));
    let nums = |line: &str| -> Result<Vec<f64>> {
        line.split_whitespace()
            .filter(|t| *t != "|")
            .map(|t| t.parse::<f64>().map_err(|e| bad(&e.to_string())))
            .collect()
    };
    let mut lines = text.lines();
    if lines.next() != Some("Q 4 4") {
        return Err(bad("missing Q header"));
    }
    let mut q = [[0.0; 4]; 4];
    for row in &mut q {
        let v = nums(lines.next().ok_or_else(|| bad("truncated Q"))?)?;
        *row = v.try_into().map_err(|_| bad("Q row width"))?;
    }
    if lines.next() != Some("b 4") {
        return Err(bad("missing b header"));
    }
    let b: [f64; 4] = nums(lines.next().ok_or_else(|| bad("truncated b"))?)?
        .try_into()
        .map_err(|_| bad("b width"))?;
    let header = lines.next().ok_or_else(|| bad("missing H header"))?;
    let k: usize = header
        .strip_prefix("H ")
        .and_then(|r| r.strip_suffix(" 4"))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad("H header"))?;
    let mut h = Vec::with_capacity(k);
    let mut eps = Vec::with_capacity(k);
    for _ in 0..k {
        let v = nums(lines.next().ok_or_else(|| bad("truncated H"))?)?;
        if v.len() != 5 {
            return Err(bad("H row width"));
        }
        h.push([v[0], v[1], v[2], v[3]]);
        eps.push(v[4]);
    }
    Ok(QPProblem { q, b, h, eps })
}
