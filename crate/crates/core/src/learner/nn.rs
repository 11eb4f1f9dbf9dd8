//! Dense layers with hand-written backward passes and the Adam rule.

use num_traits::Float;

/// Scalar type the networks run in: `f32` in production, `f64` for
/// gradient checks.
pub trait Scalar: Float + Default + std::fmt::Debug + Send + Sync + 'static {
    /// `c = alpha * a * b + beta * c` for strided row/column-major views.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        Self::from(v).unwrap()
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

macro_rules! scalar_impl {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                let last = |r: isize, cs: isize, rows: usize, cols: usize| {
                    (rows.saturating_sub(1) as isize * r + cols.saturating_sub(1) as isize * cs) as usize
                };
                assert!(k == 0 || last(rsa, csa, m, k) < a.len());
                assert!(k == 0 || last(rsb, csb, k, n) < b.len());
                assert!(last(rsc, csc, m, n) < c.len());
                // SAFETY: the asserts above keep every strided access in bounds.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }
        }
    };
}

scalar_impl!(f32, matrixmultiply::sgemm);
scalar_impl!(f64, matrixmultiply::dgemm);

pub fn softsign<T: Scalar>(x: T) -> T {
    x / (T::one() + x.abs())
}

/// Derivative of softsign at the pre-activation `x`.
pub fn softsign_grad<T: Scalar>(x: T) -> T {
    let d = T::one() + x.abs();
    T::one() / (d * d)
}

/// Numerically stable `ln(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer; `w` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, w: vec![T::zero(); inputs * outputs], b: vec![T::zero(); outputs] }
    }

    /// `rows x outputs` affine map of the `rows x inputs` matrix `x`.
    pub fn forward(&self, x: &[T], rows: usize) -> Vec<T> {
        let mut y = Vec::with_capacity(rows * self.outputs);
        for _ in 0..rows {
            y.extend_from_slice(&self.b);
        }
        T::gemm(
            rows,
            self.inputs,
            self.outputs,
            T::one(),
            x,
            self.inputs as isize,
            1,
            &self.w,
            1,
            self.inputs as isize,
            T::one(),
            &mut y,
            self.outputs as isize,
            1,
        );
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`
    /// (skipped when `need_dx` is false).
    pub fn backward(&self, x: &[T], dy: &[T], rows: usize, grad: &mut Dense<T>, need_dx: bool) -> Vec<T> {
        T::gemm(
            self.outputs,
            rows,
            self.inputs,
            T::one(),
            dy,
            1,
            self.outputs as isize,
            x,
            self.inputs as isize,
            1,
            T::one(),
            &mut grad.w,
            self.inputs as isize,
            1,
        );
        for r in 0..rows {
            for (g, d) in grad.b.iter_mut().zip(&dy[r * self.outputs..(r + 1) * self.outputs]) {
                *g = *g + *d;
            }
        }
        if !need_dx {
            return Vec::new();
        }
        let mut dx = vec![T::zero(); rows * self.inputs];
        T::gemm(
            rows,
            self.outputs,
            self.inputs,
            T::one(),
            dy,
            self.outputs as isize,
            1,
            &self.w,
            self.inputs as isize,
            1,
            T::zero(),
            &mut dx,
            self.inputs as isize,
            1,
        );
        dx
    }

    pub fn cast<U: Scalar>(&self) -> Dense<U> {
        Dense {
            inputs: self.inputs,
            outputs: self.outputs,
            w: self.w.iter().map(|v| U::of(v.f64())).collect(),
            b: self.b.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}

/// Stack of dense layers with softsign between them. The final layer is
/// linear unless `act_last` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
    pub act_last: bool,
}

/// Pre-activations and activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace<T> {
    pub rows: usize,
    /// `inputs[i]` feeds layer `i`; the last entry is the network output.
    pub acts: Vec<Vec<T>>,
    pub pre: Vec<Vec<T>>,
}

impl<T: Scalar> MlpTrace<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().unwrap()
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
            act_last: self.act_last,
        }
    }

    fn activates(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.act_last
    }

    pub fn forward(&self, x: Vec<T>, rows: usize) -> MlpTrace<T> {
        let mut acts = vec![x];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let z = l.forward(acts.last().unwrap(), rows);
            let a = if self.activates(i) { z.iter().map(|v| softsign(*v)).collect() } else { z.clone() };
            pre.push(z);
            acts.push(a);
        }
        MlpTrace { rows, acts, pre }
    }

    /// Backpropagates `dy` (gradient w.r.t. the output); returns `dL/dx`.
    pub fn backward(&self, trace: &MlpTrace<T>, dy: &[T], grad: &mut Mlp<T>, need_dx: bool) -> Vec<T> {
        let mut d = dy.to_vec();
        for i in (0..self.layers.len()).rev() {
            if self.activates(i) {
                for (g, z) in d.iter_mut().zip(&trace.pre[i]) {
                    *g = *g * softsign_grad(*z);
                }
            }
            d = self.layers[i].backward(&trace.acts[i], &d, trace.rows, &mut grad.layers[i], need_dx || i > 0);
        }
        d
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp { layers: self.layers.iter().map(Dense::cast).collect(), act_last: self.act_last }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<f32>,
    v: Vec<f32>,
}

impl Adam {
    pub fn new(lr: f64, size: usize) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; size], v: vec![0.0; size] }
    }

    /// One update of `params` (flattened) with gradient `grad`.
    pub fn step(&mut self, params: &mut [&mut [f32]], grad: &[&[f32]]) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grad) {
            for (pi, gi) in p.iter_mut().zip(g.iter()) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = b1 * *m + (1.0 - b1) * gi;
                *v = b2 * *v + (1.0 - b2) * gi * gi;
                *pi -= step * *m / (v.sqrt() + eps);
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_matches_naive_product() {
        let mut l = Dense::<f64>::zeros(3, 2);
        l.w = vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0];
        l.b = vec![0.1, -0.2];
        let y = l.forward(&[1.0, 1.0, 1.0, 2.0, 0.0, -1.0], 2);
        assert_eq!(y, vec![6.1, -0.7, -0.9, -2.2]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // with bias correction the first step is lr * sign(g)
        let mut p = vec![1.0f32, -1.0];
        let mut adam = Adam::new(0.01, 2);
        adam.step(&mut [&mut p], &[&[0.5, -3.0]]);
        assert!((p[0] - 0.99).abs() < 1e-6 && (p[1] + 0.99).abs() < 1e-6);
    }

    #[test]
    fn stable_logistic_helpers() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(softplus(-800.0) >= 0.0 && softplus(800.0) == 800.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
    }
}
