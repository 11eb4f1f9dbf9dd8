//! Shared per-point encoder with coordinate-wise max pooling.

use super::nn::{softsign_grad, Mlp, MlpTrace, Scalar};

/// Forward state of a batch of clouds.
#[derive(Debug, Clone)]
pub struct PoolTrace<T> {
    pub points: MlpTrace<T>,
    /// Row of the winning point for every (cloud, channel).
    pub argmax: Vec<usize>,
}

/// Encodes clouds stacked row-wise in `points` (3 values per point),
/// `counts[c]` points each. Returns `clouds x features`.
pub fn encode_batch<T: Scalar>(enc: &Mlp<T>, points: Vec<T>, counts: &[usize]) -> (Vec<T>, PoolTrace<T>) {
    let rows: usize = counts.iter().sum();
    let f = enc.outputs();
    let trace = enc.forward(points, rows);
    let h = trace.output();
    let mut feats = Vec::with_capacity(counts.len() * f);
    let mut argmax = Vec::with_capacity(counts.len() * f);
    let mut start = 0;
    for &n in counts {
        for ch in 0..f {
            let mut best = start;
            for r in start + 1..start + n {
                if h[r * f + ch] > h[best * f + ch] {
                    best = r;
                }
            }
            feats.push(h[best * f + ch]);
            argmax.push(best);
        }
        start += n;
    }
    (feats, PoolTrace { points: trace, argmax })
}

/// Backward pass through the pooling and per-point stack. Only the winning
/// rows receive gradient in the last layer. Returns `dL/dpoints` when
/// `need_dx` is set.
pub fn encode_backward<T: Scalar>(
    enc: &Mlp<T>,
    trace: &PoolTrace<T>,
    dfeat: &[T],
    grad: &mut Mlp<T>,
    need_dx: bool,
) -> Vec<T> {
    let tr = &trace.points;
    let last = enc.layers.len() - 1;
    let layer = &enc.layers[last];
    let (fin, fout) = (layer.inputs, layer.outputs);
    let x = &tr.acts[last];
    let z = &tr.pre[last];
    let mut dx = vec![T::zero(); tr.rows * fin];
    let g = &mut grad.layers[last];
    for (k, (&r, &d)) in trace.argmax.iter().zip(dfeat).enumerate() {
        if d == T::zero() {
            continue;
        }
        let ch = k % fout;
        let d = d * softsign_grad(z[r * fout + ch]);
        g.b[ch] = g.b[ch] + d;
        let xr = &x[r * fin..(r + 1) * fin];
        let wr = &layer.w[ch * fin..(ch + 1) * fin];
        for j in 0..fin {
            g.w[ch * fin + j] = g.w[ch * fin + j] + d * xr[j];
            dx[r * fin + j] = dx[r * fin + j] + d * wr[j];
        }
    }
    let mut d = dx;
    for i in (0..last).rev() {
        for (gi, zi) in d.iter_mut().zip(&tr.pre[i]) {
            *gi = *gi * softsign_grad(*zi);
        }
        d = enc.layers[i].backward(&tr.acts[i], &d, tr.rows, &mut grad.layers[i], need_dx || i > 0);
    }
    d
}
