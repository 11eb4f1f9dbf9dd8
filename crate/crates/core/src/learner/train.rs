use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::encoder::{encode_backward, encode_batch};
use super::infer::prepare;
use super::nn::{sigmoid, softplus, Adam, Scalar};
use super::params::{HeadKind, Net, NetParams, Normalization};
use super::{FEATURE_DIM, KEYPOINT_DIM, LATENT_DIM, POINT_DIM};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::keypoints::ToolKeypoints;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub latent_dim: usize,
    pub kl_weight: f64,
    pub seed: u64,
    /// Points per cloud fed to the encoder.
    pub input_points: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            iterations: 5000,
            latent_dim: LATENT_DIM,
            kl_weight: 0.1,
            seed: 0,
            input_points: 128,
        }
    }
}

impl Hyper {
    /// Reference values from the original paper-scale training.
    pub fn paper_scale() -> Self {
        Self { learning_rate: 1e-4, batch_size: 128, iterations: 120_000, ..Self::default() }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || self.batch_size == 0
            || self.input_points == 0
            || self.latent_dim != LATENT_DIM
            || !(self.kl_weight >= 0.0)
        {
            return Err(Error::InvalidInput(format!("bad hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// One normalized training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Encoder input, 3 values per point.
    pub input: Vec<f32>,
    pub keypoints: [f32; 6],
    pub label: bool,
}

impl Example {
    fn points(&self) -> usize {
        self.input.len() / POINT_DIM
    }
}

/// Normalized clouds, keypoints and labels sharing one normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub examples: Vec<Example>,
    pub norm: Normalization,
}

/// Mean over clouds of the largest planar distance from the centroid of the
/// encoder's input points.
pub fn dataset_scale(clouds: &[&PointCloud], input_points: usize) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for c in clouds {
        if c.is_empty() {
            continue;
        }
        let sub = c.strided(input_points);
        let m = sub.planar_centroid();
        total += sub.points.iter().map(|p| ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)).sqrt()).fold(0.0, f64::max);
        n += 1;
    }
    if n == 0 || total <= 0.0 {
        1.0
    } else {
        total / n as f64
    }
}

impl TrainBatch {
    pub fn new(samples: &[(&PointCloud, ToolKeypoints, bool)], norm: Normalization) -> Result<Self> {
        let examples = samples
            .iter()
            .map(|(cloud, k, label)| {
                let prep = prepare(cloud, &norm)?;
                if !k.is_finite() {
                    return Err(Error::InvalidInput("non-finite keypoints".into()));
                }
                Ok(Example {
                    input: prep.input.iter().flat_map(|p| p.map(|v| v as f32)).collect(),
                    keypoints: prep.frame.keypoints(k).map(|v| v as f32),
                    label: *label,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { examples, norm })
    }

    /// Normalization scale fitted on the samples themselves.
    pub fn fitted(samples: &[(&PointCloud, ToolKeypoints, bool)], input_points: usize) -> Result<Self> {
        let clouds: Vec<&PointCloud> = samples.iter().map(|s| s.0).collect();
        let norm = Normalization { scale: dataset_scale(&clouds, input_points) as f32, input_points, canonical: true };
        Self::new(samples, norm)
    }

    pub fn positives(&self) -> Vec<&Example> {
        self.examples.iter().filter(|e| e.label).collect()
    }

    pub fn negatives(&self) -> Vec<&Example> {
        self.examples.iter().filter(|e| !e.label).collect()
    }
}

fn stack<T: Scalar>(batch: &[&Example]) -> (Vec<T>, Vec<usize>) {
    let mut x = Vec::new();
    let mut counts = Vec::with_capacity(batch.len());
    for e in batch {
        x.extend(e.input.iter().map(|v| T::of(*v as f64)));
        counts.push(e.points());
    }
    (x, counts)
}

fn join<T: Scalar>(feat: &[T], tail: &[Vec<T>], rows: usize) -> Vec<T> {
    let t = tail.first().map_or(0, |v| v.len());
    let mut x = Vec::with_capacity(rows * (FEATURE_DIM + t));
    for r in 0..rows {
        x.extend_from_slice(&feat[r * FEATURE_DIM..(r + 1) * FEATURE_DIM]);
        x.extend_from_slice(&tail[r]);
    }
    x
}

/// Mean sigmoid cross-entropy of the evaluation head; accumulates the
/// gradient into `grad` when given.
pub fn evaluation_loss<T: Scalar>(net: &Net<T>, batch: &[&Example], grad: Option<&mut Net<T>>) -> f64 {
    let n = batch.len();
    let (x, counts) = stack::<T>(batch);
    let (feat, trace) = encode_batch(&net.encoder, x, &counts);
    let kn: Vec<Vec<T>> = batch.iter().map(|e| e.keypoints.iter().map(|v| T::of(*v as f64)).collect()).collect();
    let head = &net.heads[0];
    let tr = head.forward(join(&feat, &kn, n), n);
    let mut loss = 0.0;
    let mut dlogit = Vec::with_capacity(n);
    for (e, z) in batch.iter().zip(tr.output()) {
        let z = z.f64();
        let y = if e.label { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        dlogit.push(T::of((sigmoid(z) - y) / n as f64));
    }
    if let Some(g) = grad {
        let dx = head.backward(&tr, &dlogit, &mut g.heads[0], true);
        let w = FEATURE_DIM + KEYPOINT_DIM;
        let dfeat: Vec<T> = (0..n).flat_map(|r| dx[r * w..r * w + FEATURE_DIM].to_vec()).collect();
        encode_backward(&net.encoder, &trace, &dfeat, &mut g.encoder, false);
    }
    loss / n as f64
}

/// Loss terms of the proposal model for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalLoss {
    pub total: f64,
    /// Mean per-example sum of absolute keypoint errors.
    pub reconstruction: f64,
    pub kl: f64,
}

/// Reconstruction (l1) plus weighted KL loss of the proposal model with the
/// reparameterization noise `noise` (one latent vector per example).
pub fn proposal_loss<T: Scalar>(
    net: &Net<T>,
    batch: &[&Example],
    noise: &[[f64; LATENT_DIM]],
    kl_weight: f64,
    grad: Option<&mut Net<T>>,
) -> ProposalLoss {
    let n = batch.len();
    let (x, counts) = stack::<T>(batch);
    let (feat, trace) = encode_batch(&net.encoder, x, &counts);
    let kn: Vec<Vec<T>> = batch.iter().map(|e| e.keypoints.iter().map(|v| T::of(*v as f64)).collect()).collect();
    let (rec, dec) = (&net.heads[0], &net.heads[1]);
    let rt = rec.forward(join(&feat, &kn, n), n);
    let stats = rt.output();
    let mut z = Vec::with_capacity(n);
    let mut kl = 0.0;
    for r in 0..n {
        let s = &stats[r * 2 * LATENT_DIM..(r + 1) * 2 * LATENT_DIM];
        let mut zr = Vec::with_capacity(LATENT_DIM);
        for j in 0..LATENT_DIM {
            let (mu, lv) = (s[j].f64(), s[LATENT_DIM + j].f64());
            zr.push(T::of(mu + (0.5 * lv).exp() * noise[r][j]));
            kl += -0.5 * (1.0 + lv - mu * mu - lv.exp());
        }
        z.push(zr);
    }
    let dt = dec.forward(join(&feat, &z, n), n);
    let y = dt.output();
    let mut recon = 0.0;
    let mut dy = Vec::with_capacity(n * KEYPOINT_DIM);
    for r in 0..n {
        for j in 0..KEYPOINT_DIM {
            let d = y[r * KEYPOINT_DIM + j].f64() - batch[r].keypoints[j] as f64;
            recon += d.abs();
            dy.push(T::of(d.signum() / n as f64));
        }
    }
    let out = ProposalLoss {
        total: (recon + kl_weight * kl) / n as f64,
        reconstruction: recon / n as f64,
        kl: kl / n as f64,
    };
    if let Some(g) = grad {
        let wd = FEATURE_DIM + LATENT_DIM;
        let dxd = dec.backward(&dt, &dy, &mut g.heads[1], true);
        let mut dstats = Vec::with_capacity(n * 2 * LATENT_DIM);
        for r in 0..n {
            let s = &stats[r * 2 * LATENT_DIM..(r + 1) * 2 * LATENT_DIM];
            let dz = &dxd[r * wd + FEATURE_DIM..(r + 1) * wd];
            let mut dmu = Vec::with_capacity(LATENT_DIM);
            let mut dlv = Vec::with_capacity(LATENT_DIM);
            for j in 0..LATENT_DIM {
                let (mu, lv) = (s[j].f64(), s[LATENT_DIM + j].f64());
                let dzj = dz[j].f64();
                dmu.push(T::of(dzj + kl_weight * mu / n as f64));
                dlv.push(T::of(
                    dzj * 0.5 * (0.5 * lv).exp() * noise[r][j] + kl_weight * 0.5 * (lv.exp() - 1.0) / n as f64,
                ));
            }
            dstats.extend(dmu);
            dstats.extend(dlv);
        }
        let wr = FEATURE_DIM + KEYPOINT_DIM;
        let dxr = rec.backward(&rt, &dstats, &mut g.heads[0], true);
        let dfeat: Vec<T> = (0..n)
            .flat_map(|r| (0..FEATURE_DIM).map(move |j| (r, j)))
            .map(|(r, j)| dxd[r * wd + j] + dxr[r * wr + j])
            .collect();
        encode_backward(&net.encoder, &trace, &dfeat, &mut g.encoder, false);
    }
    out
}

/// Parameters plus the per-iteration training loss.
#[derive(Debug, Clone)]
pub struct Trained {
    pub params: NetParams,
    pub losses: Vec<f64>,
}

impl Trained {
    /// Mean of the last `window` losses ending at iteration `end` (exclusive).
    pub fn smoothed(&self, end: usize, window: usize) -> f64 {
        let end = end.min(self.losses.len());
        let start = end.saturating_sub(window);
        self.losses[start..end].iter().sum::<f64>() / (end - start).max(1) as f64
    }
}

fn adam_step(net: &mut NetParams, grad: &NetParams, adam: &mut Adam) {
    let mut params: Vec<&mut [f32]> = Vec::new();
    for l in net.layers_mut() {
        params.push(&mut l.w);
        params.push(&mut l.b);
    }
    let grads: Vec<&[f32]> = grad.layers().flat_map(|l| [&l.w[..], &l.b[..]]).collect();
    adam.step(&mut params, &grads);
}

fn pick<'a>(r: &mut rng::Rng, pool: &[&'a Example], k: usize, out: &mut Vec<&'a Example>) {
    for _ in 0..k {
        out.push(pool[r.gen_range(0..pool.len())]);
    }
}

/// Trains the scorer on class-balanced batches (half positives, half
/// negatives, drawn with replacement).
pub fn train_evaluation(data: &TrainBatch, h: &Hyper) -> Result<Trained> {
    h.check()?;
    let pos = data.positives();
    let neg = data.negatives();
    if pos.is_empty() {
        return Err(Error::NoPositiveData);
    }
    if neg.is_empty() {
        return Err(Error::NoNegativeData);
    }
    let mut net = NetParams::init(HeadKind::Evaluation, data.norm, rng::derive(h.seed, "eval-init", 0));
    let mut adam = Adam::new(h.learning_rate, net.parameter_count());
    let mut r = rng::rng(rng::derive(h.seed, "eval-batches", 0));
    let mut losses = Vec::with_capacity(h.iterations);
    let half = h.batch_size / 2;
    for _ in 0..h.iterations {
        let mut batch = Vec::with_capacity(h.batch_size);
        pick(&mut r, &pos, h.batch_size - half, &mut batch);
        pick(&mut r, &neg, half, &mut batch);
        let mut grad = net.zeros_like();
        losses.push(evaluation_loss(&net, &batch, Some(&mut grad)));
        adam_step(&mut net, &grad, &mut adam);
    }
    Ok(Trained { params: net, losses })
}

/// Trains the latent-variable proposal model on positive examples.
pub fn train_proposal(data: &TrainBatch, h: &Hyper) -> Result<Trained> {
    h.check()?;
    let pos = data.positives();
    if pos.is_empty() {
        return Err(Error::NoPositiveData);
    }
    let mut net = NetParams::init(HeadKind::Proposal, data.norm, rng::derive(h.seed, "proposal-init", 0));
    let mut adam = Adam::new(h.learning_rate, net.parameter_count());
    let mut r = rng::rng(rng::derive(h.seed, "proposal-batches", 0));
    let mut losses = Vec::with_capacity(h.iterations);
    for _ in 0..h.iterations {
        let mut batch = Vec::with_capacity(h.batch_size);
        pick(&mut r, &pos, h.batch_size, &mut batch);
        let noise: Vec<[f64; LATENT_DIM]> =
            (0..batch.len()).map(|_| std::array::from_fn(|_| StandardNormal.sample(&mut r))).collect();
        let mut grad = net.zeros_like();
        losses.push(proposal_loss(&net, &batch, &noise, h.kl_weight, Some(&mut grad)).total);
        adam_step(&mut net, &grad, &mut adam);
    }
    Ok(Trained { params: net, losses })
}

/// Area under the ROC curve (ties count one half).
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    let np = labels.iter().filter(|l| **l).count() as f64;
    let nn = labels.len() as f64 - np;
    if np == 0.0 || nn == 0.0 {
        return f64::NAN;
    }
    let rp: f64 = ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| r).sum();
    (rp - np * (np + 1.0) / 2.0) / (np * nn)
}
