use rand_distr::{Distribution, StandardNormal};

use super::encoder::{encode_backward, encode_batch};
use super::frame::CloudFrame;
use super::nn::{sigmoid, Scalar};
use super::params::{HeadKind, Net, NetParams, Normalization};
use super::{FEATURE_DIM, KEYPOINT_DIM, LATENT_DIM, POINT_DIM};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::keypoints::{validate_keypoints, ToolKeypoints};
use crate::rng;

/// Indices of the points fed to the encoder: a uniform index stride.
pub fn input_indices(len: usize, n: usize) -> Vec<usize> {
    if len <= n {
        (0..len).collect()
    } else {
        (0..n).map(|k| k * len / n).collect()
    }
}

/// A cloud reduced to the encoder's input and mapped into the canonical frame
/// of the whole cloud.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub frame: CloudFrame,
    pub indices: Vec<usize>,
    /// Selected points, world frame.
    pub world: Vec<[f64; 3]>,
    /// Selected points, normalized.
    pub input: Vec<[f64; 3]>,
}

pub fn prepare(cloud: &PointCloud, norm: &Normalization) -> Result<Prepared> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let indices = input_indices(cloud.len(), norm.input_points);
    let world: Vec<[f64; 3]> = indices.iter().map(|&i| cloud.points[i]).collect();
    let frame = CloudFrame::fit(&cloud.points, norm.scale as f64, norm.canonical);
    let input = world.iter().map(|p| frame.point(p)).collect();
    Ok(Prepared { frame, indices, world, input })
}

fn flat<T: Scalar>(points: &[[f64; 3]]) -> Vec<T> {
    points.iter().flat_map(|p| p.map(T::of)).collect()
}

/// Feature vector of an already normalized cloud, using every point.
pub fn encode<T: Scalar>(cloud: &PointCloud, net: &Net<T>) -> Result<Vec<f64>> {
    net.check()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (f, _) = encode_batch(&net.encoder, flat(&cloud.points), &[cloud.len()]);
    Ok(f.iter().map(|v| v.f64()).collect())
}

fn feature<T: Scalar>(prep: &Prepared, net: &Net<T>) -> Vec<T> {
    encode_batch(&net.encoder, flat(&prep.input), &[prep.input.len()]).0
}

fn score_rows<T: Scalar>(net: &Net<T>, feat: &[T], kns: &[[f64; 6]]) -> Vec<f64> {
    let mut x = Vec::with_capacity(kns.len() * (FEATURE_DIM + KEYPOINT_DIM));
    for kn in kns {
        x.extend_from_slice(feat);
        x.extend(kn.iter().map(|v| T::of(*v)));
    }
    let tr = net.heads[0].forward(x, kns.len());
    tr.output().iter().map(|v| sigmoid(v.f64())).collect()
}

/// Success probability of `k` on `cloud`.
pub fn evaluate(cloud: &PointCloud, k: &ToolKeypoints, params: &NetParams) -> Result<f64> {
    Ok(evaluate_many(cloud, std::slice::from_ref(k), params)?[0])
}

/// Scores several keypoint sets on one cloud, encoding it once.
pub fn evaluate_many(cloud: &PointCloud, ks: &[ToolKeypoints], params: &NetParams) -> Result<Vec<f64>> {
    params.expect(HeadKind::Evaluation)?;
    if ks.is_empty() {
        return Ok(Vec::new());
    }
    let prep = prepare(cloud, &params.norm)?;
    let feat = feature(&prep, params);
    let kns: Vec<[f64; 6]> = ks.iter().map(|k| prep.frame.keypoints(k)).collect();
    Ok(score_rows(params, &feat, &kns))
}

/// Decodes `count` latent draws into keypoints; invalid candidates are
/// dropped, the rest keep their draw order.
pub fn propose(cloud: &PointCloud, count: usize, seed: u64, params: &NetParams) -> Result<Vec<ToolKeypoints>> {
    params.expect(HeadKind::Proposal)?;
    let prep = prepare(cloud, &params.norm)?;
    let feat = feature(&prep, params);
    let mut r = rng::rng(seed);
    let mut x = Vec::with_capacity(count * (FEATURE_DIM + LATENT_DIM));
    for _ in 0..count {
        x.extend_from_slice(&feat);
        for _ in 0..LATENT_DIM {
            let z: f64 = StandardNormal.sample(&mut r);
            x.push(z as f32);
        }
    }
    let tr = params.heads[1].forward(x, count);
    let out = tr.output();
    let valid: Vec<ToolKeypoints> = out
        .chunks(KEYPOINT_DIM)
        .map(|c| {
            let v: [f64; 6] = std::array::from_fn(|i| c[i] as f64);
            prep.frame.world_keypoints(&v).snapped(cloud)
        })
        .filter(|k| validate_keypoints(k, cloud))
        .collect();
    if valid.is_empty() {
        return Err(Error::ProposalCollapse);
    }
    Ok(valid)
}

/// Highest-scoring valid proposal (earliest on ties) and its score.
pub fn predict_scored(
    cloud: &PointCloud,
    count: usize,
    seed: u64,
    proposal: &NetParams,
    evaluation: &NetParams,
) -> Result<(ToolKeypoints, f64)> {
    evaluation.expect(HeadKind::Evaluation)?;
    let cands = propose(cloud, count, seed, proposal)?;
    let scores = evaluate_many(cloud, &cands, evaluation)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok((cands[best], scores[best]))
}

pub fn predict_keypoints(
    cloud: &PointCloud,
    count: usize,
    seed: u64,
    proposal: &NetParams,
    evaluation: &NetParams,
) -> Result<ToolKeypoints> {
    predict_scored(cloud, count, seed, proposal, evaluation).map(|(k, _)| k)
}

/// Score of `k` on `cloud` and its gradient w.r.t. every world point
/// coordinate. Points not fed to the encoder act only through the frame.
pub fn score_gradient<T: Scalar>(cloud: &PointCloud, k: &ToolKeypoints, net: &Net<T>) -> Result<(f64, Vec<[f64; 3]>)> {
    net.expect(HeadKind::Evaluation)?;
    let prep = prepare(cloud, &net.norm)?;
    let counts = [prep.input.len()];
    let (feat, trace) = encode_batch(&net.encoder, flat(&prep.input), &counts);
    let kn = prep.frame.keypoints(k);
    let mut x = feat.clone();
    x.extend(kn.iter().map(|v| T::of(*v)));
    let head = &net.heads[0];
    let tr = head.forward(x, 1);
    let s = sigmoid(tr.output()[0].f64());
    let mut scratch = net.zeros_like();
    let dx = head.backward(&tr, &[T::of(s * (1.0 - s))], &mut scratch.heads[0], true);
    let dq = encode_backward(&net.encoder, &trace, &dx[..FEATURE_DIM], &mut scratch.encoder, true);
    let mut dq_all = vec![[0.0; 3]; cloud.len()];
    for (&i, c) in prep.indices.iter().zip(dq.chunks(POINT_DIM)) {
        dq_all[i] = [c[0].f64(), c[1].f64(), c[2].f64()];
    }
    let dk: [f64; 6] = std::array::from_fn(|i| dx[FEATURE_DIM + i].f64());
    Ok((s, prep.frame.backprop(&cloud.points, &dq_all, Some((&kn, &dk)))))
}
