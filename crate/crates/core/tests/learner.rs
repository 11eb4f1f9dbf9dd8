mod common;

use kptool::geometry::PointCloud;
use kptool::keypoints::{validate_keypoints, ToolKeypoints};
use kptool::learner::*;
use kptool::rng;
use rand::seq::SliceRandom;
use rand::Rng;

fn norm(points: usize) -> Normalization {
    Normalization { scale: 0.12, input_points: points, canonical: true }
}

fn small_batch(seed: u64) -> TrainBatch {
    let data = common::separable(6, seed);
    TrainBatch::new(&common::refs(&data), norm(24)).unwrap()
}

/// Relative agreement with a floor for vanishing gradients.
fn close(a: f64, n: f64, tol: f64) -> bool {
    (a - n).abs() <= tol * a.abs().max(n.abs()).max(1e-6)
}

fn check_layers(net: &Net<f64>, grad: &Net<f64>, probes: usize, seed: u64, loss: &dyn Fn(&Net<f64>) -> f64) {
    for p in common::layer_fd_probes(net, grad, probes, seed, loss) {
        assert!(close(p.analytic, p.numeric, 1e-4), "layer {} param {}: analytic {} vs fd {}", p.layer, p.index, p.analytic, p.numeric);
    }
}

#[test]
fn evaluation_loss_gradients_match_finite_differences() {
    let data = small_batch(3);
    let batch: Vec<&Example> = data.examples.iter().collect();
    let net = common::randomized(HeadKind::Evaluation, 5, 24);
    let mut grad = net.zeros_like();
    evaluation_loss(&net, &batch, Some(&mut grad));
    check_layers(&net, &grad, 100, 9, &|p| evaluation_loss(p, &batch, None));
}

#[test]
fn proposal_loss_gradients_match_finite_differences() {
    let data = small_batch(4);
    let batch: Vec<&Example> = data.examples.iter().collect();
    let net = common::randomized(HeadKind::Proposal, 6, 24);
    let mut r = rng::rng(1);
    let noise: Vec<[f64; LATENT_DIM]> =
        batch.iter().map(|_| std::array::from_fn(|_| r.gen_range(-1.5..1.5))).collect();
    let mut grad = net.zeros_like();
    let l = proposal_loss(&net, &batch, &noise, 0.1, Some(&mut grad));
    assert!(l.kl >= 0.0);
    check_layers(&net, &grad, 100, 10, &|p| proposal_loss(p, &batch, &noise, 0.1, None).total);
}

#[test]
fn encoder_output_gradients_match_finite_differences() {
    // L = u . feature for a random u, through the pooled encoder alone
    let data = small_batch(5);
    let batch: Vec<&Example> = data.examples.iter().take(3).collect();
    let net = common::randomized(HeadKind::Evaluation, 7, 24);
    let counts: Vec<usize> = batch.iter().map(|e| e.input.len() / 3).collect();
    let x: Vec<f64> = batch.iter().flat_map(|e| e.input.iter().map(|v| *v as f64)).collect();
    let mut r = rng::rng(2);
    let u: Vec<f64> = (0..counts.len() * FEATURE_DIM).map(|_| r.gen_range(-1.0..1.0)).collect();
    let loss = |n: &Net<f64>| -> f64 {
        let (f, _) = encode_batch(&n.encoder, x.clone(), &counts);
        f.iter().zip(&u).map(|(a, b)| a * b).sum()
    };
    let (_, trace) = encode_batch(&net.encoder, x.clone(), &counts);
    let mut grad = net.zeros_like();
    let dx = encode_backward(&net.encoder, &trace, &u, &mut grad.encoder, true);
    // parameters of both encoder layers
    let mut r = rng::rng(3);
    for li in 0..2 {
        for _ in 0..100 {
            let nw = net.encoder.layers[li].w.len();
            let idx = r.gen_range(0..nw + net.encoder.layers[li].b.len());
            let h = 1e-6;
            let at = |d: f64| {
                let mut p = net.clone();
                if idx < nw {
                    p.encoder.layers[li].w[idx] += d;
                } else {
                    p.encoder.layers[li].b[idx - nw] += d;
                }
                loss(&p)
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let g = &grad.encoder.layers[li];
            let a = if idx < nw { g.w[idx] } else { g.b[idx - nw] };
            assert!(close(a, fd, 1e-4), "encoder layer {li} param {idx}: {a} vs {fd}");
        }
    }
    // input coordinates
    for _ in 0..100 {
        let i = r.gen_range(0..x.len());
        let h = 1e-5;
        let at = |d: f64| {
            let mut xx = x.clone();
            xx[i] += d;
            let (f, _) = encode_batch(&net.encoder, xx, &counts);
            f.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        assert!(close(dx[i], fd, 1e-4), "input {i}: {} vs {fd}", dx[i]);
    }
}

#[test]
fn score_gradient_on_points_matches_finite_differences() {
    let clouds = common::random_clouds(3, 64, 11);
    let net = common::randomized(HeadKind::Evaluation, 8, 24);
    let mut r = rng::rng(4);
    let mut probes = 0;
    for cloud in &clouds {
        let k = common::random_keypoints(cloud, &mut r);
        let (_, g) = score_gradient(cloud, &k, &net).unwrap();
        let score = |c: &PointCloud| score_gradient(c, &k, &net).unwrap().0;
        let used = input_indices(cloud.len(), net.norm.input_points);
        for _ in 0..40 {
            let i = used[r.gen_range(0..used.len())];
            let c = r.gen_range(0..3);
            let h = 1e-6;
            let mut a = cloud.clone();
            let mut b = cloud.clone();
            a.points[i][c] += h;
            b.points[i][c] -= h;
            let fd = (score(&a) - score(&b)) / (2.0 * h);
            assert!(close(g[i][c], fd, 1e-4), "point {i}.{c}: {} vs {fd}", g[i][c]);
            probes += 1;
        }
    }
    assert!(probes >= 100);
}

#[test]
fn encoder_is_permutation_and_duplicate_invariant() {
    let net = NetParams::init(HeadKind::Evaluation, norm(64), 1);
    let cloud = common::random_clouds(1, 64, 2).remove(0);
    let base = encode(&cloud, &net).unwrap();
    let mut shuffled = cloud.clone();
    shuffled.points.shuffle(&mut rng::rng(3));
    let perm = encode(&shuffled, &net).unwrap();
    assert!(base.iter().zip(&perm).all(|(a, b)| (a - b).abs() <= 1e-12));
    let mut dup = cloud.clone();
    dup.points.extend_from_slice(&cloud.points[..10]);
    assert_eq!(encode(&dup, &net).unwrap(), base);
}

#[test]
fn fresh_scorer_is_uninformative() {
    let data = small_batch(6);
    let net = NetParams::init(HeadKind::Evaluation, data.norm, 2);
    let clouds = common::random_clouds(2, 64, 4);
    let k = common::random_keypoints(&clouds[0], &mut rng::rng(1));
    assert_eq!(evaluate(&clouds[0], &k, &net).unwrap(), 0.5);
    let batch: Vec<&Example> = data.examples.iter().collect();
    let l = evaluation_loss(&net, &batch, None);
    assert!((l - std::f64::consts::LN_2).abs() <= 1e-6);
}

#[test]
fn wrong_head_is_rejected() {
    let eval = NetParams::init(HeadKind::Evaluation, norm(64), 1);
    let cloud = common::random_clouds(1, 64, 2).remove(0);
    assert!(matches!(propose(&cloud, 4, 0, &eval), Err(kptool::Error::BadParams)));
}

fn trained_proposal() -> (NetParams, Vec<PointCloud>) {
    let train = common::separable(64, 21);
    let data = TrainBatch::fitted(&common::refs(&train), 64).unwrap();
    let h = Hyper { iterations: 200, batch_size: 16, input_points: 64, ..Hyper::default() };
    let t = train_proposal(&data, &h).unwrap();
    (t.params, common::random_clouds(4, 256, 22))
}

#[test]
fn proposals_are_deterministic_and_valid() {
    let (net, clouds) = trained_proposal();
    for c in &clouds {
        let a = propose(c, 32, 5, &net);
        let b = propose(c, 32, 5, &net);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                assert_eq!(a, b);
                assert!(a.iter().all(|k| validate_keypoints(k, c)));
            }
            (Err(e), Err(f)) => assert_eq!(e.to_string(), f.to_string()),
            _ => panic!("nondeterministic"),
        }
    }
}

#[test]
fn prediction_is_argmax_of_scores() {
    let (prop, clouds) = trained_proposal();
    let train = common::separable(64, 23);
    let data = TrainBatch::fitted(&common::refs(&train), 64).unwrap();
    let h = Hyper { iterations: 100, batch_size: 16, input_points: 64, ..Hyper::default() };
    let eval = train_evaluation(&data, &h).unwrap().params;
    for c in &clouds {
        let Ok(cands) = propose(c, 16, 9, &prop) else { continue };
        let (k, s) = predict_scored(c, 16, 9, &prop, &eval).unwrap();
        let scores = evaluate_many(c, &cands, &eval).unwrap();
        assert!(scores.iter().all(|x| *x <= s));
        let first = scores.iter().position(|x| *x == s).unwrap();
        assert_eq!(cands[first], k);
        assert!(validate_keypoints(&k, c));
        // a single valid draw is returned regardless of its score
        if let Ok(one) = propose(c, 1, 3, &prop) {
            assert_eq!(predict_keypoints(c, 1, 3, &prop, &eval).unwrap(), one[0]);
        }
    }
}

#[test]
fn prediction_follows_scorer_surgery() {
    // scorer reduced by weight surgery to a function of the normalized
    // function-point x coordinate: picks the candidate furthest along +x
    let (prop, clouds) = trained_proposal();
    let mut eval = NetParams::init(HeadKind::Evaluation, prop.norm, 3);
    let head = &mut eval.heads[0];
    for l in &mut head.layers {
        l.w.iter_mut().for_each(|w| *w = 0.0);
        l.b.iter_mut().for_each(|b| *b = 0.0);
    }
    head.layers[0].w[FEATURE_DIM + 2] = 1.0;
    head.layers[1].w[0] = 1.0;
    head.layers[2].w[0] = 4.0;
    for c in &clouds {
        let Ok(cands) = propose(c, 16, 4, &prop) else { continue };
        let k = predict_keypoints(c, 16, 4, &prop, &eval).unwrap();
        let frame = prepare(c, &prop.norm).unwrap().frame;
        let best = cands
            .iter()
            .map(|k| frame.keypoints(k)[2])
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(frame.keypoints(&k)[2], best);
    }
}

#[test]
fn single_example_is_memorized() {
    let mut data = common::separable(1, 31);
    data[0].2 = true;
    let batch = TrainBatch::fitted(&common::refs(&data), 64).unwrap();
    let h = Hyper { iterations: 2000, batch_size: 8, input_points: 64, ..Hyper::default() };
    let t = train_proposal(&batch, &h).unwrap();
    let net = t.params.cast::<f64>();
    let ex: Vec<&Example> = batch.examples.iter().collect();
    let mut r = rng::rng(8);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let noise: Vec<[f64; LATENT_DIM]> =
            vec![std::array::from_fn(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r))];
        let l = proposal_loss(&net, &ex, &noise, 0.1, None);
        worst = worst.max(l.reconstruction / KEYPOINT_DIM as f64);
    }
    assert!(worst <= 0.02, "per-coordinate l1 {worst}");
}

#[test]
fn training_is_deterministic() {
    let data = small_batch(7);
    let h = Hyper { iterations: 30, batch_size: 4, input_points: 24, ..Hyper::default() };
    assert_eq!(train_evaluation(&data, &h).unwrap().params, train_evaluation(&data, &h).unwrap().params);
    assert_eq!(train_proposal(&data, &h).unwrap().params, train_proposal(&data, &h).unwrap().params);
}

#[test]
fn single_class_data_is_rejected() {
    let data = small_batch(8);
    let h = Hyper { iterations: 1, ..Hyper::default() };
    let only = |label: bool| TrainBatch {
        examples: data.examples.iter().cloned().map(|mut e| {
            e.label = label;
            e
        }).collect(),
        norm: data.norm,
    };
    assert!(matches!(train_evaluation(&only(true), &h), Err(kptool::Error::NoNegativeData)));
    assert!(matches!(train_evaluation(&only(false), &h), Err(kptool::Error::NoPositiveData)));
    assert!(matches!(train_proposal(&only(false), &h), Err(kptool::Error::NoPositiveData)));
}

#[test]
fn unimodal_positives_concentrate_proposals() {
    use kptool::geometry::transform_cloud;
    use kptool::geometry::PlanarPose;
    use kptool::toolgen::{generate_tool, render_cloud, Category};
    // hammers whose recorded function point is always on the head
    let mut r = rng::rng(40);
    let mut samples = Vec::new();
    let mut heads = Vec::new();
    for i in 0..160 {
        let spec = generate_tool(Category::Hammer, 1000 + i).unwrap();
        let local = render_cloud(&spec, 256, 0.001, i).unwrap();
        let pose = PlanarPose::new(r.gen_range(-0.2..0.2), r.gen_range(-0.2..0.2), r.gen_range(-3.1..3.1));
        let cloud = transform_cloud(&local, &pose, [0.0, 0.0]);
        let head_part = &spec.parts[1];
        let on_head: Vec<[f64; 2]> = local
            .points
            .iter()
            .filter(|p| head_part.contains([p[0], p[1]]))
            .map(|p| pose.apply([p[0], p[1]]))
            .collect();
        let on_handle: Vec<[f64; 2]> = local
            .points
            .iter()
            .filter(|p| !head_part.contains([p[0], p[1]]))
            .map(|p| pose.apply([p[0], p[1]]))
            .collect();
        let f = on_head[r.gen_range(0..on_head.len())];
        let g = on_handle[on_handle.len() / 2];
        let k = ToolKeypoints::new(g, f, [f[0] + 1.0, f[1]]);
        samples.push((cloud, k, true));
        heads.push(on_head);
    }
    let (train, test) = samples.split_at(120);
    let data = TrainBatch::fitted(&common::refs(train), 64).unwrap();
    let h = Hyper { iterations: 1500, input_points: 64, ..Hyper::default() };
    let net = train_proposal(&data, &h).unwrap().params;
    let (mut near, mut total) = (0, 0);
    for ((cloud, _, _), head) in test.iter().zip(&heads[120..]) {
        for k in propose(cloud, 32, 1, &net).unwrap_or_default() {
            total += 1;
            if head.iter().any(|p| kptool::geometry::v2::dist(*p, k.function) <= 0.03) {
                near += 1;
            }
        }
    }
    let frac = near as f64 / total as f64;
    assert!(total > 0 && frac >= 0.8, "{near}/{total}");
}

#[test]
fn separable_data_is_learned_and_noise_is_not() {
    let train = common::separable(600, 51);
    let test = common::separable(400, 52);
    let data = TrainBatch::fitted(&common::refs(&train), 64).unwrap();
    let h = Hyper { iterations: 1500, input_points: 64, ..Hyper::default() };
    let net = train_evaluation(&data, &h).unwrap().params;
    let scores: Vec<f64> = test.iter().map(|(c, k, _)| evaluate(c, k, &net).unwrap()).collect();
    let labels: Vec<bool> = test.iter().map(|t| t.2).collect();
    let a = auc(&scores, &labels);
    assert!(a >= 0.95, "separable auc {a}");

    let noise_train = common::coin_flips(600, 53);
    let noise_test = common::coin_flips(2000, 54);
    let data = TrainBatch::fitted(&common::refs(&noise_train), 64).unwrap();
    let net = train_evaluation(&data, &h).unwrap().params;
    let scores: Vec<f64> = noise_test.iter().map(|(c, k, _)| evaluate(c, k, &net).unwrap()).collect();
    let labels: Vec<bool> = noise_test.iter().map(|t| t.2).collect();
    let a = auc(&scores, &labels);
    assert!((0.45..=0.55).contains(&a), "noise auc {a}");
}
