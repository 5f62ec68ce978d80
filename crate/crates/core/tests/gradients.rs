mod common;

use common::*;
use ndarray::Array2;
use udalab_core::encoder::{init_model, softmax_rows, Activation, EncoderParams};
use udalab_core::losses::{cross_entropy_loss, fdl_loss, triplet_loss};

#[test]
fn every_loss_through_both_encoders_matches_central_differences() {
    for (name, w) in WEIGHTINGS {
        for seed in 0..20 {
            let mut case = grad_case(1000 + seed, w);
            let err = max_relative_error(&mut case);
            assert!(err < FD_TOL, "{name} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn encoder_jacobian_3x4() {
    // Each output coordinate of a 3-in / 4-out tanh encoder against FD.
    let mut r = rng(5);
    let enc = EncoderParams::random(&[3, 7, 4], Activation::Tanh, &mut r).unwrap();
    let x = gaussian(1, 3, &mut r);
    let (y, cache) = enc.encode(x.view()).unwrap();
    for out in 0..4 {
        let mut g = Array2::zeros((1, 4));
        g[[0, out]] = 1.0;
        let grads = enc.backward(&cache, g.view()).unwrap();
        for (li, layer) in enc.layers.iter().enumerate() {
            for idx in 0..layer.weight.len() {
                let (i, j) = (idx / layer.weight.ncols(), idx % layer.weight.ncols());
                let mut e = enc.clone();
                e.layers[li].weight[[i, j]] += FD_STEP;
                let up = e.features(x.view()).unwrap()[[0, out]];
                e.layers[li].weight[[i, j]] -= 2.0 * FD_STEP;
                let down = e.features(x.view()).unwrap()[[0, out]];
                let num = (up - down) / (2.0 * FD_STEP);
                let ana = grads.layers[li].weight[[i, j]];
                assert!((num - ana).abs() <= 1e-6 * (1.0 + num.abs()), "out {out} layer {li} ({i},{j}): {ana} vs {num}");
            }
        }
    }
    let norms: Vec<f64> = y.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    assert!((norms[0] - 1.0).abs() < 1e-12);
}

#[test]
fn relu_encoder_gradients_away_from_kinks() {
    let mut r = rng(9);
    let enc = EncoderParams::random(&[5, 9, 4], Activation::Relu, &mut r).unwrap();
    let x = gaussian(6, 5, &mut r);
    let (_, cache) = enc.encode(x.view()).unwrap();
    let g = gaussian(6, 4, &mut r);
    let grads = enc.backward(&cache, g.view()).unwrap();
    let objective = |e: &EncoderParams| (&e.features(x.view()).unwrap() * &g).sum();
    // Pre-activations of the hidden layer, to skip coordinates sitting on a kink.
    let pre = x.dot(&enc.layers[0].weight.t()) + &enc.layers[0].bias;
    assert!(pre.iter().all(|v| v.abs() > 1e-4), "fixture has a pre-activation on the kink");
    for li in 0..2 {
        for idx in 0..enc.layers[li].bias.len() {
            let mut e = enc.clone();
            e.layers[li].bias[idx] += FD_STEP;
            let up = objective(&e);
            e.layers[li].bias[idx] -= 2.0 * FD_STEP;
            let down = objective(&e);
            let num = (up - down) / (2.0 * FD_STEP);
            assert!((num - grads.layers[li].bias[idx]).abs() < 1e-6, "layer {li} bias {idx}");
        }
    }
}

#[test]
fn loss_gradients_wrt_features_match_differences() {
    let mut r = rng(3);
    let f1 = gaussian(6, 4, &mut r);
    let f2 = gaussian(6, 4, &mut r);
    let m1 = gaussian(6, 4, &mut r);
    let m2 = gaussian(6, 4, &mut r);
    let out = fdl_loss(f1.view(), f2.view(), m1.view(), m2.view()).unwrap();
    for i in 0..6 {
        for j in 0..4 {
            let mut a = f1.clone();
            a[[i, j]] += FD_STEP;
            let up = fdl_loss(a.view(), f2.view(), m1.view(), m2.view()).unwrap().value;
            a[[i, j]] -= 2.0 * FD_STEP;
            let down = fdl_loss(a.view(), f2.view(), m1.view(), m2.view()).unwrap().value;
            let num = (up - down) / (2.0 * FD_STEP);
            assert!((num - out.grad_f1[[i, j]]).abs() < 1e-8);
        }
    }

    let logits1 = gaussian(5, 3, &mut r);
    let logits2 = gaussian(5, 3, &mut r);
    let labels = [0, 2, 1, 1, 0];
    let p1 = softmax_rows(logits1.view());
    let ce_of = |l2: &Array2<f64>| cross_entropy_loss(p1.view(), softmax_rows(l2.view()).view(), &labels).unwrap();
    let ce = ce_of(&logits2);
    for i in 0..5 {
        for j in 0..3 {
            let mut a = logits2.clone();
            a[[i, j]] += FD_STEP;
            let up = ce_of(&a).value;
            a[[i, j]] -= 2.0 * FD_STEP;
            let down = ce_of(&a).value;
            assert!(((up - down) / (2.0 * FD_STEP) - ce.grad_logits2[[i, j]]).abs() < 1e-8);
        }
    }

    let feats = gaussian(8, 3, &mut r);
    let labels = [0, 0, 1, 1, 2, 2, 3, 3];
    let tri = triplet_loss(feats.view(), &labels, 0.3).unwrap();
    for i in 0..8 {
        for j in 0..3 {
            let mut a = feats.clone();
            a[[i, j]] += FD_STEP;
            let up = triplet_loss(a.view(), &labels, 0.3).unwrap().value;
            a[[i, j]] -= 2.0 * FD_STEP;
            let down = triplet_loss(a.view(), &labels, 0.3).unwrap().value;
            assert!(((up - down) / (2.0 * FD_STEP) - tri.grad[[i, j]]).abs() < 1e-7);
        }
    }
}

#[test]
fn objective_is_deterministic_for_a_seed() {
    let a = init_model(&[4, 6, 3], Activation::Relu, 3, 17).unwrap();
    let b = init_model(&[4, 6, 3], Activation::Relu, 3, 17).unwrap();
    assert_eq!(a.f1.flat_parameters(), b.f1.flat_parameters());
    assert_ne!(a.f1.flat_parameters(), a.f2.flat_parameters());
}
