mod common;

use bfnn_core::nn::{se_loss_and_grad, BfnnModel, Mode};
use common::{check_against_central_differences, random_batch};
use ndarray::Array2;
use num_complex::Complex64;

fn analytic(
    model: &BfnnModel,
    x: &Array2<f64>,
    hs: &[Vec<Complex64>],
    gammas: &[f64],
) -> Vec<Vec<f64>> {
    let pass = model.forward(x.view(), Mode::Train).unwrap();
    let refs: Vec<&[Complex64]> = hs.iter().map(|h| &h[..]).collect();
    let (_, dtheta) = se_loss_and_grad(&refs, gammas, pass.theta.view()).unwrap();
    model.backward(&pass, dtheta.view()).unwrap().0
}

#[test]
fn small_network_matches_finite_differences() {
    let n_t = 4;
    for seed in 0..3 {
        let model = BfnnModel::with_hidden(n_t, &[10, 7], 100 + seed).unwrap();
        let (x, hs, gammas) = random_batch(6, n_t, seed);
        let grads = analytic(&model, &x, &hs, &gammas);
        for g in check_against_central_differences(
            &model,
            &grads,
            x.view(),
            &hs,
            &gammas,
            1e-5,
            1000,
            seed,
        ) {
            assert!(g.max_rel_err < 1e-4, "{}: {}", g.name, g.max_rel_err);
        }
    }
}

#[test]
fn zero_channels_give_zero_gradients() {
    let model = BfnnModel::with_hidden(4, &[8], 1).unwrap();
    let (x, hs, gammas) = random_batch(5, 4, 9);
    let zeros: Vec<Vec<Complex64>> = hs
        .iter()
        .map(|h| vec![Complex64::new(0.0, 0.0); h.len()])
        .collect();
    for g in analytic(&model, &x, &zeros, &gammas) {
        assert!(g.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn duplicated_batch_gives_same_gradients() {
    let model = BfnnModel::with_hidden(4, &[8, 6], 2).unwrap();
    let (x, hs, gammas) = random_batch(3, 4, 4);
    let once = analytic(&model, &x, &hs, &gammas);

    let x2 = ndarray::concatenate(ndarray::Axis(0), &[x.view(), x.view()]).unwrap();
    let hs2: Vec<_> = hs.iter().chain(&hs).cloned().collect();
    let g2: Vec<_> = gammas.iter().chain(&gammas).copied().collect();
    let twice = analytic(&model, &x2, &hs2, &g2);
    for (a, b) in once.iter().zip(&twice) {
        for (p, q) in a.iter().zip(b) {
            assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0), "{p} vs {q}");
        }
    }
}
