//! Independent oracles used by the integration and acceptance tests.
#![allow(dead_code)]

use bfnn_core::nn::loss::LossTerm;
use bfnn_core::nn::{lambda_forward, se_loss, BfnnModel, Mode};
use bfnn_core::rng::{rng_from_seed, uniform};
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::Rng;

/// Loss of a training-mode pass computed only through the public forward,
/// Lambda and loss definitions (no gradient code involved).
pub fn train_mode_loss(
    model: &BfnnModel,
    x: ArrayView2<f64>,
    hs: &[Vec<Complex64>],
    gammas: &[f64],
) -> f64 {
    let theta = model.forward(x, Mode::Train).unwrap().theta;
    let vs: Vec<Vec<Complex64>> = theta
        .rows()
        .into_iter()
        .map(|r| lambda_forward(&r.to_vec()))
        .collect();
    let batch: Vec<LossTerm> = (0..hs.len())
        .map(|i| (&hs[i][..], gammas[i], &vs[i][..]))
        .collect();
    se_loss(&batch).unwrap()
}

#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

/// Relative error with a floor so that vanishing gradients compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[allow(clippy::too_many_arguments)]
/// Central-difference check of `analytic` (ordered like `model.param_groups()`)
/// on up to `per_group` random entries of every group.
pub fn check_against_central_differences(
    model: &BfnnModel,
    analytic: &[Vec<f64>],
    x: ArrayView2<f64>,
    hs: &[Vec<Complex64>],
    gammas: &[f64],
    step: f64,
    per_group: usize,
    seed: u64,
) -> Vec<GroupCheck> {
    let mut pick = rng_from_seed(seed);
    let names: Vec<(String, usize)> = model
        .param_groups()
        .iter()
        .map(|(n, p)| (n.clone(), p.len()))
        .collect();
    let mut out = Vec::new();
    for (g, (name, len)) in names.into_iter().enumerate() {
        let idx: Vec<usize> = if len <= per_group {
            (0..len).collect()
        } else {
            (0..per_group).map(|_| pick.random_range(0..len)).collect()
        };
        let mut worst: f64 = 0.0;
        for &i in &idx {
            let mut plus = model.clone();
            plus.params_mut()[g][i] += step;
            let mut minus = model.clone();
            minus.params_mut()[g][i] -= step;
            let fd = (train_mode_loss(&plus, x, hs, gammas)
                - train_mode_loss(&minus, x, hs, gammas))
                / (2.0 * step);
            worst = worst.max(rel_err(analytic[g][i], fd));
        }
        out.push(GroupCheck {
            name,
            checked: idx.len(),
            max_rel_err: worst,
        });
    }
    out
}

pub fn random_batch(
    rows: usize,
    n_t: usize,
    seed: u64,
) -> (Array2<f64>, Vec<Vec<Complex64>>, Vec<f64>) {
    let mut r = rng_from_seed(seed);
    let hs: Vec<Vec<Complex64>> = (0..rows)
        .map(|_| {
            (0..n_t)
                .map(|_| bfnn_core::rng::complex_gaussian(&mut r, 1.0))
                .collect()
        })
        .collect();
    let gammas: Vec<f64> = (0..rows)
        .map(|_| 10f64.powf(uniform(&mut r, -2.0, 2.0)))
        .collect();
    let x =
        bfnn_core::nn::pack_batch(n_t, hs.iter().zip(&gammas).map(|(h, &g)| (&h[..], g))).unwrap();
    (x, hs, gammas)
}

/// Best `|h^H v|` over phases quantized to `levels` steps with element 0 fixed at phase 0.
/// Returns the amplitude and the argmax phases.
pub fn brute_force_phases(h: &[Complex64], levels: usize) -> (f64, Vec<f64>) {
    assert_eq!(h.len(), 3, "exhaustive search is for three elements");
    let step = 2.0 * std::f64::consts::PI / levels as f64;
    let table: Vec<Complex64> = (0..levels)
        .map(|k| Complex64::from_polar(1.0, k as f64 * step))
        .collect();
    let base = h[0].conj();
    let mut best = (f64::MIN, vec![0.0; 3]);
    for (a, va) in table.iter().enumerate() {
        let partial = base + h[1].conj() * va;
        for (b, vb) in table.iter().enumerate() {
            let amp = (partial + h[2].conj() * vb).norm();
            if amp > best.0 {
                best = (amp, vec![0.0, a as f64 * step, b as f64 * step]);
            }
        }
    }
    best
}
