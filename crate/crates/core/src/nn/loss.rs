//! Negative mean spectral efficiency and its gradient with respect to the phases.

use std::f64::consts::LN_2;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// One term of the loss: true channel, linear SNR, beamformer.
pub type LossTerm<'a> = (&'a [Complex64], f64, &'a [Complex64]);

/// `-(1/N) sum_n log2(1 + (gamma_n / n_t) |h_n^H v_n|^2)`.
pub fn se_loss(batch: &[LossTerm<'_>]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::domain("loss of an empty batch"));
    }
    let mut total = 0.0;
    for (i, &(h, gamma, v)) in batch.iter().enumerate() {
        if h.len() != v.len() {
            return Err(Error::domain(format!(
                "term {i}: channel length {} vs beamformer {}",
                h.len(),
                v.len()
            )));
        }
        let mut re = 0.0;
        let mut im = 0.0;
        for (hk, vk) in h.iter().zip(v) {
            // conj(h) * v
            re += hk.re * vk.re + hk.im * vk.im;
            im += hk.re * vk.im - hk.im * vk.re;
        }
        let gain = re * re + im * im;
        total += (1.0 + gamma / h.len() as f64 * gain).log2();
    }
    Ok(-total / batch.len() as f64)
}

/// Loss for phases `theta` (one row per sample) and `d loss / d theta`.
///
/// With `h = a + jb` and `v = cos(theta) + j sin(theta)`, `s = h^H v` has
/// `Re s = sum a cos + b sin` and `Im s = sum a sin - b cos`, so
/// `d|s|^2 / d theta_i = 2 Re(s) (b_i cos - a_i sin) + 2 Im(s) (a_i cos + b_i sin)`.
pub fn se_loss_and_grad(
    channels: &[&[Complex64]],
    gammas: &[f64],
    theta: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    let (rows, n_t) = theta.dim();
    if rows == 0 {
        return Err(Error::domain("loss of an empty batch"));
    }
    if channels.len() != rows || gammas.len() != rows {
        return Err(Error::structural(format!(
            "{} channels and {} snrs for {rows} output rows",
            channels.len(),
            gammas.len()
        )));
    }
    let mut grad = Array2::zeros((rows, n_t));
    let mut total = 0.0;
    let mut cs = vec![(0.0, 0.0); n_t];
    for (n, (row, mut grow)) in theta.rows().into_iter().zip(grad.rows_mut()).enumerate() {
        let h = channels[n];
        if h.len() != n_t {
            return Err(Error::structural(format!(
                "channel {n} has {} antennas, output has {n_t}",
                h.len()
            )));
        }
        let (mut re, mut im) = (0.0, 0.0);
        for ((t, hk), slot) in row.iter().zip(h).zip(cs.iter_mut()) {
            let (s, c) = t.sin_cos();
            *slot = (s, c);
            re += hk.re * c + hk.im * s;
            im += hk.re * s - hk.im * c;
        }
        let snr = gammas[n] / n_t as f64;
        let gain = re * re + im * im;
        total += (1.0 + snr * gain).log2();
        // d(-log2(1 + snr g)) / dg, averaged over the batch.
        let outer = -snr / ((1.0 + snr * gain) * LN_2 * rows as f64);
        for ((g, hk), &(s, c)) in grow.iter_mut().zip(h).zip(&cs) {
            let dgain = 2.0 * re * (hk.im * c - hk.re * s) + 2.0 * im * (hk.re * c + hk.im * s);
            *g = outer * dgain;
        }
    }
    Ok((-total / rows as f64, grad))
}
