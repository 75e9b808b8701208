//! Spectral efficiency and the closed-form single-RF-chain baseline.
//!
//! With one RF chain the constant-modulus beamformer maximizing `|h^H v|` is
//! phase matching, `v_i = exp(j arg h_i)`, which reaches `sum_i |h_i|`. This is
//! the fixed point of both manifold and element-wise iterative hybrid
//! beamforming designs in that setting.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::beamformer::AnalogBeamformer;
use crate::channel::inner;
use crate::error::{Error, Result};

/// `log2(1 + (gamma / n_t) |h^H v|^2)` in bits/s/Hz, with `n_t = h.len()`.
pub fn spectral_efficiency(h: &[Complex64], v_rf: &[Complex64], gamma: f64) -> Result<f64> {
    if h.len() != v_rf.len() || h.is_empty() {
        return Err(Error::domain(format!(
            "channel length {} vs beamformer length {}",
            h.len(),
            v_rf.len()
        )));
    }
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::domain(format!(
            "snr must be non-negative, got {gamma}"
        )));
    }
    Ok(se_unchecked(h, v_rf, gamma))
}

pub(crate) fn se_unchecked(h: &[Complex64], v_rf: &[Complex64], gamma: f64) -> f64 {
    let gain = inner(h, v_rf).norm_sqr();
    (gamma / h.len() as f64 * gain).ln_1p() / std::f64::consts::LN_2
}

/// Phase of `z` in `(-pi, pi]`, with zero mapped to zero.
fn phase(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let t = z.im.atan2(z.re);
    if t <= -PI {
        PI
    } else {
        t
    }
}

/// Equal-gain (phase-matching) beamformer for `h`.
///
/// Returns the beamformer and whether `h` was the zero vector, in which case
/// every phase is zero.
pub fn egt_beamformer(h: &[Complex64]) -> (AnalogBeamformer, bool) {
    let theta: Vec<f64> = h.iter().map(|&z| phase(z)).collect();
    let degenerate = h.iter().all(|z| z.re == 0.0 && z.im == 0.0);
    (AnalogBeamformer::from_phases(theta), degenerate)
}

/// Baseline given imperfect CSI: phase matching to the estimate.
pub fn baseline_on_estimate(h_est: &[Complex64]) -> AnalogBeamformer {
    egt_beamformer(h_est).0
}

/// Single-RF-chain constant-modulus optimum `log2(1 + (gamma / n_t) (sum_i |h_i|)^2)`.
pub fn perfect_csi_bound(h: &[Complex64], gamma: f64) -> f64 {
    let amp: f64 = h.iter().map(|z| z.norm()).sum();
    (gamma / h.len() as f64 * amp * amp).ln_1p() / std::f64::consts::LN_2
}
