//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new<'a>(groups: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let m: Vec<Vec<f64>> = groups.into_iter().map(|g| vec![0.0; g.len()]).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// One in-place Adam update of every parameter group.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::structural(format!(
            "{} parameter groups, {} gradient groups, {} moment groups",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, ((p, g), m)) in params.iter().zip(grads).zip(&state.m).enumerate() {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::structural(format!(
                "group {i}: shapes {} / {} / {}",
                p.len(),
                g.len(),
                m.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((pk, &gk), mk), vk) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mk = hp.beta1 * *mk + (1.0 - hp.beta1) * gk;
            *vk = hp.beta2 * *vk + (1.0 - hp.beta2) * gk * gk;
            let m_hat = *mk / c1;
            let v_hat = *vk / c2;
            *pk -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
    }
    Ok(())
}
