//! Mini-batch training with Adam, validation tracking and plateau halving.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamParams, AdamState};
use super::input::pack_batch;
use super::loss::se_loss_and_grad;
use super::model::{BfnnModel, Mode};
use crate::channel::ChannelDataset;
use crate::error::{Error, Result};
use crate::estimator::ChannelEstimate;
use crate::rng;

/// Halve-on-plateau learning-rate rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateauSchedule {
    /// Epochs without validation improvement before the rate is cut.
    pub patience: usize,
    pub factor: f64,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        Self {
            patience: 5,
            factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub lr_schedule: Option<PlateauSchedule>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            lr_schedule: Some(PlateauSchedule::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon.is_nan()
            || self.epsilon <= 0.0
        {
            return Err(Error::Config(
                "Adam betas must lie in [0, 1) and epsilon be positive".into(),
            ));
        }
        if let Some(s) = self.lr_schedule {
            if s.patience == 0 || !(s.factor > 0.0 && s.factor <= 1.0) {
                return Err(Error::Config(
                    "schedule needs patience >= 1 and factor in (0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    fn adam(&self, learning_rate: f64) -> AdamParams {
        AdamParams {
            learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Network inputs paired with the true channels and SNRs used by the loss.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub inputs: Array2<f64>,
    pub channels: Vec<Vec<Complex64>>,
    pub gammas: Vec<f64>,
}

impl TrainingSet {
    /// Inputs from estimates, loss from the true channels; `gamma_est = gamma`.
    pub fn from_estimates(dataset: &ChannelDataset, estimates: &[ChannelEstimate]) -> Result<Self> {
        if estimates.len() != dataset.len() {
            return Err(Error::structural(format!(
                "{} estimates for {} samples",
                estimates.len(),
                dataset.len()
            )));
        }
        for (i, (e, s)) in estimates.iter().zip(&dataset.samples).enumerate() {
            if e.source_seed != s.seed {
                return Err(Error::structural(format!(
                    "estimate {i} belongs to a different sample"
                )));
            }
        }
        let inputs = pack_batch(
            dataset.n_t(),
            estimates
                .iter()
                .zip(&dataset.samples)
                .map(|(e, s)| (&e.h_est[..], s.snr)),
        )?;
        Ok(Self::assemble(dataset, inputs))
    }

    /// Inputs built from the true channels.
    pub fn perfect_csi(dataset: &ChannelDataset) -> Result<Self> {
        let inputs = pack_batch(
            dataset.n_t(),
            dataset.samples.iter().map(|s| (&s.h[..], s.snr)),
        )?;
        Ok(Self::assemble(dataset, inputs))
    }

    fn assemble(dataset: &ChannelDataset, inputs: Array2<f64>) -> Self {
        Self {
            inputs,
            channels: dataset.samples.iter().map(|s| s.h.clone()).collect(),
            gammas: dataset.samples.iter().map(|s| s.snr).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn n_t(&self) -> usize {
        self.inputs.ncols() / 2
    }

    fn batch_loss(
        &self,
        model: &BfnnModel,
        rows: &[usize],
        mode: Mode,
    ) -> Result<(f64, super::model::ForwardPass)> {
        let x = self.inputs.select(Axis(0), rows);
        let pass = model.forward(x.view(), mode)?;
        let hs: Vec<&[Complex64]> = rows.iter().map(|&i| &self.channels[i][..]).collect();
        let gs: Vec<f64> = rows.iter().map(|&i| self.gammas[i]).collect();
        let (loss, _) = se_loss_and_grad(&hs, &gs, pass.theta.view())?;
        Ok((loss, pass))
    }
}

/// Mean inference-mode loss over a whole set.
pub fn evaluate_loss(model: &BfnnModel, set: &TrainingSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::domain("empty evaluation set"));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(1024) {
        let (loss, _) = set.batch_loss(model, chunk, Mode::Infer)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: BfnnModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

/// Trains `model` on `train`, keeping the best weights on `val`.
///
/// Shuffling uses a stream derived from `cfg.seed`; the run is a pure
/// function of its inputs. Trailing batches of one sample are dropped
/// since batch statistics are undefined for them.
pub fn train(
    mut model: BfnnModel,
    train: &TrainingSet,
    val: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    for set in [train, val] {
        if set.inputs.ncols() != model.input_dim() {
            return Err(Error::structural(format!(
                "data has input width {}, model expects {}",
                set.inputs.ncols(),
                model.input_dim()
            )));
        }
    }
    if train.len() < 2 || val.is_empty() {
        return Err(Error::domain(
            "training needs at least two samples and a nonempty validation set",
        ));
    }

    let mut shuffle_rng = rng::rng_from_seed(rng::derive_seed(cfg.seed, 0x5348_5546));
    let mut adam = AdamState::new(model.param_groups().iter().map(|(_, p)| *p));
    let mut lr = cfg.learning_rate;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, BfnnModel)> = None;
    let mut stale = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        let mut seen = 0usize;
        for rows in order.chunks(cfg.batch_size) {
            if rows.len() < 2 {
                continue;
            }
            let x = train.inputs.select(Axis(0), rows);
            let pass = model.forward(x.view(), Mode::Train)?;
            let hs: Vec<&[Complex64]> = rows.iter().map(|&i| &train.channels[i][..]).collect();
            let gs: Vec<f64> = rows.iter().map(|&i| train.gammas[i]).collect();
            let (loss, dtheta) = se_loss_and_grad(&hs, &gs, pass.theta.view())?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss {loss} at epoch {epoch}"
                )));
            }
            let grads = model.backward(&pass, dtheta.view())?;
            model.update_running_stats(&pass)?;
            adam_step(&mut model.params_mut(), &grads.0, &mut adam, &cfg.adam(lr))?;
            sum += loss * rows.len() as f64;
            seen += rows.len();
        }
        if !model.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite parameters after epoch {epoch}"
            )));
        }
        let val_loss = evaluate_loss(&model, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        history.push(EpochRecord {
            epoch,
            train_loss: sum / seen.max(1) as f64,
            val_loss,
            learning_rate: lr,
        });

        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if let Some(s) = cfg.lr_schedule {
                if stale >= s.patience {
                    lr *= s.factor;
                    stale = 0;
                }
            }
        }
    }

    let (mut model, best_epoch) = match best {
        Some((_, e, m)) => (m, Some(e)),
        None => (model, None),
    };
    model.meta.epochs_trained = cfg.epochs;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_dataset, ChannelConfig};

    fn small_sets(n_t: usize, n: usize) -> (TrainingSet, TrainingSet) {
        let cfg = ChannelConfig::default().with_n_t(n_t);
        let tr = generate_dataset(&cfg, 1, n).unwrap();
        let va = generate_dataset(&cfg, 2, n / 4).unwrap();
        (
            TrainingSet::perfect_csi(&tr).unwrap(),
            TrainingSet::perfect_csi(&va).unwrap(),
        )
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let (tr, va) = small_sets(4, 200);
        let model = BfnnModel::with_hidden(4, &[16, 8], 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 32,
            ..Default::default()
        };
        let out = train(model.clone(), &tr, &va, &cfg).unwrap();
        for ((_, a), (_, b)) in out.model.param_groups().iter().zip(model.param_groups()) {
            assert_eq!(*a, b);
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let (tr, va) = small_sets(4, 50);
        let model = BfnnModel::with_hidden(4, &[8], 3).unwrap();
        let out = train(
            model.clone(),
            &tr,
            &va,
            &TrainConfig {
                epochs: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.model.layers, model.layers);
        assert!(out.history.is_empty());
    }

    #[test]
    fn training_is_bit_reproducible_and_improves() {
        let (tr, va) = small_sets(4, 400);
        let model = BfnnModel::with_hidden(4, &[32, 16], 5).unwrap();
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 32,
            seed: 11,
            ..Default::default()
        };
        let a = train(model.clone(), &tr, &va, &cfg).unwrap();
        let b = train(model.clone(), &tr, &va, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        let first = a.history.first().unwrap().val_loss;
        let best = a
            .history
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::MAX, f64::min);
        assert!(best <= first);
        assert!(a.model.all_finite());
    }

    #[test]
    fn plateau_halves_rate() {
        let (tr, va) = small_sets(4, 100);
        let model = BfnnModel::with_hidden(4, &[8], 0).unwrap();
        // A zero rate never improves after the first epoch, so the schedule fires.
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 8,
            lr_schedule: Some(PlateauSchedule {
                patience: 2,
                factor: 0.5,
            }),
            ..Default::default()
        };
        let out = train(model, &tr, &va, &cfg).unwrap();
        assert_eq!(out.history.len(), 8);
    }

    #[test]
    fn mismatched_width_rejected() {
        let (tr, va) = small_sets(4, 20);
        let model = BfnnModel::with_hidden(8, &[8], 0).unwrap();
        assert!(matches!(
            train(model, &tr, &va, &TrainConfig::default()),
            Err(Error::Structural(_))
        ));
    }
}
