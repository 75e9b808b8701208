//! The beamforming network: `[BN, Dense, ReLU]*, BN, Dense, Lambda`.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::input::input_dim;
use super::layers::{BatchNorm, BatchNormCache, BatchNormSpec, Dense};
use crate::beamformer::AnalogBeamformer;
use crate::error::{Error, Result};
use crate::rng;

/// Hidden widths of the reference network.
pub const TABLE_HIDDEN: [usize; 2] = [256, 128];

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    BatchNorm(BatchNorm),
    Dense(Dense),
    Relu,
    /// Maps phases to unit-modulus coefficients; no parameters.
    Lambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    BatchNorm(BatchNormSpec),
    Dense { input: usize, output: usize },
    Relu { dim: usize },
    Lambda { dim: usize },
}

/// Condition (pilot quality, assumed path count) a model was trained for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainCondition {
    #[serde(with = "crate::estimator::pnr_serde")]
    pub pnr_db: f64,
    pub l_est: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMeta {
    pub n_t: usize,
    pub init_seed: u64,
    pub epochs_trained: usize,
    pub config_hash: Option<String>,
    pub condition: Option<TrainCondition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfnnModel {
    pub layers: Vec<Layer>,
    pub meta: ModelMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch normalization.
    Train,
    /// Running statistics.
    Infer,
}

#[derive(Debug, Clone)]
enum Cache {
    Dense(Array2<f64>),
    BatchNorm(BatchNormCache),
    Relu(Array2<f64>),
    None,
}

/// Result of a forward pass with the activations needed for backward.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub mode: Mode,
    /// Phases, one row per sample.
    pub theta: Array2<f64>,
    caches: Vec<Cache>,
}

impl ForwardPass {
    pub fn beamformers(&self) -> Vec<AnalogBeamformer> {
        self.theta
            .rows()
            .into_iter()
            .map(|r| AnalogBeamformer::from_phases(r.to_vec()))
            .collect()
    }
}

/// Gradients in the order of [`BfnnModel::param_groups`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl BfnnModel {
    /// The reference architecture for `n_t` antennas.
    pub fn new(n_t: usize, seed: u64) -> Result<Self> {
        Self::with_hidden(n_t, &TABLE_HIDDEN, seed)
    }

    /// Same structure with custom hidden widths.
    pub fn with_hidden(n_t: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if n_t == 0 || hidden.contains(&0) {
            return Err(Error::structural("layer widths must be positive"));
        }
        let mut rng = rng::rng_from_seed(seed);
        let mut dims = vec![input_dim(n_t)];
        dims.extend_from_slice(hidden);
        dims.push(n_t);
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            layers.push(Layer::BatchNorm(BatchNorm::new(w[0])));
            layers.push(Layer::Dense(Dense::init(w[0], w[1], &mut rng)));
            if i + 2 < dims.len() {
                layers.push(Layer::Relu);
            }
        }
        layers.push(Layer::Lambda);
        Ok(Self {
            layers,
            meta: ModelMeta {
                n_t,
                init_seed: seed,
                ..Default::default()
            },
        })
    }

    /// Rebuilds the layer stack from specs with fresh parameters.
    pub fn from_specs(specs: &[LayerSpec], meta: ModelMeta) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut width = input_dim(meta.n_t);
        for spec in specs {
            let (layer, in_dim, out_dim) = match *spec {
                LayerSpec::BatchNorm(s) => {
                    (Layer::BatchNorm(BatchNorm::from_spec(s)), s.dim, s.dim)
                }
                LayerSpec::Dense { input, output } => (
                    Layer::Dense(Dense {
                        weight: Array2::zeros((input, output)),
                        bias: ndarray::Array1::zeros(output),
                    }),
                    input,
                    output,
                ),
                LayerSpec::Relu { dim } => (Layer::Relu, dim, dim),
                LayerSpec::Lambda { dim } => (Layer::Lambda, dim, dim),
            };
            if in_dim != width {
                return Err(Error::structural(format!(
                    "layer {spec:?} expects width {in_dim}, got {width}"
                )));
            }
            width = out_dim;
            layers.push(layer);
        }
        if !matches!(layers.last(), Some(Layer::Lambda)) || width != meta.n_t {
            return Err(Error::structural(
                "stack must end in a Lambda layer of width n_t",
            ));
        }
        Ok(Self { layers, meta })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        let mut width = input_dim(self.meta.n_t);
        self.layers
            .iter()
            .map(|l| match l {
                Layer::BatchNorm(bn) => LayerSpec::BatchNorm(bn.spec()),
                Layer::Dense(d) => {
                    width = d.output();
                    LayerSpec::Dense {
                        input: d.input(),
                        output: d.output(),
                    }
                }
                Layer::Relu => LayerSpec::Relu { dim: width },
                Layer::Lambda => LayerSpec::Lambda { dim: width },
            })
            .collect()
    }

    pub fn n_t(&self) -> usize {
        self.meta.n_t
    }

    pub fn input_dim(&self) -> usize {
        input_dim(self.meta.n_t)
    }

    pub fn dense_layers(&self) -> impl Iterator<Item = &Dense> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Dense(d) => Some(d),
            _ => None,
        })
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm> {
        self.layers.iter().filter_map(|l| match l {
            Layer::BatchNorm(b) => Some(b),
            _ => None,
        })
    }

    /// Trainable parameter groups, named, in declaration order.
    pub fn param_groups(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        let (mut nb, mut nd) = (0, 0);
        for layer in &self.layers {
            match layer {
                Layer::BatchNorm(bn) => {
                    out.push((
                        format!("bn{nb}.scale"),
                        bn.scale.as_slice().expect("contiguous"),
                    ));
                    out.push((
                        format!("bn{nb}.shift"),
                        bn.shift.as_slice().expect("contiguous"),
                    ));
                    nb += 1;
                }
                Layer::Dense(d) => {
                    out.push((
                        format!("dense{nd}.weight"),
                        d.weight.as_slice().expect("contiguous"),
                    ));
                    out.push((
                        format!("dense{nd}.bias"),
                        d.bias.as_slice().expect("contiguous"),
                    ));
                    nd += 1;
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::BatchNorm(bn) => {
                    out.push(bn.scale.as_slice_mut().expect("contiguous"));
                    out.push(bn.shift.as_slice_mut().expect("contiguous"));
                }
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice_mut().expect("contiguous"));
                    out.push(d.bias.as_slice_mut().expect("contiguous"));
                }
                _ => {}
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.param_groups()
            .iter()
            .all(|(_, p)| p.iter().all(|v| v.is_finite()))
            && self.batch_norms().all(|b| {
                b.running_mean
                    .iter()
                    .chain(&b.running_var)
                    .all(|v| v.is_finite())
            })
    }

    /// Runs the stack on a `(batch, 2 n_t + 1)` input, returning phases and caches.
    pub fn forward(&self, x: ArrayView2<f64>, mode: Mode) -> Result<ForwardPass> {
        if x.ncols() != self.input_dim() {
            return Err(Error::structural(format!(
                "input width {} does not match model input {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::domain("empty batch"));
        }
        let mut act = x.to_owned();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer {
                Layer::BatchNorm(bn) => match mode {
                    Mode::Train => {
                        let (y, cache) = bn.forward_train(act.view());
                        caches.push(Cache::BatchNorm(cache));
                        act = y;
                    }
                    Mode::Infer => {
                        act = bn.forward_infer(act.view());
                        caches.push(Cache::None);
                    }
                },
                Layer::Dense(d) => {
                    let y = d.forward(act.view());
                    caches.push(Cache::Dense(std::mem::replace(&mut act, y)));
                }
                Layer::Relu => {
                    act.mapv_inplace(|v| v.max(0.0));
                    caches.push(Cache::Relu(act.clone()));
                }
                Layer::Lambda => caches.push(Cache::None),
            }
        }
        Ok(ForwardPass {
            mode,
            theta: act,
            caches,
        })
    }

    /// Inference-mode beamformers for a batch of packed inputs.
    pub fn infer(&self, x: ArrayView2<f64>) -> Result<Vec<AnalogBeamformer>> {
        Ok(self.forward(x, Mode::Infer)?.beamformers())
    }

    /// Folds the batch statistics of a training pass into the running statistics.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) -> Result<()> {
        if pass.mode != Mode::Train || pass.caches.len() != self.layers.len() {
            return Err(Error::State(
                "running statistics need a training-mode pass of this model".into(),
            ));
        }
        for (layer, cache) in self.layers.iter_mut().zip(&pass.caches) {
            if let (Layer::BatchNorm(bn), Cache::BatchNorm(c)) = (layer, cache) {
                bn.update_running(c);
            }
        }
        Ok(())
    }

    /// Back-propagates `d loss / d theta` through a training-mode pass.
    pub fn backward(&self, pass: &ForwardPass, dtheta: ArrayView2<f64>) -> Result<Gradients> {
        if pass.mode != Mode::Train || pass.caches.len() != self.layers.len() {
            return Err(Error::State(
                "backward needs a training-mode forward pass of this model".into(),
            ));
        }
        if dtheta.dim() != pass.theta.dim() {
            return Err(Error::structural(format!(
                "gradient shape {:?} vs output shape {:?}",
                dtheta.dim(),
                pass.theta.dim()
            )));
        }
        let mut grad = dtheta.to_owned();
        // Pairs of groups collected back to front, then reversed.
        let mut groups: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for (idx, (layer, cache)) in self.layers.iter().zip(&pass.caches).enumerate().rev() {
            let need_input = idx > 0;
            match (layer, cache) {
                (Layer::Lambda, _) => {}
                (Layer::Relu, Cache::Relu(out)) => {
                    grad.zip_mut_with(out, |g, &o| {
                        if o <= 0.0 {
                            *g = 0.0
                        }
                    });
                }
                (Layer::Dense(d), Cache::Dense(input)) => {
                    let (dw, db, dx) = d.backward(input.view(), grad.view(), need_input);
                    groups.push((dw.iter().copied().collect(), db.to_vec()));
                    if let Some(dx) = dx {
                        grad = dx;
                    }
                }
                (Layer::BatchNorm(bn), Cache::BatchNorm(c)) => {
                    let (dscale, dshift, dx) = bn.backward(c, grad.view(), need_input);
                    groups.push((dscale.to_vec(), dshift.to_vec()));
                    if let Some(dx) = dx {
                        grad = dx;
                    }
                }
                _ => return Err(Error::State("forward cache does not match layer".into())),
            }
        }
        groups.reverse();
        Ok(Gradients(
            groups.into_iter().flat_map(|(a, b)| [a, b]).collect(),
        ))
    }
}
