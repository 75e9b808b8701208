//! Model files: magic, JSON header, then parameter blobs in layer order.
//!
//! Per batch-norm layer: scale, shift, running mean, running variance.
//! Per dense layer: the row-major `(input, output)` weight, then the bias.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{BfnnModel, Layer, LayerSpec, ModelMeta};
use crate::container::{self, HashWriter, Payload};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"BFNNMD1\n";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    version: u32,
    n_t: usize,
    layers: Vec<LayerSpec>,
    meta: ModelMeta,
}

/// Container errors on model files are all structural.
fn structural(e: Error) -> Error {
    match e {
        Error::CorruptHeader(m) | Error::Truncated(m) | Error::DimensionMismatch(m) => {
            Error::Structural(m)
        }
        other => other,
    }
}

pub fn write_model<W: Write>(model: &BfnnModel, w: &mut W) -> Result<()> {
    let header = ModelHeader {
        version: MODEL_VERSION,
        n_t: model.n_t(),
        layers: model.specs(),
        meta: model.meta.clone(),
    };
    container::write_header(w, MODEL_MAGIC, &header)?;
    for layer in &model.layers {
        match layer {
            Layer::BatchNorm(bn) => {
                for a in [&bn.scale, &bn.shift, &bn.running_mean, &bn.running_var] {
                    container::put_f64s(w, a.as_slice().expect("contiguous"))?;
                }
            }
            Layer::Dense(d) => {
                container::put_f64s(w, d.weight.as_slice().expect("contiguous"))?;
                container::put_f64s(w, d.bias.as_slice().expect("contiguous"))?;
            }
            Layer::Relu | Layer::Lambda => {}
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<BfnnModel> {
    let header: ModelHeader = container::read_header(r, MODEL_MAGIC).map_err(structural)?;
    if header.version != MODEL_VERSION {
        return Err(Error::Structural(format!(
            "unsupported model version {}",
            header.version
        )));
    }
    if header.n_t != header.meta.n_t {
        return Err(Error::structural("header n_t disagrees with metadata"));
    }
    let mut model = BfnnModel::from_specs(&header.layers, header.meta)?;
    let mut payload = Payload::new(r);
    for layer in &mut model.layers {
        match layer {
            Layer::BatchNorm(bn) => {
                for a in [
                    &mut bn.scale,
                    &mut bn.shift,
                    &mut bn.running_mean,
                    &mut bn.running_var,
                ] {
                    payload
                        .f64s(a.as_slice_mut().expect("contiguous"))
                        .map_err(structural)?;
                }
            }
            Layer::Dense(d) => {
                payload
                    .f64s(d.weight.as_slice_mut().expect("contiguous"))
                    .map_err(structural)?;
                payload
                    .f64s(d.bias.as_slice_mut().expect("contiguous"))
                    .map_err(structural)?;
            }
            Layer::Relu | Layer::Lambda => {}
        }
    }
    payload.finish().map_err(structural)?;
    Ok(model)
}

pub fn save_model(model: &BfnnModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = container::create(path.as_ref())?;
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BfnnModel> {
    read_model(&mut container::open(path.as_ref())?)
}

/// Loads a model and checks it was built for `n_t` antennas.
pub fn load_model_for(path: impl AsRef<Path>, n_t: usize) -> Result<BfnnModel> {
    let model = load_model(path)?;
    if model.n_t() != n_t {
        return Err(Error::Structural(format!(
            "model was built for n_t={}, runner uses n_t={n_t}",
            model.n_t()
        )));
    }
    Ok(model)
}

/// SHA-256 of the serialized model.
pub fn model_hash(model: &BfnnModel) -> String {
    let mut hw = HashWriter::default();
    write_model(model, &mut hw).expect("hashing sink cannot fail");
    hw.hex()
}
