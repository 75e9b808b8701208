//! Inference cost accounting: dense-layer FLOPs and per-layer parameter counts.
//!
//! Batch normalization and the Lambda layer are not counted, matching the
//! usual convention of reporting dense layers only.

use super::input::input_dim;
use super::model::{BfnnModel, Layer};

/// `(2 N_I - 1) N_O` multiply/add operations for one dense layer.
pub fn dense_flops(input: usize, output: usize) -> u64 {
    (2 * input as u64 - 1) * output as u64
}

pub fn count_flops(model: &BfnnModel) -> u64 {
    model
        .dense_layers()
        .map(|d| dense_flops(d.input(), d.output()))
        .sum()
}

/// One row of the parameter table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamRow {
    pub layer: String,
    pub output_dim: usize,
    pub params: usize,
}

/// Input, dense and Lambda rows; dense rows count `N_I N_O + N_O`.
pub fn count_params(model: &BfnnModel) -> Vec<ParamRow> {
    let mut rows = vec![ParamRow {
        layer: "input".into(),
        output_dim: input_dim(model.n_t()),
        params: 0,
    }];
    let mut dense = 0;
    for layer in &model.layers {
        match layer {
            Layer::Dense(d) => {
                dense += 1;
                rows.push(ParamRow {
                    layer: format!("dense{dense}"),
                    output_dim: d.output(),
                    params: d.input() * d.output() + d.output(),
                });
            }
            Layer::Lambda => rows.push(ParamRow {
                layer: "lambda".into(),
                output_dim: model.n_t(),
                params: 0,
            }),
            _ => {}
        }
    }
    rows
}
