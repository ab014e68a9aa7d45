//! Dense layers, activations, dropout, losses and Adam, each with
//! hand-derived gradients.

mod adam;
mod layer;
mod loss;

pub use adam::{AdamConfig, AdamState};
pub use layer::{dropout_mask, Activation, DenseLayer, Features};
pub use loss::{cmd_reg_value_grad, l2_penalty, weighted_softmax_ce, LossBreakdown};

use ndarray::Array2;
use rand::Rng;

/// Activations of a plain feed-forward stack: ReLU on hidden layers, tanh on
/// the last. Dropout hits every layer input in training mode.
pub fn mlp_forward<R: Rng>(
    layers: &[DenseLayer],
    x: &Features,
    dropout_p: f64,
    train_mode: bool,
    rng: &mut R,
) -> crate::Result<Vec<Array2<f64>>> {
    let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let input = if i == 0 {
            x.clone()
        } else {
            Features::Dense(outputs[i - 1].clone())
        };
        if input.ncols() != layer.in_dim() {
            return Err(crate::Error::DimensionMismatch(format!(
                "layer {i} expects {} inputs, got {}",
                layer.in_dim(),
                input.ncols()
            )));
        }
        let input = if train_mode { input.dropout(dropout_p, rng).0 } else { input };
        let act = if i + 1 == layers.len() {
            Activation::Tanh
        } else {
            Activation::Relu
        };
        outputs.push(act.apply(layer.forward(&input)));
    }
    Ok(outputs)
}
