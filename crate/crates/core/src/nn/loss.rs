use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::discrepancy::{cmd_value_grad, CmdConfig, Support};
use crate::error::Result;

/// One epoch's objective split into its terms.
/// `total = ce + lambda·reg_cmd + l2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub reg_cmd: f64,
    pub l2: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(ce: f64, lambda: f64, reg_cmd: f64, l2: f64) -> Self {
        LossBreakdown {
            ce,
            reg_cmd,
            l2,
            total: ce + lambda * reg_cmd + l2,
        }
    }
}

/// Weighted softmax cross-entropy `(1/M) Σ β_i·(−log softmax(z_i)[y_i])`
/// and its gradient with respect to the logits.
pub fn weighted_softmax_ce(logits: ArrayView2<f64>, labels: &[usize], beta: Option<&[f64]>) -> (f64, Array2<f64>) {
    let m = logits.nrows();
    assert_eq!(labels.len(), m, "one label per logit row");
    let mut grad = Array2::<f64>::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, row) in logits.outer_iter().enumerate() {
        let b = beta.map_or(1.0, |b| b[i]);
        let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let exp = row.mapv(|v| (v - max).exp());
        let z: f64 = exp.sum();
        loss += b * (z.ln() - (row[labels[i]] - max));
        let mut g = grad.row_mut(i);
        g.assign(&(exp / z));
        g[labels[i]] -= 1.0;
        g *= b / m as f64;
    }
    (loss / m as f64, grad)
}

/// CMD regularizer value and gradients for both samples.
pub fn cmd_reg_value_grad(
    z_train: ArrayView2<f64>,
    z_iid: ArrayView2<f64>,
    cfg: CmdConfig,
    support: Support,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    cmd_value_grad(z_train, z_iid, cfg, support)
}

/// `(wd/2)·Σ‖W‖²` over the given weight matrices; its gradient is `wd·W`.
pub fn l2_penalty<'a>(weights: impl IntoIterator<Item = ArrayView2<'a, f64>>, weight_decay: f64) -> f64 {
    0.5 * weight_decay * weights.into_iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
}
