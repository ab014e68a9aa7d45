//! Training loop for the shift-robust objective
//!
//! ```text
//! L = (1/M) Σ β_i·CE_i + λ·cmd(Z_train, Z_iid) + (wd/2)·Σ‖W‖²
//! ```
//!
//! with full-batch Adam, validation-best checkpointing, and the evaluation
//! metrics. `Z_iid` is the encoder output on a fixed uniform sample of
//! unlabelled pool nodes, re-encoded on every forward pass so the
//! regularizer's gradient reaches it.

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discrepancy::{cmd, mmd, CmdConfig, KernelConfig, Support};
use crate::error::{Error, Result};
use crate::graph::{DatasetSplit, Graph, NormalizedAdjacency};
use crate::kmm::{solve_weights, InstanceWeights, KmmBounds, KmmProblem, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::models::{argmax_rows, backward, forward, prepare_input, Forward, ModelParams, ModelSpec};
use crate::nn::{cmd_reg_value_grad, l2_penalty, weighted_softmax_ce, AdamConfig, AdamState, Features, LossBreakdown};
use crate::rng::{stream_rng, STREAM_DROPOUT, STREAM_INIT, STREAM_IID_REG, STREAM_PROBE};
use crate::sampler::TrainSplit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub use_cmd_reg: bool,
    pub use_instance_reweight: bool,
    /// Size of the unlabelled regularizer sample; `None` means the split size.
    pub iid_reg_sample_size: Option<usize>,
    /// Redraw the regularizer sample every epoch instead of once per run.
    pub resample_iid_each_epoch: bool,
    pub cmd: CmdConfig,
    pub kmm_bounds: KmmBounds,
    pub kernel: KernelConfig,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            use_cmd_reg: false,
            use_instance_reweight: false,
            iid_reg_sample_size: None,
            resample_iid_each_epoch: false,
            cmd: CmdConfig::default(),
            kmm_bounds: KmmBounds::default(),
            kernel: KernelConfig::default(),
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter("lr must be positive and weight_decay nonnegative".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        KmmBounds::new(self.kmm_bounds.lower, self.kmm_bounds.upper)?;
        Ok(())
    }
}

/// Test metrics of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub valid_micro_f1: f64,
    pub best_epoch: usize,
    /// CMD of `Z` between the split and a fresh uniform probe.
    pub cmd_final: f64,
    /// Squared kernel MMD between the same two samples.
    pub mmd_final: f64,
    pub loss_curve: Vec<LossBreakdown>,
    /// Reference micro-F1 minus this run's, when a reference exists.
    pub delta_f1: Option<f64>,
}

/// `(micro_f1, macro_f1, accuracy)` over `num_classes` classes. A class
/// with no predictions and no true members scores F1 = 0.
pub fn f1_scores(pred: &[usize], truth: &[usize], num_classes: usize) -> (f64, f64, f64) {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fneg = vec![0usize; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let accuracy = correct as f64 / pred.len() as f64;
    let macro_f1 = (0..num_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum::<f64>()
        / num_classes as f64;
    // single-label multiclass: micro-F1 is accuracy
    (accuracy, macro_f1, accuracy)
}

/// Eval-mode metrics of `params` on `nodes`.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ModelParams,
    g: &Graph,
    adj: &NormalizedAdjacency,
    x: &Features,
    nodes: &[usize],
) -> Result<(f64, f64, f64)> {
    let f = forward::<ChaCha8Rng>(spec, params, adj, x, 0.0, None)?;
    Ok(scores_on(&f, g, nodes))
}

fn scores_on(f: &Forward, g: &Graph, nodes: &[usize]) -> (f64, f64, f64) {
    let pred = argmax_rows(f.logits.select(Axis(0), nodes).view());
    let truth: Vec<usize> = nodes.iter().map(|&u| g.label(u)).collect();
    f1_scores(&pred, &truth, g.num_classes())
}

/// What the objective sees in one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub train_nodes: &'a [usize],
    pub beta: Option<&'a [f64]>,
    /// Regularizer sample; the CMD term is skipped when `None` or `lambda = 0`.
    pub iid_nodes: Option<&'a [usize]>,
    pub lambda: f64,
    pub cmd: CmdConfig,
    pub weight_decay: f64,
}

/// Loss breakdown and the gradient of `ce + λ·reg` (the L2 gradient
/// `wd·W` is left to the optimizer).
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ModelParams,
    g: &Graph,
    adj: &NormalizedAdjacency,
    x: &Features,
    obj: &Objective<'_>,
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(LossBreakdown, ModelParams)> {
    let f = forward(spec, params, adj, x, dropout, rng)?;
    let n = adj.num_nodes();
    let labels: Vec<usize> = obj.train_nodes.iter().map(|&u| g.label(u)).collect();
    let (ce, g_rows) = weighted_softmax_ce(f.logits.select(Axis(0), obj.train_nodes).view(), &labels, obj.beta);
    let mut grad_logits = Array2::<f64>::zeros(f.logits.raw_dim());
    scatter_add(&mut grad_logits, obj.train_nodes, &g_rows);

    let mut reg = 0.0;
    let mut grad_z = None;
    if let Some(iid) = obj.iid_nodes.filter(|_| obj.lambda > 0.0) {
        let z = f.z();
        let (value, gp, gq) = cmd_reg_value_grad(
            z.select(Axis(0), obj.train_nodes).view(),
            z.select(Axis(0), iid).view(),
            obj.cmd,
            Support::tanh(),
        )?;
        reg = value;
        let mut gz = Array2::<f64>::zeros((n, z.ncols()));
        scatter_add(&mut gz, obj.train_nodes, &(gp * obj.lambda));
        scatter_add(&mut gz, iid, &(gq * obj.lambda));
        grad_z = Some(gz);
    }

    let l2 = l2_penalty(params.weights(), obj.weight_decay);
    let grads = backward(spec, params, adj, &f, grad_logits.view(), grad_z.as_ref().map(|g| g.view()))?;
    Ok((LossBreakdown::new(ce, obj.lambda, reg, l2), grads))
}

fn scatter_add(dst: &mut Array2<f64>, rows: &[usize], src: &Array2<f64>) {
    for (i, &r) in rows.iter().enumerate() {
        let mut d = dst.row_mut(r);
        d += &src.row(i);
    }
}

/// `count` pool nodes outside `exclude`, uniformly without replacement.
pub fn draw_unlabelled(pool: &[usize], exclude: &[&[usize]], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let banned: std::collections::HashSet<usize> = exclude.iter().flat_map(|s| s.iter().copied()).collect();
    let candidates: Vec<usize> = pool.iter().copied().filter(|u| !banned.contains(u)).collect();
    let count = count.min(candidates.len());
    index::sample(rng, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

/// The unlabelled regularizer sample `train` draws for this split and
/// seed. Also the target sample of kernel mean matching.
pub fn regularizer_sample(split: &DatasetSplit, nodes: &[usize], cfg: &TrainConfig) -> Vec<usize> {
    let mut rng = stream_rng(cfg.rng_seed, STREAM_IID_REG);
    let size = cfg.iid_reg_sample_size.unwrap_or(nodes.len());
    draw_unlabelled(&split.train_pool, &[nodes], size, &mut rng)
}

/// KMM weights of the split against `target` nodes, using the rows the
/// model's linear propagation stage produces.
pub fn kmm_weights(
    spec: &ModelSpec,
    g: &Graph,
    adj: &NormalizedAdjacency,
    train_nodes: &[usize],
    target: &[usize],
    bounds: KmmBounds,
    kernel: &KernelConfig,
) -> Result<InstanceWeights> {
    let all: Vec<usize> = train_nodes.iter().chain(target).copied().collect();
    let rows = crate::models::linearized_rows(spec, g, adj, &all)?;
    let m = train_nodes.len();
    let problem = KmmProblem {
        train_rows: rows.slice(ndarray::s![..m, ..]).to_owned(),
        target_rows: rows.slice(ndarray::s![m.., ..]).to_owned(),
        labels: train_nodes.iter().map(|&u| g.label(u)).collect(),
        bounds,
        kernel: kernel.clone(),
    };
    solve_weights(&problem, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Shared read-only inputs of a training run.
#[derive(Clone, Copy)]
pub struct TrainData<'a> {
    pub graph: &'a Graph,
    pub adj: &'a NormalizedAdjacency,
    pub split: &'a DatasetSplit,
}

/// Trains `spec` on `train`. Precomputed `weights` must cover the split in
/// node order; otherwise, with reweighting on, they are computed against the
/// regularizer sample.
pub fn train(
    data: TrainData<'_>,
    x: &Features,
    train: &TrainSplit,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    weights: Option<&InstanceWeights>,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    spec.validate()?;
    let TrainData { graph: g, adj, split } = data;
    let nodes = &train.nodes;
    if nodes.is_empty() {
        return Err(Error::EmptySplit);
    }
    let m = nodes.len();

    let mut iid_rng = stream_rng(cfg.rng_seed, STREAM_IID_REG);
    let reg_size = cfg.iid_reg_sample_size.unwrap_or(m);
    let mut iid_nodes = draw_unlabelled(&split.train_pool, &[nodes], reg_size, &mut iid_rng);
    debug_assert_eq!(iid_nodes, regularizer_sample(split, nodes, cfg));
    let probe = {
        let mut rng = stream_rng(cfg.rng_seed, STREAM_PROBE);
        let mut p = draw_unlabelled(&split.train_pool, &[nodes, &iid_nodes], m, &mut rng);
        if p.is_empty() {
            p = iid_nodes.clone();
        }
        p
    };

    let beta: Option<Vec<f64>> = if cfg.use_instance_reweight {
        let w = match weights {
            Some(w) => w.clone(),
            None => kmm_weights(spec, g, adj, nodes, &iid_nodes, cfg.kmm_bounds, &cfg.kernel)?,
        };
        if w.beta.len() != m {
            return Err(Error::DimensionMismatch(format!("{} weights for {m} training nodes", w.beta.len())));
        }
        Some(w.beta)
    } else {
        None
    };

    let mut params = ModelParams::init(spec, x.ncols(), g.num_classes(), &mut stream_rng(cfg.rng_seed, STREAM_INIT));
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &params.sizes(),
    );
    let decay = params.decay_mask();
    let mut dropout_rng = stream_rng(cfg.rng_seed, STREAM_DROPOUT);

    let mut best = (f64::NEG_INFINITY, 0usize, params.clone());
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if cfg.resample_iid_each_epoch && epoch > 1 {
            iid_nodes = draw_unlabelled(&split.train_pool, &[nodes], reg_size, &mut iid_rng);
        }
        let obj = Objective {
            train_nodes: nodes,
            beta: beta.as_deref(),
            iid_nodes: (cfg.use_cmd_reg && !iid_nodes.is_empty()).then_some(iid_nodes.as_slice()),
            lambda: if cfg.use_cmd_reg { cfg.lambda } else { 0.0 },
            cmd: cfg.cmd,
            weight_decay: cfg.weight_decay,
        };
        let (loss, grads) = loss_and_grad(spec, &params, g, adj, x, &obj, cfg.dropout, Some(&mut dropout_rng))?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: format!("ce {} reg {} l2 {}", loss.ce, loss.reg_cmd, loss.l2),
            });
        }
        curve.push(loss);

        let flat_grads: Vec<Vec<f64>> = grads
            .layers
            .iter()
            .flat_map(|l| [l.weight.iter().copied().collect(), l.bias.to_vec()])
            .collect();
        let grad_refs: Vec<&[f64]> = flat_grads.iter().map(Vec::as_slice).collect();
        adam.step(&mut params.tensors_mut(), &grad_refs, &decay, cfg.weight_decay);

        let (valid_micro, _, _) = if split.valid.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            evaluate(spec, &params, g, adj, x, &split.valid)?
        };
        if valid_micro > best.0 {
            best = (valid_micro, epoch, params.clone());
        }
    }

    let (valid_micro, best_epoch, params) = best;
    let f = forward::<ChaCha8Rng>(spec, &params, adj, x, 0.0, None)?;
    let (micro_f1, macro_f1, accuracy) = scores_on(&f, g, &split.test);
    let z = f.z();
    let cmd_final = cmd(
        z.select(Axis(0), nodes).view(),
        z.select(Axis(0), &probe).view(),
        cfg.cmd,
        Support::tanh(),
    )?;
    let mmd_final = mmd(
        z.select(Axis(0), nodes).view(),
        z.select(Axis(0), &probe).view(),
        &cfg.kernel,
    )?;
    Ok((
        params,
        TrainReport {
            micro_f1,
            macro_f1,
            accuracy,
            valid_micro_f1: valid_micro,
            best_epoch,
            cmd_final,
            mmd_final,
            loss_curve: curve,
            delta_f1: None,
        },
    ))
}

/// Convenience wrapper preparing the model input first.
pub fn train_model(
    data: TrainData<'_>,
    train_split: &TrainSplit,
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    let x = prepare_input(spec, data.graph, data.adj);
    train(data, &x, train_split, spec, cfg, None)
}
