//! Model zoo: feature MLP, GCN of any depth, SGC and APPNP.
//!
//! Every model is a stack of dense layers: encoder layers producing the
//! representation `Z` (ReLU inside, tanh on the last so `Z ∈ [−1, 1]`),
//! then a linear head producing logits. The kinds differ only in where the
//! graph enters:
//! * `mlp`: nowhere.
//! * `gcn`: every layer computes `Ã·(H·W) + b`, head included.
//! * `sgc`: the input is `Ã^k·X`, precomputed.
//! * `appnp`: the head's logits are propagated `k` steps,
//!   `P ← (1−α)·Ã·P + α·logits`.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{sgc_features, Graph, NormalizedAdjacency};
use crate::nn::{Activation, DenseLayer, Features};
use crate::ppr::exact_ppr_rows;

/// Inputs denser than this are kept as dense matrices.
const SPARSE_INPUT_DENSITY: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Gcn,
    Sgc,
    Appnp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Gcn => "gcn",
            ModelKind::Sgc => "sgc",
            ModelKind::Appnp => "appnp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppnpConfig {
    pub k_steps: usize,
    pub alpha: f64,
}

impl Default for AppnpConfig {
    fn default() -> Self {
        AppnpConfig {
            k_steps: 10,
            alpha: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgcConfig {
    pub k: usize,
}

impl Default for SgcConfig {
    fn default() -> Self {
        SgcConfig { k: 2 }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub appnp: AppnpConfig,
    #[serde(default)]
    pub sgc: SgcConfig,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            hidden_dims: default_hidden(),
            appnp: AppnpConfig::default(),
            sgc: SgcConfig::default(),
        }
    }

    /// GCN with `depth` graph-convolution layers (head included) of equal
    /// width.
    pub fn gcn_with_depth(depth: usize, width: usize) -> Self {
        ModelSpec {
            hidden_dims: vec![width; depth.saturating_sub(1)],
            ..ModelSpec::new(ModelKind::Gcn)
        }
    }

    /// Number of weight layers, head included.
    pub fn depth(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidParameter(
                "hidden_dims must list at least one nonzero width".into(),
            ));
        }
        if self.kind == ModelKind::Appnp {
            let a = self.appnp.alpha;
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidParameter(format!("appnp alpha must lie in (0, 1), got {a}")));
            }
            if self.appnp.k_steps == 0 {
                return Err(Error::InvalidParameter("appnp k_steps must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Encoder layers followed by the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<DenseLayer>,
}

impl ModelParams {
    pub fn init<R: Rng>(spec: &ModelSpec, in_dim: usize, num_classes: usize, rng: &mut R) -> Self {
        let mut dims = vec![in_dim];
        dims.extend(&spec.hidden_dims);
        dims.push(num_classes);
        ModelParams {
            layers: dims.windows(2).map(|w| DenseLayer::glorot(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    pub fn head(&self) -> &DenseLayer {
        self.layers.last().expect("model has a head")
    }

    pub fn head_mut(&mut self) -> &mut DenseLayer {
        self.layers.last_mut().expect("model has a head")
    }

    pub fn weights(&self) -> impl Iterator<Item = ArrayView2<'_, f64>> {
        self.layers.iter().map(|l| l.weight.view())
    }

    /// Tensor sizes in `weight, bias, weight, bias, …` order.
    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.weight.len(), l.bias.len()]).collect()
    }

    /// Weight tensors decay, biases do not.
    pub fn decay_mask(&self) -> Vec<bool> {
        self.layers.iter().flat_map(|_| [true, false]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("weights are contiguous"),
                    l.bias.as_slice_mut().expect("biases are contiguous"),
                ]
            })
            .collect()
    }

    /// Every parameter in tensor order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = it.next().expect("flat vector long enough");
            }
        }
        assert!(it.next().is_none(), "flat vector too long");
    }

    /// Adds `wd·W` to every weight gradient.
    pub fn add_weight_decay(&mut self, params: &ModelParams, wd: f64) {
        for (g, p) in self.layers.iter_mut().zip(&params.layers) {
            g.weight.scaled_add(wd, &p.weight);
        }
    }
}

/// Model input features: raw `X`, or `Ã^k·X` for SGC.
pub fn prepare_input(spec: &ModelSpec, g: &Graph, adj: &NormalizedAdjacency) -> Features {
    let x = match spec.kind {
        ModelKind::Sgc => sgc_features(g, adj, spec.sgc.k),
        _ => g.features_f64(),
    };
    Features::from_dense_auto(x, SPARSE_INPUT_DENSITY)
}

/// `k` steps of `P ← (1−α)·Ã·P + α·H` from `P = H`. The map is a symmetric
/// polynomial in `Ã`, so it is also its own adjoint.
pub fn appnp_propagate(adj: &NormalizedAdjacency, h: ArrayView2<f64>, k_steps: usize, alpha: f64) -> Array2<f64> {
    let mut p = h.to_owned();
    for _ in 0..k_steps {
        let mut next = adj.propagate(p.view());
        next *= 1.0 - alpha;
        next.scaled_add(alpha, &h);
        p = next;
    }
    p
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Array2<f64>,
    inputs: Vec<Features>,
    masks: Vec<Option<Array2<f64>>>,
    outputs: Vec<Array2<f64>>,
}

impl Forward {
    /// Encoder output `Z` (the last tanh layer).
    pub fn z(&self) -> &Array2<f64> {
        &self.outputs[self.outputs.len() - 2]
    }

    /// Argmax class per node; ties go to the smaller class id.
    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(self.logits.view())
    }
}

pub fn argmax_rows(x: ArrayView2<f64>) -> Vec<usize> {
    x.outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn activation(layer: usize, num_layers: usize) -> Activation {
    if layer + 1 == num_layers {
        Activation::Identity
    } else if layer + 2 == num_layers {
        Activation::Tanh
    } else {
        Activation::Relu
    }
}

/// Full-batch forward pass. Dropout with rate `dropout` is applied to every
/// layer input when `rng` is given; without it the pass is deterministic.
pub fn forward<R: Rng>(
    spec: &ModelSpec,
    params: &ModelParams,
    adj: &NormalizedAdjacency,
    x: &Features,
    dropout: f64,
    rng: Option<&mut R>,
) -> Result<Forward> {
    let n_layers = params.layers.len();
    if n_layers < 2 {
        return Err(Error::InvalidParameter("a model needs an encoder layer and a head".into()));
    }
    if x.ncols() != params.layers[0].in_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} columns, first layer expects {}",
            x.ncols(),
            params.layers[0].in_dim()
        )));
    }
    if x.nrows() != adj.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} rows for {} nodes",
            x.nrows(),
            adj.num_nodes()
        )));
    }
    let mut rng = rng;
    let propagate_layers = spec.kind == ModelKind::Gcn;

    let mut inputs = Vec::with_capacity(n_layers);
    let mut masks = Vec::with_capacity(n_layers);
    let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    for (i, layer) in params.layers.iter().enumerate() {
        let input = if i == 0 {
            x.clone()
        } else {
            Features::Dense(outputs[i - 1].clone())
        };
        let (input, mask) = match rng.as_deref_mut() {
            Some(r) if dropout > 0.0 => input.dropout(dropout, r),
            _ => (input, None),
        };
        let mut pre = input.matmul(layer.weight.view());
        if propagate_layers {
            pre = adj.propagate(pre.view());
        }
        pre += &layer.bias;
        outputs.push(activation(i, n_layers).apply(pre));
        inputs.push(input);
        masks.push(mask);
    }

    let head_out = outputs.last().unwrap();
    let logits = if spec.kind == ModelKind::Appnp {
        appnp_propagate(adj, head_out.view(), spec.appnp.k_steps, spec.appnp.alpha)
    } else {
        head_out.clone()
    };
    Ok(Forward {
        logits,
        inputs,
        masks,
        outputs,
    })
}

/// Parameter gradients for cotangents on the logits and on `Z`.
pub fn backward(
    spec: &ModelSpec,
    params: &ModelParams,
    adj: &NormalizedAdjacency,
    cache: &Forward,
    grad_logits: ArrayView2<f64>,
    grad_z: Option<ArrayView2<f64>>,
) -> Result<ModelParams> {
    let n_layers = params.layers.len();
    if cache.outputs.len() != n_layers || grad_logits.dim() != cache.logits.dim() {
        return Err(Error::DimensionMismatch("forward cache does not match parameters".into()));
    }
    let propagate_layers = spec.kind == ModelKind::Gcn;
    let mut g = if spec.kind == ModelKind::Appnp {
        appnp_propagate(adj, grad_logits, spec.appnp.k_steps, spec.appnp.alpha)
    } else {
        grad_logits.to_owned()
    };

    let mut grads = params.zeros_like();
    for i in (0..n_layers).rev() {
        if i + 2 == n_layers {
            if let Some(gz) = grad_z {
                g += &gz;
            }
        }
        let g_pre = activation(i, n_layers).backward(cache.outputs[i].view(), g.view());
        let g_lin = if propagate_layers {
            adj.propagate(g_pre.view())
        } else {
            g_pre.clone()
        };
        let layer = &params.layers[i];
        grads.layers[i] = DenseLayer {
            weight: cache.inputs[i].t_matmul(g_lin.view()),
            bias: g_pre.sum_axis(Axis(0)),
        };
        if i > 0 {
            g = layer.input_grad(g_lin.view());
            if let Some(mask) = &cache.masks[i] {
                g *= mask;
            }
        }
    }
    Ok(grads)
}

/// Per-node rows `h_i` seen by kernel mean matching: rows of `Ã^k·X` for
/// SGC, exact PPR rows for APPNP.
pub fn linearized_rows(
    spec: &ModelSpec,
    g: &Graph,
    adj: &NormalizedAdjacency,
    nodes: &[usize],
) -> Result<Array2<f64>> {
    match spec.kind {
        ModelKind::Sgc => Ok(sgc_features(g, adj, spec.sgc.k).select(Axis(0), nodes)),
        ModelKind::Appnp => exact_ppr_rows(adj, nodes, spec.appnp.alpha),
        other => Err(Error::InvalidParameter(format!(
            "instance reweighting needs a linearized model (sgc or appnp), got {}",
            other.name()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalize_adjacency;
    use crate::rng::stream_rng;
    use ndarray::array;
    use rand_chacha::ChaCha8Rng;

    fn eval(spec: &ModelSpec, params: &ModelParams, adj: &NormalizedAdjacency, x: &Features) -> Forward {
        forward::<ChaCha8Rng>(spec, params, adj, x, 0.0, None).unwrap()
    }

    #[test]
    fn gcn_on_edgeless_graph_is_mlp() {
        let feats = array![[0.1f32, 0.5, -0.2], [0.0, 1.0, 0.3], [0.7, -0.4, 0.2], [0.2, 0.2, 0.2]];
        let g = Graph::from_edges(4, &[], feats, vec![0, 1, 0, 1], 2).unwrap();
        let adj = normalize_adjacency(&g);
        let gcn = ModelSpec::new(ModelKind::Gcn);
        let mlp = ModelSpec::new(ModelKind::Mlp);
        let params = ModelParams::init(&gcn, 3, 2, &mut stream_rng(1, 0));
        let x = prepare_input(&gcn, &g, &adj);
        assert_eq!(eval(&gcn, &params, &adj, &x).logits, eval(&mlp, &params, &adj, &x).logits);
    }

    #[test]
    fn symmetric_pair_has_identical_rows() {
        let feats = array![[0.4f32, -0.1], [0.4, -0.1]];
        let g = Graph::from_edges(2, &[(0, 1)], feats, vec![0, 1], 2).unwrap();
        let adj = normalize_adjacency(&g);
        let spec = ModelSpec::gcn_with_depth(3, 4);
        let params = ModelParams::init(&spec, 2, 2, &mut stream_rng(2, 0));
        let x = prepare_input(&spec, &g, &adj);
        let f = eval(&spec, &params, &adj, &x);
        for out in &f.outputs {
            assert_eq!(out.row(0), out.row(1));
        }
    }

    #[test]
    fn linear_gcn_layer_matches_dense_product() {
        let feats = array![[1.0f32, 0.0], [0.5, 2.0], [-1.0, 0.25]];
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], feats, vec![0, 0, 1], 2).unwrap();
        let adj = normalize_adjacency(&g);
        let layer = DenseLayer {
            weight: array![[0.3, -0.2], [0.1, 0.4]],
            bias: array![0.0, 0.0],
        };
        let x = g.features_f64();
        // the head of a GCN is a linear graph convolution
        let spec = ModelSpec::new(ModelKind::Gcn);
        let params = ModelParams {
            layers: vec![
                DenseLayer {
                    weight: Array2::eye(2),
                    bias: array![0.0, 0.0],
                },
                layer,
            ],
        };
        let f = eval(&spec, &params, &adj, &Features::Dense(x.clone()));
        let z = f.z().clone();
        let head = adj.to_dense().dot(&z).dot(&params.layers[1].weight);
        assert!((&f.logits - &head).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn appnp_propagation_limits() {
        let g = Graph::structure_only(3, &[(0, 1), (1, 2)]).unwrap();
        let adj = normalize_adjacency(&g);
        let h = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]];
        assert_eq!(appnp_propagate(&adj, h.view(), 1, 1.0), h);

        let empty = normalize_adjacency(&Graph::structure_only(3, &[]).unwrap());
        let p = appnp_propagate(&empty, h.view(), 7, 0.3);
        assert!((&p - &h).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn appnp_matches_matrix_polynomial() {
        let g = Graph::structure_only(3, &[(0, 1), (1, 2)]).unwrap();
        let adj = normalize_adjacency(&g);
        let a = adj.to_dense();
        let h = array![[1.0, -2.0], [0.5, 0.0], [0.0, 3.0]];
        let (alpha, k): (f64, i32) = (0.1, 10);
        let mut poly = Array2::<f64>::zeros((3, 3));
        let mut power = Array2::<f64>::eye(3);
        for i in 0..k {
            poly.scaled_add(alpha * (1.0 - alpha).powi(i), &power);
            power = power.dot(&a);
        }
        poly.scaled_add((1.0 - alpha).powi(k), &power);
        let expected = poly.dot(&h);
        let got = appnp_propagate(&adj, h.view(), k as usize, alpha);
        assert!((&got - &expected).iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let feats = array![[0.1f32, 0.5], [0.0, 1.0], [0.7, -0.4]];
        let g = Graph::from_edges(3, &[(0, 1)], feats, vec![0, 1, 0], 2).unwrap();
        let adj = normalize_adjacency(&g);
        for kind in [ModelKind::Mlp, ModelKind::Gcn, ModelKind::Sgc, ModelKind::Appnp] {
            let spec = ModelSpec::new(kind);
            let x = prepare_input(&spec, &g, &adj);
            let params = ModelParams::init(&spec, 2, 2, &mut stream_rng(5, 0));
            let f = eval(&spec, &params, &adj, &x);
            let zero = Array2::zeros(f.logits.raw_dim());
            let grads = backward(&spec, &params, &adj, &f, zero.view(), None).unwrap();
            assert!(grads.to_flat().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn appnp_adjoint_equals_forward_propagation() {
        let g = Graph::structure_only(5, &[(0, 1), (1, 2), (2, 3), (1, 4)]).unwrap();
        let adj = normalize_adjacency(&g);
        let a = adj.to_dense();
        let (alpha, k) = (0.2, 4);
        // dense operator M built column by column from the forward map
        let mut m = Array2::<f64>::zeros((5, 5));
        for j in 0..5 {
            let mut e = Array2::<f64>::zeros((5, 1));
            e[[j, 0]] = 1.0;
            m.column_mut(j).assign(&appnp_propagate(&adj, e.view(), k, alpha).column(0));
        }
        assert!((&m - &m.t()).iter().all(|d| d.abs() < 1e-14));
        let gout = array![[0.3], [-1.0], [0.2], [0.0], [2.0]];
        let adjoint = m.t().dot(&gout);
        let fwd = appnp_propagate(&adj, gout.view(), k, alpha);
        assert!((&adjoint - &fwd).iter().all(|d| d.abs() < 1e-14));
        assert_eq!(a, a.t());
    }

    #[test]
    fn linearized_rows_per_kind() {
        let feats = array![[1.0f32, 0.0], [0.0, 1.0], [0.5, 0.5], [0.2, 0.8]];
        // star around 0: leaves 1 and 3 are interchangeable
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)], feats, vec![0, 1, 0, 1], 2).unwrap();
        let adj = normalize_adjacency(&g);
        let mut sgc = ModelSpec::new(ModelKind::Sgc);
        sgc.sgc.k = 0;
        assert_eq!(linearized_rows(&sgc, &g, &adj, &[2, 0]).unwrap(), array![[0.5, 0.5], [1.0, 0.0]]);

        let appnp = ModelSpec::new(ModelKind::Appnp);
        let rows = linearized_rows(&appnp, &g, &adj, &[1, 3]).unwrap();
        for r in rows.outer_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-8);
        }
        // swapping leaves 1 and 3 maps one PPR row onto the other
        let swap = [0, 3, 2, 1];
        for j in 0..4 {
            assert!((rows[[0, j]] - rows[[1, swap[j]]]).abs() < 1e-12);
        }
        assert!(linearized_rows(&ModelSpec::new(ModelKind::Gcn), &g, &adj, &[0]).is_err());
    }

    #[test]
    fn spec_validation_and_depth() {
        assert_eq!(ModelSpec::gcn_with_depth(4, 16).depth(), 4);
        let mut bad = ModelSpec::new(ModelKind::Appnp);
        bad.appnp.alpha = 1.0;
        assert!(bad.validate().is_err());
        bad.appnp.alpha = 0.1;
        bad.appnp.k_steps = 0;
        assert!(bad.validate().is_err());
        assert!(ModelSpec::gcn_with_depth(1, 16).validate().is_err());
        assert!(ModelSpec::new(ModelKind::Sgc).validate().is_ok());
    }

    #[test]
    fn flat_round_trip() {
        let spec = ModelSpec::new(ModelKind::Mlp);
        let mut p = ModelParams::init(&spec, 3, 2, &mut stream_rng(0, 0));
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.sizes().iter().sum::<usize>());
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        p.set_flat(&doubled);
        assert_eq!(p.to_flat(), doubled);
    }
}
