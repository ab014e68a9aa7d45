use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sparse::CsrMatrix;

/// Affine map `x·W + b` with `W` stored `in_dim × out_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            weight: Array2::zeros((in_dim, out_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        DenseLayer {
            weight: Array2::from_shape_fn((in_dim, out_dim), |_| rng.random_range(-limit..limit)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &Features) -> Array2<f64> {
        x.matmul(self.weight.view()) + &self.bias
    }

    /// Parameter gradients for upstream gradient `g` of the layer output.
    pub fn param_grads(&self, x: &Features, g: ArrayView2<f64>) -> DenseLayer {
        DenseLayer {
            weight: x.t_matmul(g),
            bias: g.sum_axis(Axis(0)),
        }
    }

    /// Gradient with respect to the layer input.
    pub fn input_grad(&self, g: ArrayView2<f64>) -> Array2<f64> {
        g.dot(&self.weight.t())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => x.mapv_into(|v| v.max(0.0)),
            Activation::Tanh => x.mapv_into(f64::tanh),
            Activation::Identity => x,
        }
    }

    /// Chains `g` through the activation, given its output `y`.
    pub fn backward(self, y: ArrayView2<f64>, g: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => ndarray::Zip::from(g).and(y).map_collect(|&g, &y| if y > 0.0 { g } else { 0.0 }),
            Activation::Tanh => ndarray::Zip::from(g).and(y).map_collect(|&g, &y| g * (1.0 - y * y)),
            Activation::Identity => g.to_owned(),
        }
    }
}

/// Layer input: dense activations or a sparse feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Dense(Array2<f64>),
    Sparse(CsrMatrix),
}

impl Features {
    /// Sparse storage when at most `max_density` of the entries are nonzero.
    pub fn from_dense_auto(x: Array2<f64>, max_density: f64) -> Self {
        let nnz = x.iter().filter(|&&v| v != 0.0).count();
        if (nnz as f64) <= max_density * x.len() as f64 {
            Features::Sparse(CsrMatrix::from_dense(x.view()))
        } else {
            Features::Dense(x)
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            Features::Dense(x) => x.nrows(),
            Features::Sparse(x) => x.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Features::Dense(x) => x.ncols(),
            Features::Sparse(x) => x.ncols(),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            Features::Dense(x) => x.clone(),
            Features::Sparse(x) => x.to_dense(),
        }
    }

    pub fn matmul(&self, w: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Features::Dense(x) => x.dot(&w),
            Features::Sparse(x) => x.matmul_dense(w),
        }
    }

    /// `selfᵀ · g`.
    pub fn t_matmul(&self, g: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Features::Dense(x) => x.t().dot(&g),
            Features::Sparse(x) => x.transpose_matmul_dense(g),
        }
    }

    /// Inverted dropout on stored entries. Returns the dropped input and, for
    /// dense inputs, the per-entry scale (`0` or `1/(1−p)`) needed to chain
    /// gradients back through the mask.
    pub fn dropout<R: Rng>(&self, p: f64, rng: &mut R) -> (Features, Option<Array2<f64>>) {
        if p <= 0.0 {
            return (self.clone(), None);
        }
        let keep = 1.0 / (1.0 - p);
        match self {
            Features::Dense(x) => {
                let mask = dropout_mask(x.raw_dim(), p, rng);
                (Features::Dense(x * &mask), Some(mask))
            }
            Features::Sparse(x) => {
                let mut out = x.clone();
                for v in out.values_mut() {
                    *v *= if rng.random::<f64>() < p { 0.0 } else { keep };
                }
                (Features::Sparse(out), None)
            }
        }
    }
}

/// Entries are `0` with probability `p`, otherwise `1/(1−p)`.
pub fn dropout_mask<R: Rng>(dim: ndarray::Ix2, p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(dim, || if rng.random::<f64>() < p { 0.0 } else { keep })
}
