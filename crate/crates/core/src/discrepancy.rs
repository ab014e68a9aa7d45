//! Distribution-shift metrics: central moment discrepancy and a
//! Gaussian-mixture kernel MMD.
//!
//! CMD compares coordinate-wise means and centered power moments up to order
//! `K`, each scaled by the width of a bounded support:
//!
//! ```text
//! cmd(p, q) = ‖E p − E q‖ / |b−a| + Σ_{k=2..K} ‖c_k(p) − c_k(q)‖ / |b−a|^k
//! ```
//!
//! Moments are population moments (divide by `m`).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries may sit this far outside the declared support.
pub const SUPPORT_TOLERANCE: f64 = 1e-9;

/// Closed interval `[a, b]` holding every coordinate of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub a: f64,
    pub b: f64,
}

impl Support {
    pub fn new(a: f64, b: f64) -> Self {
        Support { a, b }
    }

    /// `[−1, 1]`, the range of a tanh layer.
    pub fn tanh() -> Self {
        Support { a: -1.0, b: 1.0 }
    }

    /// Smallest interval covering both samples.
    pub fn empirical(p: ArrayView2<f64>, q: ArrayView2<f64>) -> Self {
        let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in p.iter().chain(q.iter()) {
            a = a.min(v);
            b = b.max(v);
        }
        Support { a, b }
    }

    pub fn width(&self) -> f64 {
        (self.b - self.a).abs()
    }

    fn check(&self, x: ArrayView2<f64>, name: &str) -> Result<()> {
        if !(self.width() > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "degenerate support [{}, {}]",
                self.a, self.b
            )));
        }
        let (lo, hi) = (self.a.min(self.b), self.a.max(self.b));
        if let Some(v) = x
            .iter()
            .find(|&&v| !(v >= lo - SUPPORT_TOLERANCE && v <= hi + SUPPORT_TOLERANCE))
        {
            return Err(Error::InvalidParameter(format!(
                "{name} entry {v} outside support [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmdConfig {
    pub max_moment: usize,
}

impl Default for CmdConfig {
    fn default() -> Self {
        CmdConfig { max_moment: 5 }
    }
}

fn check_pair(p: ArrayView2<f64>, q: ArrayView2<f64>) -> Result<()> {
    if p.nrows() == 0 || q.nrows() == 0 {
        return Err(Error::InvalidParameter("samples need at least one row".into()));
    }
    if p.ncols() != q.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "sample dimensions {} and {}",
            p.ncols(),
            q.ncols()
        )));
    }
    Ok(())
}

/// Coordinate-wise moments `[mean, c_2, …, c_K]`.
pub fn central_moments(x: ArrayView2<f64>, k: usize) -> Vec<Array1<f64>> {
    let mean = x.mean_axis(Axis(0)).expect("sample has rows");
    let centered = &x - &mean;
    let mut out = Vec::with_capacity(k);
    out.push(mean);
    let mut power = centered.clone();
    for _ in 2..=k {
        power *= &centered;
        out.push(power.mean_axis(Axis(0)).unwrap());
    }
    out
}

fn l2(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Central moment discrepancy between the rows of `p` and `q`.
pub fn cmd(p: ArrayView2<f64>, q: ArrayView2<f64>, cfg: CmdConfig, support: Support) -> Result<f64> {
    check_pair(p, q)?;
    if cfg.max_moment == 0 {
        return Err(Error::InvalidParameter("max_moment must be at least 1".into()));
    }
    support.check(p, "p")?;
    support.check(q, "q")?;
    let mp = central_moments(p, cfg.max_moment);
    let mq = central_moments(q, cfg.max_moment);
    let w = support.width();
    Ok(mp
        .iter()
        .zip(&mq)
        .enumerate()
        .map(|(i, (a, b))| l2(&(a - b)) / w.powi(i as i32 + 1))
        .sum())
}

/// CMD together with its gradients with respect to every row of `p` and
/// `q`. A term whose moment vectors coincide contributes subgradient zero.
pub fn cmd_value_grad(
    p: ArrayView2<f64>,
    q: ArrayView2<f64>,
    cfg: CmdConfig,
    support: Support,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let value = cmd(p, q, cfg, support)?;
    let k = cfg.max_moment;
    let w = support.width();
    let mp = central_moments(p, k);
    let mq = central_moments(q, k);

    // unit direction of each moment difference, scaled by 1/w^order
    let dirs: Vec<Array1<f64>> = mp
        .iter()
        .zip(&mq)
        .enumerate()
        .map(|(i, (a, b))| {
            let diff = a - b;
            let norm = l2(&diff);
            if norm > 0.0 {
                diff / (norm * w.powi(i as i32 + 1))
            } else {
                Array1::zeros(a.len())
            }
        })
        .collect();

    let gp = moment_chain(p, &mp, &dirs, 1.0);
    let gq = moment_chain(q, &mq, &dirs, -1.0);
    Ok((value, gp, gq))
}

/// Pulls per-moment cotangents `sign·dirs[k]` back to the rows of `x`:
/// `∂c_k/∂x_i = (k/m)((x_i − μ)^{k−1} − c_{k−1})` with the centered first
/// moment zero, and `∂μ/∂x_i = 1/m`.
fn moment_chain(x: ArrayView2<f64>, moments: &[Array1<f64>], dirs: &[Array1<f64>], sign: f64) -> Array2<f64> {
    let m = x.nrows() as f64;
    let centered = &x - &moments[0];
    let mut grad = Array2::<f64>::zeros(x.raw_dim());
    grad += &(&dirs[0] / m);
    let mut power = Array2::<f64>::ones(x.raw_dim()); // (x−μ)^{k−1}
    for k in 2..=dirs.len() {
        power *= &centered;
        let lower = if k == 2 {
            Array1::zeros(x.ncols())
        } else {
            moments[k - 2].clone()
        };
        let coeff = &dirs[k - 1] * (k as f64 / m);
        grad += &((&power - &lower) * &coeff);
    }
    grad * sign
}

/// Mixture of exponential kernels `Σ_i exp(−α_i‖x − y‖)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidths: Vec<f64>,
    /// Use `‖x − y‖²` in place of `‖x − y‖`.
    pub squared_distance: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidths: vec![1.0, 0.1, 0.01],
            squared_distance: false,
        }
    }
}

impl KernelConfig {
    pub fn eval(&self, dist_sq: f64) -> f64 {
        let d = if self.squared_distance {
            dist_sq
        } else {
            dist_sq.max(0.0).sqrt()
        };
        self.bandwidths.iter().map(|a| (-a * d).exp()).sum()
    }
}

/// Kernel matrix between the rows of `xs` and `ys`.
pub fn gaussian_kernel_matrix(xs: ArrayView2<f64>, ys: ArrayView2<f64>, cfg: &KernelConfig) -> Array2<f64> {
    assert_eq!(xs.ncols(), ys.ncols(), "kernel inputs differ in dimension");
    let rows: Vec<Vec<f64>> = xs
        .outer_iter()
        .into_par_iter()
        .map(|x| {
            ys.outer_iter()
                .map(|y| {
                    let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    cfg.eval(d2)
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((xs.nrows(), ys.nrows()), flat).unwrap()
}

/// Squared MMD, biased V-statistic. Not clipped at zero.
pub fn mmd(p: ArrayView2<f64>, q: ArrayView2<f64>, cfg: &KernelConfig) -> Result<f64> {
    check_pair(p, q)?;
    let kpp = gaussian_kernel_matrix(p, p, cfg).mean().unwrap();
    let kpq = gaussian_kernel_matrix(p, q, cfg).mean().unwrap();
    let kqq = gaussian_kernel_matrix(q, q, cfg).mean().unwrap();
    Ok(kpp - 2.0 * kpq + kqq)
}
