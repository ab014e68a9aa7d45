//! Kernel mean matching: instance weights that pull the weighted kernel mean
//! of a biased training sample onto that of an unbiased target sample.
//!
//! The objective is
//!
//! ```text
//! f(β) = ‖(1/M) Σ β_i ψ(h_i) − (1/M') Σ ψ(h'_j)‖²
//!      = βᵀKβ − 2κᵀβ + c
//! K_ij = k(h_i, h_j)/M²,  κ_i = Σ_j k(h_i, h'_j)/(M·M'),  c = Σ k(h'_i, h'_j)/M'²
//! ```
//!
//! minimised over `B_l ≤ β_i ≤ B_u` with the weights of every class summing
//! to the class count. The feasible set splits into one capped simplex per
//! class, so the Euclidean projection onto it is computed exactly per class.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::discrepancy::{gaussian_kernel_matrix, KernelConfig};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 5_000;

const POWER_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmmBounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for KmmBounds {
    fn default() -> Self {
        KmmBounds {
            lower: 0.2,
            upper: 5.0,
        }
    }
}

impl KmmBounds {
    /// Configured bounds: requires `0 ≤ lower ≤ 1 ≤ upper` and `lower < upper`.
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(upper > lower) {
            return Err(Error::InvalidParameter(format!(
                "weight upper bound {upper} must exceed lower bound {lower}"
            )));
        }
        let b = KmmBounds { lower, upper };
        b.check_contains_one()?;
        Ok(b)
    }

    fn check_contains_one(&self) -> Result<()> {
        if !(self.lower >= 0.0 && self.lower <= 1.0 && self.upper >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "weight bounds [{}, {}] must satisfy 0 ≤ lower ≤ 1 ≤ upper",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// Default bounds for a training set of size `m`.
pub fn apply_bounds_default(m: usize) -> KmmBounds {
    debug_assert!(m >= 1);
    KmmBounds::default()
}

#[derive(Debug, Clone)]
pub struct KmmProblem {
    pub train_rows: Array2<f64>,
    pub target_rows: Array2<f64>,
    pub labels: Vec<usize>,
    pub bounds: KmmBounds,
    pub kernel: KernelConfig,
}

impl KmmProblem {
    pub fn validate(&self) -> Result<()> {
        let (m, mt) = (self.train_rows.nrows(), self.target_rows.nrows());
        if m == 0 || mt == 0 {
            return Err(Error::InvalidParameter("KMM needs nonempty train and target samples".into()));
        }
        if self.train_rows.ncols() != self.target_rows.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "train rows have {} columns, target rows {}",
                self.train_rows.ncols(),
                self.target_rows.ncols()
            )));
        }
        if self.labels.len() != m {
            return Err(Error::DimensionMismatch(format!("{} labels for {m} train rows", self.labels.len())));
        }
        // pinned boxes (lower = upper = 1) are allowed here
        self.bounds.check_contains_one()
    }

    fn class_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.labels.iter().enumerate() {
            groups.entry(c).or_default().push(i);
        }
        groups.into_values().collect()
    }
}

/// Quadratic form of the KMM objective.
#[derive(Debug, Clone)]
pub struct KmmQp {
    pub k: Array2<f64>,
    pub kappa: Array1<f64>,
    pub constant: f64,
}

impl KmmQp {
    /// `βᵀKβ − 2κᵀβ + c`: the squared mean-map gap.
    pub fn objective(&self, beta: ArrayView1<f64>) -> f64 {
        beta.dot(&self.k.dot(&beta)) - 2.0 * self.kappa.dot(&beta) + self.constant
    }

    pub fn gradient(&self, beta: ArrayView1<f64>) -> Array1<f64> {
        2.0 * (self.k.dot(&beta) - &self.kappa)
    }
}

pub fn build_qp(p: &KmmProblem) -> KmmQp {
    let m = p.train_rows.nrows() as f64;
    let mt = p.target_rows.nrows() as f64;
    let ktt = gaussian_kernel_matrix(p.train_rows.view(), p.train_rows.view(), &p.kernel);
    let kts = gaussian_kernel_matrix(p.train_rows.view(), p.target_rows.view(), &p.kernel);
    let kss = gaussian_kernel_matrix(p.target_rows.view(), p.target_rows.view(), &p.kernel);
    KmmQp {
        k: ktt / (m * m),
        kappa: kts.sum_axis(ndarray::Axis(1)) / (m * mt),
        constant: kss.sum() / (mt * mt),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceWeights {
    pub beta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient_norm: f64,
}

impl InstanceWeights {
    pub fn uniform(m: usize) -> Self {
        InstanceWeights {
            beta: vec![1.0; m],
            objective: f64::NAN,
            iterations: 0,
            converged: true,
            projected_gradient_norm: 0.0,
        }
    }

    /// `{node_id: beta}` keyed by the split's node order.
    pub fn by_node(&self, nodes: &[usize]) -> BTreeMap<usize, f64> {
        nodes.iter().copied().zip(self.beta.iter().copied()).collect()
    }
}

/// Euclidean projection of `v` onto `{x : lo ≤ x ≤ hi, Σx = target}`.
/// The map `τ ↦ Σ clip(v_i − τ, lo, hi)` is piecewise linear and
/// nonincreasing with kinks at `v_i − hi` and `v_i − lo`; the root is
/// located between two kinks and solved linearly.
pub fn project_capped_simplex(v: &[f64], target: f64, lo: f64, hi: f64) -> Vec<f64> {
    let total = |tau: f64| -> f64 { v.iter().map(|&x| (x - tau).clamp(lo, hi)).sum() };
    let mut kinks: Vec<f64> = v.iter().flat_map(|&x| [x - hi, x - lo]).collect();
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();

    // first kink whose total drops to the target or below
    let idx = kinks.partition_point(|&t| total(t) > target);
    let tau = if idx == 0 {
        kinks[0]
    } else if idx == kinks.len() {
        kinks[kinks.len() - 1]
    } else {
        let (t0, t1) = (kinks[idx - 1], kinks[idx]);
        let (s0, s1) = (total(t0), total(t1));
        if s0 == s1 {
            t1
        } else {
            t0 + (s0 - target) / (s0 - s1) * (t1 - t0)
        }
    };
    v.iter().map(|&x| (x - tau).clamp(lo, hi)).collect()
}

fn project(beta: &Array1<f64>, groups: &[Vec<usize>], bounds: KmmBounds) -> Array1<f64> {
    let mut out = beta.clone();
    for g in groups {
        let v: Vec<f64> = g.iter().map(|&i| beta[i]).collect();
        let proj = project_capped_simplex(&v, g.len() as f64, bounds.lower, bounds.upper);
        for (&i, p) in g.iter().zip(proj) {
            out[i] = p;
        }
    }
    out
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn largest_eigenvalue(k: &Array2<f64>) -> f64 {
    let n = k.nrows();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = k.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    lambda
}

/// Projected gradient descent from the all-ones point with step `1/L`,
/// halving the step whenever the quadratic upper bound fails.
pub fn solve_weights(p: &KmmProblem, tol: f64, max_iter: usize) -> Result<InstanceWeights> {
    p.validate()?;
    let qp = build_qp(p);
    let groups = p.class_groups();
    let m = p.labels.len();

    let lipschitz = 2.0 * largest_eigenvalue(&qp.k);
    let mut step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let mut beta = project(&Array1::ones(m), &groups, p.bounds);
    let mut f = qp.objective(beta.view());
    let mut pg_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < max_iter {
        let grad = qp.gradient(beta.view());
        let mut candidate;
        let mut f_new;
        loop {
            candidate = project(&(&beta - &(&grad * step)), &groups, p.bounds);
            let delta = &candidate - &beta;
            f_new = qp.objective(candidate.view());
            let bound = f + grad.dot(&delta) + delta.dot(&delta) / (2.0 * step);
            if f_new <= bound + 1e-15 * f.abs().max(1.0) || step < 1e-300 {
                break;
            }
            step *= 0.5;
        }
        let delta = &candidate - &beta;
        pg_norm = delta.dot(&delta).sqrt() / step;
        iterations += 1;
        if f_new <= f {
            beta = candidate;
            f = f_new;
        }
        if pg_norm <= tol {
            break;
        }
    }

    Ok(InstanceWeights {
        beta: beta.to_vec(),
        objective: f,
        iterations,
        converged: pg_norm <= tol,
        projected_gradient_norm: pg_norm,
    })
}
