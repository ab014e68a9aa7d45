//! Personalized PageRank over the self-loop-augmented graph.
//!
//! Vectors are stored in the row-stochastic convention: entry `j` of the
//! vector seeded at `s` is row `s` of `α(I − (1−α)P)^{-1}` with
//! `P = D^{-1}(A + I)`. That operator is similar to the GCN matrix,
//! `Ã = D^{1/2} P D^{-1/2}`, so the same vector expressed against `Ã` is a
//! diagonal rescaling away ([`PprVector::to_symmetric`]). The stochastic
//! form keeps the bookkeeping exact: entries of an exact vector sum to one,
//! and local push conserves `Σp + Σr = 1`.
//!
//! Two routes compute a vector:
//! * [`exact_ppr`]: dense LU solve on small graphs, otherwise the power
//!   series run until its certified tail is below `1e-14`.
//! * [`push_ppr`]: FIFO local push, stopping once every residual satisfies
//!   `r(u) < ε·d(u)`; the L1 error is then `Σr < ε·Σd`.

use std::collections::{BTreeMap, HashMap, VecDeque};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NormalizedAdjacency};

/// Graphs at most this large are solved by dense LU.
pub const DENSE_SOLVE_LIMIT: usize = 400;

/// Default size guard of [`exact_ppr`].
pub const EXACT_MAX_NODES: usize = 50_000;

const SERIES_TAIL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PprParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: usize,
}

impl Default for PprParams {
    fn default() -> Self {
        PprParams {
            alpha: 0.1,
            epsilon: 1e-3,
            gamma: 100,
        }
    }
}

impl PprParams {
    /// Settings of the small worked example: `γ = 20`, `ε = 0.005`.
    pub fn appendix() -> Self {
        PprParams {
            alpha: 0.1,
            epsilon: 0.005,
            gamma: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.gamma == 0 {
            return Err(Error::InvalidParameter("gamma must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sparse PPR vector with the residual left by local push (empty for exact
/// vectors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PprVector {
    pub seed: usize,
    pub entries: BTreeMap<usize, f64>,
    pub residual: BTreeMap<usize, f64>,
}

impl PprVector {
    pub fn mass(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn residual_mass(&self) -> f64 {
        self.residual.values().sum()
    }

    pub fn get(&self, node: usize) -> f64 {
        self.entries.get(&node).copied().unwrap_or(0.0)
    }

    /// Number of strictly positive entries.
    pub fn support_size(&self) -> usize {
        self.entries.values().filter(|&&m| m > 0.0).count()
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&u, &m) in &self.entries {
            out[u] = m;
        }
        out
    }

    /// L1 distance between the entry sets of two vectors.
    pub fn l1_distance(&self, other: &PprVector) -> f64 {
        let mut keys: Vec<usize> = self.entries.keys().chain(other.entries.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter().map(|k| (self.get(k) - other.get(k)).abs()).sum()
    }

    /// Re-expresses the vector against `Ã`: the exact result is row `seed`
    /// of `α(I − (1−α)Ã)^{-1}`. Entries and residuals scale by
    /// `sqrt(d_seed / d_u)`, which keeps the push identity intact.
    pub fn to_symmetric(&self, adj: &NormalizedAdjacency) -> PprVector {
        let ds = adj.degree(self.seed);
        let rescale = |m: &BTreeMap<usize, f64>| {
            m.iter()
                .map(|(&u, &v)| (u, v * (ds / adj.degree(u)).sqrt()))
                .collect()
        };
        PprVector {
            seed: self.seed,
            entries: rescale(&self.entries),
            residual: rescale(&self.residual),
        }
    }
}

fn check_node(seed: usize, n: usize) -> Result<()> {
    if seed >= n {
        return Err(Error::NodeOutOfRange {
            id: seed,
            num_nodes: n,
            context: "ppr seed",
        });
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Exact PPR vector of `seed` under the default size guard.
pub fn exact_ppr(adj: &NormalizedAdjacency, seed: usize, alpha: f64) -> Result<PprVector> {
    exact_ppr_guarded(adj, seed, alpha, EXACT_MAX_NODES)
}

pub fn exact_ppr_guarded(
    adj: &NormalizedAdjacency,
    seed: usize,
    alpha: f64,
    max_nodes: usize,
) -> Result<PprVector> {
    let n = adj.num_nodes();
    check_alpha(alpha)?;
    check_node(seed, n)?;
    if n > max_nodes {
        return Err(Error::SizeGuard {
            what: "num_nodes",
            value: n,
            limit: max_nodes,
        });
    }
    let dense = if n <= DENSE_SOLVE_LIMIT {
        dense_solve(adj, seed, alpha)
    } else {
        power_series(adj, seed, alpha)
    };
    Ok(PprVector {
        seed,
        entries: dense
            .into_iter()
            .enumerate()
            .filter(|&(_, m)| m != 0.0)
            .collect(),
        residual: BTreeMap::new(),
    })
}

/// Solves `(I − (1−α)Pᵀ) x = α e_seed`.
fn dense_solve(adj: &NormalizedAdjacency, seed: usize, alpha: f64) -> Vec<f64> {
    let n = adj.num_nodes();
    let mut system = nalgebra::DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        let (cols, _) = adj.matrix().row(i);
        let share = (1.0 - alpha) / adj.degree(i);
        for &j in cols {
            // P[i][j] = 1/d_i for j ∈ N(i) ∪ {i}; the system uses Pᵀ
            system[(j, i)] -= share;
        }
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(n);
    rhs[seed] = alpha;
    let x = system
        .lu()
        .solve(&rhs)
        .expect("I − (1−α)Pᵀ is nonsingular for α in (0, 1)");
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// `α Σ_t (1−α)^t e_seed P^t`, truncated once the remaining tail mass
/// `(1−α)^{t+1}` drops below [`SERIES_TAIL`].
fn power_series(adj: &NormalizedAdjacency, seed: usize, alpha: f64) -> Vec<f64> {
    let n = adj.num_nodes();
    let mut acc = vec![0.0; n];
    let mut walk = vec![0.0; n];
    let mut next = vec![0.0; n];
    walk[seed] = 1.0;
    let mut weight = alpha;
    let mut tail = 1.0 - alpha;
    loop {
        for (a, &w) in acc.iter_mut().zip(&walk) {
            *a += weight * w;
        }
        if tail < SERIES_TAIL {
            break;
        }
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            if walk[i] == 0.0 {
                continue;
            }
            let share = walk[i] / adj.degree(i);
            for &j in adj.matrix().row(i).0 {
                next[j] += share;
            }
        }
        std::mem::swap(&mut walk, &mut next);
        weight *= 1.0 - alpha;
        tail *= 1.0 - alpha;
    }
    acc
}

/// Dense exact PPR rows (`nodes.len() × n`) computed in parallel.
pub fn exact_ppr_rows(adj: &NormalizedAdjacency, nodes: &[usize], alpha: f64) -> Result<Array2<f64>> {
    let n = adj.num_nodes();
    let rows: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&u| exact_ppr(adj, u, alpha).map(|v| v.to_dense(n)))
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((nodes.len(), n), flat).expect("row lengths agree"))
}

/// Local push approximation. Residual mass moves along `P`; each push
/// retires `α·r(u)` into the estimate.
pub fn push_ppr(g: &Graph, seed: usize, params: &PprParams) -> Result<PprVector> {
    params.validate()?;
    check_node(seed, g.num_nodes())?;
    let PprParams { alpha, epsilon, .. } = *params;
    let degree = |u: usize| (g.degree(u) + 1) as f64;

    let mut estimate: HashMap<usize, f64> = HashMap::new();
    let mut residual: HashMap<usize, f64> = HashMap::new();
    let mut queued: HashMap<usize, bool> = HashMap::new();
    let mut queue = VecDeque::new();
    residual.insert(seed, 1.0);
    if 1.0 >= epsilon * degree(seed) {
        queue.push_back(seed);
        queued.insert(seed, true);
    }

    while let Some(u) = queue.pop_front() {
        queued.insert(u, false);
        let ru = residual.get(&u).copied().unwrap_or(0.0);
        let du = degree(u);
        if ru < epsilon * du {
            continue;
        }
        *estimate.entry(u).or_insert(0.0) += alpha * ru;
        let share = (1.0 - alpha) * ru / du;
        residual.insert(u, share);
        for &v in g.neighbors(u) {
            *residual.entry(v).or_insert(0.0) += share;
        }
        for &v in std::iter::once(&u).chain(g.neighbors(u)) {
            if residual[&v] >= epsilon * degree(v) && !queued.get(&v).copied().unwrap_or(false) {
                queued.insert(v, true);
                queue.push_back(v);
            }
        }
    }

    Ok(PprVector {
        seed,
        entries: estimate.into_iter().collect(),
        residual: residual.into_iter().filter(|&(_, r)| r > 0.0).collect(),
    })
}

/// Top-`gamma` entries by mass, descending; ties go to the smaller node id.
/// Zero entries are never returned.
pub fn topk_truncate(v: &PprVector, gamma: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = v
        .entries
        .iter()
        .filter(|&(_, &m)| m > 0.0)
        .map(|(&u, &m)| (u, m))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(gamma);
    ranked
}
