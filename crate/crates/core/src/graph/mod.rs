//! Graph data model, GCN adjacency normalization and SGC feature
//! propagation.
//!
//! A [`Graph`] is immutable once built: a symmetric adjacency without
//! self-loops or parallel edges, an `n × F` feature matrix and one label per
//! node. Self-loops only appear in [`NormalizedAdjacency`], which stores
//! `Ã = D^{-1/2}(A + I)D^{-1/2}` together with the degree vector of `A + I`.

mod io;
pub mod synthetic;

pub use io::{ingest_dataset, write_dataset, DatasetMeta};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Undirected, unweighted attributed graph.
#[derive(Debug, Clone)]
pub struct Graph {
    adjacency: CsrMatrix,
    features: Array2<f32>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Graph {
    /// Builds a graph from undirected edges listed in either orientation.
    /// Repeated edges collapse to one; self-loops are rejected.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Array2<f32>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.nrows() != num_nodes {
            return Err(Error::DimensionMismatch(format!(
                "feature rows {} != num_nodes {num_nodes}",
                features.nrows()
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::DimensionMismatch(format!(
                "label count {} != num_nodes {num_nodes}",
                labels.len()
            )));
        }
        for (node, &label) in labels.iter().enumerate() {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    node,
                    label,
                    num_classes,
                });
            }
        }
        let mut triplets = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(Error::NodeOutOfRange {
                        id,
                        num_nodes,
                        context: "edge list",
                    });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            triplets.push((u, v, 1.0));
            triplets.push((v, u, 1.0));
        }
        let mut adjacency = CsrMatrix::from_triplets(num_nodes, num_nodes, &triplets);
        // repeated edges were summed; collapse back to unit weight
        adjacency.values_mut().iter_mut().for_each(|v| *v = 1.0);
        Ok(Graph {
            adjacency,
            features,
            labels,
            num_classes,
        })
    }

    /// Graph with a single all-zero feature column and every node in class 0.
    pub fn structure_only(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Graph::from_edges(
            num_nodes,
            edges,
            Array2::zeros((num_nodes, 1)),
            vec![0; num_nodes],
            1,
        )
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Number of stored directed arcs (twice the undirected edge count).
    pub fn num_arcs(&self) -> usize {
        self.adjacency.nnz()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        self.adjacency.row(u).0
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors(u).len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in row order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes())
            .flat_map(|u| {
                self.neighbors(u)
                    .iter()
                    .filter(move |&&v| u < v)
                    .map(move |&v| (u, v))
            })
            .collect()
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn features_f64(&self) -> Array2<f64> {
        self.features.mapv(f64::from)
    }

    /// Features as a sparse matrix; bag-of-words inputs are mostly zeros.
    pub fn features_sparse(&self) -> CsrMatrix {
        CsrMatrix::from_dense(self.features_f64().view())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, u: usize) -> usize {
        self.labels[u]
    }

    /// Node count per class over the given node set.
    pub fn class_counts(&self, nodes: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &u in nodes {
            counts[self.labels[u]] += 1;
        }
        counts
    }

    /// Hop distances from `source` by breadth-first search; `None` when
    /// unreachable.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_nodes()];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// `Ã = D^{-1/2}(A + I)D^{-1/2}` with `D` the degree matrix of `A + I`.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    matrix: CsrMatrix,
    degrees: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn num_nodes(&self) -> usize {
        self.degrees.len()
    }

    /// Degree of node `u` in `A + I` (raw degree plus one).
    pub fn degree(&self, u: usize) -> f64 {
        self.degrees[u]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// `Ã · h`. `Ã` is symmetric, so this is also its own adjoint.
    pub fn propagate(&self, h: ArrayView2<f64>) -> Array2<f64> {
        self.matrix.matmul_dense(h)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.matrix.to_dense()
    }
}

/// Symmetric GCN normalization with self-loops.
pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let degrees: Vec<f64> = (0..n).map(|u| (g.degree(u) + 1) as f64).collect();
    let mut triplets = Vec::with_capacity(g.num_arcs() + n);
    for u in 0..n {
        triplets.push((u, u, 1.0 / degrees[u]));
        for &v in g.neighbors(u) {
            // product order is irrelevant to the result, so (u,v) and (v,u)
            // round identically
            triplets.push((u, v, 1.0 / (degrees[u] * degrees[v]).sqrt()));
        }
    }
    NormalizedAdjacency {
        matrix: CsrMatrix::from_triplets(n, n, &triplets),
        degrees,
    }
}

/// `Ã^k · X` by `k` sparse-dense products.
pub fn sgc_features(g: &Graph, adj: &NormalizedAdjacency, k: usize) -> Array2<f64> {
    let mut h = g.features_f64();
    for _ in 0..k {
        h = adj.propagate(h.view());
    }
    h
}

/// Validation, test and training-pool node sets of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub train_pool: Vec<usize>,
}

impl DatasetSplit {
    /// Builds the split from validation and test ids; every other node goes
    /// to the training pool.
    pub fn from_valid_test(num_nodes: usize, valid: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let mut role = vec![0u8; num_nodes];
        for (ids, tag, name) in [(&valid, 1u8, "splits.json valid"), (&test, 2u8, "splits.json test")] {
            for &id in ids {
                if id >= num_nodes {
                    return Err(Error::NodeOutOfRange {
                        id,
                        num_nodes,
                        context: name,
                    });
                }
                if role[id] != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "node {id} listed more than once across validation/test sets"
                    )));
                }
                role[id] = tag;
            }
        }
        let mut valid = valid;
        let mut test = test;
        valid.sort_unstable();
        test.sort_unstable();
        let train_pool = (0..num_nodes).filter(|&u| role[u] == 0).collect();
        Ok(DatasetSplit {
            valid,
            test,
            train_pool,
        })
    }

    /// Membership mask of the training pool.
    pub fn pool_mask(&self, num_nodes: usize) -> Vec<bool> {
        let mut mask = vec![false; num_nodes];
        for &u in &self.train_pool {
            mask[u] = true;
        }
        mask
    }
}
