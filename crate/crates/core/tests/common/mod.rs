#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srgnn::graph::Graph;

pub fn random_edges(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Erdős–Rényi structure with uniform features in [0, 1) and uniform labels.
pub fn random_graph(n: usize, p: f64, num_features: usize, num_classes: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = random_edges(n, p, &mut rng);
    let features = Array2::from_shape_fn((n, num_features), |_| rng.random::<f32>());
    let labels = (0..n).map(|_| rng.random_range(0..num_classes)).collect();
    Graph::from_edges(n, &edges, features, labels, num_classes).unwrap()
}

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// PPR of `seed` for the random walk on `A + I`: solves
/// `x (I − (1−α) D⁻¹(A+I)) = α e_seed`.
pub fn ppr_oracle(g: &Graph, seed: usize, alpha: f64) -> Vec<f64> {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] += 1.0;
        let d = (g.degree(i) + 1) as f64;
        for j in std::iter::once(i).chain(g.neighbors(i).iter().copied()) {
            // transposed system
            a[j][i] -= (1.0 - alpha) / d;
        }
    }
    let mut b = vec![0.0; n];
    b[seed] = alpha;
    solve_dense(a, b)
}
