//! Synthetic graphs for tests, property checks and smoke runs.
//!
//! [`planted_citation_graph`] produces a citation-like dataset: classes split
//! into communities, edges mostly inside a community, and sparse
//! bag-of-words features drawn from community- and class-level topics. The
//! community structure is what makes a graph-localized training split look
//! different from a uniform one.

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetSplit, Graph};

pub fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    Graph::structure_only(n, &edges).expect("path graph is valid")
}

/// Hub `0` connected to leaves `1..=leaves`.
pub fn star(leaves: usize) -> Graph {
    let edges: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
    Graph::structure_only(leaves + 1, &edges).expect("star graph is valid")
}

pub fn cycle(n: usize) -> Graph {
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Graph::structure_only(n, &edges).expect("cycle graph is valid")
}

/// Disjoint cliques of the given sizes, numbered consecutively.
pub fn cliques(sizes: &[usize]) -> Graph {
    let mut edges = Vec::new();
    let mut offset = 0;
    for &s in sizes {
        for i in 0..s {
            for j in i + 1..s {
                edges.push((offset + i, offset + j));
            }
        }
        offset += s;
    }
    Graph::structure_only(offset, &edges).expect("clique union is valid")
}

/// G(n, p) without features.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::structure_only(n, &edges).expect("random graph is valid")
}

/// Parameters of [`planted_citation_graph`].
#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub communities_per_class: usize,
    pub num_features: usize,
    pub num_edges: usize,
    /// Probability an edge stays inside its source's community.
    pub p_community: f64,
    /// Probability an edge stays inside its source's class (any community),
    /// given it left the community.
    pub p_class: f64,
    pub words_per_node: usize,
    pub topic_size: usize,
    /// Probability a word comes from the community topic.
    pub w_community: f64,
    /// Probability a word comes from the class topic.
    pub w_class: f64,
    pub valid_size: usize,
    pub test_size: usize,
}

impl PlantedConfig {
    /// Node, edge, feature and class counts of the Cora citation graph.
    pub fn cora_sized() -> Self {
        PlantedConfig {
            num_nodes: 2708,
            num_classes: 7,
            communities_per_class: 6,
            num_features: 1433,
            num_edges: 5278,
            p_community: 0.75,
            p_class: 0.6,
            words_per_node: 18,
            topic_size: 30,
            w_community: 0.3,
            w_class: 0.2,
            valid_size: 500,
            test_size: 1000,
        }
    }

    pub fn small() -> Self {
        PlantedConfig {
            num_nodes: 300,
            num_classes: 3,
            communities_per_class: 4,
            num_features: 120,
            num_edges: 900,
            p_community: 0.8,
            p_class: 0.6,
            words_per_node: 12,
            topic_size: 10,
            w_community: 0.35,
            w_class: 0.25,
            valid_size: 60,
            test_size: 100,
        }
    }
}

/// Generates a graph and a validation/test split. Deterministic in `seed`.
pub fn planted_citation_graph(cfg: &PlantedConfig, seed: u64) -> (Graph, DatasetSplit) {
    let n = cfg.num_nodes;
    let c = cfg.num_classes;
    let k = cfg.communities_per_class.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);
    let community: Vec<usize> = labels.iter().map(|&l| l * k + rng.random_range(0..k)).collect();

    let mut members = vec![Vec::new(); c * k];
    let mut class_members = vec![Vec::new(); c];
    for u in 0..n {
        members[community[u]].push(u);
        class_members[labels[u]].push(u);
    }

    let max_edges = n * (n - 1) / 2;
    let target = cfg.num_edges.min(max_edges);
    let mut seen = HashSet::with_capacity(target * 2);
    let mut edges = Vec::with_capacity(target);
    while edges.len() < target {
        let u = rng.random_range(0..n);
        let roll: f64 = rng.random();
        let v = if roll < cfg.p_community {
            *members[community[u]].choose(&mut rng).unwrap()
        } else if rng.random::<f64>() < cfg.p_class {
            *class_members[labels[u]].choose(&mut rng).unwrap()
        } else {
            rng.random_range(0..n)
        };
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            edges.push(key);
        }
    }

    let vocab: Vec<usize> = (0..cfg.num_features).collect();
    let draw_topic = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        vocab
            .choose_multiple(rng, cfg.topic_size.min(cfg.num_features))
            .copied()
            .collect()
    };
    let class_topics: Vec<Vec<usize>> = (0..c).map(|_| draw_topic(&mut rng)).collect();
    let community_topics: Vec<Vec<usize>> = (0..c * k).map(|_| draw_topic(&mut rng)).collect();

    let mut features = Array2::<f32>::zeros((n, cfg.num_features));
    for u in 0..n {
        let mut words = HashSet::new();
        for _ in 0..cfg.words_per_node.max(1) {
            let roll: f64 = rng.random();
            let w = if roll < cfg.w_community {
                *community_topics[community[u]].choose(&mut rng).unwrap()
            } else if roll < cfg.w_community + cfg.w_class {
                *class_topics[labels[u]].choose(&mut rng).unwrap()
            } else {
                rng.random_range(0..cfg.num_features)
            };
            words.insert(w);
        }
        let weight = 1.0 / words.len() as f32;
        for w in words {
            features[[u, w]] = weight;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let valid = order[..cfg.valid_size].to_vec();
    let test = order[cfg.valid_size..cfg.valid_size + cfg.test_size].to_vec();

    let graph = Graph::from_edges(n, &edges, features, labels, c).expect("generated graph is valid");
    let split = DatasetSplit::from_valid_test(n, valid, test).expect("generated split is valid");
    (graph, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_graph_matches_requested_counts() {
        let cfg = PlantedConfig::small();
        let (g, split) = planted_citation_graph(&cfg, 3);
        assert_eq!(g.num_nodes(), cfg.num_nodes);
        assert_eq!(g.num_edges(), cfg.num_edges);
        assert_eq!(g.num_features(), cfg.num_features);
        assert_eq!(split.train_pool.len(), cfg.num_nodes - cfg.valid_size - cfg.test_size);
        for row in g.features().outer_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn planted_graph_is_deterministic() {
        let cfg = PlantedConfig::small();
        let (a, _) = planted_citation_graph(&cfg, 9);
        let (b, _) = planted_citation_graph(&cfg, 9);
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.features(), b.features());
    }

    #[test]
    fn small_shapes() {
        assert_eq!(star(5).degree(0), 5);
        assert_eq!(cycle(4).num_edges(), 4);
        assert_eq!(cliques(&[3, 4]).num_edges(), 3 + 6);
        assert_eq!(path(1).num_edges(), 0);
    }
}
