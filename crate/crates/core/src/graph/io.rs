//! Neutral on-disk dataset directory:
//!
//! ```text
//! meta.json     {"num_nodes": n, "num_features": F, "num_classes": C, ...}
//! graph.tsv     src<TAB>dst per line, 0-indexed, each undirected edge once
//! features.f32  n·F little-endian f32 values, row-major
//! labels.tsv    node_id<TAB>label per line, every node present
//! splits.json   {"valid": [ids], "test": [ids]}
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Graph};
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";
pub const GRAPH_FILE: &str = "graph.tsv";
pub const FEATURES_FILE: &str = "features.f32";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLITS_FILE: &str = "splits.json";

/// Contents of `meta.json`. Keys other than the three counts (for example
/// transforms recorded by a converter) are carried through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitsFile {
    valid: Vec<usize>,
    test: Vec<usize>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_id(field: Option<&str>, file: &'static str, line: usize) -> Result<usize> {
    let field = field.ok_or_else(|| Error::Parse {
        file,
        line,
        message: "expected two tab-separated fields".into(),
    })?;
    field.trim().parse().map_err(|_| Error::Parse {
        file,
        line,
        message: format!("not a non-negative integer: {field:?}"),
    })
}

/// Loads a dataset directory, validating every count against `meta.json`.
pub fn ingest_dataset(dir: impl AsRef<Path>) -> Result<(Graph, DatasetSplit)> {
    let dir = dir.as_ref();
    for name in [META_FILE, GRAPH_FILE, FEATURES_FILE, LABELS_FILE, SPLITS_FILE] {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
    }

    let meta: DatasetMeta = serde_json::from_str(&read_text(&dir.join(META_FILE))?)?;
    let n = meta.num_nodes;

    let mut edges = Vec::new();
    for (idx, line) in read_text(&dir.join(GRAPH_FILE))?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let u = parse_id(fields.next(), GRAPH_FILE, idx + 1)?;
        let v = parse_id(fields.next(), GRAPH_FILE, idx + 1)?;
        for id in [u, v] {
            if id >= n {
                return Err(Error::NodeOutOfRange {
                    id,
                    num_nodes: n,
                    context: "graph.tsv",
                });
            }
        }
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        edges.push((u, v));
    }

    let feature_path = dir.join(FEATURES_FILE);
    let bytes = fs::read(&feature_path).map_err(|e| Error::io(&feature_path, e))?;
    let expected = n * meta.num_features * 4;
    if bytes.len() != expected {
        return Err(Error::FeatureLength {
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let features = Array2::from_shape_vec((n, meta.num_features), values)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;

    let mut labels: Vec<Option<usize>> = vec![None; n];
    for (idx, line) in read_text(&dir.join(LABELS_FILE))?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let node = parse_id(fields.next(), LABELS_FILE, idx + 1)?;
        let label = parse_id(fields.next(), LABELS_FILE, idx + 1)?;
        if node >= n {
            return Err(Error::NodeOutOfRange {
                id: node,
                num_nodes: n,
                context: "labels.tsv",
            });
        }
        if label >= meta.num_classes {
            return Err(Error::LabelOutOfRange {
                node,
                label,
                num_classes: meta.num_classes,
            });
        }
        if labels[node].replace(label).is_some() {
            return Err(Error::Parse {
                file: LABELS_FILE,
                line: idx + 1,
                message: format!("node {node} labelled twice"),
            });
        }
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(node, l)| l.ok_or(Error::MissingLabel(node)))
        .collect::<Result<Vec<_>>>()?;

    let splits: SplitsFile = serde_json::from_str(&read_text(&dir.join(SPLITS_FILE))?)?;
    let split = DatasetSplit::from_valid_test(n, splits.valid, splits.test)?;

    let graph = Graph::from_edges(n, &edges, features, labels, meta.num_classes)?;
    Ok((graph, split))
}

/// Writes `graph` and the validation/test part of `split` in the neutral
/// format. Each undirected edge is written once with the smaller id first.
pub fn write_dataset(
    dir: impl AsRef<Path>,
    graph: &Graph,
    split: &DatasetSplit,
    extra_meta: serde_json::Map<String, serde_json::Value>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, data: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, data).map_err(|e| Error::io(path, e))
    };

    let meta = DatasetMeta {
        num_nodes: graph.num_nodes(),
        num_features: graph.num_features(),
        num_classes: graph.num_classes(),
        extra: extra_meta,
    };
    write(META_FILE, serde_json::to_string_pretty(&meta)?.as_bytes())?;

    let mut edges = String::new();
    for (u, v) in graph.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write(GRAPH_FILE, edges.as_bytes())?;

    let mut bytes = Vec::with_capacity(graph.num_nodes() * graph.num_features() * 4);
    for &x in graph.features().iter() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    write(FEATURES_FILE, &bytes)?;

    let mut labels = String::new();
    for (u, l) in graph.labels().iter().enumerate() {
        labels.push_str(&format!("{u}\t{l}\n"));
    }
    write(LABELS_FILE, labels.as_bytes())?;

    let splits = SplitsFile {
        valid: split.valid.clone(),
        test: split.test.clone(),
    };
    write(SPLITS_FILE, serde_json::to_string(&splits)?.as_bytes())?;
    Ok(())
}
