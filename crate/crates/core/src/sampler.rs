//! Training-split construction: the PPR-localized biased sampler and the
//! stratified IID baseline.
//!
//! The biased sampler works class by class. It draws a uniform pool node of
//! the class as a seed and keeps the seed only if its PPR vector has at least
//! `γ` nonzero entries. It then adds the seed followed by its highest-ranked
//! same-label pool nodes (other labels are passed over without using up
//! `γ`) until the class quota is met. Ranking uses the vector expressed
//! against `Ã`.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NormalizedAdjacency};
use crate::ppr::{exact_ppr, push_ppr, PprParams, PprVector};
use crate::rng::stream_rng;

/// Draw budget per class before a biased quota is declared unreachable.
pub const DEFAULT_MAX_DRAWS: usize = 10_000;

/// Graphs up to this size use exact PPR in the biased sampler by default.
pub const EXACT_PPR_NODE_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PprMode {
    Exact,
    Push,
}

impl PprMode {
    /// Exact on citation-scale graphs, local push beyond.
    pub fn for_graph(num_nodes: usize) -> Self {
        if num_nodes <= EXACT_PPR_NODE_LIMIT {
            PprMode::Exact
        } else {
            PprMode::Push
        }
    }
}

/// Parameters of one biased split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub ppr: PprParams,
    pub ppr_mode: PprMode,
    pub per_class_quota: BTreeMap<usize, usize>,
    pub rng_seed: u64,
    pub max_draws: usize,
}

impl BiasSpec {
    pub fn validate(&self) -> Result<()> {
        self.ppr.validate()?;
        if let Some((c, _)) = self.per_class_quota.iter().find(|&(_, &q)| q == 0) {
            return Err(Error::InvalidParameter(format!("quota of class {c} must be at least 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Biased,
    Iid,
}

/// Sampler settings recorded with a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub per_class_quota: BTreeMap<usize, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppr: Option<PprParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppr_mode: Option<PprMode>,
}

/// A labelled training set and how it was drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSplit {
    pub kind: SplitKind,
    pub rng_seed: u64,
    pub params: SplitParams,
    pub seeds_used: Vec<usize>,
    pub nodes: Vec<usize>,
}

impl TrainSplit {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// The same count for every class that has at least one pool node.
pub fn fixed_quota(g: &Graph, pool: &[usize], per_class: usize) -> BTreeMap<usize, usize> {
    g.class_counts(pool)
        .into_iter()
        .enumerate()
        .filter(|&(_, n)| n > 0)
        .map(|(c, _)| (c, per_class))
        .collect()
}

/// Per-class counts for label ratio `tau`: `round(tau · |class c|)` over the
/// whole graph, at least one, for every class present in the pool.
pub fn ratio_quota(g: &Graph, pool: &[usize], tau: f64) -> BTreeMap<usize, usize> {
    let all: Vec<usize> = (0..g.num_nodes()).collect();
    let totals = g.class_counts(&all);
    g.class_counts(pool)
        .into_iter()
        .enumerate()
        .filter(|&(_, n)| n > 0)
        .map(|(c, _)| (c, ((tau * totals[c] as f64).round() as usize).max(1)))
        .collect()
}

fn pool_by_class(g: &Graph, pool: &[usize]) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); g.num_classes()];
    for &u in pool {
        by_class[g.label(u)].push(u);
    }
    by_class
}

fn check_achievable(by_class: &[Vec<usize>], quota: &BTreeMap<usize, usize>) -> Result<()> {
    for (&c, &q) in quota {
        let available = by_class.get(c).map_or(0, Vec::len);
        if q > available {
            return Err(Error::InvalidParameter(format!(
                "quota {q} for class {c} exceeds its {available} pool nodes"
            )));
        }
    }
    Ok(())
}

struct ClassDraw {
    seeds: Vec<usize>,
    nodes: Vec<usize>,
}

/// PPR-localized biased split.
pub fn ppr_biased_sample(
    g: &Graph,
    adj: &NormalizedAdjacency,
    pool: &[usize],
    spec: &BiasSpec,
) -> Result<TrainSplit> {
    spec.validate()?;
    let by_class = pool_by_class(g, pool);
    check_achievable(&by_class, &spec.per_class_quota)?;
    let in_pool: HashSet<usize> = pool.iter().copied().collect();

    let per_class: Vec<(usize, usize)> = spec.per_class_quota.iter().map(|(&c, &q)| (c, q)).collect();
    let draws: Vec<ClassDraw> = per_class
        .par_iter()
        .map(|&(class, quota)| {
            let vector_of = |seed: usize| -> Result<PprVector> {
                Ok(match spec.ppr_mode {
                    PprMode::Exact => exact_ppr(adj, seed, spec.ppr.alpha)?,
                    PprMode::Push => push_ppr(g, seed, &spec.ppr)?,
                })
            };
            sample_class(g, adj, &by_class[class], &in_pool, class, quota, spec, vector_of)
        })
        .collect::<Result<_>>()?;

    let mut split = TrainSplit {
        kind: SplitKind::Biased,
        rng_seed: spec.rng_seed,
        params: SplitParams {
            per_class_quota: spec.per_class_quota.clone(),
            ppr: Some(spec.ppr),
            ppr_mode: Some(spec.ppr_mode),
        },
        seeds_used: Vec::new(),
        nodes: Vec::new(),
    };
    for d in draws {
        split.seeds_used.extend(d.seeds);
        split.nodes.extend(d.nodes);
    }
    Ok(split)
}

#[allow(clippy::too_many_arguments)]
fn sample_class(
    g: &Graph,
    adj: &NormalizedAdjacency,
    candidates: &[usize],
    in_pool: &HashSet<usize>,
    class: usize,
    quota: usize,
    spec: &BiasSpec,
    vector_of: impl Fn(usize) -> Result<PprVector>,
) -> Result<ClassDraw> {
    let mut rng = stream_rng(spec.rng_seed, class as u64 + 1);
    let mut chosen: Vec<usize> = Vec::with_capacity(quota);
    let mut taken: HashSet<usize> = HashSet::with_capacity(quota);
    let mut seeds = Vec::new();
    let mut draws = 0;

    while chosen.len() < quota {
        if draws >= spec.max_draws {
            return Err(Error::QuotaUnreachable {
                class,
                quota,
                reached: chosen.len(),
                draws,
            });
        }
        draws += 1;
        let seed = candidates[rng.random_range(0..candidates.len())];
        let vector = vector_of(seed)?;
        if vector.support_size() < spec.ppr.gamma {
            continue;
        }
        seeds.push(seed);

        let mut ranked: Vec<(usize, f64)> = vector
            .to_symmetric(adj)
            .entries
            .into_iter()
            .filter(|&(u, m)| m > 0.0 && u != seed)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let neighbours = ranked
            .into_iter()
            .map(|(u, _)| u)
            .filter(|&u| g.label(u) == class && in_pool.contains(&u))
            .take(spec.ppr.gamma);

        for u in std::iter::once(seed).chain(neighbours) {
            if chosen.len() == quota {
                break;
            }
            if taken.insert(u) {
                chosen.push(u);
            }
        }
    }
    Ok(ClassDraw {
        seeds,
        nodes: chosen,
    })
}

/// Stratified uniform sample without replacement.
pub fn iid_sample(
    g: &Graph,
    pool: &[usize],
    per_class_quota: &BTreeMap<usize, usize>,
    rng_seed: u64,
) -> Result<TrainSplit> {
    let by_class = pool_by_class(g, pool);
    check_achievable(&by_class, per_class_quota)?;
    let mut nodes = Vec::new();
    for (&class, &quota) in per_class_quota {
        let mut rng = stream_rng(rng_seed, class as u64 + 1);
        let members = &by_class[class];
        nodes.extend(index::sample(&mut rng, members.len(), quota).into_iter().map(|i| members[i]));
    }
    Ok(TrainSplit {
        kind: SplitKind::Iid,
        rng_seed,
        params: SplitParams {
            per_class_quota: per_class_quota.clone(),
            ppr: None,
            ppr_mode: None,
        },
        seeds_used: Vec::new(),
        nodes,
    })
}
