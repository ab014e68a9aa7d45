//! Experiment drivers: split generation, the method comparison table, the
//! CMD-versus-accuracy scan and parameter sweeps.
//!
//! Repetition `r` of a run with master seed `s` uses seed
//! `derive_seed(s, r)` for everything it draws (split, initialization,
//! dropout, regularizer sample), so every method in a repetition sees the
//! same split and adding repetitions never changes earlier ones.

mod config;

pub use config::{Ablation, ExperimentConfig, SamplerConfig, SweepConfig, SweepParam};

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmm::InstanceWeights;
use crate::models::{prepare_input, ModelKind, ModelSpec};
use crate::nn::Features;
use crate::rng::{derive_seed, STREAM_SPLIT};
use crate::sampler::{iid_sample, ppr_biased_sample, SplitKind, TrainSplit};
use crate::trainer::{kmm_weights, regularizer_sample, train, TrainConfig, TrainData, TrainReport};

/// Name of the IID-trained GCN every other method is compared against.
pub const REFERENCE_METHOD: &str = "GCN(IID)";

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub name: String,
    pub model: ModelSpec,
    pub split: SplitKind,
    pub use_cmd_reg: bool,
    pub use_instance_reweight: bool,
}

impl Method {
    fn new(name: &str, model: ModelSpec, split: SplitKind, reg: bool, reweight: bool) -> Self {
        Method {
            name: name.to_string(),
            model,
            split,
            use_cmd_reg: reg,
            use_instance_reweight: reweight,
        }
    }
}

/// Rows of the main comparison, in table order, after the config's
/// ablation setting and method filter.
pub fn table_methods(cfg: &ExperimentConfig) -> Result<Vec<Method>> {
    use SplitKind::{Biased, Iid};
    let gcn = cfg.model(ModelKind::Gcn);
    let appnp = cfg.model(ModelKind::Appnp);
    let mut rows = vec![
        Method::new(REFERENCE_METHOD, gcn.clone(), Iid, false, false),
        Method::new("Feat.+MLP", cfg.model(ModelKind::Mlp), Biased, false, false),
        Method::new("GCN", gcn, Biased, false, false),
        Method::new("SGC", cfg.model(ModelKind::Sgc), Biased, false, false),
        Method::new("APPNP", appnp.clone(), Biased, false, false),
    ];
    if cfg.ablation == Ablation::All {
        rows.push(Method::new("SR-GNN w.o. IR", appnp.clone(), Biased, true, false));
        rows.push(Method::new("SR-GNN w.o. Reg.", appnp.clone(), Biased, false, true));
        rows.push(Method::new("SR-GNN", appnp, Biased, true, true));
    }
    if let Some(names) = &cfg.methods {
        for n in names {
            if !rows.iter().any(|m| &m.name == n) {
                let known: Vec<&str> = rows.iter().map(|m| m.name.as_str()).collect();
                return Err(Error::InvalidParameter(format!(
                    "unknown method {n:?} (known: {})",
                    known.join(", ")
                )));
            }
        }
        rows.retain(|m| names.contains(&m.name));
    }
    Ok(rows)
}

/// Seed of repetition `rep`.
pub fn rep_seed(master: u64, rep: usize) -> u64 {
    derive_seed(master, rep as u64)
}

/// The split of kind `kind` repetition `rep` trains on.
pub fn draw_split(data: TrainData<'_>, cfg: &ExperimentConfig, kind: SplitKind, rep: usize) -> Result<TrainSplit> {
    let seed = derive_seed(rep_seed(cfg.seed, rep), STREAM_SPLIT);
    let TrainData { graph: g, adj, split } = data;
    match kind {
        SplitKind::Biased => ppr_biased_sample(g, adj, &split.train_pool, &cfg.sampler.bias_spec(g, split, seed)),
        SplitKind::Iid => iid_sample(g, &split.train_pool, &cfg.sampler.quota(g, split), seed),
    }
}

/// Splits of every repetition, drawn in parallel.
pub fn draw_splits(data: TrainData<'_>, cfg: &ExperimentConfig, kind: SplitKind) -> Result<Vec<TrainSplit>> {
    (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| draw_split(data, cfg, kind, r))
        .collect()
}

/// Model inputs are shared by every method with the same model kind and
/// propagation power.
struct InputCache {
    entries: Vec<((ModelKind, usize), Features)>,
}

impl InputCache {
    fn build(data: TrainData<'_>, methods: &[Method]) -> Self {
        let mut entries: Vec<((ModelKind, usize), Features)> = Vec::new();
        for m in methods {
            let key = Self::key(&m.model);
            if !entries.iter().any(|(k, _)| *k == key) {
                entries.push((key, prepare_input(&m.model, data.graph, data.adj)));
            }
        }
        InputCache { entries }
    }

    fn key(spec: &ModelSpec) -> (ModelKind, usize) {
        match spec.kind {
            ModelKind::Sgc => (ModelKind::Sgc, spec.sgc.k),
            // every other kind reads the raw features
            _ => (ModelKind::Mlp, 0),
        }
    }

    fn get(&self, spec: &ModelSpec) -> &Features {
        let key = Self::key(spec);
        &self.entries.iter().find(|(k, _)| *k == key).expect("input prepared").1
    }
}

/// Everything one repetition produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub biased: Option<TrainSplit>,
    pub iid: Option<TrainSplit>,
    /// KMM weights by model kind and split kind, when computed.
    pub weights: Vec<((ModelKind, SplitKind), InstanceWeights)>,
    /// One report per method, in method order.
    pub reports: Vec<TrainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub micro_mean: f64,
    pub micro_std: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
    /// Reference mean micro-F1 minus this method's.
    pub delta_f1: Option<f64>,
    pub cmd_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub methods: Vec<Method>,
    pub reps: Vec<RepResult>,
    pub summary: Vec<MethodSummary>,
}

impl Comparison {
    pub fn summary_of(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// Per-repetition reports of one method.
    pub fn reports_of(&self, method: &str) -> Vec<&TrainReport> {
        match self.methods.iter().position(|m| m.name == method) {
            Some(i) => self.reps.iter().map(|r| &r.reports[i]).collect(),
            None => Vec::new(),
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pearson correlation; `None` for fewer than two points or a constant
/// series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return None;
    }
    let (mx, _) = mean_std(xs);
    let (my, _) = mean_std(ys);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn method_config(base: &TrainConfig, m: &Method, seed: u64) -> TrainConfig {
    TrainConfig {
        use_cmd_reg: m.use_cmd_reg,
        use_instance_reweight: m.use_instance_reweight,
        rng_seed: seed,
        ..base.clone()
    }
}

fn run_rep(data: TrainData<'_>, cfg: &ExperimentConfig, methods: &[Method], inputs: &InputCache, rep: usize) -> Result<RepResult> {
    let seed = rep_seed(cfg.seed, rep);
    let needs = |k: SplitKind| methods.iter().any(|m| m.split == k);
    let biased = needs(SplitKind::Biased)
        .then(|| draw_split(data, cfg, SplitKind::Biased, rep))
        .transpose()?;
    let iid = needs(SplitKind::Iid)
        .then(|| draw_split(data, cfg, SplitKind::Iid, rep))
        .transpose()?;

    let mut weights: Vec<((ModelKind, SplitKind), InstanceWeights)> = Vec::new();
    let mut reports = Vec::with_capacity(methods.len());
    for m in methods {
        let split = match m.split {
            SplitKind::Biased => biased.as_ref(),
            SplitKind::Iid => iid.as_ref(),
        }
        .expect("split drawn for every method kind");
        let tcfg = method_config(&cfg.train, m, seed);
        let w = if m.use_instance_reweight {
            // methods on the same split and model share their weights
            let key = (m.model.kind, m.split);
            match weights.iter().find(|(k, _)| *k == key) {
                Some((_, w)) => Some(w.clone()),
                None => {
                    let target = regularizer_sample(data.split, &split.nodes, &tcfg);
                    let w = kmm_weights(&m.model, data.graph, data.adj, &split.nodes, &target, tcfg.kmm_bounds, &tcfg.kernel)?;
                    weights.push((key, w.clone()));
                    Some(w)
                }
            }
        } else {
            None
        };
        let (_, report) = train(data, inputs.get(&m.model), split, &m.model, &tcfg, w.as_ref())?;
        reports.push(report);
    }

    if let Some(r) = methods.iter().position(|m| m.name == REFERENCE_METHOD) {
        let reference = reports[r].micro_f1;
        for report in &mut reports {
            report.delta_f1 = Some(reference - report.micro_f1);
        }
    }
    Ok(RepResult {
        rep,
        seed,
        biased,
        iid,
        weights,
        reports,
    })
}

/// Trains every method on every repetition and summarizes the results.
pub fn run_comparison(data: TrainData<'_>, cfg: &ExperimentConfig, methods: &[Method]) -> Result<Comparison> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods selected".into()));
    }
    let inputs = InputCache::build(data, methods);
    let reps: Vec<RepResult> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_rep(data, cfg, methods, &inputs, rep))
        .collect::<Result<_>>()?;

    let column = |i: usize, f: fn(&TrainReport) -> f64| -> Vec<f64> { reps.iter().map(|r| f(&r.reports[i])).collect() };
    let reference = methods
        .iter()
        .position(|m| m.name == REFERENCE_METHOD)
        .map(|i| mean_std(&column(i, |r| r.micro_f1)).0);
    let summary = methods
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let (micro_mean, micro_std) = mean_std(&column(i, |r| r.micro_f1));
            let (macro_mean, macro_std) = mean_std(&column(i, |r| r.macro_f1));
            MethodSummary {
                method: m.name.clone(),
                micro_mean,
                micro_std,
                macro_mean,
                macro_std,
                delta_f1: reference.map(|r| r - micro_mean),
                cmd_mean: mean_std(&column(i, |r| r.cmd_final)).0,
            }
        })
        .collect();
    Ok(Comparison {
        methods: methods.to_vec(),
        reps,
        summary,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn summary_fields(s: &MethodSummary) -> String {
    format!(
        "{},{},{},{},{}",
        pct(s.micro_mean),
        pct(s.micro_std),
        pct(s.macro_mean),
        pct(s.macro_std),
        s.delta_f1.map_or("n/a".to_string(), pct)
    )
}

/// Comparison table as CSV, F1 values in percent.
pub fn comparison_csv(cmp: &Comparison, provenance: &str) -> String {
    let mut out = format!("{provenance}\nmethod,micro_mean,micro_std,macro_mean,macro_std,delta_f1\n");
    for s in &cmp.summary {
        writeln!(out, "{},{}", s.method, summary_fields(s)).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub split_id: usize,
    pub cmd: f64,
    pub mmd: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftScan {
    pub rows: Vec<ScanRow>,
    pub pearson_r: Option<f64>,
}

/// Trains the base GCN on `cfg.scan_splits` biased splits and correlates
/// the final-layer CMD with test micro-F1.
pub fn run_shiftscan(data: TrainData<'_>, cfg: &ExperimentConfig) -> Result<ShiftScan> {
    cfg.validate()?;
    let gcn = Method::new("GCN", cfg.model(ModelKind::Gcn), SplitKind::Biased, false, false);
    let x = prepare_input(&gcn.model, data.graph, data.adj);
    let rows: Vec<ScanRow> = (0..cfg.scan_splits)
        .into_par_iter()
        .map(|i| {
            let split = draw_split(data, cfg, SplitKind::Biased, i)?;
            let tcfg = method_config(&cfg.train, &gcn, rep_seed(cfg.seed, i));
            let (_, r) = train(data, &x, &split, &gcn.model, &tcfg, None)?;
            Ok(ScanRow {
                split_id: i,
                cmd: r.cmd_final,
                mmd: r.mmd_final,
                micro_f1: r.micro_f1,
            })
        })
        .collect::<Result<_>>()?;
    let cmds: Vec<f64> = rows.iter().map(|r| r.cmd).collect();
    let f1s: Vec<f64> = rows.iter().map(|r| r.micro_f1).collect();
    Ok(ShiftScan {
        pearson_r: pearson(&cmds, &f1s),
        rows,
    })
}

pub fn shiftscan_csv(scan: &ShiftScan, provenance: &str) -> String {
    let mut out = format!("{provenance}\nsplit_id,cmd,mmd,micro_f1\n");
    for r in &scan.rows {
        writeln!(out, "{},{:.6},{:.6},{:.6}", r.split_id, r.cmd, r.mmd, r.micro_f1).unwrap();
    }
    match scan.pearson_r {
        Some(r) => writeln!(out, "# pearson_r={r:.4}").unwrap(),
        None => writeln!(out, "# pearson_r=n/a").unwrap(),
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub comparison: Comparison,
}

/// One comparison per grid value, all with the same per-repetition seeds.
pub fn run_sweep(data: TrainData<'_>, cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("config has no sweep section".into()))?;
    let param = SweepParam::parse(&sweep.parameter)?;
    sweep
        .values
        .iter()
        .map(|&value| {
            let point_cfg = param.apply(cfg, value)?;
            let methods = table_methods(&point_cfg)?;
            Ok(SweepPoint {
                value,
                comparison: run_comparison(data, &point_cfg, &methods)?,
            })
        })
        .collect()
}

pub fn sweep_csv(parameter: &str, points: &[SweepPoint], provenance: &str) -> String {
    let mut out = format!(
        "{provenance}\nparameter,value,method,micro_mean,micro_std,macro_mean,macro_std,delta_f1,cmd_mean\n"
    );
    for p in points {
        for s in &p.comparison.summary {
            writeln!(
                out,
                "{parameter},{},{},{},{:.6}",
                p.value,
                s.method,
                summary_fields(s),
                s.cmd_mean
            )
            .unwrap();
        }
    }
    out
}
