use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{DatasetSplit, Graph};
use crate::models::{ModelKind, ModelSpec};
use crate::ppr::PprParams;
use crate::sampler::{fixed_quota, ratio_quota, BiasSpec, PprMode, DEFAULT_MAX_DRAWS};
use crate::trainer::TrainConfig;

/// Sampler section of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: usize,
    /// `None` picks exact PPR on graphs up to 20,000 nodes, push beyond.
    pub ppr_mode: Option<PprMode>,
    /// Labels per class; ignored when `label_ratio` is set.
    pub per_class: usize,
    pub label_ratio: Option<f64>,
    pub max_draws: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        let p = PprParams::default();
        SamplerConfig {
            alpha: p.alpha,
            epsilon: p.epsilon,
            gamma: p.gamma,
            ppr_mode: None,
            per_class: 20,
            label_ratio: None,
            max_draws: DEFAULT_MAX_DRAWS,
        }
    }
}

impl SamplerConfig {
    /// Named parameter presets: `paper` (the defaults) and `appendix`
    /// (`γ = 20`, `ε = 0.005`).
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let p = match name {
            "paper" | "default" => PprParams::default(),
            "appendix" => PprParams::appendix(),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preset {other:?} (known: paper, appendix)"
                )))
            }
        };
        self.alpha = p.alpha;
        self.epsilon = p.epsilon;
        self.gamma = p.gamma;
        Ok(())
    }

    pub fn ppr(&self) -> PprParams {
        PprParams {
            alpha: self.alpha,
            epsilon: self.epsilon,
            gamma: self.gamma,
        }
    }

    pub fn bias_spec(&self, g: &Graph, split: &DatasetSplit, rng_seed: u64) -> BiasSpec {
        BiasSpec {
            ppr: self.ppr(),
            ppr_mode: self.ppr_mode.unwrap_or(PprMode::for_graph(g.num_nodes())),
            per_class_quota: self.quota(g, split),
            rng_seed,
            max_draws: self.max_draws,
        }
    }

    pub fn quota(&self, g: &Graph, split: &DatasetSplit) -> std::collections::BTreeMap<usize, usize> {
        match self.label_ratio {
            Some(tau) => ratio_quota(g, &split.train_pool, tau),
            None => fixed_quota(g, &split.train_pool, self.per_class),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    /// Base models plus the three corrected variants.
    #[default]
    All,
    /// Base models only.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// A complete experiment description. Flags given on the command line
/// override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub seed: u64,
    pub repetitions: usize,
    pub sampler: SamplerConfig,
    /// Per-kind model settings; kinds not listed use defaults.
    pub models: Vec<ModelSpec>,
    pub train: TrainConfig,
    pub ablation: Ablation,
    /// Restricts comparisons to these method names.
    pub methods: Option<Vec<String>>,
    pub sweep: Option<SweepConfig>,
    /// Number of biased splits in a shift scan.
    pub scan_splits: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            seed: 0,
            repetitions: 20,
            sampler: SamplerConfig::default(),
            models: Vec::new(),
            train: TrainConfig::default(),
            ablation: Ablation::All,
            methods: None,
            sweep: None,
            scan_splits: 100,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn model(&self, kind: ModelKind) -> ModelSpec {
        self.models
            .iter()
            .find(|m| m.kind == kind)
            .cloned()
            .unwrap_or_else(|| ModelSpec::new(kind))
    }

    pub fn model_mut(&mut self, kind: ModelKind) -> &mut ModelSpec {
        if let Some(i) = self.models.iter().position(|m| m.kind == kind) {
            &mut self.models[i]
        } else {
            self.models.push(ModelSpec::new(kind));
            self.models.last_mut().unwrap()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
        }
        self.sampler.ppr().validate()?;
        if let Some(tau) = self.sampler.label_ratio {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::InvalidParameter(format!("label_ratio must lie in (0, 1], got {tau}")));
            }
        } else if self.sampler.per_class == 0 {
            return Err(Error::InvalidParameter("per_class must be at least 1".into()));
        }
        for m in &self.models {
            m.validate()?;
        }
        self.train.validate()?;
        if let Some(s) = &self.sweep {
            SweepParam::parse(&s.parameter)?;
            if s.values.is_empty() {
                return Err(Error::InvalidParameter("sweep needs at least one value".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    /// Digest of everything that affects results; the output location is left out.
    pub fn hash(&self) -> String {
        let unplaced = ExperimentConfig {
            output: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&unplaced).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// One-line provenance header for CSV outputs.
    pub fn provenance(&self) -> String {
        format!(
            "# srgnn {} config_sha256={} seed={}",
            env!("CARGO_PKG_VERSION"),
            self.hash(),
            self.seed
        )
    }
}

/// Parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    SamplerAlpha,
    SamplerEpsilon,
    SamplerGamma,
    Lambda,
    LowerBound,
    UpperBound,
    GcnDepth,
    AppnpSteps,
    AppnpAlpha,
    SgcPower,
}

impl SweepParam {
    pub const NAMES: [(&'static str, SweepParam); 10] = [
        ("sampler.alpha", SweepParam::SamplerAlpha),
        ("sampler.epsilon", SweepParam::SamplerEpsilon),
        ("sampler.gamma", SweepParam::SamplerGamma),
        ("train.lambda", SweepParam::Lambda),
        ("train.kmm_bounds.lower", SweepParam::LowerBound),
        ("train.kmm_bounds.upper", SweepParam::UpperBound),
        ("models.gcn.depth", SweepParam::GcnDepth),
        ("models.appnp.k_steps", SweepParam::AppnpSteps),
        ("models.appnp.alpha", SweepParam::AppnpAlpha),
        ("models.sgc.k", SweepParam::SgcPower),
    ];

    pub fn parse(name: &str) -> Result<Self> {
        Self::NAMES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, p)| p)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::NAMES.iter().map(|(n, _)| *n).collect();
                Error::InvalidParameter(format!("unknown sweep parameter {name:?} (known: {})", known.join(", ")))
            })
    }

    fn as_count(value: f64) -> Result<usize> {
        if value >= 0.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(Error::InvalidParameter(format!("{value} is not a whole number")))
        }
    }

    /// Copy of `cfg` with this parameter set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut out = cfg.clone();
        match self {
            SweepParam::SamplerAlpha => out.sampler.alpha = value,
            SweepParam::SamplerEpsilon => out.sampler.epsilon = value,
            SweepParam::SamplerGamma => out.sampler.gamma = Self::as_count(value)?,
            SweepParam::Lambda => out.train.lambda = value,
            SweepParam::LowerBound => out.train.kmm_bounds.lower = value,
            SweepParam::UpperBound => out.train.kmm_bounds.upper = value,
            SweepParam::GcnDepth => {
                let depth = Self::as_count(value)?;
                let gcn = out.model_mut(ModelKind::Gcn);
                let width = gcn.hidden_dims.first().copied().unwrap_or(32);
                gcn.hidden_dims = vec![width; depth.saturating_sub(1)];
            }
            SweepParam::AppnpSteps => out.model_mut(ModelKind::Appnp).appnp.k_steps = Self::as_count(value)?,
            SweepParam::AppnpAlpha => out.model_mut(ModelKind::Appnp).appnp.alpha = value,
            SweepParam::SgcPower => out.model_mut(ModelKind::Sgc).sgc.k = Self::as_count(value)?,
        }
        out.validate()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_hash_is_stable() {
        let cfg = ExperimentConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"repetitions": 3, "sampler": {"gamma": 7}}"#).unwrap();
        assert_eq!(cfg.repetitions, 3);
        assert_eq!(cfg.sampler.gamma, 7);
        assert_eq!(cfg.sampler.alpha, 0.1);
        assert_eq!(cfg.train.lr, 0.01);
        assert!(ExperimentConfig::from_json(r#"{"repetitons": 3}"#).is_err());
    }

    #[test]
    fn appendix_preset() {
        let mut s = SamplerConfig::default();
        s.apply_preset("appendix").unwrap();
        assert_eq!((s.gamma, s.epsilon), (20, 0.005));
        assert!(s.apply_preset("nope").is_err());
    }

    #[test]
    fn sweep_parameters_apply() {
        let cfg = ExperimentConfig::default();
        let deep = SweepParam::parse("models.gcn.depth").unwrap().apply(&cfg, 5.0).unwrap();
        assert_eq!(deep.model(ModelKind::Gcn).depth(), 5);
        let bl = SweepParam::parse("train.kmm_bounds.lower").unwrap().apply(&cfg, 0.8).unwrap();
        assert_eq!(bl.train.kmm_bounds.lower, 0.8);
        assert!(SweepParam::parse("train.nonexistent").is_err());
        assert!(SweepParam::parse("sampler.gamma").unwrap().apply(&cfg, 2.5).is_err());
    }
}
