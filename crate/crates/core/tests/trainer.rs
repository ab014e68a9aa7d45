use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srgnn::discrepancy::{cmd, CmdConfig, Support};
use srgnn::error::Error;
use srgnn::graph::{normalize_adjacency, synthetic, DatasetSplit, Graph, NormalizedAdjacency};
use srgnn::kmm::InstanceWeights;
use srgnn::models::{prepare_input, ModelKind, ModelParams, ModelSpec};
use srgnn::ppr::PprParams;
use srgnn::sampler::{fixed_quota, ppr_biased_sample, BiasSpec, PprMode, TrainSplit};
use srgnn::trainer::{loss_and_grad, train, train_model, Objective, TrainConfig, TrainData};

struct Fixture {
    g: Graph,
    adj: NormalizedAdjacency,
    split: DatasetSplit,
    biased: TrainSplit,
}

impl Fixture {
    fn new() -> Self {
        let (g, split) = synthetic::planted_citation_graph(&synthetic::PlantedConfig::small(), 3);
        let adj = normalize_adjacency(&g);
        let spec = BiasSpec {
            ppr: PprParams { alpha: 0.1, epsilon: 1e-4, gamma: 20 },
            ppr_mode: PprMode::Exact,
            per_class_quota: fixed_quota(&g, &split.train_pool, 10),
            rng_seed: 4,
            max_draws: 10_000,
        };
        let biased = ppr_biased_sample(&g, &adj, &split.train_pool, &spec).unwrap();
        Fixture { g, adj, split, biased }
    }

    fn data(&self) -> TrainData<'_> {
        TrainData {
            graph: &self.g,
            adj: &self.adj,
            split: &self.split,
        }
    }
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 60,
        rng_seed: seed,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_head_loss_is_log_classes_plus_regularizer_and_decay() {
    let f = Fixture::new();
    let spec = ModelSpec::new(ModelKind::Mlp);
    let x = prepare_input(&spec, &f.g, &f.adj);
    let mut params = ModelParams::init(&spec, x.ncols(), f.g.num_classes(), &mut ChaCha8Rng::seed_from_u64(1));
    params.head_mut().weight.fill(0.0);
    params.head_mut().bias.fill(0.0);
    let iid: Vec<usize> = f.split.train_pool.iter().copied().filter(|u| !f.biased.nodes.contains(u)).take(30).collect();
    let (lambda, wd) = (0.8, 5e-4);
    let obj = Objective {
        train_nodes: &f.biased.nodes,
        beta: None,
        iid_nodes: Some(&iid),
        lambda,
        cmd: CmdConfig::default(),
        weight_decay: wd,
    };
    let (loss, _) = loss_and_grad(&spec, &params, &f.g, &f.adj, &x, &obj, 0.0, None).unwrap();

    let enc = &params.layers[0];
    let z = (f.g.features_f64().dot(&enc.weight) + &enc.bias).mapv(f64::tanh);
    let d0 = cmd(
        z.select(Axis(0), &f.biased.nodes).view(),
        z.select(Axis(0), &iid).view(),
        CmdConfig::default(),
        Support::tanh(),
    )
    .unwrap();
    let l2 = 0.5 * wd * enc.weight.iter().map(|w| w * w).sum::<f64>();
    let c = f.g.num_classes() as f64;
    assert!((loss.ce - c.ln()).abs() < 1e-12);
    assert!((loss.reg_cmd - d0).abs() < 1e-12);
    assert!((loss.total - (c.ln() + lambda * d0 + l2)).abs() < 1e-12);
}

#[test]
fn training_is_deterministic() {
    let f = Fixture::new();
    for kind in [ModelKind::Gcn, ModelKind::Appnp] {
        let spec = ModelSpec::new(kind);
        let cfg = TrainConfig {
            use_cmd_reg: true,
            ..quick(8)
        };
        let a = train_model(f.data(), &f.biased, &spec, &cfg).unwrap();
        let b = train_model(f.data(), &f.biased, &spec, &cfg).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn ablation_flags_recover_the_plain_objectives() {
    let f = Fixture::new();
    let spec = ModelSpec::new(ModelKind::Appnp);
    let x = prepare_input(&spec, &f.g, &f.adj);
    let plain = train(f.data(), &x, &f.biased, &spec, &quick(2), None).unwrap();

    let reg_off = TrainConfig {
        use_cmd_reg: true,
        lambda: 0.0,
        ..quick(2)
    };
    assert_eq!(train(f.data(), &x, &f.biased, &spec, &reg_off, None).unwrap(), plain);

    let unit_weights = TrainConfig {
        use_instance_reweight: true,
        ..quick(2)
    };
    let uniform = InstanceWeights::uniform(f.biased.len());
    assert_eq!(train(f.data(), &x, &f.biased, &spec, &unit_weights, Some(&uniform)).unwrap(), plain);

    // a positive lambda does change the run
    let reg_on = TrainConfig {
        use_cmd_reg: true,
        ..quick(2)
    };
    let (_, r) = train(f.data(), &x, &f.biased, &spec, &reg_on, None).unwrap();
    assert_ne!(r.loss_curve, plain.1.loss_curve);
    assert!(r.loss_curve.iter().all(|l| l.reg_cmd > 0.0));
}

#[test]
fn every_model_learns_the_planted_classes() {
    let f = Fixture::new();
    for kind in [ModelKind::Mlp, ModelKind::Gcn, ModelKind::Sgc, ModelKind::Appnp] {
        let spec = ModelSpec::new(kind);
        let (_, r) = train_model(f.data(), &f.biased, &spec, &quick(5)).unwrap();
        assert!(r.micro_f1 > 0.6, "{}: micro-F1 {}", kind.name(), r.micro_f1);
        assert!(r.macro_f1 <= 1.0 && r.micro_f1 == r.accuracy);
        assert!(r.best_epoch >= 1 && r.best_epoch <= 60);
        assert_eq!(r.loss_curve.len(), 60);
        assert!(r.cmd_final >= 0.0 && r.mmd_final > -1e-12);
    }
}

#[test]
fn full_correction_runs_with_kmm_weights() {
    let f = Fixture::new();
    let spec = ModelSpec::new(ModelKind::Appnp);
    let cfg = TrainConfig {
        use_cmd_reg: true,
        use_instance_reweight: true,
        resample_iid_each_epoch: true,
        iid_reg_sample_size: Some(40),
        ..quick(6)
    };
    let (_, r) = train_model(f.data(), &f.biased, &spec, &cfg).unwrap();
    assert!(r.micro_f1 > 0.6);
}

#[test]
fn reweighting_needs_a_linearized_model() {
    let f = Fixture::new();
    let cfg = TrainConfig {
        use_instance_reweight: true,
        ..quick(1)
    };
    let err = train_model(f.data(), &f.biased, &ModelSpec::new(ModelKind::Gcn), &cfg).unwrap_err();
    assert!(matches!(err, Error::InvalidParameter(_)), "{err}");
}

#[test]
fn divergence_is_reported() {
    let f = Fixture::new();
    let cfg = TrainConfig {
        lr: 1e200,
        dropout: 0.0,
        ..quick(1)
    };
    let err = train_model(f.data(), &f.biased, &ModelSpec::new(ModelKind::Mlp), &cfg).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
}

#[test]
fn empty_split_is_rejected() {
    let f = Fixture::new();
    let empty = TrainSplit {
        nodes: Vec::new(),
        seeds_used: Vec::new(),
        ..f.biased.clone()
    };
    let err = train_model(f.data(), &empty, &ModelSpec::new(ModelKind::Mlp), &quick(1)).unwrap_err();
    assert!(matches!(err, Error::EmptySplit));
}
