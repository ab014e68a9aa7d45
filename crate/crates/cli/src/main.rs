use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use srgnn::experiment::{
    comparison_csv, draw_split, draw_splits, rep_seed, run_comparison, run_shiftscan, run_sweep, shiftscan_csv,
    sweep_csv, table_methods, Ablation, ExperimentConfig, SweepConfig,
};
use srgnn::graph::{ingest_dataset, normalize_adjacency, DatasetSplit, Graph, NormalizedAdjacency};
use srgnn::models::prepare_input;
use srgnn::ppr::{exact_ppr, push_ppr};
use srgnn::sampler::{SplitKind, TrainSplit};
use srgnn::trainer::{train, TrainConfig, TrainData};

/// Shift-robust node classification experiments.
#[derive(Parser)]
#[command(name = "srgnn", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Dataset directory, or a name looked up under $SRGNN_DATA (default `data/`).
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; without it results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sampler preset: `paper` or `appendix`.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Number of repetitions.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw training splits, one JSON file per repetition.
    Sample {
        #[arg(long, value_enum, default_value = "biased")]
        kind: KindArg,
    },
    /// Train one method on one split and print its report.
    Train {
        /// Method name as it appears in the comparison table.
        #[arg(long, default_value = "SR-GNN")]
        method: String,
        /// Split file written by `sample`; defaults to the repetition's own split.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        rep: usize,
    },
    /// Run the method comparison table.
    Compare {
        #[arg(long, value_enum)]
        ablation: Option<AblationArg>,
        /// Restrict to these methods (repeatable).
        #[arg(long = "method")]
        methods: Vec<String>,
    },
    /// Correlate representation shift with accuracy over many biased splits.
    Shiftscan {
        #[arg(long)]
        splits: Option<usize>,
    },
    /// Repeat the comparison over a parameter grid.
    Sweep {
        /// Parameter name, e.g. `sampler.alpha`.
        #[arg(long)]
        param: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Restrict to these methods (repeatable).
        #[arg(long = "method")]
        methods: Vec<String>,
    },
    /// Dump the personalized PageRank vector of one node as TSV.
    Ppr {
        #[arg(long)]
        node: usize,
        #[arg(long, value_enum, default_value = "exact")]
        mode: PprArg,
        /// Express the vector against the symmetric normalized adjacency.
        #[arg(long)]
        symmetric: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Biased,
    Iid,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    All,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum PprArg {
    Exact,
    Push,
}

/// Errors split by exit code.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

/// Bad parameters found while running are still configuration errors.
fn run_err(e: srgnn::Error) -> Failure {
    match e {
        srgnn::Error::InvalidParameter(_) => Failure::Config(e.into()),
        other => Failure::Runtime(other.into()),
    }
}

fn write_err(e: anyhow::Error) -> Failure {
    Failure::Runtime(e)
}

struct Loaded {
    cfg: ExperimentConfig,
    graph: Graph,
    adj: NormalizedAdjacency,
    split: DatasetSplit,
}

impl Loaded {
    fn data(&self) -> TrainData<'_> {
        TrainData {
            graph: &self.graph,
            adj: &self.adj,
            split: &self.split,
        }
    }
}

fn resolve_dataset(arg: &str) -> PathBuf {
    let direct = PathBuf::from(arg);
    if direct.is_dir() {
        return direct;
    }
    let root = std::env::var_os("SRGNN_DATA").map_or_else(|| PathBuf::from("data"), PathBuf::from);
    root.join(arg)
}

fn build_config(common: &Common, command: &Command) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(config_err)?;
            ExperimentConfig::from_json(&text)
                .with_context(|| format!("parsing config {}", path.display()))
                .map_err(config_err)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &common.dataset {
        cfg.dataset = Some(resolve_dataset(d));
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = &common.preset {
        cfg.sampler.apply_preset(p).map_err(config_err)?;
    }
    if let Some(r) = common.reps {
        cfg.repetitions = r;
    }
    if let Some(e) = common.epochs {
        cfg.train.epochs = e;
    }
    if let Some(o) = &common.out {
        cfg.output = Some(o.clone());
    }
    match command {
        Command::Compare { ablation, methods } => {
            if let Some(a) = ablation {
                cfg.ablation = match a {
                    AblationArg::All => Ablation::All,
                    AblationArg::None => Ablation::None,
                };
            }
            if !methods.is_empty() {
                cfg.methods = Some(methods.clone());
            }
        }
        Command::Shiftscan { splits: Some(n) } => cfg.scan_splits = *n,
        Command::Sweep { param, values, methods } => {
            if !methods.is_empty() {
                cfg.methods = Some(methods.clone());
            }
            if let Some(p) = param {
                cfg.sweep = Some(SweepConfig {
                    parameter: p.clone(),
                    values: values.clone(),
                });
            } else if !values.is_empty() {
                return Err(config_err(anyhow!("--values needs --param")));
            }
            if cfg.sweep.is_none() {
                return Err(config_err(anyhow!("sweep needs --param and --values or a sweep section in the config")));
            }
        }
        _ => {}
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn load(common: &Common, command: &Command) -> Result<Loaded, Failure> {
    let cfg = build_config(common, command)?;
    let dir = cfg
        .dataset
        .clone()
        .ok_or_else(|| config_err(anyhow!("no dataset given (use --dataset or the config's \"dataset\" key)")))?;
    if !dir.is_dir() {
        return Err(config_err(anyhow!("dataset directory {} not found", dir.display())));
    }
    let (graph, split) = ingest_dataset(&dir)
        .with_context(|| format!("loading dataset {}", dir.display()))
        .map_err(config_err)?;
    let adj = normalize_adjacency(&graph);
    Ok(Loaded { cfg, graph, adj, split })
}

/// Writes `text` to `dir/name`, or to stdout without an output directory.
fn emit(dir: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    match dir {
        Some(dir) => {
            fs::create_dir_all(dir)
                .and_then(|()| fs::write(dir.join(name), text))
                .with_context(|| format!("writing {}", dir.join(name).display()))
                .map_err(write_err)?;
            eprintln!("wrote {}", dir.join(name).display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| write_err(e.into()))
}

fn cmd_sample(l: &Loaded, kind: KindArg) -> Result<(), Failure> {
    let dir = l
        .cfg
        .output
        .as_deref()
        .ok_or_else(|| config_err(anyhow!("sample writes one file per repetition and needs --out")))?;
    let kind = match kind {
        KindArg::Biased => SplitKind::Biased,
        KindArg::Iid => SplitKind::Iid,
    };
    let splits = draw_splits(l.data(), &l.cfg, kind).map_err(run_err)?;
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(write_err)?;
    for (r, s) in splits.iter().enumerate() {
        let path = dir.join(format!("split_{r:04}.json"));
        fs::write(&path, to_json(s)?)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(write_err)?;
    }
    eprintln!("wrote {} splits to {}", splits.len(), dir.display());
    Ok(())
}

fn cmd_train(l: &Loaded, method: &str, split_file: Option<&Path>, rep: usize) -> Result<(), Failure> {
    let mut cfg = l.cfg.clone();
    cfg.methods = None;
    cfg.ablation = Ablation::All;
    let methods = table_methods(&cfg).map_err(config_err)?;
    let m = methods
        .iter()
        .find(|m| m.name == method)
        .ok_or_else(|| config_err(anyhow!("unknown method {method:?}")))?;
    let split: TrainSplit = match split_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading split {}", path.display()))
                .map_err(config_err)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing split {}", path.display()))
                .map_err(config_err)?
        }
        None => draw_split(l.data(), &cfg, m.split, rep).map_err(run_err)?,
    };
    if let Some(&bad) = split.nodes.iter().find(|&&u| u >= l.graph.num_nodes()) {
        return Err(config_err(anyhow!("split node {bad} is out of range")));
    }
    let tcfg = TrainConfig {
        use_cmd_reg: m.use_cmd_reg,
        use_instance_reweight: m.use_instance_reweight,
        rng_seed: rep_seed(cfg.seed, rep),
        ..cfg.train.clone()
    };
    let x = prepare_input(&m.model, &l.graph, &l.adj);
    let (_, report) = train(l.data(), &x, &split, &m.model, &tcfg, None).map_err(run_err)?;
    eprintln!(
        "{}: micro-F1 {:.4} macro-F1 {:.4} cmd {:.4} (best epoch {})",
        m.name, report.micro_f1, report.macro_f1, report.cmd_final, report.best_epoch
    );
    emit(cfg.output.as_deref(), "train_report.json", &to_json(&report)?)
}

fn cmd_compare(l: &Loaded) -> Result<(), Failure> {
    let methods = table_methods(&l.cfg).map_err(config_err)?;
    let cmp = run_comparison(l.data(), &l.cfg, &methods).map_err(run_err)?;
    let out = l.cfg.output.as_deref();
    emit(out, "compare.csv", &comparison_csv(&cmp, &l.cfg.provenance()))?;
    if out.is_some() {
        emit(out, "compare.json", &to_json(&cmp)?)?;
    }
    Ok(())
}

fn cmd_shiftscan(l: &Loaded) -> Result<(), Failure> {
    let scan = run_shiftscan(l.data(), &l.cfg).map_err(run_err)?;
    emit(l.cfg.output.as_deref(), "shiftscan.csv", &shiftscan_csv(&scan, &l.cfg.provenance()))
}

fn cmd_sweep(l: &Loaded) -> Result<(), Failure> {
    let points = run_sweep(l.data(), &l.cfg).map_err(run_err)?;
    let param = &l.cfg.sweep.as_ref().expect("validated").parameter;
    emit(l.cfg.output.as_deref(), "sweep.csv", &sweep_csv(param, &points, &l.cfg.provenance()))
}

fn cmd_ppr(l: &Loaded, node: usize, mode: PprArg, symmetric: bool) -> Result<(), Failure> {
    if node >= l.graph.num_nodes() {
        return Err(config_err(anyhow!("node {node} out of range (graph has {} nodes)", l.graph.num_nodes())));
    }
    let params = l.cfg.sampler.ppr();
    let v = match mode {
        PprArg::Exact => exact_ppr(&l.adj, node, params.alpha),
        PprArg::Push => push_ppr(&l.graph, node, &params),
    }
    .map_err(run_err)?;
    let v = if symmetric { v.to_symmetric(&l.adj) } else { v };
    let mut text = format!("{}\n", l.cfg.provenance());
    for (u, m) in &v.entries {
        if *m > 0.0 {
            writeln!(text, "{u}\t{m:.10e}").unwrap();
        }
    }
    emit(l.cfg.output.as_deref(), &format!("ppr_{node}.tsv"), &text)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            return Err(config_err(anyhow!("--jobs must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| write_err(e.into()))?;
    }
    let loaded = load(&cli.common, &cli.command)?;
    match &cli.command {
        Command::Sample { kind } => cmd_sample(&loaded, *kind),
        Command::Train { method, split, rep } => cmd_train(&loaded, method, split.as_deref(), *rep),
        Command::Compare { .. } => cmd_compare(&loaded),
        Command::Shiftscan { .. } => cmd_shiftscan(&loaded),
        Command::Sweep { .. } => cmd_sweep(&loaded),
        Command::Ppr { node, mode, symmetric } => cmd_ppr(&loaded, *node, *mode, *symmetric),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Config(e) | Failure::Runtime(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
