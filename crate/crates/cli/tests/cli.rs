use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/planted-small")
}

fn srgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srgnn"))
        .args(args)
        .arg("--dataset")
        .arg(fixture())
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sample_writes_one_file_per_repetition() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().to_str().unwrap();
    stdout(&srgnn(&["sample", "--kind", "biased", "--reps", "5", "--out", dir, "--preset", "appendix"]));
    let mut seeds = Vec::new();
    for r in 0..5 {
        let split = read_json(out.path().join(format!("split_{r:04}.json")));
        assert_eq!(split["kind"], "biased");
        assert_eq!(split["params"]["ppr"]["gamma"], 20);
        assert_eq!(split["params"]["ppr"]["epsilon"], 0.005);
        assert_eq!(split["nodes"].as_array().unwrap().len(), 60);
        seeds.push(split["seeds_used"].clone());
    }
    seeds.dedup();
    assert_eq!(seeds.len(), 5);
    assert!(!out.path().join("split_0005.json").exists());
}

#[test]
fn iid_kind_is_recorded() {
    let out = tempfile::tempdir().unwrap();
    stdout(&srgnn(&["sample", "--kind", "iid", "--reps", "3", "--out", out.path().to_str().unwrap()]));
    for r in 0..3 {
        assert_eq!(read_json(out.path().join(format!("split_{r:04}.json")))["kind"], "iid");
    }
}

#[test]
fn compare_is_byte_for_byte_reproducible() {
    let args = ["compare", "--reps", "2", "--epochs", "15", "--seed", "4", "--ablation", "none"];
    let first = stdout(&srgnn(&args));
    let second = stdout(&srgnn(&args));
    assert_eq!(first, second);
    let lines: Vec<&str> = first.lines().collect();
    assert!(lines[0].starts_with("# srgnn ") && lines[0].ends_with("seed=4"));
    let rows: Vec<&str> = lines[2..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["GCN(IID)", "Feat.+MLP", "GCN", "SGC", "APPNP"]);

    let jobs = stdout(&srgnn(&[&args[..], &["--jobs", "1"]].concat()));
    assert_eq!(jobs, first);
}

#[test]
fn compare_writes_csv_and_reports_to_out() {
    let out = tempfile::tempdir().unwrap();
    let o = srgnn(&["compare", "--reps", "1", "--epochs", "10", "--method", "GCN", "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.path().join("compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let report = read_json(out.path().join("compare.json"));
    assert_eq!(report["methods"][0]["name"], "GCN");
    assert_eq!(report["reps"].as_array().unwrap().len(), 1);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 1, "repetitions": 5, "train": {"epochs": 10}, "methods": ["GCN"]}"#).unwrap();
    let out = stdout(&srgnn(&["compare", "--config", cfg.to_str().unwrap(), "--seed", "9", "--reps", "1"]));
    assert!(out.lines().next().unwrap().ends_with("seed=9"));
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn train_prints_a_report() {
    let out = stdout(&srgnn(&["train", "--method", "SR-GNN", "--epochs", "10"]));
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(report["micro_f1"].as_f64().unwrap() > 0.0);
    assert_eq!(report["loss_curve"].as_array().unwrap().len(), 10);
}

#[test]
fn train_accepts_a_split_file() {
    let out = tempfile::tempdir().unwrap();
    stdout(&srgnn(&["sample", "--reps", "1", "--out", out.path().to_str().unwrap()]));
    let split = out.path().join("split_0000.json");
    let a = stdout(&srgnn(&["train", "--method", "GCN", "--epochs", "10", "--split", split.to_str().unwrap()]));
    let b = stdout(&srgnn(&["train", "--method", "GCN", "--epochs", "10"]));
    assert_eq!(a, b);
}

#[test]
fn shiftscan_and_sweep_emit_csv() {
    let scan = stdout(&srgnn(&["shiftscan", "--splits", "1", "--epochs", "10"]));
    assert_eq!(scan.lines().nth(1), Some("split_id,cmd,mmd,micro_f1"));
    assert_eq!(scan.lines().count(), 4);
    assert_eq!(scan.lines().last(), Some("# pearson_r=n/a"));

    let sweep = stdout(&srgnn(&[
        "sweep", "--param", "train.lambda", "--values", "0.5,2", "--reps", "1", "--epochs", "10", "--method", "SR-GNN w.o. IR",
    ]));
    let rows: Vec<&str> = sweep.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("train.lambda,0.5,SR-GNN w.o. IR,"));
    assert!(rows[1].starts_with("train.lambda,2,SR-GNN w.o. IR,"));
}

#[test]
fn ppr_dumps_tsv() {
    let out = stdout(&srgnn(&["ppr", "--node", "3"]));
    let mut total = 0.0;
    for line in out.lines().skip(1) {
        let (node, mass) = line.split_once('\t').unwrap();
        node.parse::<usize>().unwrap();
        total += mass.parse::<f64>().unwrap();
    }
    assert!((total - 1.0).abs() < 1e-8);
    let push = stdout(&srgnn(&["ppr", "--node", "3", "--mode", "push"]));
    assert!(push.lines().count() > 1);
}

#[test]
fn exit_codes_separate_config_and_runtime_errors() {
    let code = |o: Output| o.status.code().unwrap();
    assert_eq!(code(srgnn(&["sweep", "--param", "train.nope", "--values", "1"])), 1);
    assert_eq!(code(srgnn(&["compare", "--preset", "nope"])), 1);
    assert_eq!(code(srgnn(&["compare", "--bogus-flag"])), 1);
    assert_eq!(code(srgnn(&["ppr", "--node", "100000"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"repetitons": 3}"#).unwrap();
    assert_eq!(code(srgnn(&["compare", "--config", cfg.to_str().unwrap()])), 1);

    let missing = Command::new(env!("CARGO_BIN_EXE_srgnn"))
        .args(["compare", "--dataset", "/nonexistent/dataset"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));

    // no seed has γ nonzero PPR entries on a 300-node graph under push
    fs::write(&cfg, r#"{"sampler": {"gamma": 299, "ppr_mode": "push", "max_draws": 20}}"#).unwrap();
    let o = srgnn(&["sample", "--config", cfg.to_str().unwrap(), "--reps", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(o), 2);
}
