use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bfnn_core::nn::load_model;
use bfnn_core::{BfnnModel, ChannelDataset};
use serde_json::Value;

const SMALL: &str = r#"
[channel]
n_t = 8

[counts]
train = 400
val = 100
test = 100

[train]
epochs = 2
batch_size = 64

[sweep]
test_count = 100
pnr_list_db = [0.0]
l_est_list = [3]
snr_grid_db = [-10.0, 0.0, 10.0]
"#;

fn bfnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bfnn"))
        .args(args)
        .env_remove("BFNN_THREADS")
        .output()
        .unwrap()
}

fn summary(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    serde_json::from_str(text.trim()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_small(dir: &Path, cfg: &str) -> PathBuf {
    let data = dir.join("data");
    summary(&bfnn(&["gen", "--config", cfg, "--out", s(&data)]));
    data
}

#[test]
fn flops_of_reference_network() {
    let out = bfnn(&["flops"]);
    assert_eq!(
        String::from_utf8(summary(&out).to_string().into_bytes()).unwrap(),
        "147520"
    );
}

#[test]
fn gen_sizes_and_reproducible_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let a = summary(&bfnn(&[
        "gen",
        "--config",
        &cfg,
        "--out",
        s(&dir.path().join("a")),
    ]));
    let b = summary(&bfnn(&[
        "gen",
        "--config",
        &cfg,
        "--out",
        s(&dir.path().join("b")),
    ]));
    let counts: Vec<u64> = a["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["count"].as_u64().unwrap())
        .collect();
    assert_eq!(counts, vec![400, 100, 100]);
    for (fa, fb) in a["files"]
        .as_array()
        .unwrap()
        .iter()
        .zip(b["files"].as_array().unwrap())
    {
        assert_eq!(fa["hash"], fb["hash"]);
    }
    let hashes: Vec<&str> = a["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["hash"].as_str().unwrap())
        .collect();
    assert!(hashes[0] != hashes[1] && hashes[1] != hashes[2]);

    let scaled = summary(&bfnn(&[
        "gen",
        "--config",
        &cfg,
        "--out",
        s(&dir.path().join("c")),
        "--count-scale",
        "0.5",
    ]));
    let counts: Vec<u64> = scaled["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["count"].as_u64().unwrap())
        .collect();
    assert_eq!(counts, vec![200, 50, 50]);
    let test = ChannelDataset::load(dir.path().join("a/test.bfds")).unwrap();
    assert_eq!(test.provenance.as_deref(), a["config_hash"].as_str());
}

#[test]
fn zero_epochs_keeps_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let data = gen_small(dir.path(), &cfg);
    let model = dir.path().join("m.bfnn");
    summary(&bfnn(&[
        "train",
        "--config",
        &cfg,
        "--train",
        s(&data.join("train.bfds")),
        "--val",
        s(&data.join("val.bfds")),
        "--epochs",
        "0",
        "--out",
        s(&model),
    ]));
    let trained = load_model(&model).unwrap();
    let fresh = BfnnModel::new(8, 3).unwrap();
    assert_eq!(trained.layers, fresh.layers);
    assert_eq!(trained.meta.epochs_trained, 0);
}

#[test]
fn full_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let data = gen_small(dir.path(), &cfg);
    let run = |tag: &str| -> (Value, Vec<u8>) {
        let est = dir.path().join(format!("train-{tag}.est"));
        let val_est = dir.path().join(format!("val-{tag}.est"));
        summary(&bfnn(&[
            "estimate",
            "--config",
            &cfg,
            "--data",
            s(&data.join("train.bfds")),
            "--out",
            s(&est),
        ]));
        summary(&bfnn(&[
            "estimate",
            "--config",
            &cfg,
            "--data",
            s(&data.join("val.bfds")),
            "--out",
            s(&val_est),
            "--seed",
            "9",
        ]));
        let model = dir.path().join(format!("{tag}.bfnn"));
        summary(&bfnn(&[
            "train",
            "--config",
            &cfg,
            "--train",
            s(&data.join("train.bfds")),
            "--val",
            s(&data.join("val.bfds")),
            "--train-est",
            s(&est),
            "--val-est",
            s(&val_est),
            "--out",
            s(&model),
        ]));
        let csv = dir.path().join(format!("{tag}.csv"));
        let svg = dir.path().join(format!("{tag}.svg"));
        let manifest = dir.path().join(format!("{tag}.json"));
        let v = summary(&bfnn(&[
            "eval",
            "--config",
            &cfg,
            "--model",
            s(&model),
            "--data",
            s(&data.join("test.bfds")),
            "--csv",
            s(&csv),
            "--svg",
            s(&svg),
            "--manifest",
            s(&manifest),
        ]));
        let m: Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
        assert_eq!(m["csv"]["hash"], v["csv_hash"]);
        assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<?xml"));
        (v, std::fs::read(&csv).unwrap())
    };
    let (a, csv_a) = run("a");
    let (_, csv_b) = run("b");
    assert_eq!(a["rows"], 9);
    assert_eq!(csv_a, csv_b);

    let rep = summary(&bfnn(&[
        "report",
        "--csv",
        s(&dir.path().join("a.csv")),
        "--target-se",
        "1.0",
    ]));
    assert_eq!(rep["gains"].as_array().unwrap().len(), 1);
}

#[test]
fn eval_with_mismatched_antennas_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg8 = write_config(dir.path(), "a.toml", SMALL);
    let cfg4 = write_config(dir.path(), "b.toml", &SMALL.replace("n_t = 8", "n_t = 4"));
    let data8 = gen_small(dir.path(), &cfg8);
    let data4 = dir.path().join("d4");
    summary(&bfnn(&["gen", "--config", &cfg4, "--out", s(&data4)]));
    let model = dir.path().join("m.bfnn");
    summary(&bfnn(&[
        "train",
        "--config",
        &cfg8,
        "--train",
        s(&data8.join("train.bfds")),
        "--val",
        s(&data8.join("val.bfds")),
        "--out",
        s(&model),
    ]));
    let csv = dir.path().join("r.csv");
    let test = data4.join("test.bfds");
    let args = [
        "eval",
        "--config",
        &cfg8,
        "--model",
        s(&model),
        "--data",
        s(&test),
        "--csv",
        s(&csv),
    ];
    assert_eq!(bfnn(&args).status.code(), Some(65));
    let mut mixed = args.to_vec();
    mixed.push("--allow-mixed");
    assert_eq!(bfnn(&mixed).status.code(), Some(65));
}

#[test]
fn mixed_provenance_needs_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", SMALL);
    let other = write_config(
        dir.path(),
        "b.toml",
        &format!("{SMALL}\n[seeds]\ndata = 77\n"),
    );
    let data = gen_small(dir.path(), &cfg);
    let model = dir.path().join("m.bfnn");
    summary(&bfnn(&[
        "train",
        "--config",
        &other,
        "--train",
        s(&data.join("train.bfds")),
        "--val",
        s(&data.join("val.bfds")),
        "--epochs",
        "1",
        "--out",
        s(&model),
    ]));
    let csv = dir.path().join("r.csv");
    let test = data.join("test.bfds");
    let args = [
        "eval",
        "--config",
        &cfg,
        "--model",
        s(&model),
        "--data",
        s(&test),
        "--csv",
        s(&csv),
    ];
    assert_eq!(bfnn(&args).status.code(), Some(65));
    let mut allowed = args.to_vec();
    allowed.push("--allow-mixed");
    assert_eq!(summary(&bfnn(&allowed))["mixed"], true);
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "[train]\nlearning_rte = 1\n");
    assert_eq!(
        bfnn(&["gen", "--config", &bad, "--out", s(dir.path())])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(bfnn(&["gen", "--bogus-flag"]).status.code(), Some(64));
    let missing = dir.path().join("nope.bfds");
    let out = dir.path().join("x.est");
    assert_eq!(
        bfnn(&["estimate", "--data", s(&missing), "--out", s(&out)])
            .status
            .code(),
        Some(74)
    );
    let garbage = dir.path().join("garbage.bfds");
    std::fs::write(&garbage, b"not a dataset at all").unwrap();
    assert_eq!(
        bfnn(&["estimate", "--data", s(&garbage), "--out", s(&out)])
            .status
            .code(),
        Some(65)
    );
    assert_eq!(bfnn(&["--help"]).status.code(), Some(0));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let one = summary(&bfnn(&[
        "--threads",
        "1",
        "gen",
        "--config",
        &cfg,
        "--out",
        s(&dir.path().join("a")),
    ]));
    let two = summary(&bfnn(&[
        "--threads",
        "2",
        "gen",
        "--config",
        &cfg,
        "--out",
        s(&dir.path().join("b")),
    ]));
    assert_eq!(one["files"][0]["hash"], two["files"][0]["hash"]);
}
