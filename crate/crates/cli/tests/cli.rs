use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtleq::dataset::{load_dataset, ModeKind};
use mtleq::nn::{load_model, save_model, EqualizerModel, ModelConfig};

fn mtleq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtleq")).args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

/// Tiny network and epoch so training finishes in seconds.
const TINY: &str = r#"
[model]
n_layers = 1
hidden = 3
window = 5
[training]
epoch_size = 96
subframe_examples = 48
batch_size = 32
chunk_size = 16
[eval]
n_symbols = 300
min_symbols = 100
"#;

#[test]
fn selftest_passes_and_catches_sabotage() {
    let ok = mtleq(&["selftest"]);
    assert_eq!(ok.status.code(), Some(0), "{}", text(&ok));
    assert_eq!(text(&ok).matches("PASS").count(), 4);
    let bad = mtleq(&["selftest", "--sabotage-cdc-sign"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(text(&bad).contains("FAIL"));
}

#[test]
fn simulate_default_stl_records_its_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.mteq");
    let o = mtleq(&["simulate", "--out", out.to_str().unwrap(), "--epoch-size", "64", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let ds = load_dataset(&out).unwrap();
    assert_eq!(ds.mode, ModeKind::StlFixed);
    assert_eq!(ds.len(), 64);
    assert_eq!((ds.window, ds.n_features), (141, 4));
    for r in &ds.scenarios {
        assert_eq!((r.scenario.rs_gbd, r.scenario.n_spans, r.scenario.p_dbm), (40.0, 50, 5.0));
    }
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let digest = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let o = mtleq(&[
            "simulate", "--desk-scale", "--mode", "mtl-spans", "--out", out.to_str().unwrap(),
            "--epoch-size", "200", "--threads", threads,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        text(&o).lines().find(|l| l.starts_with("sha256")).unwrap().to_string()
    };
    assert_eq!(digest("1", "a.mteq"), digest("2", "b.mteq"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let o = mtleq(&["simulate", "--out", "/nonexistent-dir/x/y.mteq", "--epoch-size", "64"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("/nonexistent-dir/x/y.mteq"), "{}", text(&o));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[sampler.grid]\nn_spans = [10, 20]\n");
    let o = mtleq(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("sampler.grid.n_spans"), "{}", text(&o));
    let o = mtleq(&["train", "--desk-scale", "--mode", "stl", "--batch-size", "100000"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("training.batch_size"));
    let o = mtleq(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn universal_budget_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let c = write(dir.path(), "u.toml", "[sampler]\nmode = \"Universal\"\n[training]\nepochs = 1200\n");
    let cfg = mtleq_cli::ExperimentConfig::from_file(&Default::default(), &c).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.epochs(), 1200);
    assert_eq!(cfg.model_config().input_features, 4);
}

#[test]
fn train_power_mode_resumes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let run = |out: &str, epochs: &str| {
        let o = mtleq(&[
            "train", "--desk-scale", "--mode", "mtl-power", "--config", cfg.to_str().unwrap(),
            "--out-dir", dir.path().join(out).to_str().unwrap(), "--epochs", epochs, "--seed", "4",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    };
    run("a", "1");
    run("a", "2");
    run("b", "2");
    let a = dir.path().join("a/mtl_power.mteqm");
    let b = dir.path().join("b/mtl_power.mteqm");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let m = load_model(&a).unwrap();
    assert_eq!(m.config().input_features, 5);
    assert_eq!(m.provenance.epochs_completed, 2);
    // identical apart from the wall-time column
    let strip = |name: &str| -> Vec<String> {
        fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .map(|l| {
                let mut c: Vec<&str> = l.split(',').collect();
                c.remove(2);
                c.join(",")
            })
            .collect()
    };
    assert_eq!(strip("a/mtl_power_loss.csv"), strip("b/mtl_power_loss.csv"));
    let log = fs::read_to_string(dir.path().join("a/mtl_power_loss.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,loss,wall_time_s,n_batches,scenario_digest");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
    let resolved = fs::read_to_string(dir.path().join("a/mtl_power_config.toml")).unwrap();
    assert!(resolved.starts_with("# config digest "));

    // a checkpoint from a different configuration is not silently resumed
    let o = mtleq(&[
        "train", "--desk-scale", "--mode", "mtl-power", "--config", cfg.to_str().unwrap(),
        "--out-dir", dir.path().join("a").to_str().unwrap(), "--epochs", "3", "--seed", "5",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

fn tiny_model(mode: ModeKind, dir: &Path) -> PathBuf {
    let features = if mode == ModeKind::MtlPower { 5 } else { 4 };
    let cfg = ModelConfig { n_layers: 1, hidden: 3, input_features: features, window: 5, output_dim: 2 };
    let mut m = EqualizerModel::new(cfg, 1).unwrap();
    m.provenance.mode = mode;
    let p = dir.join(format!("{mode:?}.mteqm"));
    save_model(&m, &p).unwrap();
    p
}

#[test]
fn spans_sweep_has_one_row_per_point_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let models: Vec<PathBuf> = [ModeKind::StlFixed, ModeKind::MtlSpans, ModeKind::Universal]
        .into_iter()
        .map(|k| tiny_model(k, dir.path()))
        .collect();
    let out = dir.path().join("out");
    let mut args = vec![
        "sweep", "--config", cfg.to_str().unwrap(), "--axis", "spans", "--out-dir", out.to_str().unwrap(),
    ];
    args.extend(models.iter().map(|p| p.to_str().unwrap()));
    let o = mtleq(&args);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let csv = fs::read_to_string(out.join("sweep_spans.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,p_dbm,rs_gbd,n_spans,n_symbols,ber,q_db,seed");
    assert_eq!(lines.len(), 1 + 9 * 4);
    assert!(lines[1].starts_with("CDC,5,40,10,300,"));
    assert!(lines[2].starts_with("STL,5,40,10,300,"));
    assert!(lines[36].starts_with("MTL_Universal,5,40,50,300,"));
}

#[test]
fn desk_sweep_uses_reduced_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("out");
    let o = mtleq(&[
        "sweep", "--desk-scale", "--config", cfg.to_str().unwrap(), "--axis", "spans", "--axis", "power",
        "--out-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert_eq!(fs::read_to_string(out.join("sweep_spans.csv")).unwrap().lines().count(), 1 + 5);
    assert_eq!(fs::read_to_string(out.join("sweep_power.csv")).unwrap().lines().count(), 1 + 7);
    assert!(!out.join("sweep_rate.csv").exists());
}

#[test]
fn sweep_rejects_missing_and_mismatched_models() {
    let dir = tempfile::tempdir().unwrap();
    let o = mtleq(&["sweep", "--desk-scale", dir.path().join("nope.mteqm").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("nope.mteqm"));

    let cfg = ModelConfig { n_layers: 1, hidden: 3, input_features: 4, window: 5, output_dim: 2 };
    let mut m = EqualizerModel::new(cfg, 1).unwrap();
    m.provenance.mode = ModeKind::MtlPower;
    let p = dir.path().join("wrong.mteqm");
    save_model(&m, &p).unwrap();
    let o = mtleq(&["sweep", "--desk-scale", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("model.input_features"), "{}", text(&o));
}
