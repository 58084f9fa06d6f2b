use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use mtleq::dataset::{dataset_digest, generate_epoch, save_dataset, ModeKind, Scenario};
use mtleq::eval::{sweep, write_csv, Axis, Equalizer, Method, SweepResult};
use mtleq::nn::{load_model, save_model, train, EpochLog, EqualizerModel};
use mtleq::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// File stem used for a mode's model, loss log and resolved config.
pub fn mode_stem(mode: ModeKind) -> String {
    Method::for_mode(mode).name().to_ascii_lowercase()
}

fn write_resolved(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let text = format!("# config digest {}\n{}", cfg.digest(), cfg.to_toml());
    fs::write(path, text)?;
    Ok(())
}

/// Write through a temporary sibling and rename, so an interrupted write
/// never leaves a truncated checkpoint behind.
fn save_model_atomic(m: &EqualizerModel, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    save_model(m, &tmp)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub path: PathBuf,
    pub digest: String,
    pub n_examples: usize,
}

/// Generate epoch `epoch_index` of the configured mode and write it to `out`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, epoch_index: u64) -> Result<SimulateReport> {
    cfg.validate()?;
    File::create(out).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out.display()))))?;
    let ds = generate_epoch(
        &cfg.sampler_mode(),
        &cfg.epoch_config(),
        &cfg.sim(),
        epoch_index,
        cfg.seeds.master,
    )?;
    save_dataset(&ds, out)?;
    Ok(SimulateReport {
        path: out.to_path_buf(),
        digest: dataset_digest(&ds),
        n_examples: ds.len(),
    })
}

/// Digest of everything that shapes the training trajectory. The epoch
/// budget is left out so a finished run can be extended.
pub fn training_digest(cfg: &ExperimentConfig) -> [u8; 32] {
    #[derive(Serialize)]
    struct Canon<'a> {
        master_seed: u64,
        scale: &'a crate::config::Scale,
        fiber: &'a mtleq::channel::FiberParams,
        amplifier: &'a crate::config::AmplifierSection,
        ssfm: &'a mtleq::channel::SsfmConfig,
        pulse: &'a mtleq::signal::PulseShapeConfig,
        sampler: &'a crate::config::SamplerSection,
        model: &'a crate::config::ModelSection,
        training: crate::config::TrainingSection,
    }
    let mut training = cfg.training;
    training.epochs = 0;
    let c = Canon {
        master_seed: cfg.seeds.master,
        scale: &cfg.scale,
        fiber: &cfg.fiber,
        amplifier: &cfg.amplifier,
        ssfm: &cfg.ssfm,
        pulse: &cfg.pulse,
        sampler: &cfg.sampler,
        model: &cfg.model,
        training,
    };
    Sha256::digest(toml::to_string(&c).expect("plain data").as_bytes()).into()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Ignore an existing checkpoint and start over.
    pub fresh: bool,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model_path: PathBuf,
    pub loss_path: PathBuf,
    /// Epochs run by this invocation.
    pub logs: Vec<EpochLog>,
    pub resumed_from: u64,
    pub model: EqualizerModel,
}

const LOSS_HEADER: &str = "epoch,loss,wall_time_s,n_batches,scenario_digest";

/// Keep the header and the rows of epochs `1..=completed`.
fn trim_loss_log(path: &Path, completed: u64) -> Result<()> {
    let mut keep = vec![LOSS_HEADER.to_string()];
    if path.exists() {
        for line in BufReader::new(File::open(path)?).lines().skip(1) {
            let line = line?;
            let epoch: u64 = line.split(',').next().and_then(|v| v.parse().ok()).unwrap_or(u64::MAX);
            if epoch <= completed {
                keep.push(line);
            }
        }
    }
    fs::write(path, keep.join("\n") + "\n")?;
    Ok(())
}

/// Train the configured mode, checkpointing after every epoch. An existing
/// checkpoint for the same configuration is resumed.
pub fn cmd_train(cfg: &ExperimentConfig, opts: TrainOptions) -> Result<TrainReport> {
    cfg.validate_for_training()?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let stem = mode_stem(cfg.mode());
    let model_path = dir.join(format!("{stem}.mteqm"));
    let loss_path = dir.join(format!("{stem}_loss.csv"));
    write_resolved(cfg, &dir.join(format!("{stem}_config.toml")))?;
    let digest = training_digest(cfg);

    let mut model = if model_path.exists() && !opts.fresh {
        let m = load_model(&model_path)?;
        if m.provenance.config_hash != digest {
            return Err(Error::Config {
                field: "output.dir".into(),
                message: format!(
                    "{} was trained with a different configuration; pass --fresh to start over",
                    model_path.display()
                ),
            });
        }
        log::info!("resuming {} after epoch {}", model_path.display(), m.provenance.epochs_completed);
        m
    } else {
        let mut m = EqualizerModel::new(cfg.model_config(), cfg.seeds.master)?;
        m.provenance.config_hash = digest;
        m
    };
    let resumed_from = model.provenance.epochs_completed;
    trim_loss_log(&loss_path, resumed_from)?;

    let mut log_file = OpenOptions::new().append(true).open(&loss_path)?;
    let mut on_epoch = |m: &EqualizerModel, e: &EpochLog| -> Result<()> {
        writeln!(
            log_file,
            "{},{:.9e},{:.3},{},{}",
            e.epoch, e.loss, e.wall_time_s, e.n_batches, e.scenario_digest
        )?;
        log_file.flush()?;
        save_model_atomic(m, &model_path)
    };
    let logs = train(
        &mut model,
        &cfg.sampler_mode(),
        &cfg.epoch_config(),
        &cfg.sim(),
        &cfg.train_config(),
        cfg.seeds.master,
        &mut on_epoch,
    )?;
    if logs.is_empty() && !model_path.exists() {
        save_model_atomic(&model, &model_path)?;
    }
    Ok(TrainReport {
        model_path,
        loss_path,
        logs,
        resumed_from,
        model,
    })
}

/// Load a model and check its feature count against its training mode.
pub fn load_checked(path: &Path) -> Result<(Method, EqualizerModel)> {
    let m = load_model(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })?;
    let mode = m.provenance.mode;
    let want = 4 + mode.default_power_feature() as usize;
    if m.config().input_features != want {
        return Err(Error::Config {
            field: "model.input_features".into(),
            message: format!(
                "{} has {} input features but mode {mode:?} needs {want}",
                path.display(),
                m.config().input_features
            ),
        });
    }
    Ok((Method::for_mode(mode), m))
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub files: Vec<(Axis, PathBuf)>,
    pub rows: Vec<SweepResult>,
}

/// CDC plus every supplied model on each requested axis; one CSV per axis.
pub fn cmd_sweep(cfg: &ExperimentConfig, model_paths: &[PathBuf], axes: &[Axis]) -> Result<SweepReport> {
    cfg.validate()?;
    let models = model_paths.iter().map(|p| load_checked(p)).collect::<Result<Vec<_>>>()?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    write_resolved(cfg, &dir.join("sweep_config.toml"))?;
    let mut eqs = vec![(Method::Cdc, Equalizer::Cdc)];
    eqs.extend(models.iter().map(|(k, m)| (*k, Equalizer::Model(m))));
    let s = &cfg.sweep;
    let fixed = Scenario::new(s.fixed.p_dbm, s.fixed.rs_gbd, s.fixed.n_spans, cfg.eval_seed());
    let opts = cfg.eval_options();
    let mut report = SweepReport { files: vec![], rows: vec![] };
    for &axis in axes {
        let grid: Vec<f64> = match axis {
            Axis::Spans => s.n_spans.iter().map(|&n| n as f64).collect(),
            Axis::Power => s.p_dbm.clone(),
            Axis::Rate => s.rs_gbd.clone(),
        };
        log::info!("{} sweep: {} points x {} methods", axis.name(), grid.len(), eqs.len());
        let rows = sweep(&eqs, axis, &fixed, &grid, cfg.eval.n_symbols, &opts)?;
        let path = dir.join(format!("sweep_{}.csv", axis.name()));
        write_csv(&rows, File::create(&path)?)?;
        report.files.push((axis, path));
        report.rows.extend(rows);
    }
    Ok(report)
}
