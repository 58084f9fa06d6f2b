use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtleq::dataset::ModeKind;
use mtleq::eval::Axis;
use mtleq::Error;
use mtleq_cli::{cmd_simulate, cmd_sweep, cmd_train, run_selftest, ExperimentConfig, Scale, SelftestOptions, TrainOptions};

#[derive(Parser)]
#[command(name = "mtleq", version, about = "Fiber channel simulation and biLSTM equalizer training")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file merged over the selected preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the reduced desk-scale preset instead of the full recipe.
    #[arg(long, global = true)]
    desk_scale: bool,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Master seed for data generation and initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Stl,
    MtlSpans,
    MtlPower,
    MtlRate,
    Universal,
}

impl From<Mode> for ModeKind {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Stl => ModeKind::StlFixed,
            Mode::MtlSpans => ModeKind::MtlSpans,
            Mode::MtlPower => ModeKind::MtlPower,
            Mode::MtlRate => ModeKind::MtlRate,
            Mode::Universal => ModeKind::Universal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Spans,
    Power,
    Rate,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Spans => Axis::Spans,
            AxisArg::Power => Axis::Power,
            AxisArg::Rate => Axis::Rate,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate one training epoch and write it as a dataset file.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        #[arg(long)]
        epoch_size: Option<usize>,
    },
    /// Train the configured mode, resuming from an existing checkpoint.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        epoch_size: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Discard an existing checkpoint.
        #[arg(long)]
        fresh: bool,
    },
    /// Q-factor sweeps of CDC and the given models, one CSV per axis.
    Sweep {
        models: Vec<PathBuf>,
        /// Axes to sweep (default: all three).
        #[arg(long, value_enum)]
        axis: Vec<AxisArg>,
        #[arg(long)]
        n_symbols: Option<usize>,
    },
    /// Run the fast invariant checks.
    Selftest {
        #[arg(long, hide = true)]
        sabotage_cdc_sign: bool,
    },
}

fn build_config(c: &Common) -> Result<ExperimentConfig, Error> {
    let scale = if c.desk_scale { Scale::Desk } else { Scale::Full };
    let base = ExperimentConfig::preset(scale, ModeKind::StlFixed);
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(&base, p)?,
        None => base,
    };
    if let Some(m) = c.mode {
        let kind = ModeKind::from(m);
        cfg.sampler.mode = kind;
        cfg.sampler.grid = ExperimentConfig::preset(cfg.scale, kind).sampler.grid;
    }
    if let Some(s) = c.seed {
        cfg.seeds.master = s;
    }
    if let Some(d) = &c.out_dir {
        cfg.output.dir = d.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let mut cfg = build_config(&cli.common)?;
    match cli.command {
        Command::Simulate { out, epoch, epoch_size } => {
            if let Some(n) = epoch_size {
                cfg.training.epoch_size = n;
            }
            let r = cmd_simulate(&cfg, &out, epoch)?;
            println!("wrote {} examples to {}", r.n_examples, r.path.display());
            println!("sha256 {}", r.digest);
        }
        Command::Train { epochs, epoch_size, batch_size, fresh } => {
            if let Some(n) = epochs {
                cfg.training.epochs = n;
            }
            if let Some(n) = epoch_size {
                cfg.training.epoch_size = n;
            }
            if let Some(n) = batch_size {
                cfg.training.batch_size = n;
            }
            let r = cmd_train(&cfg, TrainOptions { fresh })?;
            for l in &r.logs {
                println!("epoch {:>5}  loss {:.6e}  {:>3} batches  {:>8.1} s", l.epoch, l.loss, l.n_batches, l.wall_time_s);
            }
            println!(
                "model {} ({} of {} epochs), loss log {}",
                r.model_path.display(),
                r.model.provenance.epochs_completed,
                cfg.epochs(),
                r.loss_path.display()
            );
        }
        Command::Sweep { models, axis, n_symbols } => {
            if let Some(n) = n_symbols {
                cfg.eval.n_symbols = n;
            }
            let axes: Vec<Axis> = if axis.is_empty() {
                Axis::ALL.to_vec()
            } else {
                axis.into_iter().map(Axis::from).collect()
            };
            let r = cmd_sweep(&cfg, &models, &axes)?;
            for row in &r.rows {
                println!(
                    "{:<14} p={:>5} dBm  Rs={:>4} GBd  spans={:>3}  BER {:.3e}  Q {:>7.3} dB{}",
                    row.method.name(),
                    row.scenario.p_dbm,
                    row.scenario.rs_gbd,
                    row.scenario.n_spans,
                    row.ber,
                    row.q_db,
                    if row.clamped { " (no errors, clamped)" } else { "" }
                );
            }
            for (a, p) in &r.files {
                println!("{} sweep -> {}", a.name(), p.display());
            }
        }
        Command::Selftest { sabotage_cdc_sign } => {
            let r = run_selftest(SelftestOptions { sabotage_cdc_sign })?;
            print!("{}", r.table());
            println!("{:.1} s", r.elapsed.as_secs_f64());
            if !r.passed() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
