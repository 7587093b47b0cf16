//! `oz-sentinel`: synthesize data, train and compare predictors, forecast,
//! and replay a series through a model against an alarm policy.
//!
//! Log level comes from `OZ_SENTINEL_LOG` (default `warn`).

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oz_sentinel::alarm::{AlarmPolicy, Replay, ReplayOptions};
use oz_sentinel::dataset::{default_epoch, PatternMode, SynthKind, SynthSpec};
use oz_sentinel::model::{ModelKind, SavedModel};
use oz_sentinel::workflow::{
    self, compare_all, forecast, write_compare, write_train, DataSource, RunConfig,
};
use oz_sentinel::{Error, Result};

#[derive(Parser)]
#[command(name = "oz-sentinel", version, about = "Next-day ozone forecasting and threshold alarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic daily series as CSV.
    Synth(SynthArgs),
    /// Train one model and write model.json and report.json.
    Train(TrainArgs),
    /// Forecast the day after every day of a series, one JSON object per line.
    Predict(PredictArgs),
    /// Train all three models, write report.json and figures.
    Compare(CompareArgs),
    /// Replay a series through a model and emit alarm events as JSON lines.
    Alarm(AlarmArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "seasonal_ar")]
    kind: SynthKind,
    #[arg(long)]
    length: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// First date of the series.
    #[arg(long, default_value_t = default_epoch())]
    start: chrono::NaiveDate,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Settings shared by `train` and `compare`. Flags override values read
/// from `--config`.
#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Daily CSV with columns date,o3[,uv,tsr].
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long)]
    mode: Option<PatternMode>,
    /// Training epochs, for every model being trained.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Membership functions per input (ANFIS).
    #[arg(long)]
    mfs: Option<usize>,
    /// Hidden units (MLP).
    #[arg(long)]
    hidden: Option<usize>,
    /// Learning rate for ANFIS and MLP.
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
    /// Reuse a non-empty output directory.
    #[arg(long)]
    force: bool,
}

impl RunArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let mut config = match (&self.config, &self.data) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(data)) => {
                let seed = self.seed.ok_or_else(|| {
                    Error::Config("--seed is required (or give it in --config)".into())
                })?;
                RunConfig::new(DataSource::Csv(data.clone()), seed)
            }
            (None, None) => return Err(Error::Config("give --data or --config".into())),
        };
        if let (Some(_), Some(data)) = (&self.config, &self.data) {
            config.data = DataSource::Csv(data.clone());
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(lag) = self.lag {
            config.lag = lag;
        }
        if let Some(mode) = self.mode {
            config.mode = mode;
        }
        if let Some(epochs) = self.epochs {
            config.bel.epochs = epochs;
            config.anfis.epochs = epochs;
            config.mlp.epochs = epochs;
        }
        if let Some(alpha) = self.alpha {
            config.bel.alpha = alpha;
        }
        if let Some(beta) = self.beta {
            config.bel.beta = beta;
        }
        if let Some(gamma) = self.gamma {
            config.bel.gamma = gamma;
        }
        if let Some(mfs) = self.mfs {
            config.anfis.mfs_per_input = mfs;
        }
        if let Some(hidden) = self.hidden {
            config.mlp.hidden = hidden;
        }
        if let Some(rate) = self.learning_rate {
            config.anfis.learning_rate = rate;
            config.mlp.learning_rate = rate;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: ModelKind,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// model.json written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AlarmArgs {
    /// model.json written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Threshold policy JSON.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Online BEL learning once each day's true value arrives.
    #[arg(long)]
    adapt: bool,
    /// Validate the inputs and exit without output.
    #[arg(long)]
    dry_run: bool,
    /// Emit every daily prediction, not only the alarm events.
    #[arg(long)]
    all: bool,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            std::fs::File::create(p).map_err(|e| Error::Io { path: p.to_path_buf(), source: e })?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn stdout_error(e: std::io::Error) -> Error {
    Error::Io { path: PathBuf::from("<stdout>"), source: e }
}

fn json_line<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out).map_err(stdout_error)
}

fn synth(args: SynthArgs) -> Result<()> {
    let series = SynthSpec {
        kind: args.kind,
        length: args.length,
        seed: args.seed,
        noise_level: args.noise,
        start: args.start,
    }
    .generate()?;
    let mut out = open_output(args.output.as_deref())?;
    series.write_csv(&mut out)?;
    out.flush().map_err(stdout_error)
}

fn summary_cor(cor: Option<f64>) -> String {
    cor.map_or_else(|| "undefined".into(), |r| format!("{r:.4}"))
}

fn train(args: TrainArgs) -> Result<()> {
    let config = args.run.run_config()?;
    workflow::prepare_output_dir(&args.run.output, args.run.force)?;
    let output = workflow::train(&config, args.model)?;
    for path in write_train(&args.run.output, true, &output)? {
        log::info!("wrote {}", path.display());
    }
    println!(
        "{}: test COR {}",
        args.model,
        summary_cor(output.report.test_cor(args.model))
    );
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let config = args.run.run_config()?;
    workflow::prepare_output_dir(&args.run.output, args.run.force)?;
    let (prepared, comparison) = compare_all(&config)?;
    for path in write_compare(&args.run.output, true, &prepared, &comparison)? {
        log::info!("wrote {}", path.display());
    }
    for m in &comparison.report.models {
        match &m.error {
            Some(e) => println!("{}: failed: {e}", m.kind),
            None => println!("{}: test COR {}", m.kind, summary_cor(comparison.report.test_cor(m.kind))),
        }
    }
    let ranking: Vec<String> = comparison.report.ranking.iter().map(|k| k.to_string()).collect();
    println!("ranking: {}", ranking.join(" > "));
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let saved = SavedModel::load(&args.model)?;
    let series = oz_sentinel::dataset::load_csv(&args.data)?;
    let forecasts = forecast(&saved, &series)?;
    let mut out = open_output(args.output.as_deref())?;
    for f in &forecasts {
        json_line(&mut *out, f)?;
    }
    out.flush().map_err(stdout_error)
}

fn alarm(args: AlarmArgs) -> Result<()> {
    let saved = SavedModel::load(&args.model)?;
    let policy = AlarmPolicy::load(&args.policy)?;
    let series = oz_sentinel::dataset::load_csv(&args.data)?;
    if saved.preprocessing.mode == PatternMode::Sensors && !series.has_sensors() {
        return Err(Error::MissingChannel(if series.uv.is_none() { "uv" } else { "tsr" }));
    }
    let replay = Replay::new(
        &series,
        saved.model,
        saved.preprocessing,
        Some(&policy),
        ReplayOptions { adapt: args.adapt },
    )?;
    if args.dry_run {
        log::info!("dry run: model, policy and {} days of data are consistent", series.len());
        return Ok(());
    }
    let mut out = open_output(args.output.as_deref())?;
    replay.drive_bounded(64, |record| {
        if args.all {
            json_line(&mut *out, &record)
        } else if let Some(event) = &record.event {
            json_line(&mut *out, event)
        } else {
            Ok(())
        }
    })?;
    out.flush().map_err(stdout_error)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OZ_SENTINEL_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Compare(a) => compare(a),
        Command::Alarm(a) => alarm(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
