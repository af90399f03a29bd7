//! `streamfit` command-line interface.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use streamfit::data::{CsvSchema, LabelKind};
use streamfit::experiments::{fit_stream, run_experiment, Mode, ModelKind, RunConfig};
use streamfit::features::DictionarySpec;
use streamfit::metrics::ChartBasis;
use streamfit::warmup::{LambdaGrid, SplitMode, SplitPlan};
use streamfit::Error;

const OUTPUT_ENV: &str = "STREAMFIT_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "streamfit-output";

#[derive(Parser, Debug)]
#[command(name = "streamfit", version, about = "Streaming regression, classification and expert ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one of the built-in experiments (1 to 7).
    RunExperiment {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=7))]
        id: u8,
        #[command(flatten)]
        opts: Opts,
    },
    /// Warm up and stream a model over a local CSV file.
    FitStream {
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Gaussian,
    Logistic,
    Experts,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PlanModeArg {
    Expanding,
    Sliding,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ChartArg {
    WarmupOnly,
    Expanding,
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [env: STREAMFIT_OUTPUT_DIR, default: streamfit-output].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stream length.
    #[arg(long)]
    n: Option<usize>,
    /// Response noise standard deviation for generated streams.
    #[arg(long)]
    noise: Option<f64>,
    /// Learning rate.
    #[arg(long)]
    eta: Option<f64>,
    /// Fixed regularization strength (skips cross-validation).
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated candidate lambdas.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    plan_mode: Option<PlanModeArg>,
    #[arg(long)]
    initial_train: Option<usize>,
    #[arg(long)]
    plan_step: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    n_splits: Option<usize>,
    /// Warm-up length.
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    interactions: bool,
    #[arg(long)]
    squares: bool,
    #[arg(long)]
    sine: bool,
    #[arg(long)]
    cosine: bool,
    #[arg(long)]
    no_intercept: bool,
    /// Prediction interval level.
    #[arg(long)]
    interval_level: Option<f64>,
    #[arg(long, value_enum)]
    chart_basis: Option<ChartArg>,
    /// Keep the covariance fixed after the warm-up.
    #[arg(long)]
    freeze_sigma: bool,
    /// Monte Carlo replicates (experiment 1).
    #[arg(long)]
    replicates: Option<usize>,
    /// Learning rate of the expert weights.
    #[arg(long)]
    ensemble_eta: Option<f64>,
    /// Upper clamp on per-step expert losses.
    #[arg(long)]
    loss_cap: Option<f64>,
    /// Classification cut during streaming.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Input CSV file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Comma-separated feature columns.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Label column.
    #[arg(long)]
    label: Option<String>,
    /// Treat the label as a 0/1 class.
    #[arg(long)]
    binary: bool,
    #[arg(long)]
    delimiter: Option<char>,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Use the built-in synthetic stand-in data (experiments 5 to 7).
    #[arg(long)]
    synthetic: bool,
}

fn flag(on: bool) -> Option<bool> {
    on.then_some(true)
}

impl Opts {
    fn load(&self) -> Result<RunConfig, Error> {
        let base = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                RunConfig::from_json(&text)?
            }
            None => RunConfig::default(),
        };
        let flags = self.to_config(&base)?;
        Ok(base.overlay(flags))
    }

    fn to_config(&self, base: &RunConfig) -> Result<RunConfig, Error> {
        let plan_flags = self.plan_mode.is_some()
            || self.initial_train.is_some()
            || self.plan_step.is_some()
            || self.horizon.is_some()
            || self.n_splits.is_some();
        let plan = if plan_flags {
            let from = base.plan;
            let pick = |v: Option<usize>, f: Option<usize>, name: &str| {
                v.or(f).ok_or_else(|| Error::InvalidConfig(format!("split plan is missing --{name}")))
            };
            let mode = match self.plan_mode {
                Some(PlanModeArg::Expanding) => SplitMode::Expanding,
                Some(PlanModeArg::Sliding) => SplitMode::Sliding,
                None => from.map_or(SplitMode::Expanding, |p| p.mode),
            };
            Some(SplitPlan {
                mode,
                initial_train: pick(self.initial_train, from.map(|p| p.initial_train), "initial-train")?,
                step: pick(self.plan_step, from.map(|p| p.step), "plan-step")?,
                horizon: pick(self.horizon, from.map(|p| p.horizon), "horizon")?,
                n_splits: pick(self.n_splits, from.map(|p| p.n_splits), "n-splits")?,
            })
        } else {
            None
        };

        let dict_flags = self.interactions || self.squares || self.sine || self.cosine || self.no_intercept;
        let dictionary = dict_flags.then(|| {
            let d = base.dictionary.unwrap_or(DictionarySpec::linear(0));
            d.with_interactions(d.interactions || self.interactions)
                .with_squares(d.squares || self.squares)
                .with_sine(d.sine || self.sine)
                .with_cosine(d.cosine || self.cosine)
                .with_intercept(d.include_intercept && !self.no_intercept)
        });

        let schema_flags = self.features.is_some() || self.label.is_some() || self.binary || self.delimiter.is_some();
        let schema = if schema_flags {
            let from = base.schema.clone();
            let features = self
                .features
                .clone()
                .or_else(|| from.as_ref().map(|s| s.features.clone()))
                .ok_or_else(|| Error::InvalidConfig("input schema is missing --features".into()))?;
            let label = self
                .label
                .clone()
                .or_else(|| from.as_ref().map(|s| s.label.clone()))
                .ok_or_else(|| Error::InvalidConfig("input schema is missing --label".into()))?;
            let mut schema = CsvSchema::new(features, label);
            if let Some(f) = &from {
                schema.label_kind = f.label_kind;
                schema.delimiter = f.delimiter;
            }
            if self.binary {
                schema.label_kind = LabelKind::Binary;
            }
            if let Some(d) = self.delimiter {
                schema.delimiter = d;
            }
            Some(schema)
        } else {
            None
        };

        Ok(RunConfig {
            seed: self.seed,
            n: self.n,
            noise: self.noise,
            eta: self.eta,
            lambda: self.lambda,
            lambda_grid: self.lambda_grid.clone().map(LambdaGrid::new).transpose()?,
            plan,
            warmup: self.warmup,
            dictionary,
            interval_level: self.interval_level,
            chart_basis: self.chart_basis.map(|c| match c {
                ChartArg::WarmupOnly => ChartBasis::WarmupOnly,
                ChartArg::Expanding => ChartBasis::Expanding,
            }),
            freeze_sigma: flag(self.freeze_sigma),
            replicates: self.replicates,
            ensemble_eta: self.ensemble_eta,
            loss_cap: self.loss_cap,
            threshold: self.threshold,
            model: self.model.map(|m| match m {
                ModelArg::Gaussian => ModelKind::Gaussian,
                ModelArg::Logistic => ModelKind::Logistic,
                ModelArg::Experts => ModelKind::Experts,
            }),
            input: self.input.clone(),
            schema,
            synthetic: flag(self.synthetic),
            lenient: flag(self.lenient),
            output_dir: self.out.clone(),
            ..RunConfig::default()
        })
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::InvalidPlan(_) => 1,
        Error::Io { .. } | Error::Schema(_) | Error::Parse { .. } => 2,
        Error::SingularSystem
        | Error::Numeric(_)
        | Error::DegenerateFeature(_)
        | Error::DegenerateTarget
        | Error::DegenerateLabels
        | Error::InsufficientData(_)
        | Error::ExpertError { .. } => 3,
    }
}

fn run(command: Command) -> Result<(), Error> {
    let (mut cfg, id) = match command {
        Command::RunExperiment { id, opts } => {
            let mut cfg = opts.load()?;
            cfg.mode = Some(Mode::Experiment);
            cfg.experiment = Some(id);
            (cfg, Some(id))
        }
        Command::FitStream { opts } => {
            let mut cfg = opts.load()?;
            cfg.mode = Some(Mode::FitStream);
            (cfg, None)
        }
    };
    let out = cfg
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    cfg.output_dir = Some(out.clone());
    let report = match id {
        Some(id) => run_experiment(id, &cfg)?,
        None => fit_stream(&cfg)?,
    };
    let files = report.write(&out)?;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "wrote {} files to {}", files.len(), out.display());
    if let Some(results) = report.summary.get("results") {
        let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(results).unwrap_or_default());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
