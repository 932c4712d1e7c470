use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use log::{error, warn};

use reject_active::bench::{self, Source, DEFAULT_HOLDOUT, DEFAULT_TEST_SIZE};
use reject_active::engine::DEFAULT_M_K;
use reject_active::estimators::{HistogramForm, Learner};
use reject_active::rejection::DEFAULT_RANDOMIZATION;
use reject_active::{
    EngineConfig, Error, LabelColumn, Result, RunMode, Schedule, ScheduleMode, SyntheticKind, SyntheticSpec,
};

#[derive(Parser)]
#[command(name = "reject-active", version, about = "Active learning through rejection thresholds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single active (or passive) run; writes a JSON result or a CSV step trace.
    Run(RunArgs),
    /// Active and passive learning curves over several budgets.
    Curve(CurveArgs),
    /// Fits the decay of the excess risk with the budget on a sine-style oracle.
    RateCheck(RateArgs),
    /// Writes a synthetic dataset as CSV.
    GenData(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetName {
    Sine,
    Sine1d,
    Dasgupta1,
    Easyhard2,
    Gauss3,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerName {
    Histogram,
    Knn,
    Linear,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeName {
    Practical,
    Theoretical,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormName {
    CountRatio,
    ExactMarginal,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, value_enum, default_value = "sine")]
    dataset: DatasetName,
    #[arg(long)]
    csv_path: Option<PathBuf>,
    /// Label column: index (0-based), header name, or "last".
    #[arg(long, default_value = "last")]
    label_col: String,
    /// Held-out fraction of a CSV pool used for testing.
    #[arg(long, default_value_t = DEFAULT_HOLDOUT)]
    holdout: f64,
    /// Finite pool size for synthetic data; 0 samples afresh for every draw.
    #[arg(long, default_value_t = 0)]
    pool_size: usize,
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    test_size: usize,
    /// Standard deviation of the gauss3 components.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, value_enum)]
    learner: Option<LearnerName>,
    #[arg(long, default_value_t = 5)]
    knn_k: usize,
    /// Histogram cell width; defaults to N_k^(-1/(d+2)).
    #[arg(long)]
    hist_r: Option<f64>,
    #[arg(long, value_enum, default_value = "count-ratio")]
    hist_form: FormName,
    #[arg(long, value_enum)]
    mode: Option<ModeName>,
    #[arg(long, default_value_t = 1.2)]
    cn: f64,
    #[arg(long, default_value_t = 0.95)]
    ceps: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 2)]
    n0_mult: usize,
    #[arg(long, default_value_t = DEFAULT_M_K)]
    mk: usize,
    #[arg(long, default_value_t = DEFAULT_RANDOMIZATION)]
    u: f64,
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    recycle_labeled: bool,
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    recycle_unlabeled: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, default_value_t = 1000)]
    budget: usize,
    /// Run the passive baseline instead.
    #[arg(long)]
    passive: bool,
    /// Output file; `.csv` writes the step trace, anything else JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, value_delimiter = ',', default_value = "200,500,1000,2000,5000")]
    budgets: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Output file; `.json` writes JSON, anything else CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    engine: EngineArgs,
    /// Dimension of the sine-style oracle (1 or 2).
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000,8000,16000")]
    budgets: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    test_size: usize,
    /// Skip the passive baseline.
    #[arg(long)]
    active_only: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "sine")]
    dataset: DatasetName,
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn synthetic_kind(name: DatasetName) -> Option<SyntheticKind> {
    Some(match name {
        DatasetName::Sine => SyntheticKind::Sine,
        DatasetName::Sine1d => SyntheticKind::Sine1d,
        DatasetName::Dasgupta1 => SyntheticKind::Dasgupta1,
        DatasetName::Easyhard2 => SyntheticKind::Easyhard2,
        DatasetName::Gauss3 => SyntheticKind::Gauss3,
        DatasetName::Csv => return None,
    })
}

fn synthetic_spec(kind: SyntheticKind, sigma: Option<f64>) -> Result<SyntheticSpec> {
    match sigma {
        Some(s) => SyntheticSpec::with_sigma(kind, s),
        None => Ok(SyntheticSpec::new(kind)),
    }
}

impl DataArgs {
    fn source(&self) -> Result<Source> {
        match synthetic_kind(self.dataset) {
            Some(kind) => {
                if self.csv_path.is_some() {
                    warn!("--csv-path is ignored for synthetic datasets");
                }
                Ok(Source::Synthetic {
                    spec: synthetic_spec(kind, self.sigma)?,
                    pool_size: (self.pool_size > 0).then_some(self.pool_size),
                    test_size: self.test_size,
                    random_shift: false,
                })
            }
            None => {
                let path = self
                    .csv_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("--dataset csv requires --csv-path".into()))?;
                let col = if self.label_col == "last" {
                    LabelColumn::Last
                } else {
                    self.label_col.parse()?
                };
                Source::csv(path, &col, self.holdout)
            }
        }
    }
}

impl EngineArgs {
    fn learner(&self, default: LearnerName) -> Learner {
        match self.learner.unwrap_or(default) {
            LearnerName::Histogram => Learner::Histogram {
                cell_width: self.hist_r,
                form: match self.hist_form {
                    FormName::CountRatio => HistogramForm::CountRatio,
                    FormName::ExactMarginal => HistogramForm::ExactMarginal,
                },
            },
            LearnerName::Knn => Learner::knn(self.knn_k),
            LearnerName::Linear => Learner::linear(),
        }
    }

    fn mode(&self, default: ModeName) -> ScheduleMode {
        match self.mode.unwrap_or(default) {
            ModeName::Practical => ScheduleMode::Practical,
            ModeName::Theoretical => ScheduleMode::Theoretical,
        }
    }

    fn config(&self, budget: usize, d: usize, seed: u64, learner: &Learner, mode: ScheduleMode) -> Result<EngineConfig> {
        let schedule = Schedule::new(budget, mode, self.cn, self.ceps, self.delta, d, self.n0_mult)?;
        let cfg = EngineConfig {
            schedule,
            m_k: self.mk,
            u: self.u,
            learner: learner.clone(),
            recycle_labeled: self.recycle_labeled,
            recycle_unlabeled: self.recycle_unlabeled,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn has_extension(path: Option<&PathBuf>, ext: &str) -> bool {
    path.and_then(|p| p.extension())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let source = args.data.source()?;
    let learner = args.engine.learner(LearnerName::Histogram);
    let mode = args.engine.mode(ModeName::Practical);
    let cfg = args
        .engine
        .config(args.budget, source.dim(), args.engine.seed, &learner, mode)?;
    let run_mode = if args.passive { RunMode::Passive } else { RunMode::Active };
    let result = bench::run_once(run_mode, &cfg, &source)?;
    let out = args.out.as_ref();
    if has_extension(out, "csv") {
        bench::write_output(out, |w| bench::write_trace_csv(&result, w))?;
    } else {
        let text = bench::to_json(&result)?;
        bench::write_output(out, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    if let Some(reason) = &result.abort_reason {
        error!("run stopped early: {reason}");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn curve(args: CurveArgs) -> Result<ExitCode> {
    let source = args.data.source()?;
    let learner = args.engine.learner(LearnerName::Histogram);
    let mode = args.engine.mode(ModeName::Practical);
    let d = source.dim();
    let engine = &args.engine;
    let points = bench::learning_curve(
        &args.budgets,
        args.repeats,
        engine.seed,
        &[RunMode::Active, RunMode::Passive],
        |b, s| engine.config(b, d, s, &learner, mode),
        &source,
    )?;
    let out = args.out.as_ref();
    if has_extension(out, "json") {
        let text = bench::to_json(&points)?;
        bench::write_output(out, |w| Ok(w.write_all(text.as_bytes())?))?;
    } else {
        bench::write_output(out, |w| bench::write_curve_csv(&points, w))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn rate_check(args: RateArgs) -> Result<ExitCode> {
    let kind = match args.d {
        1 => SyntheticKind::Sine1d,
        2 => SyntheticKind::Sine,
        d => return Err(Error::Config(format!("--d must be 1 or 2, got {d}"))),
    };
    let source = Source::Synthetic {
        spec: SyntheticSpec::new(kind),
        pool_size: None,
        test_size: args.test_size,
        random_shift: kind == SyntheticKind::Sine1d,
    };
    let learner = args.engine.learner(LearnerName::Histogram);
    let mode = args.engine.mode(ModeName::Theoretical);
    let modes: &[RunMode] = if args.active_only {
        &[RunMode::Active]
    } else {
        &[RunMode::Active, RunMode::Passive]
    };
    let engine = &args.engine;
    let curve = bench::learning_curve(
        &args.budgets,
        args.repeats,
        engine.seed,
        modes,
        |b, s| engine.config(b, args.d, s, &learner, mode),
        &source,
    )?;
    let report = bench::rate_report(args.d, curve)?;
    let text = bench::to_json(&report)?;
    bench::write_output(args.out.as_ref(), |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(ExitCode::SUCCESS)
}

fn gen_data(args: GenArgs) -> Result<ExitCode> {
    let kind = synthetic_kind(args.dataset)
        .ok_or_else(|| Error::Config("gen-data needs a synthetic dataset".into()))?;
    let spec = synthetic_spec(kind, args.sigma)?;
    let data = bench::generate(spec, args.rows, args.seed);
    bench::write_output(args.out.as_ref(), |w| bench::write_dataset_csv(&data, w))?;
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Load { .. } | Error::Fit(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REJECT_ACTIVE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.command {
        Command::Run(a) => run(a),
        Command::Curve(a) => curve(a),
        Command::RateCheck(a) => rate_check(a),
        Command::GenData(a) => gen_data(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
