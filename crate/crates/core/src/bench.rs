//! Repeated runs, learning curves, rate fits and their file formats.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_active, run_passive, EngineConfig, RunMode, RunResult};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::oracle::{load_csv, LabelColumn, Oracle, PoolOracle, SyntheticOracle, SyntheticSpec};

pub const DEFAULT_TEST_SIZE: usize = 5000;
pub const DEFAULT_HOLDOUT: f64 = 0.2;

/// Where points, labels and test sets come from.
#[derive(Debug, Clone)]
pub enum Source {
    /// Synthetic distribution. `pool_size` of `None` samples afresh for every
    /// draw; otherwise a finite pool of that size is generated per seed. With
    /// `random_shift`, each seed moves the `Sine1d` boundary to a uniform
    /// location in `[-0.5, 0.5]` so results do not depend on how a fixed
    /// boundary lines up with histogram cells.
    Synthetic {
        spec: SyntheticSpec,
        pool_size: Option<usize>,
        test_size: usize,
        random_shift: bool,
    },
    /// A loaded CSV pool; every seed draws its own held-out split.
    Pool { pool: PoolOracle, holdout: f64 },
}

pub type Instance = (Box<dyn Oracle + Send>, Dataset);

impl Source {
    pub fn synthetic(spec: SyntheticSpec) -> Self {
        Source::Synthetic {
            spec,
            pool_size: None,
            test_size: DEFAULT_TEST_SIZE,
            random_shift: false,
        }
    }

    pub fn csv(path: impl AsRef<Path>, label_column: &LabelColumn, holdout: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&holdout) || holdout == 0.0 {
            return Err(Error::Config(format!("held-out fraction must lie in (0,1), got {holdout}")));
        }
        Ok(Source::Pool {
            pool: load_csv(path, label_column, true)?,
            holdout,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Source::Synthetic { spec, .. } => spec.dim(),
            Source::Pool { pool, .. } => pool.dim(),
        }
    }

    /// Oracle and test set for one seed.
    pub fn instance(&self, seed: u64) -> Result<Instance> {
        // offset so the data stream differs from the engine's stream
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a);
        match self {
            Source::Synthetic {
                spec,
                pool_size,
                test_size,
                random_shift,
            } => {
                if *test_size == 0 {
                    return Err(Error::Config("test size must be positive".into()));
                }
                let mut spec = *spec;
                if *random_shift {
                    spec = SyntheticSpec {
                        shift: rng.random_range(-0.5..=0.5),
                        ..spec
                    };
                }
                let test = spec.sample_dataset(*test_size, &mut rng);
                let oracle: Box<dyn Oracle + Send> = match pool_size {
                    Some(n) => Box::new(PoolOracle::from_synthetic(spec, *n, &mut rng)),
                    None => Box::new(SyntheticOracle::new(spec)),
                };
                Ok((oracle, test))
            }
            Source::Pool { pool, holdout } => {
                let mut pool = pool.clone();
                let test = pool.split_holdout(*holdout, &mut rng)?;
                if test.is_empty() {
                    return Err(Error::Config("held-out set is empty; the pool is too small".into()));
                }
                Ok((Box::new(pool), test))
            }
        }
    }
}

/// `rows` labeled points from `spec`, reproducible from `seed`.
pub fn generate(spec: SyntheticSpec, rows: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec.sample_dataset(rows, &mut rng)
}

/// Runs one active or passive experiment for `seed`.
pub fn run_once(mode: RunMode, cfg: &EngineConfig, source: &Source) -> Result<RunResult> {
    let (mut oracle, test) = source.instance(cfg.seed)?;
    match mode {
        RunMode::Active => run_active(cfg, &mut *oracle, Some(&test)),
        RunMode::Passive => run_passive(cfg, &mut *oracle, Some(&test)),
    }
}

/// Outcome of one seed inside a curve cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub precision: Option<f64>,
    pub excess_risk: Option<f64>,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: usize,
    pub mode: RunMode,
    pub repeats: usize,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub excess_mean: Option<f64>,
    pub excess_std: Option<f64>,
    pub aborts: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub outcomes: Vec<SeedOutcome>,
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

fn aggregate(budget: usize, mode: RunMode, outcomes: Vec<SeedOutcome>) -> CurvePoint {
    let precisions: Vec<f64> = outcomes.iter().filter_map(|o| o.precision).collect();
    let excess: Vec<f64> = outcomes.iter().filter_map(|o| o.excess_risk).collect();
    let (precision_mean, precision_std) = mean_std(&precisions).unwrap_or((f64::NAN, f64::NAN));
    let ex = mean_std(&excess);
    CurvePoint {
        budget,
        mode,
        repeats: outcomes.len(),
        precision_mean,
        precision_std,
        excess_mean: ex.map(|e| e.0),
        excess_std: ex.map(|e| e.1),
        aborts: outcomes.iter().filter(|o| o.aborted).count(),
        outcomes,
    }
}

/// Active and passive curves over `budgets`. Repeat `r` uses seed
/// `seed + r` for both modes, so each pair shares its test set. Failed runs
/// are counted as aborts of their cell.
pub fn learning_curve<F>(
    budgets: &[usize],
    repeats: usize,
    seed: u64,
    modes: &[RunMode],
    make_config: F,
    source: &Source,
) -> Result<Vec<CurvePoint>>
where
    F: Fn(usize, u64) -> Result<EngineConfig> + Sync,
{
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("budgets must be strictly increasing".into()));
    }
    // configuration errors are fatal; check them once up front
    for &b in budgets {
        make_config(b, seed)?;
    }
    let cells: Vec<(usize, RunMode)> = budgets
        .iter()
        .flat_map(|&b| modes.iter().map(move |&m| (b, m)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..repeats).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<SeedOutcome> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (budget, mode) = cells[c];
            let s = seed.wrapping_add(r as u64);
            let res = make_config(budget, s).and_then(|cfg| run_once(mode, &cfg, source));
            match res {
                Ok(run) => SeedOutcome {
                    seed: s,
                    precision: run.metrics.as_ref().map(|m| m.precision),
                    excess_risk: run.metrics.as_ref().and_then(|m| m.excess_risk),
                    aborted: !run.complete,
                },
                Err(e) => {
                    warn!("budget {budget}, {mode}, seed {s}: {e}");
                    SeedOutcome {
                        seed: s,
                        precision: None,
                        excess_risk: None,
                        aborted: true,
                    }
                }
            }
        })
        .collect();
    let mut it = outcomes.into_iter();
    Ok(cells
        .into_iter()
        .map(|(budget, mode)| aggregate(budget, mode, it.by_ref().take(repeats).collect()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(ln N, ln excess)` pairs used by the fit.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares fit of `ln(excess) = intercept + slope ln(N)`. Non-positive
/// excess values are floored at machine epsilon, but at least three must be
/// positive.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    let positive = points.iter().filter(|p| p.1 > 0.0).count();
    if positive < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 positive excess risks, got {positive}"
        )));
    }
    if points.iter().any(|p| !(p.0 > 0.0 && p.0.is_finite()) || !p.1.is_finite()) {
        return Err(Error::Fit("budgets must be positive and values finite".into()));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(n, e)| {
            if e <= 0.0 {
                warn!("excess risk {e} at N = {n} floored to machine epsilon");
            }
            (n.ln(), e.max(f64::EPSILON).ln())
        })
        .collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("budgets must not all be equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sst: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sse: f64 = logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if sst == 0.0 { 1.0 } else { (1.0 - sse / sst).clamp(0.0, 1.0) };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: logs,
    })
}

/// Result of the empirical rate check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    #[serde(flatten)]
    pub fit: RateFit,
    pub d: usize,
    pub passive: Option<RateFit>,
    pub curve: Vec<CurvePoint>,
}

/// Fits the decay of mean excess risk with the budget for each mode in
/// `curve` that has excess risks.
pub fn rate_report(d: usize, curve: Vec<CurvePoint>) -> Result<RateReport> {
    let fit_mode = |mode: RunMode| -> Option<Result<RateFit>> {
        let pts: Vec<(f64, f64)> = curve
            .iter()
            .filter(|c| c.mode == mode)
            .filter_map(|c| c.excess_mean.map(|e| (c.budget as f64, e)))
            .collect();
        (!pts.is_empty()).then(|| rate_fit(&pts))
    };
    let fit = fit_mode(RunMode::Active).ok_or_else(|| Error::Fit("no active excess risks".into()))??;
    let passive = fit_mode(RunMode::Passive).transpose()?;
    Ok(RateReport { fit, d, passive, curve })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const TRACE_COLUMNS: [&str; 7] = [
    "k",
    "N_k",
    "eps_k",
    "eps_hat_k",
    "lambda_k",
    "labels_requested",
    "budget_used",
];

pub const CURVE_COLUMNS: [&str; 8] = [
    "budget",
    "mode",
    "repeats",
    "precision_mean",
    "precision_std",
    "excess_mean",
    "excess_std",
    "aborts",
];

/// One row per step, then a `total` row with the label count and budget.
pub fn write_trace_csv<W: Write>(run: &RunResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(TRACE_COLUMNS).map_err(map)?;
    for s in &run.steps {
        w.write_record([
            s.k.to_string(),
            s.n_k.to_string(),
            s.eps_k.to_string(),
            fmt_opt(s.eps_hat_k),
            fmt_opt(s.lambda_k),
            s.labels_requested.to_string(),
            s.budget_used.to_string(),
        ])
        .map_err(map)?;
    }
    let total: usize = run.steps.iter().map(|s| s.labels_requested).sum();
    w.write_record([
        "total".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        total.to_string(),
        run.budget_used.to_string(),
    ])
    .map_err(map)?;
    w.flush()?;
    Ok(())
}

pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CURVE_COLUMNS).map_err(map)?;
    for c in curve {
        w.write_record([
            c.budget.to_string(),
            c.mode.to_string(),
            c.repeats.to_string(),
            c.precision_mean.to_string(),
            c.precision_std.to_string(),
            fmt_opt(c.excess_mean),
            fmt_opt(c.excess_std),
            c.aborts.to_string(),
        ])
        .map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `x1, ..., xd, y` with a header line.
pub fn write_dataset_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::Io(e.to_string());
    let mut header: Vec<String> = (1..=data.dim()).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    w.write_record(&header).map_err(map)?;
    for p in data.iter() {
        let mut row: Vec<String> = p.x.iter().map(f64::to_string).collect();
        row.push(p.y.to_string());
        w.write_record(&row).map_err(map)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Input(e.to_string()))
}

/// Writes to `path`, or to standard output when `path` is `None`.
pub fn write_output(path: Option<&PathBuf>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p).map_err(|e| io_err(p, e))?;
            let mut buf = std::io::BufWriter::new(file);
            f(&mut buf)?;
            buf.flush().map_err(|e| io_err(p, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}
