//! The active learning loop, its passive baseline, and the piecewise model
//! they produce.
//!
//! Step `k >= 1` of an active run:
//!
//! 1. draw `M_k` unlabeled points from the current region `A_{k-1}`
//!    (recycling the previous step's survivors when enabled);
//! 2. set `lambda_k` to the `eps_k` quantile of their perturbed scores under
//!    `f_{k-1}`, which defines `A_k`;
//! 3. measure the retention `eps_hat_k` on a second, fresh batch of `M_k`
//!    points from `A_{k-1}`;
//! 4. request `floor(N_k eps_k)` labels from `A_k` and fit `eta_k` on them,
//!    plus earlier labels that still lie in `A_k` when recycling.
//!
//! The loop stops before a step whose labels would overrun the budget, when
//! a step would request no labels, or when the threshold is empty.

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EtaEstimator, EtaModel, Learner};
use crate::model::{BudgetTracker, Dataset, LabeledPoint, Schedule};
use crate::oracle::{default_max_attempts, sample_conditional_partial, Draw, Oracle};
use crate::rejection::{RegionChain, DEFAULT_RANDOMIZATION};

pub const DEFAULT_M_K: usize = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub schedule: Schedule,
    /// Unlabeled points per step used to set the threshold.
    pub m_k: usize,
    /// Width of the score perturbation.
    pub u: f64,
    pub learner: Learner,
    pub recycle_labeled: bool,
    pub recycle_unlabeled: bool,
    pub seed: u64,
}

impl EngineConfig {
    pub fn new(schedule: Schedule, learner: Learner, seed: u64) -> Self {
        Self {
            schedule,
            m_k: DEFAULT_M_K,
            u: DEFAULT_RANDOMIZATION,
            learner,
            recycle_labeled: true,
            recycle_unlabeled: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_k == 0 {
            return Err(Error::Config("M_k must be at least 1".into()));
        }
        if !(self.u >= 0.0 && self.u.is_finite()) {
            return Err(Error::Config(format!("u must be >= 0, got {}", self.u)));
        }
        self.learner.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Active,
    Passive,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Active => "active",
            RunMode::Passive => "passive",
        })
    }
}

/// Plug-in classifier assembled from the per-step estimators:
/// `eta(x) = eta_j(x)` on `A_j \ A_{j+1}` and `eta_L(x)` on `A_L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseModel {
    chain: RegionChain,
    last: EtaModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub eta: f64,
    pub label: u8,
    pub stage: usize,
}

impl PiecewiseModel {
    pub fn new(chain: RegionChain, last: EtaModel) -> Result<Self> {
        if let Some(s) = chain.stages().first() {
            if s.estimator.dim() != last.dim() {
                return Err(Error::Input("stage dimensions disagree".into()));
            }
        }
        Ok(Self { chain, last })
    }

    pub fn single(estimator: EtaModel) -> Self {
        Self {
            chain: RegionChain::new(),
            last: estimator,
        }
    }

    pub fn chain(&self) -> &RegionChain {
        &self.chain
    }

    /// Number of estimators, one more than the number of thresholds.
    pub fn num_stages(&self) -> usize {
        self.chain.len() + 1
    }

    pub fn estimator(&self, stage: usize) -> Option<&EtaModel> {
        if stage < self.chain.len() {
            Some(&self.chain.stages()[stage].estimator)
        } else if stage == self.chain.len() {
            Some(&self.last)
        } else {
            None
        }
    }

    pub fn dim(&self) -> usize {
        self.last.dim()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        crate::estimators::check_dim(self.dim(), x)?;
        let stage = self.chain.exit_stage(x)?.unwrap_or(self.chain.len());
        let eta = self.estimator(stage).expect("stage in range").predict_eta(x)?;
        Ok(Prediction {
            eta,
            label: u8::from(eta >= 0.5),
            stage,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub n_k: usize,
    pub eps_k: f64,
    /// Fraction of fresh points from `A_{k-1}` that fell in `A_k`.
    pub eps_hat_k: Option<f64>,
    pub lambda_k: Option<f64>,
    pub labels_requested: usize,
    pub budget_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of test labels predicted correctly.
    pub precision: f64,
    /// `R(g) - R(g*)` estimated on the test points, when `eta` is known.
    pub excess_risk: Option<f64>,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: RunMode,
    pub budget: usize,
    pub budget_used: usize,
    pub complete: bool,
    pub abort_reason: Option<String>,
    pub steps: Vec<StepRecord>,
    pub metrics: Option<Metrics>,
    pub model: PiecewiseModel,
}

/// Precision on `test`, plus the excess risk
/// `(2/n) sum_i |eta(x_i) - 1/2| 1{g(x_i) != g*(x_i)}` when `eta` is given.
pub fn evaluate(
    model: &PiecewiseModel,
    test: &Dataset,
    eta_true: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Input("test set is empty".into()));
    }
    let n = test.len() as f64;
    let mut correct = 0usize;
    let mut excess = 0.0;
    for p in test.iter() {
        let pred = model.predict(&p.x)?;
        correct += usize::from(pred.label == p.y);
        if let Some(eta) = eta_true {
            let e = eta(&p.x);
            let bayes = u8::from(e >= 0.5);
            if bayes != pred.label {
                excess += (e - 0.5).abs();
            }
        }
    }
    Ok(Metrics {
        precision: correct as f64 / n,
        excess_risk: eta_true.map(|_| 2.0 * excess / n),
        test_size: test.len(),
    })
}

fn evaluate_with_oracle(model: &PiecewiseModel, test: Option<&Dataset>, oracle: &dyn Oracle) -> Result<Option<Metrics>> {
    let Some(test) = test else { return Ok(None) };
    let known = test.points().first().and_then(|p| oracle.eta_true(&p.x)).is_some();
    let eta = |x: &[f64]| oracle.eta_true(x).unwrap_or(0.5);
    let eta_ref: &dyn Fn(&[f64]) -> f64 = &eta;
    evaluate(model, test, known.then_some(eta_ref)).map(Some)
}

fn to_dataset(dim: usize, points: impl IntoIterator<Item = LabeledPoint>) -> Result<Dataset> {
    Dataset::from_points(dim, points.into_iter().collect())
}

fn labeled_points(draws: &[Draw]) -> Vec<LabeledPoint> {
    draws
        .iter()
        .map(|d| LabeledPoint {
            x: d.x.clone(),
            y: d.y.expect("labeled draw"),
        })
        .collect()
}

struct Abort {
    reason: String,
}

/// Runs the active algorithm. `test`, when given, is used only for the final
/// metrics.
pub fn run_active(cfg: &EngineConfig, oracle: &mut dyn Oracle, test: Option<&Dataset>) -> Result<RunResult> {
    cfg.validate()?;
    let schedule = &cfg.schedule;
    if oracle.dim() != schedule.d {
        return Err(Error::Config(format!(
            "oracle dimension {} does not match schedule dimension {}",
            oracle.dim(),
            schedule.d
        )));
    }
    let dim = oracle.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut budget = BudgetTracker::new(schedule.budget)?;
    let max_attempts = |m: usize| default_max_attempts(m);
    let mut steps = Vec::new();
    let mut abort: Option<Abort> = None;

    // initialization on A_0
    let n0 = schedule.n0;
    let chain = RegionChain::new();
    let init = sample_conditional_partial(oracle, &chain, n0, cfg.u, &mut rng, true, max_attempts(n0));
    budget.spend(init.draws.len())?;
    if let Some(e) = init.error {
        if init.draws.is_empty() {
            return Err(e);
        }
        abort = Some(Abort { reason: e.to_string() });
    }
    let mut labeled = labeled_points(&init.draws);
    let mut in_region = vec![true; labeled.len()];
    let mut current = cfg
        .learner
        .fit(&to_dataset(dim, labeled.iter().cloned())?, n0, 1.0)?;
    steps.push(StepRecord {
        k: 0,
        n_k: n0,
        eps_k: schedule.eps0(),
        eps_hat_k: None,
        lambda_k: None,
        labels_requested: init.draws.len(),
        budget_used: budget.used(),
    });

    let mut chain = chain;
    let mut n_prev = n0;
    let mut region_mass = 1.0;
    let mut survivors: Vec<Vec<f64>> = Vec::new();
    let mut k = 1;
    while abort.is_none() {
        let (n_k, eps_k) = schedule.step(k, n_prev);
        let n_req = Schedule::labels_for(n_k, eps_k);
        if n_req == 0 || !budget.can_spend(n_req) {
            debug!("step {k}: stopping, {n_req} labels requested with {} left", budget.remaining());
            break;
        }

        // unlabeled points from A_{k-1}: threshold batch then retention batch
        let mut candidates = if cfg.recycle_unlabeled {
            std::mem::take(&mut survivors)
        } else {
            Vec::new()
        };
        candidates.truncate(cfg.m_k);
        let need = 2 * cfg.m_k - candidates.len();
        let fresh = sample_conditional_partial(oracle, &chain, need, cfg.u, &mut rng, false, max_attempts(need));
        if let Some(e) = fresh.error {
            abort = Some(Abort { reason: e.to_string() });
            break;
        }
        let mut fresh: Vec<Vec<f64>> = fresh.draws.into_iter().map(|d| d.x).collect();
        let check_batch = fresh.split_off(fresh.len() - cfg.m_k);
        candidates.extend(fresh);

        let lambda = chain.extend(current.clone(), &candidates, eps_k, cfg.u, &mut rng)?;
        if lambda.is_none() {
            chain.pop();
            debug!("step {k}: empty threshold, stopping");
            break;
        }
        let stage = chain.stages().last().expect("just extended");
        survivors = check_batch
            .into_iter()
            .filter(|x| {
                let zeta = if cfg.u == 0.0 { 0.0 } else { cfg.u * rng.random::<f64>() };
                stage.accepts(x, zeta)
            })
            .collect();
        let eps_hat = survivors.len() as f64 / cfg.m_k as f64;
        region_mass *= eps_hat.max(1.0 / cfg.m_k as f64);

        // labels from A_k
        let got = sample_conditional_partial(oracle, &chain, n_req, cfg.u, &mut rng, true, max_attempts(n_req));
        budget.spend(got.draws.len())?;
        if let Some(e) = &got.error {
            abort = Some(Abort { reason: e.to_string() });
        }
        if got.draws.is_empty() {
            chain.pop();
            steps.push(StepRecord {
                k,
                n_k,
                eps_k,
                eps_hat_k: Some(eps_hat),
                lambda_k: lambda,
                labels_requested: 0,
                budget_used: budget.used(),
            });
            break;
        }

        for (p, inside) in labeled.iter().zip(in_region.iter_mut()) {
            if *inside {
                *inside = stage.accepts(&p.x, 0.0);
            }
        }
        let new_points = labeled_points(&got.draws);
        let mut train: Vec<LabeledPoint> = if cfg.recycle_labeled {
            labeled
                .iter()
                .zip(&in_region)
                .filter(|(_, &inside)| inside)
                .map(|(p, _)| p.clone())
                .collect()
        } else {
            Vec::new()
        };
        train.extend(new_points.iter().cloned());
        debug!(
            "step {k}: N_k={n_k} eps_k={eps_k:.4} eps_hat={eps_hat:.4} lambda={:?} labels={} train={}",
            lambda,
            new_points.len(),
            train.len()
        );
        current = cfg
            .learner
            .fit(&to_dataset(dim, train)?, n_k, region_mass.min(1.0))?;
        in_region.extend(std::iter::repeat_n(true, new_points.len()));
        labeled.extend(new_points);

        steps.push(StepRecord {
            k,
            n_k,
            eps_k,
            eps_hat_k: Some(eps_hat),
            lambda_k: lambda,
            labels_requested: got.draws.len(),
            budget_used: budget.used(),
        });
        n_prev = n_k;
        k += 1;
    }

    let model = PiecewiseModel::new(chain, current)?;
    let metrics = evaluate_with_oracle(&model, test, oracle)?;
    info!(
        "active run: {} steps, {} of {} labels, precision {:?}",
        steps.len(),
        budget.used(),
        budget.total(),
        metrics.as_ref().map(|m| m.precision)
    );
    Ok(RunResult {
        mode: RunMode::Active,
        budget: budget.total(),
        budget_used: budget.used(),
        complete: abort.is_none(),
        abort_reason: abort.map(|a| a.reason),
        steps,
        metrics,
        model,
    })
}

/// Passive baseline: one i.i.d. labeled sample of `min(N, pool size)`
/// points and a single fit.
pub fn run_passive(cfg: &EngineConfig, oracle: &mut dyn Oracle, test: Option<&Dataset>) -> Result<RunResult> {
    cfg.validate()?;
    let n_budget = cfg.schedule.budget;
    let mut budget = BudgetTracker::new(n_budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = oracle.remaining_points().map_or(n_budget, |r| r.min(n_budget));
    if n == 0 {
        return Err(Error::PoolExhausted {
            accepted: 0,
            requested: n_budget,
        });
    }
    let got = sample_conditional_partial(oracle, &RegionChain::new(), n, cfg.u, &mut rng, true, default_max_attempts(n));
    budget.spend(got.draws.len())?;
    if got.draws.is_empty() {
        return Err(got.error.unwrap_or(Error::PoolExhausted {
            accepted: 0,
            requested: n,
        }));
    }
    let points = labeled_points(&got.draws);
    let estimator = cfg
        .learner
        .fit(&to_dataset(oracle.dim(), points)?, got.draws.len(), 1.0)?;
    let model = PiecewiseModel::single(estimator);
    let metrics = evaluate_with_oracle(&model, test, oracle)?;
    Ok(RunResult {
        mode: RunMode::Passive,
        budget: n_budget,
        budget_used: budget.used(),
        complete: got.error.is_none(),
        abort_reason: got.error.map(|e| e.to_string()),
        steps: vec![StepRecord {
            k: 0,
            n_k: n,
            eps_k: 1.0,
            eps_hat_k: None,
            lambda_k: None,
            labels_requested: got.draws.len(),
            budget_used: budget.used(),
        }],
        metrics,
        model,
    })
}

/// Deterministic membership of `x` in each region `A_0, ..., A_L`, tested
/// stage by stage rather than through the chain's own early exit.
pub fn region_memberships(model: &PiecewiseModel, x: &[f64]) -> Result<Vec<bool>> {
    let stages = model.chain().stages();
    let mut out = Vec::with_capacity(stages.len() + 1);
    out.push(true);
    let mut inside = true;
    for s in stages {
        inside = inside && s.accepts(x, 0.0);
        out.push(inside);
    }
    Ok(out)
}
