//! Base learners for the regression function `eta(x) = P(Y=1 | X=x)`.
//!
//! Every learner is fitted on a labeled sample and exposes `predict_eta`
//! clamped to `[0,1]` and the score `max(eta, 1 - eta)` in `[1/2, 1]`.

mod histogram;
mod knn;
mod linear;

pub use histogram::{HistogramEstimator, HistogramForm, Marginal};
pub use knn::KnnEstimator;
pub use linear::{logistic_loss_grad, LinearEstimator};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

pub trait EtaEstimator {
    fn dim(&self) -> usize;

    /// Unchecked prediction; `x.len() == self.dim()` is the caller's job.
    fn eta_unchecked(&self, x: &[f64]) -> f64;

    fn predict_eta(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(self.eta_unchecked(x).clamp(0.0, 1.0))
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        self.predict_eta(x).map(score_of)
    }
}

/// `max(eta, 1 - eta)`.
#[inline]
pub fn score_of(eta: f64) -> f64 {
    eta.max(1.0 - eta)
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Input(format!(
            "feature vector has dimension {}, estimator expects {expected}",
            x.len()
        )));
    }
    Ok(())
}

/// A fitted estimator of any supported kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EtaModel {
    Histogram(HistogramEstimator),
    Knn(KnnEstimator),
    Linear(LinearEstimator),
}

impl EtaEstimator for EtaModel {
    fn dim(&self) -> usize {
        match self {
            EtaModel::Histogram(m) => m.dim(),
            EtaModel::Knn(m) => m.dim(),
            EtaModel::Linear(m) => m.dim(),
        }
    }

    fn eta_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            EtaModel::Histogram(m) => m.eta_unchecked(x),
            EtaModel::Knn(m) => m.eta_unchecked(x),
            EtaModel::Linear(m) => m.eta_unchecked(x),
        }
    }
}

/// Learner choice and its hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum Learner {
    /// `cell_width: None` applies the rule `r_k = N_k^{-1/(d+2)}`.
    Histogram {
        cell_width: Option<f64>,
        form: HistogramForm,
    },
    Knn {
        k: usize,
    },
    Linear {
        steps: usize,
        learning_rate: f64,
    },
}

impl Learner {
    pub fn histogram() -> Self {
        Learner::Histogram {
            cell_width: None,
            form: HistogramForm::CountRatio,
        }
    }

    pub fn knn(k: usize) -> Self {
        Learner::Knn { k }
    }

    pub fn linear() -> Self {
        Learner::Linear {
            steps: linear::DEFAULT_STEPS,
            learning_rate: linear::DEFAULT_LEARNING_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Learner::Histogram {
                cell_width: Some(r),
                ..
            } if !(*r > 0.0 && *r <= 1.0) => {
                Err(Error::Config(format!("histogram cell width must lie in (0,1], got {r}")))
            }
            Learner::Knn { k: 0 } => Err(Error::Config("k-NN needs k >= 1".into())),
            Learner::Linear { learning_rate, .. } if !(*learning_rate > 0.0) => {
                Err(Error::Config("learning rate must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Fits the learner. `n_k` is the schedule size used by the histogram
    /// width rule; `region_mass` is the (estimated) marginal mass of the
    /// region the sample was drawn from, used by the exact-marginal form.
    pub fn fit(&self, samples: &Dataset, n_k: usize, region_mass: f64) -> Result<EtaModel> {
        match self {
            Learner::Histogram { cell_width, form } => {
                let r = match cell_width {
                    Some(r) => *r,
                    None => histogram::width_rule(n_k.max(1), samples.dim()),
                };
                HistogramEstimator::fit(samples, r, *form, region_mass, Marginal::Uniform)
                    .map(EtaModel::Histogram)
            }
            Learner::Knn { k } => KnnEstimator::fit(samples, *k).map(EtaModel::Knn),
            Learner::Linear {
                steps,
                learning_rate,
            } => LinearEstimator::fit(samples, *steps, *learning_rate).map(EtaModel::Linear),
        }
    }
}
