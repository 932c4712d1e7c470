//! Active learning for binary classification by nested rejection regions.
//!
//! Each step fits an estimate of `eta(x) = P(Y = 1 | X = x)`, keeps the part
//! of the current region where the estimate is least confident, and spends
//! the next labels there. The final classifier uses, at every point, the
//! estimate from the last step whose region contained it.

pub mod bench;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod model;
pub mod oracle;
pub mod rejection;

pub use engine::{evaluate, run_active, run_passive, EngineConfig, Metrics, PiecewiseModel, Prediction, RunMode, RunResult, StepRecord};
pub use error::{Error, Result};
pub use estimators::{EtaEstimator, EtaModel, HistogramForm, Learner};
pub use model::{BudgetTracker, Dataset, LabeledPoint, Schedule, ScheduleMode};
pub use oracle::{load_csv, LabelColumn, Oracle, PoolOracle, SyntheticKind, SyntheticOracle, SyntheticSpec};
pub use rejection::{Membership, RegionChain, Stage};
