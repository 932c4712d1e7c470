//! Point and label sources, and rejection sampling from the current region.

mod pool;
mod synthetic;

pub use pool::{load_csv, LabelColumn, PoolOracle};
pub use synthetic::{SyntheticKind, SyntheticOracle, SyntheticSpec};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rejection::RegionChain;

/// A point drawn from the marginal. Pool oracles tag it with its row.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub index: Option<usize>,
}

pub trait Oracle {
    fn dim(&self) -> usize;

    /// Draws from the marginal; pools draw uniformly among the points whose
    /// label has not been revealed. `None` means the pool is exhausted.
    fn draw(&mut self, rng: &mut dyn RngCore) -> Option<Candidate>;

    /// Reveals a label. Pool oracles consume the point.
    fn label(&mut self, candidate: &Candidate, rng: &mut dyn RngCore) -> Result<u8>;

    /// The true regression function, when known.
    fn eta_true(&self, x: &[f64]) -> Option<f64>;

    /// Points that can still be labeled; `None` for an unlimited source.
    fn remaining_points(&self) -> Option<usize> {
        None
    }
}

impl<T: Oracle + ?Sized> Oracle for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn draw(&mut self, rng: &mut dyn RngCore) -> Option<Candidate> {
        (**self).draw(rng)
    }

    fn label(&mut self, candidate: &Candidate, rng: &mut dyn RngCore) -> Result<u8> {
        (**self).label(candidate, rng)
    }

    fn eta_true(&self, x: &[f64]) -> Option<f64> {
        (**self).eta_true(x)
    }

    fn remaining_points(&self) -> Option<usize> {
        (**self).remaining_points()
    }
}

/// An accepted point with the perturbations that let it through each stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub x: Vec<f64>,
    pub y: Option<u8>,
    pub index: Option<usize>,
    pub zetas: Vec<f64>,
}

/// Default cap on draws: 200 per requested point.
pub fn default_max_attempts(m: usize) -> usize {
    200 * m
}

/// Result of a conditional sampling call that may stop early.
#[derive(Debug, Clone)]
pub struct Sampled {
    pub draws: Vec<Draw>,
    pub attempts: usize,
    pub error: Option<Error>,
}

/// Rejection sampling from `Pi(. | A)`: draw from the marginal and keep the
/// point when it passes every stage of `chain` with fresh perturbations.
/// Labels are requested only for accepted points and only when `labeled`.
///
/// Unlike [`sample_conditional`], points accepted before a failure are
/// returned together with the error, so labels already revealed can be
/// accounted for.
pub fn sample_conditional_partial(
    oracle: &mut dyn Oracle,
    chain: &RegionChain,
    m: usize,
    u: f64,
    rng: &mut dyn RngCore,
    labeled: bool,
    max_attempts: usize,
) -> Sampled {
    let mut draws = Vec::with_capacity(m);
    let mut attempts = 0;
    while draws.len() < m {
        if attempts >= max_attempts {
            return Sampled {
                error: Some(Error::RegionStarvation {
                    accepted: draws.len(),
                    requested: m,
                    attempts,
                }),
                draws,
                attempts,
            };
        }
        attempts += 1;
        let Some(c) = oracle.draw(rng) else {
            return Sampled {
                error: Some(Error::PoolExhausted {
                    accepted: draws.len(),
                    requested: m,
                }),
                draws,
                attempts,
            };
        };
        let zetas = match chain.contains_with_zetas(&c.x, u, rng) {
            Ok(Some(z)) => z,
            Ok(None) => continue,
            Err(e) => {
                return Sampled {
                    draws,
                    attempts,
                    error: Some(e),
                }
            }
        };
        let y = if labeled {
            match oracle.label(&c, rng) {
                Ok(y) => Some(y),
                Err(e) => {
                    return Sampled {
                        draws,
                        attempts,
                        error: Some(e),
                    }
                }
            }
        } else {
            None
        };
        draws.push(Draw {
            x: c.x,
            y,
            index: c.index,
            zetas,
        });
    }
    Sampled {
        draws,
        attempts,
        error: None,
    }
}

pub fn sample_conditional(
    oracle: &mut dyn Oracle,
    chain: &RegionChain,
    m: usize,
    u: f64,
    rng: &mut dyn RngCore,
    labeled: bool,
    max_attempts: usize,
) -> Result<Vec<Draw>> {
    if m == 0 {
        return Err(Error::Input("requested sample size must be positive".into()));
    }
    if max_attempts < m {
        return Err(Error::Input(format!(
            "max_attempts ({max_attempts}) is smaller than the sample size ({m})"
        )));
    }
    let s = sample_conditional_partial(oracle, chain, m, u, rng, labeled, max_attempts);
    match s.error {
        Some(e) => Err(e),
        None => Ok(s.draws),
    }
}
