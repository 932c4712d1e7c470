//! Synthetic distributions with a known regression function.
//!
//! Points are generated in their native box and mapped affinely to
//! `[0,1]^d` before the engine sees them; `eta` is evaluated after mapping
//! back.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Candidate, Oracle};
use crate::error::{Error, Result};
use crate::model::{Dataset, LabeledPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// `X ~ U[-1,1]^2`, `eta = (1 + sin(pi x2 / 2)) / 2`.
    Sine,
    /// One-dimensional version of `Sine`: `X ~ U[-1,1]`,
    /// `eta = (1 + sin(pi (x - shift) / 2)) / 2`.
    Sine1d,
    /// Two clean slabs separated at `x1 = -0.3` plus a pure-noise band at `x1 ~ 0`.
    Dasgupta1,
    /// Deterministic labels for `x1 < 0`, a noisy wavy boundary for `x1 >= 0`.
    Easyhard2,
    /// Equal-weight Gaussian mixture with means `(-0.5, 0)` (label 0) and
    /// `(0.5, 0)` (label 1).
    Gauss3,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(Self::Sine),
            "sine1d" => Ok(Self::Sine1d),
            "dasgupta1" => Ok(Self::Dasgupta1),
            "easyhard2" => Ok(Self::Easyhard2),
            "gauss3" => Ok(Self::Gauss3),
            other => Err(Error::Config(format!("unknown synthetic dataset '{other}'"))),
        }
    }
}

const GAUSS_DEFAULT_SIGMA: f64 = 0.3;
const GAUSS_HALF_WIDTH: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    /// Component standard deviation, used by `Gauss3` only.
    pub sigma: f64,
    /// Native location of the decision boundary, used by `Sine1d` only.
    #[serde(default)]
    pub shift: f64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind) -> Self {
        Self {
            kind,
            sigma: GAUSS_DEFAULT_SIGMA,
            shift: 0.0,
        }
    }

    pub fn with_sigma(kind: SyntheticKind, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma, ..Self::new(kind) })
    }

    /// `Sine1d` with its boundary moved to native `x = shift`, i.e.
    /// `eta = (1 + sin(pi (x - shift) / 2)) / 2`.
    pub fn sine1d_shifted(shift: f64) -> Result<Self> {
        if !(-0.5..=0.5).contains(&shift) {
            return Err(Error::Config(format!("shift must lie in [-0.5, 0.5], got {shift}")));
        }
        Ok(Self {
            shift,
            ..Self::new(SyntheticKind::Sine1d)
        })
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SyntheticKind::Sine1d => 1,
            _ => 2,
        }
    }

    fn half_width(&self) -> f64 {
        match self.kind {
            SyntheticKind::Gauss3 => GAUSS_HALF_WIDTH,
            _ => 1.0,
        }
    }

    /// `[0,1]^d` -> native box.
    pub fn to_native(&self, x: &[f64]) -> Vec<f64> {
        let h = self.half_width();
        x.iter().map(|v| (2.0 * v - 1.0) * h).collect()
    }

    /// Native box -> `[0,1]^d`.
    pub fn to_unit(&self, z: &[f64]) -> Vec<f64> {
        let h = self.half_width();
        z.iter().map(|v| ((v / h + 1.0) / 2.0).clamp(0.0, 1.0)).collect()
    }

    /// Regression function in native coordinates.
    pub fn eta_native(&self, z: &[f64]) -> f64 {
        let eta = match self.kind {
            SyntheticKind::Sine => 0.5 * (1.0 + (PI * z[1] / 2.0).sin()),
            SyntheticKind::Sine1d => 0.5 * (1.0 + (PI * (z[0] - self.shift) / 2.0).sin()),
            SyntheticKind::Dasgupta1 => {
                if z[0].abs() <= 0.1 {
                    0.5
                } else if z[0] < -0.3 {
                    0.0
                } else {
                    1.0
                }
            }
            SyntheticKind::Easyhard2 => {
                if z[0] < 0.0 {
                    if z[1] > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    0.5 + (z[1] - 0.4 * (2.0 * PI * z[0]).sin())
                }
            }
            SyntheticKind::Gauss3 => {
                // posterior of the (0.5, 0) component; the quadratic terms in
                // x2 cancel, leaving a logistic function of x1
                let logit = z[0] / (self.sigma * self.sigma);
                1.0 / (1.0 + (-logit).exp())
            }
        };
        eta.clamp(0.0, 1.0)
    }

    /// Regression function on normalized coordinates.
    pub fn eta(&self, x: &[f64]) -> f64 {
        self.eta_native(&self.to_native(x))
    }

    /// Draws a point from the marginal, in native coordinates.
    pub fn draw_native(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        match self.kind {
            SyntheticKind::Sine | SyntheticKind::Easyhard2 => {
                vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]
            }
            SyntheticKind::Sine1d => vec![rng.random_range(-1.0..=1.0)],
            SyntheticKind::Dasgupta1 => {
                let x1 = if rng.random::<f64>() < 0.8 {
                    // uniform over [-1,-0.6] u [0.2,1], total length 1.2
                    let t = rng.random_range(0.0..1.2);
                    if t < 0.4 {
                        -1.0 + t
                    } else {
                        0.2 + (t - 0.4)
                    }
                } else {
                    rng.random_range(-0.1..=0.1)
                };
                vec![x1, rng.random_range(-1.0..=1.0)]
            }
            SyntheticKind::Gauss3 => {
                let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
                let mean = if rng.random::<bool>() { 0.5 } else { -0.5 };
                let h = GAUSS_HALF_WIDTH;
                vec![
                    (mean + normal.sample(rng)).clamp(-h, h),
                    normal.sample(rng).clamp(-h, h),
                ]
            }
        }
    }

    pub fn draw(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.to_unit(&self.draw_native(rng))
    }

    pub fn label(&self, x: &[f64], rng: &mut dyn RngCore) -> u8 {
        u8::from(rng.random::<f64>() < self.eta(x))
    }

    /// `n` i.i.d. labeled points on normalized coordinates.
    pub fn sample_dataset(&self, n: usize, rng: &mut dyn RngCore) -> Dataset {
        let mut ds = Dataset::new(self.dim());
        for _ in 0..n {
            let x = self.draw(rng);
            let y = self.label(&x, rng);
            ds.push(LabeledPoint { x, y }).expect("dimension fixed by spec");
        }
        ds
    }
}

/// Infinite-pool oracle: every draw is fresh from the marginal and labels
/// are Bernoulli(eta(x)).
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    spec: SyntheticSpec,
}

impl SyntheticOracle {
    pub fn new(spec: SyntheticSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }
}

impl Oracle for SyntheticOracle {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn draw(&mut self, rng: &mut dyn RngCore) -> Option<Candidate> {
        Some(Candidate {
            x: self.spec.draw(rng),
            index: None,
        })
    }

    fn label(&mut self, candidate: &Candidate, rng: &mut dyn RngCore) -> Result<u8> {
        Ok(self.spec.label(&candidate.x, rng))
    }

    fn eta_true(&self, x: &[f64]) -> Option<f64> {
        Some(self.spec.eta(x))
    }
}
