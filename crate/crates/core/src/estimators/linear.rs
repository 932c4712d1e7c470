use serde::{Deserialize, Serialize};

use super::EtaEstimator;
use crate::error::{Error, Result};
use crate::model::Dataset;

pub(crate) const DEFAULT_STEPS: usize = 500;
pub(crate) const DEFAULT_LEARNING_RATE: f64 = 0.5;

/// Logistic model `eta(x) = sigmoid(w.x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEstimator {
    weights: Vec<f64>,
    intercept: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss and its gradient `(loss, dL/dw, dL/db)`.
pub fn logistic_loss_grad(weights: &[f64], intercept: f64, xs: &[Vec<f64>], ys: &[u8]) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        let y = f64::from(y);
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
        gb += r;
    }
    gw.iter_mut().for_each(|g| *g /= n);
    (loss / n, gw, gb / n)
}

impl LinearEstimator {
    pub fn zero(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            intercept: 0.0,
        }
    }

    /// Full-batch gradient descent on the mean logistic loss from the zero
    /// model. Features are z-scored internally for conditioning and the
    /// result is mapped back to the original coordinates.
    pub fn fit(samples: &Dataset, steps: usize, learning_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("cannot fit a linear model on an empty sample".into()));
        }
        let d = samples.dim();
        let n = samples.len() as f64;
        let mut mean = vec![0.0; d];
        for p in samples.iter() {
            for (m, v) in mean.iter_mut().zip(&p.x) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for p in samples.iter() {
            for ((s, v), m) in scale.iter_mut().zip(&p.x).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in scale.iter_mut() {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        let xs: Vec<Vec<f64>> = samples
            .iter()
            .map(|p| {
                p.x.iter()
                    .zip(&mean)
                    .zip(&scale)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect();
        let ys: Vec<u8> = samples.iter().map(|p| p.y).collect();

        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for _ in 0..steps {
            let (loss, gw, gb) = logistic_loss_grad(&w, b, &xs, &ys);
            if !loss.is_finite() {
                return Err(Error::Numeric("logistic loss became non-finite".into()));
            }
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= learning_rate * g;
            }
            b -= learning_rate * gb;
        }

        let weights: Vec<f64> = w.iter().zip(&scale).map(|(wi, s)| wi / s).collect();
        let intercept = b - weights.iter().zip(&mean).map(|(wi, m)| wi * m).sum::<f64>();
        if !intercept.is_finite() || weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("linear model has non-finite parameters".into()));
        }
        Ok(Self { weights, intercept })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }
}

impl EtaEstimator for LinearEstimator {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn eta_unchecked(&self, x: &[f64]) -> f64 {
        let z = self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        sigmoid(z)
    }
}
