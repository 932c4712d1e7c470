use serde::{Deserialize, Serialize};

use super::EtaEstimator;
use crate::error::{Error, Result};
use crate::model::Dataset;

/// k-nearest-neighbour probability estimate: the fraction of label-1 points
/// among the `k` closest training points (Euclidean, ties go to the lower
/// training index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnEstimator {
    k: usize,
    dim: usize,
    xs: Vec<Vec<f64>>,
    ys: Vec<u8>,
}

impl KnnEstimator {
    /// `k` is reduced to the training-set size when the sample is smaller.
    pub fn fit(samples: &Dataset, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k-NN needs k >= 1".into()));
        }
        if samples.is_empty() {
            return Err(Error::Input("cannot fit k-NN on an empty sample".into()));
        }
        Ok(Self {
            k: k.min(samples.len()),
            dim: samples.dim(),
            xs: samples.iter().map(|p| p.x.clone()).collect(),
            ys: samples.iter().map(|p| p.y).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn training_len(&self) -> usize {
        self.xs.len()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

impl EtaEstimator for KnnEstimator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eta_unchecked(&self, x: &[f64]) -> f64 {
        let mut dists: Vec<(f64, usize)> = self
            .xs
            .iter()
            .enumerate()
            .map(|(i, t)| (sq_dist(t, x), i))
            .collect();
        let by_dist_then_index =
            |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dists.len() {
            dists.select_nth_unstable_by(self.k - 1, by_dist_then_index);
        }
        let ones: usize = dists[..self.k]
            .iter()
            .map(|&(_, i)| usize::from(self.ys[i]))
            .sum();
        ones as f64 / self.k as f64
    }
}
