//! Rejection thresholds and the nested chain of uncertain regions.
//!
//! Stage `j` of a [`RegionChain`] pairs the score estimator `f_j` with a
//! threshold `lambda_{j+1}` and defines
//! `A_{j+1} = { x in A_j : f_j(x) + zeta <= lambda_{j+1} }`.
//! Thresholds are empirical quantiles of randomized scores drawn from the
//! previous region. A threshold of `None` marks an empty region.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{check_dim, score_of, EtaEstimator, EtaModel};

/// Width of the uniform score perturbation.
pub const DEFAULT_RANDOMIZATION: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationConfig {
    pub u: f64,
}

impl RandomizationConfig {
    pub fn new(u: f64) -> Result<Self> {
        if !(u >= 0.0 && u.is_finite()) {
            return Err(Error::Config(format!("randomization width must be >= 0, got {u}")));
        }
        Ok(Self { u })
    }
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            u: DEFAULT_RANDOMIZATION,
        }
    }
}

#[inline]
fn draw_zeta(u: f64, rng: &mut dyn RngCore) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u * rng.random::<f64>()
    }
}

/// Adds an independent `Uniform[0,u]` perturbation to every score, in order.
pub fn randomize_scores(scores: &[f64], u: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    scores.iter().map(|s| s + draw_zeta(u, rng)).collect()
}

/// Largest `t` among the values with empirical CDF `F(t) <= eps`: the
/// `floor(eps * M)`-th smallest value (1-indexed), or `None` when that rank
/// is zero.
pub fn empirical_quantile(values: &[f64], eps: f64) -> Result<Option<f64>> {
    if values.is_empty() {
        return Err(Error::Input("empirical quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Input(format!("quantile level {eps} outside [0,1]")));
    }
    let rank = crate::model::guarded_floor(eps * values.len() as f64).min(values.len());
    if rank == 0 {
        return Ok(None);
    }
    let mut buf = values.to_vec();
    let (_, nth, _) = buf.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(Some(*nth))
}

/// How the perturbation `zeta` is handled by a membership query.
pub enum Membership<'a> {
    /// `zeta = 0`; used for prediction and for recycling labeled points.
    Deterministic,
    /// Fresh `zeta ~ Uniform[0,u]` per stage.
    Sampling { u: f64, rng: &'a mut dyn RngCore },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub estimator: EtaModel,
    pub threshold: Option<f64>,
}

impl Stage {
    /// Whether a point with score perturbation `zeta` passes this stage.
    pub fn accepts(&self, x: &[f64], zeta: f64) -> bool {
        match self.threshold {
            None => false,
            Some(lambda) => score_of(self.estimator.eta_unchecked(x)) + zeta <= lambda,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionChain {
    dim: Option<usize>,
    stages: Vec<Stage>,
}

impl RegionChain {
    /// The chain with no stages: `A_0` is the whole space.
    pub fn new() -> Self {
        Self::default()
    }

    /// Chain with given stages; all estimators must share one dimension.
    pub fn from_stages(stages: Vec<Stage>) -> Result<Self> {
        let dim = stages.first().map(|s| s.estimator.dim());
        if stages.iter().any(|s| Some(s.estimator.dim()) != dim) {
            return Err(Error::Input("stage dimensions disagree".into()));
        }
        Ok(Self { dim, stages })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn thresholds(&self) -> Vec<Option<f64>> {
        self.stages.iter().map(|s| s.threshold).collect()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        match self.dim {
            Some(d) => check_dim(d, x),
            None => Ok(()),
        }
    }

    pub fn contains(&self, x: &[f64], mode: Membership<'_>) -> Result<bool> {
        self.check(x)?;
        Ok(match mode {
            Membership::Deterministic => self.stages.iter().all(|s| s.accepts(x, 0.0)),
            Membership::Sampling { u, rng } => self.stages.iter().all(|s| s.accepts(x, draw_zeta(u, rng))),
        })
    }

    /// Sampling-mode membership that reports the perturbations it drew.
    /// Returns `None` when `x` is rejected at some stage.
    pub fn contains_with_zetas(&self, x: &[f64], u: f64, rng: &mut dyn RngCore) -> Result<Option<Vec<f64>>> {
        self.check(x)?;
        let mut zetas = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            let z = draw_zeta(u, rng);
            if !s.accepts(x, z) {
                return Ok(None);
            }
            zetas.push(z);
        }
        Ok(Some(zetas))
    }

    /// First stage `j` at which `x` leaves the chain in deterministic mode,
    /// i.e. `x in A_j \ A_{j+1}`; `None` when `x` lies in the last region.
    pub fn exit_stage(&self, x: &[f64]) -> Result<Option<usize>> {
        self.check(x)?;
        Ok(self.stages.iter().position(|s| !s.accepts(x, 0.0)))
    }

    /// Scores `candidates` (drawn from the current last region) with
    /// `estimator`, perturbs them, and appends the stage whose threshold is
    /// the `eps` empirical quantile. Returns that threshold.
    pub fn extend(
        &mut self,
        estimator: EtaModel,
        candidates: &[Vec<f64>],
        eps: f64,
        u: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Option<f64>> {
        if candidates.is_empty() {
            return Err(Error::Input("no unlabeled points to estimate the threshold".into()));
        }
        if let Some(d) = self.dim {
            if estimator.dim() != d {
                return Err(Error::Input(format!(
                    "estimator dimension {} does not match chain dimension {d}",
                    estimator.dim()
                )));
            }
        }
        let scores = candidates
            .iter()
            .map(|x| estimator.score(x))
            .collect::<Result<Vec<f64>>>()?;
        let randomized = randomize_scores(&scores, u, rng);
        let threshold = empirical_quantile(&randomized, eps)?;
        self.dim = Some(estimator.dim());
        self.stages.push(Stage {
            estimator,
            threshold,
        });
        Ok(threshold)
    }

    /// Drops the last stage, if any.
    pub fn pop(&mut self) -> Option<Stage> {
        let s = self.stages.pop();
        if self.stages.is_empty() {
            self.dim = None;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{Learner, LinearEstimator};
    use crate::model::{Dataset, LabeledPoint};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(dim: usize) -> EtaModel {
        EtaModel::Linear(LinearEstimator::zero(dim))
    }

    /// Histogram whose cell `i` of `cells` stores `i / cells`, so eta(x) ~ x.
    fn eta_equals_x(cells: usize) -> EtaModel {
        let pts: Vec<LabeledPoint> = (0..cells)
            .flat_map(|i| {
                // i ones and (cells - i) zeros in cell i gives mean i / cells
                let x = (i as f64 + 0.5) / cells as f64;
                (0..cells).map(move |j| LabeledPoint::new(vec![x], u8::from(j < i)).unwrap())
            })
            .collect();
        let ds = Dataset::from_points(1, pts).unwrap();
        Learner::Histogram {
            cell_width: Some(1.0 / cells as f64),
            form: crate::estimators::HistogramForm::CountRatio,
        }
        .fit(&ds, 1, 1.0)
        .unwrap()
    }

    #[test]
    fn zero_width_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = vec![0.5, 0.7, 0.9];
        assert_eq!(randomize_scores(&s, 0.0, &mut rng), s);
    }

    #[test]
    fn perturbation_stays_in_support_and_breaks_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = randomize_scores(&vec![0.5; 1000], 1e-5, &mut rng);
        assert!(out.iter().all(|v| (0.5..=0.5 + 1e-5).contains(v)));
        let mut sorted = out.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        assert_eq!(sorted.len(), 1000);
    }

    #[test]
    fn quantile_examples() {
        let v = [0.9, 0.5, 0.7, 0.6, 0.8];
        assert_eq!(empirical_quantile(&v, 0.4).unwrap(), Some(0.6));
        assert_eq!(empirical_quantile(&v, 1.0).unwrap(), Some(0.9));
        assert_eq!(empirical_quantile(&v, 0.1).unwrap(), None);
        assert!(matches!(empirical_quantile(&[], 0.5), Err(Error::Input(_))));
        assert!(empirical_quantile(&v, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn quantile_matches_sort_oracle(
            values in prop::collection::vec(0.0f64..2.0, 1..200),
            eps in 0.0f64..=1.0,
        ) {
            let got = empirical_quantile(&values, eps).unwrap();
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let rank = (eps * values.len() as f64 + 1e-9).floor() as usize;
            let expected = if rank == 0 { None } else { Some(sorted[rank - 1]) };
            prop_assert_eq!(got, expected);
            if let Some(t) = got {
                let below = values.iter().filter(|&&v| v <= t).count();
                // ties can only add mass at t
                prop_assert!(below >= rank);
            }
        }
    }

    #[test]
    fn empty_chain_contains_everything() {
        let chain = RegionChain::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for x in [[0.0, 0.0], [0.3, 0.9], [1.0, 1.0]] {
            assert!(chain.contains(&x, Membership::Deterministic).unwrap());
            assert!(chain
                .contains(&x, Membership::Sampling { u: 1e-5, rng: &mut rng })
                .unwrap());
        }
    }

    fn single_stage(lambda: f64) -> RegionChain {
        RegionChain {
            dim: Some(1),
            stages: vec![Stage {
                estimator: eta_equals_x(100),
                threshold: Some(lambda),
            }],
        }
    }

    #[test]
    fn single_stage_membership() {
        let chain = single_stage(0.7);
        // cell 65 has eta = 0.65
        assert!(chain.contains(&[0.655], Membership::Deterministic).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert!(!chain
                .contains(&[0.715], Membership::Sampling { u: 1e-5, rng: &mut rng })
                .unwrap());
        }
        assert!(!chain.contains(&[0.715], Membership::Deterministic).unwrap());
        assert!(chain.contains(&[0.5, 0.5], Membership::Deterministic).is_err());
    }

    #[test]
    fn extend_with_constant_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let candidates: Vec<Vec<f64>> = (0..150).map(|i| vec![i as f64 / 150.0]).collect();
        let mut chain = RegionChain::new();
        let lambda = chain
            .extend(constant(1), &candidates, 0.95, 1e-5, &mut rng)
            .unwrap()
            .unwrap();

        // replay the same draws: lambda is the 142nd smallest perturbed score
        let mut replay = ChaCha8Rng::seed_from_u64(5);
        let mut perturbed = randomize_scores(&vec![0.5; 150], 1e-5, &mut replay);
        perturbed.sort_by(f64::total_cmp);
        assert_eq!(lambda, perturbed[141]);

        // fresh constant-score points land in the region with prob ~ 142/150
        let trials = 20_000;
        let inside = (0..trials)
            .filter(|_| {
                chain
                    .contains(&[0.3], Membership::Sampling { u: 1e-5, rng: &mut rng })
                    .unwrap()
            })
            .count();
        let p = inside as f64 / trials as f64;
        let target = (lambda - 0.5) / 1e-5;
        let se = (target * (1.0 - target) / trials as f64).sqrt();
        assert!((p - target).abs() < 4.0 * se, "{p} vs {target}");
        assert!((target - 0.95).abs() < 0.06);
    }

    #[test]
    fn extend_full_mass_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let est = eta_equals_x(10);
        let candidates: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 30.0]).collect();

        let mut chain = RegionChain::new();
        let lambda = chain.extend(est.clone(), &candidates, 1.0, 1e-5, &mut rng).unwrap();
        assert!(lambda.is_some());
        assert!(candidates
            .iter()
            .all(|x| chain.contains(x, Membership::Deterministic).unwrap()));

        let mut chain = RegionChain::new();
        let lambda = chain.extend(est, &candidates, 0.02, 1e-5, &mut rng).unwrap();
        assert_eq!(lambda, None);
        assert_eq!(chain.len(), 1);
        assert!(candidates
            .iter()
            .all(|x| !chain.contains(x, Membership::Deterministic).unwrap()));
        assert!(chain.extend(constant(1), &[], 0.5, 0.0, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn extension_only_shrinks_the_region(seed in 0u64..1000, eps1 in 0.05f64..1.0, eps2 in 0.05f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let candidates: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.random::<f64>()]).collect();
            let probe: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>()]).collect();
            let mut chain = RegionChain::new();
            chain.extend(eta_equals_x(7), &candidates, eps1, 1e-5, &mut rng).unwrap();
            let before: Vec<bool> = probe.iter().map(|x| chain.contains(x, Membership::Deterministic).unwrap()).collect();
            chain.extend(eta_equals_x(13), &candidates, eps2, 1e-5, &mut rng).unwrap();
            for (x, b) in probe.iter().zip(before) {
                let after = chain.contains(x, Membership::Deterministic).unwrap();
                prop_assert!(!after || b);
                // deterministic membership dominates sampling membership
                if chain.contains(x, Membership::Sampling { u: 1e-5, rng: &mut rng }).unwrap() {
                    prop_assert!(after);
                }
            }
        }
    }

    #[test]
    fn calibration_of_retention_fraction() {
        // eta(x) = x on a fine grid; the threshold comes from m = 150 points
        // and its true retention is measured on a large fresh sample
        let est = eta_equals_x(200);
        let m = 150;
        let eps = 0.6;
        let fresh_n = 20_000;
        let seeds = 200;
        let mut within = 0;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cands: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.random::<f64>()]).collect();
            let mut chain = RegionChain::new();
            chain.extend(est.clone(), &cands, eps, 1e-5, &mut rng).unwrap();
            let kept = (0..fresh_n)
                .filter(|_| {
                    let x = [rng.random::<f64>()];
                    chain.contains(&x, Membership::Sampling { u: 1e-5, rng: &mut rng }).unwrap()
                })
                .count();
            let hat = kept as f64 / fresh_n as f64;
            if (hat - eps).abs() <= 3.0 * (eps * (1.0 - eps) / m as f64).sqrt() {
                within += 1;
            }
        }
        assert!(within as f64 / seeds as f64 >= 0.99, "{within}/{seeds}");
    }
}
