//! Shared domain records: labeled points, datasets, the label budget and the
//! `(N_k, eps_k)` schedule that drives the active loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub y: u8,
}

impl LabeledPoint {
    pub fn new(x: Vec<f64>, y: u8) -> Result<Self> {
        if y > 1 {
            return Err(Error::Input(format!("label {y} is not in {{0,1}}")));
        }
        if x.is_empty() {
            return Err(Error::Input("feature vector is empty".into()));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("feature {i} is not finite")));
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    points: Vec<LabeledPoint>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
        }
    }

    pub fn from_points(dim: usize, points: Vec<LabeledPoint>) -> Result<Self> {
        let mut ds = Self::new(dim);
        for p in points {
            ds.push(p)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, p: LabeledPoint) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::Input(format!(
                "point has dimension {}, dataset has {}",
                p.dim(),
                self.dim
            )));
        }
        self.points.push(p);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledPoint> {
        self.points.iter()
    }
}

/// Label budget bookkeeping. `used` never exceeds `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetTracker {
    total: usize,
    used: usize,
}

impl BudgetTracker {
    pub fn new(total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::Config("label budget must be positive".into()));
        }
        Ok(Self { total, used: 0 })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn remaining(&self) -> usize {
        self.total - self.used
    }

    pub fn can_spend(&self, n: usize) -> bool {
        n <= self.remaining()
    }

    pub fn spend(&mut self, n: usize) -> Result<()> {
        if !self.can_spend(n) {
            return Err(Error::Input(format!(
                "spending {n} labels would exceed the budget ({} of {} used)",
                self.used, self.total
            )));
        }
        self.used += n;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    /// `eps_k = min(1, ln(N/delta) ln(N) N_{k-1}^{-1/(2+d)})`.
    Theoretical,
    /// `eps_k = c_eps^k`.
    Practical,
}

impl std::str::FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theoretical" => Ok(Self::Theoretical),
            "practical" => Ok(Self::Practical),
            other => Err(Error::Config(format!("unknown schedule mode '{other}'"))),
        }
    }
}

/// Floor that tolerates representation error, so that `1.2 * 140` floors to
/// 168 rather than 167.
pub(crate) fn guarded_floor(v: f64) -> usize {
    if v <= 0.0 {
        return 0;
    }
    let nearest = v.round();
    if (v - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        v.floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub mode: ScheduleMode,
    pub n0: usize,
    pub c_n: f64,
    pub c_eps: f64,
    pub delta: f64,
    pub d: usize,
    pub budget: usize,
}

impl Schedule {
    /// Builds a schedule with `N_0 = n0_multiplier * floor(sqrt(N))`, capped at `N`.
    /// Only the constants relevant to `mode` are validated.
    pub fn new(
        budget: usize,
        mode: ScheduleMode,
        c_n: f64,
        c_eps: f64,
        delta: f64,
        d: usize,
        n0_multiplier: usize,
    ) -> Result<Self> {
        if budget < 4 {
            return Err(Error::Config(format!("budget {budget} is below the minimum of 4")));
        }
        if !(c_n > 1.0) || !c_n.is_finite() {
            return Err(Error::Config(format!("c_N must exceed 1, got {c_n}")));
        }
        if d == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if n0_multiplier == 0 {
            return Err(Error::Config("N0 multiplier must be positive".into()));
        }
        match mode {
            ScheduleMode::Practical if !(c_eps > 0.0 && c_eps < 1.0) => {
                return Err(Error::Config(format!("c_eps must lie in (0,1), got {c_eps}")));
            }
            ScheduleMode::Theoretical if !(delta > 0.0 && delta < 0.5) => {
                return Err(Error::Config(format!("delta must lie in (0,1/2), got {delta}")));
            }
            _ => {}
        }
        let n0 = (n0_multiplier * isqrt(budget)).min(budget);
        Ok(Self {
            mode,
            n0,
            c_n,
            c_eps,
            delta,
            d,
            budget,
        })
    }

    pub fn eps0(&self) -> f64 {
        1.0
    }

    /// Returns `(N_k, eps_k)` for step `k >= 1` given `N_{k-1}`.
    pub fn step(&self, k: usize, n_prev: usize) -> (usize, f64) {
        debug_assert!(k >= 1);
        let n_k = guarded_floor(self.c_n * n_prev as f64);
        let eps = match self.mode {
            ScheduleMode::Practical => self.c_eps.powi(k as i32),
            ScheduleMode::Theoretical => {
                let n = self.budget as f64;
                let raw = (n / self.delta).ln()
                    * n.ln()
                    * (n_prev.max(1) as f64).powf(-1.0 / (2.0 + self.d as f64));
                raw.min(1.0)
            }
        };
        (n_k, eps)
    }

    /// Number of labels requested at a step: `floor(N_k * eps_k)`.
    pub fn labels_for(n_k: usize, eps_k: f64) -> usize {
        guarded_floor(n_k as f64 * eps_k)
    }
}

fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}
