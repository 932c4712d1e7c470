use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{check_dim, EtaEstimator};
use crate::error::{Error, Result};
use crate::model::Dataset;

/// Integer cell coordinates on the cubic partition of `[0,1]^d`.
pub type CellIndex = Vec<u32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramForm {
    /// Per-cell mean label.
    CountRatio,
    /// `(Pi(A) / Pi(R)) * (1/N_A) * sum_j Y_j 1{X_j in R}`, which needs the
    /// marginal mass of every cell.
    ExactMarginal,
}

impl std::str::FromStr for HistogramForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count_ratio" | "count-ratio" => Ok(Self::CountRatio),
            "exact_marginal" | "exact-marginal" => Ok(Self::ExactMarginal),
            other => Err(Error::Config(format!("unknown histogram form '{other}'"))),
        }
    }
}

/// Marginal distributions whose cell masses are known in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marginal {
    Uniform,
}

/// `r = n^{-1/(d+2)}`.
pub(crate) fn width_rule(n: usize, d: usize) -> f64 {
    (n as f64).powf(-1.0 / (d as f64 + 2.0)).min(1.0)
}

/// Histogram rule on the cubic partition with edge `cell_width`. Cells that
/// received no sample predict 1/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramEstimator {
    cell_width: f64,
    dim: usize,
    cells_per_axis: u32,
    form: HistogramForm,
    region_mass: f64,
    #[serde(serialize_with = "ser_cells", deserialize_with = "de_cells")]
    cells: HashMap<CellIndex, f64>,
}

fn ser_cells<S: Serializer>(cells: &HashMap<CellIndex, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut sorted: Vec<(&CellIndex, &f64)> = cells.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    sorted.serialize(s)
}

fn de_cells<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<HashMap<CellIndex, f64>, D::Error> {
    let pairs: Vec<(CellIndex, f64)> = Vec::deserialize(d)?;
    Ok(pairs.into_iter().collect())
}

fn cells_per_axis(r: f64) -> u32 {
    let inv = 1.0 / r;
    let nearest = inv.round();
    if (inv - nearest).abs() < 1e-9 {
        nearest as u32
    } else {
        inv.ceil() as u32
    }
}

impl HistogramEstimator {
    pub fn fit(
        samples: &Dataset,
        cell_width: f64,
        form: HistogramForm,
        region_mass: f64,
        marginal: Marginal,
    ) -> Result<Self> {
        if !(cell_width > 0.0 && cell_width <= 1.0) {
            return Err(Error::Config(format!(
                "histogram cell width must lie in (0,1], got {cell_width}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::Input("cannot fit a histogram on an empty sample".into()));
        }
        if form == HistogramForm::ExactMarginal && !(region_mass > 0.0 && region_mass <= 1.0) {
            return Err(Error::Config(format!(
                "region mass must lie in (0,1], got {region_mass}"
            )));
        }
        let mut est = Self {
            cell_width,
            dim: samples.dim(),
            cells_per_axis: cells_per_axis(cell_width),
            form,
            region_mass,
            cells: HashMap::new(),
        };

        let mut sums: HashMap<CellIndex, (u64, u64)> = HashMap::new();
        for p in samples.iter() {
            let e = sums.entry(est.cell_index(&p.x)).or_insert((0, 0));
            e.0 += u64::from(p.y);
            e.1 += 1;
        }
        let n_a = samples.len() as f64;
        for (cell, (ones, count)) in sums {
            let value = match form {
                HistogramForm::CountRatio => ones as f64 / count as f64,
                HistogramForm::ExactMarginal => {
                    let Marginal::Uniform = marginal;
                    let cell_mass = est.uniform_cell_mass(&cell);
                    (region_mass / cell_mass) * (ones as f64 / n_a)
                }
            };
            est.cells.insert(cell, value.clamp(0.0, 1.0));
        }
        Ok(est)
    }

    /// `floor(x_i / r)` per coordinate, with the upper boundary folded into
    /// the last cell.
    pub fn cell_index(&self, x: &[f64]) -> CellIndex {
        let last = self.cells_per_axis - 1;
        x.iter()
            .map(|&v| {
                let i = (v / self.cell_width).floor();
                if i <= 0.0 {
                    0
                } else {
                    (i as u64).min(u64::from(last)) as u32
                }
            })
            .collect()
    }

    /// Uniform-marginal mass of a cell; the last cell on each axis may be
    /// truncated at 1.
    fn uniform_cell_mass(&self, cell: &[u32]) -> f64 {
        cell.iter()
            .map(|&i| {
                let lo = f64::from(i) * self.cell_width;
                let hi = if i + 1 == self.cells_per_axis {
                    1.0
                } else {
                    (lo + self.cell_width).min(1.0)
                };
                hi - lo
            })
            .product()
    }

    pub fn cell_value(&self, cell: &[u32]) -> Option<f64> {
        self.cells.get(cell).copied()
    }

    pub fn populated_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    pub fn cells_per_axis(&self) -> u32 {
        self.cells_per_axis
    }

    pub fn form(&self) -> HistogramForm {
        self.form
    }
}

impl EtaEstimator for HistogramEstimator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eta_unchecked(&self, x: &[f64]) -> f64 {
        self.cells.get(&self.cell_index(x)).copied().unwrap_or(0.5)
    }

    fn predict_eta(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x)?;
        Ok(self.eta_unchecked(x))
    }
}
