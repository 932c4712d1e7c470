use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Candidate, Oracle, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{Dataset, LabeledPoint};

const NONE: usize = usize::MAX;

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    Last,
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Finite pool of labeled points. Labels are revealed at most once; points
/// held out for testing are never drawn.
#[derive(Debug, Clone)]
pub struct PoolOracle {
    data: Dataset,
    available: Vec<usize>,
    /// Position of each point inside `available`, `NONE` when absent.
    slot: Vec<usize>,
    labeled: Vec<bool>,
    /// Per-column `(min, max)` used for min-max normalization.
    bounds: Option<Vec<(f64, f64)>>,
    truth: Option<SyntheticSpec>,
}

impl PoolOracle {
    /// `truth`, when given, supplies the regression function of a pool that
    /// was generated synthetically.
    pub fn new(data: Dataset, truth: Option<SyntheticSpec>) -> Self {
        let n = data.len();
        Self {
            data,
            available: (0..n).collect(),
            slot: (0..n).collect(),
            labeled: vec![false; n],
            bounds: None,
            truth,
        }
    }

    /// Pool of `size` points drawn from a synthetic distribution.
    pub fn from_synthetic(spec: SyntheticSpec, size: usize, rng: &mut dyn RngCore) -> Self {
        Self::new(spec.sample_dataset(size, rng), Some(spec))
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn bounds(&self) -> Option<&[(f64, f64)]> {
        self.bounds.as_deref()
    }

    pub fn remaining(&self) -> usize {
        self.available.len()
    }

    pub fn is_labeled(&self, index: usize) -> bool {
        self.labeled[index]
    }

    /// Removes `round(frac * n)` randomly chosen points from the pool and
    /// returns them as a held-out test set. Call before any labeling.
    pub fn split_holdout(&mut self, frac: f64, rng: &mut dyn RngCore) -> Result<Dataset> {
        if !(0.0..1.0).contains(&frac) {
            return Err(Error::Config(format!("held-out fraction must lie in [0,1), got {frac}")));
        }
        let n_test = (frac * self.available.len() as f64).round() as usize;
        let mut test = Dataset::new(self.data.dim());
        for _ in 0..n_test {
            let idx = self.available[rng.random_range(0..self.available.len())];
            self.remove_available(idx);
            test.push(self.data.points()[idx].clone())?;
        }
        Ok(test)
    }

    fn remove_available(&mut self, idx: usize) {
        let pos = self.slot[idx];
        let last = *self.available.last().expect("idx is available");
        self.available.swap_remove(pos);
        if last != idx {
            self.slot[last] = pos;
        }
        self.slot[idx] = NONE;
    }
}

impl Oracle for PoolOracle {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn draw(&mut self, rng: &mut dyn RngCore) -> Option<Candidate> {
        if self.available.is_empty() {
            return None;
        }
        let idx = self.available[rng.random_range(0..self.available.len())];
        Some(Candidate {
            x: self.data.points()[idx].x.clone(),
            index: Some(idx),
        })
    }

    fn label(&mut self, candidate: &Candidate, _rng: &mut dyn RngCore) -> Result<u8> {
        let idx = candidate
            .index
            .ok_or_else(|| Error::Input("pool labels need a pool index".into()))?;
        if idx >= self.labeled.len() {
            return Err(Error::Input(format!("pool index {idx} out of range")));
        }
        if self.labeled[idx] {
            return Err(Error::Input(format!("pool point {idx} was already labeled")));
        }
        if self.slot[idx] == NONE {
            return Err(Error::Input(format!("pool point {idx} is not available")));
        }
        self.remove_available(idx);
        self.labeled[idx] = true;
        Ok(self.data.points()[idx].y)
    }

    fn eta_true(&self, x: &[f64]) -> Option<f64> {
        self.truth.map(|s| s.eta(x))
    }

    fn remaining_points(&self) -> Option<usize> {
        Some(self.available.len())
    }
}

fn parse_label(raw: &str, row: usize) -> Result<u8> {
    match raw.trim().parse::<f64>() {
        Ok(0.0) => Ok(0),
        Ok(1.0) => Ok(1),
        _ => Err(Error::Load {
            row,
            message: format!("label '{}' is not 0 or 1", raw.trim()),
        }),
    }
}

/// Loads a numeric CSV file into a pool. A first row that does not parse as
/// numbers is treated as a header. With `normalize`, every feature column is
/// min-max scaled to `[0,1]`; constant columns map to 0.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn, normalize: bool) -> Result<PoolOracle> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Load {
            row: i + 1,
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(Error::Load {
            row: 0,
            message: "file contains no rows".into(),
        });
    }

    let header = if records[0].1.iter().any(|f| f.parse::<f64>().is_err()) {
        let (_, h) = records.remove(0);
        Some(h.iter().map(str::to_string).collect::<Vec<_>>())
    } else {
        None
    };
    let width = header
        .as_ref()
        .map(Vec::len)
        .or_else(|| records.first().map(|(_, r)| r.len()))
        .unwrap_or(0);
    if records.is_empty() {
        return Err(Error::Load {
            row: 1,
            message: "file has a header but no data rows".into(),
        });
    }
    if width < 2 {
        return Err(Error::Load {
            row: records[0].0,
            message: "need at least one feature column and one label column".into(),
        });
    }

    let label_idx = match label_column {
        LabelColumn::Last => width - 1,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(Error::Config(format!("label column {i} out of range (width {width})")))
        }
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::Config(format!("no column named '{name}'")))?,
    };

    let d = width - 1;
    let mut xs = Vec::with_capacity(records.len());
    let mut ys = Vec::with_capacity(records.len());
    for (row, rec) in &records {
        if rec.len() != width {
            return Err(Error::Load {
                row: *row,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let mut x = Vec::with_capacity(d);
        for (j, field) in rec.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Load {
                row: *row,
                message: format!("field {} ('{field}') is not numeric", j + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Load {
                    row: *row,
                    message: format!("field {} is not finite", j + 1),
                });
            }
            x.push(v);
        }
        ys.push(parse_label(&rec[label_idx], *row)?);
        xs.push(x);
    }

    let mut bounds = None;
    if normalize {
        let mut b: Vec<(f64, f64)> = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        for x in &xs {
            for (bj, v) in b.iter_mut().zip(x) {
                bj.0 = bj.0.min(*v);
                bj.1 = bj.1.max(*v);
            }
        }
        for x in xs.iter_mut() {
            for (v, (lo, hi)) in x.iter_mut().zip(&b) {
                *v = if hi > lo { ((*v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
            }
        }
        bounds = Some(b);
    }

    let points = xs
        .into_iter()
        .zip(ys)
        .map(|(x, y)| LabeledPoint { x, y })
        .collect();
    let mut pool = PoolOracle::new(Dataset::from_points(d, points)?, None);
    pool.bounds = bounds;
    Ok(pool)
}
