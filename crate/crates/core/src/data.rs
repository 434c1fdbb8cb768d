//! Core data model: feature matrices, simulator parameter tables, unsafe-value
//! specs and the run configuration.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("matrix has no rows or no columns")]
    EmptyMatrix,
    #[error("row {row} has {found} values, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("{ids} ids for {rows} rows")]
    IdCountMismatch { ids: usize, rows: usize },
    #[error("{labels} labels for {rows} rows")]
    LabelCountMismatch { labels: usize, rows: usize },
    #[error("id `{id}` has no value for parameter `{param}`")]
    MissingParameter { id: String, param: String },
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("malformed rule for `{param}`: {reason}")]
    MalformedRule { param: String, reason: &'static str },
}

/// The n x m matrix of feature activations, one row per image id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
    cols: usize,
    labels: Option<Vec<String>>,
}

impl FeatureMatrix {
    pub fn new(
        ids: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(DataError::RaggedRow {
                    row,
                    expected: cols,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::from_flat(ids, values, cols, labels)
    }

    /// Builds a matrix from row-major values.
    pub fn from_flat(
        ids: Vec<String>,
        values: Vec<f64>,
        cols: usize,
        labels: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        if cols == 0 || values.is_empty() {
            return Err(DataError::EmptyMatrix);
        }
        if !values.len().is_multiple_of(cols) {
            return Err(DataError::RaggedRow {
                row: values.len() / cols,
                expected: cols,
                found: values.len() % cols,
            });
        }
        let rows = values.len() / cols;
        if ids.len() != rows {
            return Err(DataError::IdCountMismatch {
                ids: ids.len(),
                rows,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteValue {
                row: pos / cols,
                col: pos % cols,
            });
        }
        check_unique(&ids)?;
        if let Some(l) = &labels {
            if l.len() != rows {
                return Err(DataError::LabelCountMismatch {
                    labels: l.len(),
                    rows,
                });
            }
        }
        Ok(Self {
            ids,
            values,
            cols,
            labels,
        })
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Number of distinct labels, when labels are present.
    pub fn category_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().collect::<BTreeSet<_>>().len())
    }

    /// A new matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, DataError> {
        let ids = rows.iter().map(|&r| self.ids[r].clone()).collect();
        let mut values = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r].clone()).collect());
        Self::from_flat(ids, values, self.cols, labels)
    }
}

fn check_unique(ids: &[String]) -> Result<(), DataError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(DataError::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

/// Simulator parameters per image id (degrees, pixels or unitless).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterTable {
    names: Vec<String>,
    ids: Vec<String>,
    values: Vec<f64>,
    index: BTreeMap<String, usize>,
}

impl ParameterTable {
    /// `rows[i][j]` is the value of parameter `names[j]` for `ids[i]`; a `None`
    /// cell is rejected.
    pub fn new(
        names: Vec<String>,
        ids: Vec<String>,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, DataError> {
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(DataError::DuplicateParameter(n.clone()));
            }
        }
        if ids.len() != rows.len() {
            return Err(DataError::IdCountMismatch {
                ids: ids.len(),
                rows: rows.len(),
            });
        }
        check_unique(&ids)?;
        let mut values = Vec::with_capacity(ids.len() * names.len());
        for (row, (id, cells)) in ids.iter().zip(&rows).enumerate() {
            if cells.len() != names.len() {
                return Err(DataError::RaggedRow {
                    row,
                    expected: names.len(),
                    found: cells.len(),
                });
            }
            for (col, (cell, name)) in cells.iter().zip(&names).enumerate() {
                match cell {
                    None => {
                        return Err(DataError::MissingParameter {
                            id: id.clone(),
                            param: name.clone(),
                        })
                    }
                    Some(v) if !v.is_finite() => {
                        return Err(DataError::NonFiniteValue { row, col })
                    }
                    Some(v) => values.push(*v),
                }
            }
        }
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(Self {
            names,
            ids,
            values,
            index,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// All parameter values for `id`, in [`names`](Self::names) order.
    pub fn row(&self, id: &str) -> Option<&[f64]> {
        let k = self.names.len();
        self.index
            .get(id)
            .map(|&i| &self.values[i * k..(i + 1) * k])
    }

    pub fn get(&self, id: &str, param: &str) -> Option<f64> {
        let p = self.param_index(param)?;
        self.row(id).map(|r| r[p])
    }
}

/// How a cluster mean is judged close to an unsafe value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClosenessRule {
    /// Close when `|mean - value| <= fraction * len`, where `len` is the length
    /// of the subrange (between consecutive boundaries) holding the mean.
    SubrangeFraction {
        boundaries: Vec<f64>,
        #[serde(default = "default_fraction")]
        fraction: f64,
    },
    /// Close when `mean <= value`.
    AtMost,
}

fn default_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsafeEntry {
    pub param: String,
    pub unsafe_values: Vec<f64>,
    pub rule: ClosenessRule,
}

impl UnsafeEntry {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |reason| DataError::MalformedRule {
            param: self.param.clone(),
            reason,
        };
        if self.unsafe_values.is_empty() {
            return Err(bad("no unsafe values"));
        }
        if self.unsafe_values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite unsafe value"));
        }
        if let ClosenessRule::SubrangeFraction {
            boundaries,
            fraction,
        } = &self.rule
        {
            if boundaries.len() < 2 {
                return Err(bad("fewer than two boundaries"));
            }
            if boundaries.iter().any(|b| !b.is_finite()) {
                return Err(bad("non-finite boundary"));
            }
            if boundaries.windows(2).any(|w| w[0] >= w[1]) {
                return Err(bad("boundaries not strictly ascending"));
            }
            if !(*fraction > 0.0 && *fraction <= 1.0) {
                return Err(bad("fraction outside (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Unsafe parameters and their unsafe values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UnsafeValueSpec {
    entries: Vec<UnsafeEntry>,
}

impl UnsafeValueSpec {
    pub fn new(entries: Vec<UnsafeEntry>) -> Result<Self, DataError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            e.validate()?;
            if !seen.insert(e.param.as_str()) {
                return Err(DataError::DuplicateParameter(e.param.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[UnsafeEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every `(param, unsafe value)` pair, in declaration order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries
            .iter()
            .flat_map(|e| e.unsafe_values.iter().map(move |v| (e.param.as_str(), *v)))
    }
}

/// Inclusive range of `min_pts` values to try.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinPtsSweep {
    pub lo: usize,
    pub hi: usize,
}

impl MinPtsSweep {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub target_dim: usize,
    pub k_neighbors: usize,
    pub minpts_sweep: MinPtsSweep,
    pub selection_factor: f64,
    pub rr_threshold: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            target_dim: 256,
            k_neighbors: 4,
            minpts_sweep: MinPtsSweep { lo: 3, hi: 20 },
            selection_factor: 0.3,
            rr_threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("target_dim must be at least 1")]
    TargetDim,
    #[error("k_neighbors must be at least 1")]
    KNeighbors,
    #[error("min_pts sweep {lo}..={hi} is invalid (need 2 <= lo <= hi)")]
    Sweep { lo: usize, hi: usize },
    #[error("selection factor {0} outside [0, 1]")]
    SelectionFactor(f64),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.target_dim == 0 {
            return Err(ConfigError::TargetDim);
        }
        if self.k_neighbors == 0 {
            return Err(ConfigError::KNeighbors);
        }
        let MinPtsSweep { lo, hi } = self.minpts_sweep;
        if lo < 2 || lo > hi {
            return Err(ConfigError::Sweep { lo, hi });
        }
        if !(0.0..=1.0).contains(&self.selection_factor) {
            return Err(ConfigError::SelectionFactor(self.selection_factor));
        }
        Ok(())
    }
}
