//! Scoring clusters against simulator parameters.
//!
//! A cluster that captures a failure cause should show much less spread in
//! some parameter than the whole error-inducing set does, and the cluster mean
//! of that parameter should sit near a value known to be unsafe.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::RootCauseClusterSet;
use crate::data::{ClosenessRule, ParameterTable, UnsafeValueSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootCauseError {
    #[error("id `{0}` is not in the parameter table")]
    MissingParameter(String),
    #[error("unsafe parameter `{0}` is not in the variance report")]
    UnknownParameter(String),
    #[error("error set is empty")]
    EmptyErrorSet,
}

/// Default thresholds for [`reduction_histogram`]: 0%, 10%, ..., 90%.
pub const DEFAULT_THRESHOLDS: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVariance {
    pub param: String,
    /// `1 - cluster_variance / global_variance`; 0 when the global variance is 0.
    pub rr: f64,
    pub cluster_mean: f64,
    pub cluster_variance: f64,
    pub global_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterVariance {
    pub cluster_id: usize,
    pub size: usize,
    /// A single-member cluster reduces every variance trivially.
    pub singleton: bool,
    pub params: Vec<ParamVariance>,
}

impl ClusterVariance {
    pub fn best_rr(&self) -> Option<f64> {
        self.params.iter().map(|p| p.rr).reduce(f64::max)
    }

    pub fn param(&self, name: &str) -> Option<&ParamVariance> {
        self.params.iter().find(|p| p.param == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub params: Vec<String>,
    pub error_set_size: usize,
    pub clusters: Vec<ClusterVariance>,
}

/// Population mean and variance, two-pass.
fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn column<'a>(
    table: &ParameterTable,
    ids: impl Iterator<Item = &'a String>,
    p: usize,
) -> Result<Vec<f64>, RootCauseError> {
    ids.map(|id| {
        table
            .row(id)
            .map(|r| r[p])
            .ok_or_else(|| RootCauseError::MissingParameter(id.clone()))
    })
    .collect()
}

/// Variance-reduction rate of every table parameter in every cluster, relative
/// to the variance over `error_set_ids`. Population variance on both sides.
pub fn variance_reduction(
    clusters: &RootCauseClusterSet,
    table: &ParameterTable,
    error_set_ids: &[String],
) -> Result<VarianceReport, RootCauseError> {
    if error_set_ids.is_empty() {
        return Err(RootCauseError::EmptyErrorSet);
    }
    let names = table.names().to_vec();
    let mut global = Vec::with_capacity(names.len());
    for p in 0..names.len() {
        global.push(mean_var(&column(table, error_set_ids.iter(), p)?).1);
    }
    let mut out = Vec::with_capacity(clusters.len());
    for c in &clusters.clusters {
        let mut params = Vec::with_capacity(names.len());
        for (p, name) in names.iter().enumerate() {
            let (cluster_mean, cluster_variance) = if c.member_ids.is_empty() {
                (f64::NAN, 0.0)
            } else {
                mean_var(&column(table, c.member_ids.iter(), p)?)
            };
            let global_variance = global[p];
            let rr = if global_variance > 0.0 {
                1.0 - cluster_variance / global_variance
            } else {
                0.0
            };
            params.push(ParamVariance {
                param: name.clone(),
                rr,
                cluster_mean,
                cluster_variance,
                global_variance,
            });
        }
        out.push(ClusterVariance {
            cluster_id: c.id,
            size: c.member_ids.len(),
            singleton: c.member_ids.len() == 1,
            params,
        });
    }
    Ok(VarianceReport {
        params: names,
        error_set_size: error_set_ids.len(),
        clusters: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub threshold: f64,
    /// Percentage of clusters with at least one parameter whose rr exceeds
    /// `threshold`.
    pub percent: f64,
}

pub fn reduction_histogram(report: &VarianceReport, thresholds: &[f64]) -> Vec<HistogramBin> {
    let total = report.clusters.len();
    thresholds
        .iter()
        .map(|&t| {
            let hits = report
                .clusters
                .iter()
                .filter(|c| c.params.iter().any(|p| p.rr > t))
                .count();
            HistogramBin {
                threshold: t,
                percent: if total == 0 {
                    0.0
                } else {
                    100.0 * hits as f64 / total as f64
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub param: String,
    pub unsafe_value: f64,
    pub cluster_mean: f64,
    pub rr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterVerdict {
    pub cluster_id: usize,
    pub explanatory: bool,
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanatoryVerdict {
    pub rr_threshold: f64,
    pub clusters: Vec<ClusterVerdict>,
}

impl ExplanatoryVerdict {
    pub fn explanatory_count(&self) -> usize {
        self.clusters.iter().filter(|c| c.explanatory).count()
    }

    /// Percentage of clusters that are explanatory; 0 with no clusters.
    pub fn explanatory_percent(&self) -> f64 {
        if self.clusters.is_empty() {
            0.0
        } else {
            100.0 * self.explanatory_count() as f64 / self.clusters.len() as f64
        }
    }
}

/// Length of the subrange `[b_j, b_{j+1})` holding `mean`. The last subrange is
/// closed on the right; means outside the domain use the nearest end subrange.
pub fn subrange_length(boundaries: &[f64], mean: f64) -> f64 {
    let k = boundaries.len();
    debug_assert!(k >= 2);
    let j = boundaries[1..k - 1]
        .iter()
        .take_while(|b| mean >= **b)
        .count();
    boundaries[j + 1] - boundaries[j]
}

/// Whether `mean` counts as close to `value` under `rule`.
pub fn is_close(rule: &ClosenessRule, mean: f64, value: f64) -> bool {
    match rule {
        ClosenessRule::SubrangeFraction {
            boundaries,
            fraction,
        } => (mean - value).abs() <= fraction * subrange_length(boundaries, mean),
        ClosenessRule::AtMost => mean <= value,
    }
}

/// A `(cluster, param, value)` is a witness when the parameter's rr exceeds
/// `rr_threshold` and the cluster mean is close to the unsafe value.
pub fn explanatory_clusters(
    report: &VarianceReport,
    spec: &UnsafeValueSpec,
    rr_threshold: f64,
) -> Result<ExplanatoryVerdict, RootCauseError> {
    for e in spec.entries() {
        if !report.params.contains(&e.param) {
            return Err(RootCauseError::UnknownParameter(e.param.clone()));
        }
    }
    let clusters = report
        .clusters
        .iter()
        .map(|c| {
            let mut witnesses = Vec::new();
            for e in spec.entries() {
                let Some(pv) = c.param(&e.param) else {
                    continue;
                };
                if !(pv.rr > rr_threshold) {
                    continue;
                }
                for &v in &e.unsafe_values {
                    if is_close(&e.rule, pv.cluster_mean, v) {
                        witnesses.push(Witness {
                            param: e.param.clone(),
                            unsafe_value: v,
                            cluster_mean: pv.cluster_mean,
                            rr: pv.rr,
                        });
                    }
                }
            }
            ClusterVerdict {
                cluster_id: c.cluster_id,
                explanatory: !witnesses.is_empty(),
                witnesses,
            }
        })
        .collect();
    Ok(ExplanatoryVerdict {
        rr_threshold,
        clusters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageItem {
    pub param: String,
    pub unsafe_value: f64,
    pub covered: bool,
    /// Clusters witnessing this value.
    pub clusters: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub items: Vec<CoverageItem>,
    pub coverage_count: usize,
    pub total: usize,
}

pub fn unsafe_value_coverage(verdict: &ExplanatoryVerdict, spec: &UnsafeValueSpec) -> CoverageReport {
    let items: Vec<CoverageItem> = spec
        .pairs()
        .map(|(param, value)| {
            let clusters: Vec<usize> = verdict
                .clusters
                .iter()
                .filter(|c| {
                    c.witnesses
                        .iter()
                        .any(|w| w.param == param && w.unsafe_value == value)
                })
                .map(|c| c.cluster_id)
                .collect();
            CoverageItem {
                param: param.into(),
                unsafe_value: value,
                covered: !clusters.is_empty(),
                clusters,
            }
        })
        .collect();
    CoverageReport {
        coverage_count: items.iter().filter(|i| i.covered).count(),
        total: items.len(),
        items,
    }
}

/// Percentage of error-inducing images an engineer inspects when looking at
/// five images per cluster, `k * 5 * 100 / n`, truncated to two decimals.
pub fn inspection_ratio(cluster_count: usize, error_count: usize) -> Result<f64, RootCauseError> {
    if error_count == 0 {
        return Err(RootCauseError::EmptyErrorSet);
    }
    let hundredths = (cluster_count as u128 * 5 * 100 * 100) / error_count as u128;
    Ok(hundredths as f64 / 100.0)
}
