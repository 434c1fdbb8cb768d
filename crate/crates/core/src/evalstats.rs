//! Accuracy, Vargha-Delaney A12 and the Mann-Whitney U test.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("{predictions} predictions for {truth} labels")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

/// Fraction of exact matches.
pub fn accuracy<T: PartialEq>(predictions: &[T], truth: &[T]) -> Result<f64, StatsError> {
    if predictions.len() != truth.len() {
        return Err(StatsError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

fn check(xs: &[f64], ys: &[f64]) -> Result<(), StatsError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Probability that a draw from `xs` beats one from `ys`, ties counting half.
pub fn vargha_delaney_a12(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check(xs, ys)?;
    let mut twice = 0u64;
    for x in xs {
        for y in ys {
            twice += match x.partial_cmp(y) {
                Some(core::cmp::Ordering::Greater) => 2,
                Some(core::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    Ok(twice as f64 / (2 * xs.len() * ys.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U for `xs`: the number of pairs where x beats y, ties counting half.
    pub u: f64,
    /// Two-sided, normal approximation with tie correction and continuity
    /// correction. 1 when every value is identical.
    pub p_value: f64,
}

/// Midranks (1-based) of the pooled sample.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

pub fn mann_whitney_u(xs: &[f64], ys: &[f64]) -> Result<MannWhitney, StatsError> {
    check(xs, ys)?;
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rx: f64 = ranks[..xs.len()].iter().sum();
    let u = rx - nx * (nx + 1.0) / 2.0;

    let n = nx + ny;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = nx * ny / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return Ok(MannWhitney { u, p_value: 1.0 });
    }
    let mean = nx * ny / 2.0;
    let dev = ((u - mean).abs() - 0.5).max(0.0);
    let z = dev / libm::sqrt(var);
    let p = libm::erfc(z / core::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(MannWhitney { u, p_value: p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsComparison {
    pub a12: f64,
    pub u_statistic: f64,
    pub p_value: f64,
    pub n_x: usize,
    pub n_y: usize,
}

pub fn compare(xs: &[f64], ys: &[f64]) -> Result<StatsComparison, StatsError> {
    let mw = mann_whitney_u(xs, ys)?;
    Ok(StatsComparison {
        a12: vargha_delaney_a12(xs, ys)?,
        u_statistic: mw.u,
        p_value: mw.p_value,
        n_x: xs.len(),
        n_y: ys.len(),
    })
}
