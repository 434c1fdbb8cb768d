//! Seeded synthetic datasets with planted cluster structure and
//! simulator-style parameters, for checking the pipeline against known truth.
//!
//! Draw order is fixed: blob by blob, each point draws its features then its
//! parameters in name order; noise points come last and draw the same way.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClosenessRule, DataError, FeatureMatrix, ParameterTable, UnsafeEntry, UnsafeValueSpec};
use crate::linalg::euclidean;
use crate::rng::SeededRng;

/// Minimum center distance, in units of the largest blob spread.
pub const MIN_SEPARATION: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("blobs {a} and {b} are {distance} apart, need at least {required}")]
    SeparabilityViolation {
        a: usize,
        b: usize,
        distance: f64,
        required: f64,
    },
    #[error("blob {blob} center has {found} coordinates, feature_dim is {expected}")]
    DimensionMismatch { blob: usize, expected: usize, found: usize },
    #[error("blob {0} plants a different parameter set than blob 0")]
    InconsistentParams(usize),
    #[error("blob {0} has a non-positive or non-finite spread")]
    InvalidSpread(usize),
    #[error("spec generates no points")]
    EmptyDataset,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedParam {
    pub center: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub center: Vec<f64>,
    pub spread: f64,
    pub count: usize,
    #[serde(default)]
    pub params: BTreeMap<String, PlantedParam>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub blobs: Vec<BlobSpec>,
    pub noise_count: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub features: FeatureMatrix,
    pub params: ParameterTable,
    /// Blob index per row; `None` for noise.
    pub truth: Vec<Option<usize>>,
}

impl SynthSpec {
    /// Three isotropic blobs with unit spread. Blob `b` sits at `D / sqrt(2)`
    /// along axis `b`, so centers are `D = 4 sqrt(2 dim)` apart, four times
    /// the typical distance between two points of the same blob. Plants
    /// `angle` (22.5, 202.5, 292.5; spread 1) and `pupil_to_bottom`
    /// (-25, -5, 5; spread 0.5).
    pub fn three_blob(feature_dim: usize, points: usize, noise_fraction: f64, seed: u64) -> Self {
        let noise_count = libm::floor(points as f64 * noise_fraction.clamp(0.0, 1.0) + 0.5) as usize;
        let blob_points = points - noise_count;
        let offset = 4.0 * libm::sqrt(2.0 * feature_dim as f64) / core::f64::consts::SQRT_2;
        let angles = [22.5, 202.5, 292.5];
        let pupils = [-25.0, -5.0, 5.0];
        let blobs = (0..3)
            .map(|b| {
                let mut center = vec![0.0; feature_dim];
                if b < feature_dim {
                    center[b] = offset;
                }
                let mut params = BTreeMap::new();
                params.insert("angle".into(), PlantedParam { center: angles[b], spread: 1.0 });
                params.insert("pupil_to_bottom".into(), PlantedParam { center: pupils[b], spread: 0.5 });
                BlobSpec {
                    center,
                    spread: 1.0,
                    count: blob_points / 3 + usize::from(b < blob_points % 3),
                    params,
                }
            })
            .collect();
        Self {
            blobs,
            noise_count,
            feature_dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let total = self.noise_count + self.blobs.iter().map(|b| b.count).sum::<usize>();
        if total == 0 || self.feature_dim == 0 {
            return Err(SynthError::EmptyDataset);
        }
        for (i, b) in self.blobs.iter().enumerate() {
            if b.center.len() != self.feature_dim {
                return Err(SynthError::DimensionMismatch {
                    blob: i,
                    expected: self.feature_dim,
                    found: b.center.len(),
                });
            }
            if !(b.spread > 0.0 && b.spread.is_finite()) || b.center.iter().any(|c| !c.is_finite()) {
                return Err(SynthError::InvalidSpread(i));
            }
            if b.params.values().any(|p| !(p.spread >= 0.0 && p.spread.is_finite() && p.center.is_finite())) {
                return Err(SynthError::InvalidSpread(i));
            }
            if !self.blobs[0].params.keys().eq(b.params.keys()) {
                return Err(SynthError::InconsistentParams(i));
            }
        }
        let max_spread = self.blobs.iter().map(|b| b.spread).fold(0.0, f64::max);
        let required = MIN_SEPARATION * max_spread;
        for a in 0..self.blobs.len() {
            for b in a + 1..self.blobs.len() {
                let distance = euclidean(&self.blobs[a].center, &self.blobs[b].center);
                if distance < required {
                    return Err(SynthError::SeparabilityViolation {
                        a,
                        b,
                        distance,
                        required,
                    });
                }
            }
        }
        Ok(())
    }

    fn param_names(&self) -> Vec<String> {
        self.blobs
            .first()
            .map(|b| b.params.keys().cloned().collect())
            .unwrap_or_default()
    }
}

/// The unsafe values matching [`SynthSpec::three_blob`]: the three planted
/// angles under 45-degree subranges, and `pupil_to_bottom <= -16`.
pub fn three_blob_unsafe_spec() -> UnsafeValueSpec {
    UnsafeValueSpec::new(vec![
        UnsafeEntry {
            param: "angle".into(),
            unsafe_values: vec![22.5, 202.5, 292.5],
            rule: ClosenessRule::SubrangeFraction {
                boundaries: (0..=8).map(|i| f64::from(i) * 45.0).collect(),
                fraction: 0.25,
            },
        },
        UnsafeEntry {
            param: "pupil_to_bottom".into(),
            unsafe_values: vec![-16.0],
            rule: ClosenessRule::AtMost,
        },
    ])
    .expect("preset spec is valid")
}

/// Gaussian blobs plus noise uniform over the centers' bounding box widened
/// by three spreads. Blob parameters are normal around the planted center;
/// noise parameters are uniform over the planted ranges (center +- 3 spread).
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset, SynthError> {
    spec.validate()?;
    let dim = spec.feature_dim;
    let names = spec.param_names();
    let mut rng = SeededRng::new(spec.seed);
    let mut features = Vec::new();
    let mut params = Vec::new();
    let mut truth = Vec::new();

    for (b, blob) in spec.blobs.iter().enumerate() {
        for _ in 0..blob.count {
            features.extend(blob.center.iter().map(|c| rng.normal(*c, blob.spread)));
            params.push(
                blob.params
                    .values()
                    .map(|p| Some(rng.normal(p.center, p.spread)))
                    .collect::<Vec<_>>(),
            );
            truth.push(Some(b));
        }
    }

    if spec.noise_count > 0 {
        let max_spread = spec.blobs.iter().map(|b| b.spread).fold(1.0, f64::max);
        let bounds: Vec<(f64, f64)> = (0..dim)
            .map(|j| {
                let lo = spec.blobs.iter().map(|b| b.center[j] - 3.0 * b.spread).fold(f64::INFINITY, f64::min);
                let hi = spec.blobs.iter().map(|b| b.center[j] + 3.0 * b.spread).fold(f64::NEG_INFINITY, f64::max);
                if lo.is_finite() {
                    (lo, hi)
                } else {
                    (-3.0 * max_spread, 3.0 * max_spread)
                }
            })
            .collect();
        let ranges: Vec<(f64, f64)> = names
            .iter()
            .map(|n| {
                let planted = spec.blobs.iter().map(|b| b.params[n]);
                let lo = planted.clone().map(|p| p.center - 3.0 * p.spread).fold(f64::INFINITY, f64::min);
                let hi = planted.map(|p| p.center + 3.0 * p.spread).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect();
        for _ in 0..spec.noise_count {
            features.extend(bounds.iter().map(|(lo, hi)| rng.uniform_in(*lo, *hi)));
            params.push(ranges.iter().map(|(lo, hi)| Some(rng.uniform_in(*lo, *hi))).collect());
            truth.push(None);
        }
    }

    let ids: Vec<String> = (0..truth.len()).map(|i| format!("img_{i:05}")).collect();
    Ok(SynthDataset {
        features: FeatureMatrix::from_flat(ids.clone(), features, dim, None)?,
        params: ParameterTable::new(names, ids, params)?,
        truth,
    })
}

/// Best agreement between `found` cluster labels and `truth` blob labels over
/// all one-to-one matchings, as a fraction of all points. Noise agrees with
/// noise. Brute force over permutations, so meant for a handful of clusters.
pub fn matched_agreement(found: &[Option<usize>], truth: &[Option<usize>]) -> f64 {
    assert_eq!(found.len(), truth.len());
    if found.is_empty() {
        return 1.0;
    }
    let kf = found.iter().flatten().map(|c| c + 1).max().unwrap_or(0);
    let kt = truth.iter().flatten().map(|c| c + 1).max().unwrap_or(0);
    let mut table = vec![vec![0usize; kt]; kf];
    let mut noise_hits = 0;
    for (f, t) in found.iter().zip(truth) {
        match (f, t) {
            (Some(f), Some(t)) => table[*f][*t] += 1,
            (None, None) => noise_hits += 1,
            _ => {}
        }
    }
    // assign each found cluster to a distinct truth label (or none)
    fn best(table: &[Vec<usize>], row: usize, used: &mut Vec<bool>) -> usize {
        if row == table.len() {
            return 0;
        }
        let mut top = best(table, row + 1, used);
        for t in 0..used.len() {
            if !used[t] {
                used[t] = true;
                top = top.max(table[row][t] + best(table, row + 1, used));
                used[t] = false;
            }
        }
        top
    }
    let matched = best(&table, 0, &mut vec![false; kt]);
    (matched + noise_hits) as f64 / found.len() as f64
}
