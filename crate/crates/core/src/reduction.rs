//! Principal component analysis: fit on a feature matrix, project onto the
//! leading components.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, FeatureMatrix};
use crate::linalg::symmetric_eigen;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error("PCA needs at least 2 rows, got {0}")]
    DegenerateInput(usize),
    #[error("target dimension must be at least 1")]
    ZeroTargetDim,
    #[error("input has {found} columns, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("all explained variances are zero")]
    ZeroVariance,
    #[error("eigen-decomposition did not converge")]
    NoConvergence,
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// A fitted projection: `components` has one unit-norm row per retained
/// direction, ordered by decreasing explained variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    /// Checks shape, finiteness, ordering and orthonormality (to 1e-8), e.g.
    /// after loading a model from disk.
    pub fn validate(&self) -> Result<(), ReductionError> {
        let m = self.mean.len();
        let t = self.components.len();
        if m == 0 || t == 0 {
            return Err(ReductionError::InvalidModel("empty model"));
        }
        if t > m || self.explained_variance.len() != t {
            return Err(ReductionError::InvalidModel("inconsistent dimensions"));
        }
        if self.components.iter().any(|c| c.len() != m) {
            return Err(ReductionError::InvalidModel("component length mismatch"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.mean)
            || !finite(&self.explained_variance)
            || !self.components.iter().all(|c| finite(c))
        {
            return Err(ReductionError::InvalidModel("non-finite value"));
        }
        if self.explained_variance.iter().any(|v| *v < 0.0)
            || self.explained_variance.windows(2).any(|w| w[0] < w[1])
        {
            return Err(ReductionError::InvalidModel(
                "explained variance not non-increasing and non-negative",
            ));
        }
        for i in 0..t {
            for j in i..t {
                let dot = dot(&self.components[i], &self.components[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-8 {
                    return Err(ReductionError::InvalidModel("components not orthonormal"));
                }
            }
        }
        Ok(())
    }

    /// Projects one row: `(x - mean) . components^T`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                let mut acc = 0.0;
                for ((xi, mi), ci) in x.iter().zip(&self.mean).zip(c) {
                    acc += (xi - mi) * ci;
                }
                acc
            })
            .collect()
    }

    /// Maps a projected row back into the input space.
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (yk, c) in y.iter().zip(&self.components) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += yk * ci;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sample covariance (denominator `n - 1`) of the centered rows, row-major
/// `m x m`, along with the column means.
pub(crate) fn covariance(x: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows();
    let m = x.cols();
    let mut mean = vec![0.0; m];
    for row in x.iter_rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    let mut cov = vec![0.0; m * m];
    let mut centered = vec![0.0; m];
    for row in x.iter_rows() {
        for ((c, v), mu) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - mu;
        }
        for i in 0..m {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let dst = &mut cov[i * m..i * m + i + 1];
            for (d, cj) in dst.iter_mut().zip(&centered[..=i]) {
                *d += ci * cj;
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..m {
        for j in 0..=i {
            let v = cov[i * m + j] / denom;
            cov[i * m + j] = v;
            cov[j * m + i] = v;
        }
    }
    (mean, cov)
}

fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

/// Fits PCA keeping `min(target_dim, n - 1, m)` components.
///
/// Components are eigenvectors of the sample covariance in decreasing
/// eigenvalue order; equal eigenvalues are ordered by the index of the
/// component's largest-magnitude coordinate. Each component is flipped so that
/// its largest-magnitude coordinate is positive.
pub fn fit_pca(x: &FeatureMatrix, target_dim: usize) -> Result<PcaModel, ReductionError> {
    let n = x.rows();
    let m = x.cols();
    if n < 2 {
        return Err(ReductionError::DegenerateInput(n));
    }
    if target_dim == 0 {
        return Err(ReductionError::ZeroTargetDim);
    }
    let t = target_dim.min(n - 1).min(m);
    let (mean, cov) = covariance(x);
    let (values, vectors) = symmetric_eigen(&cov, m).ok_or(ReductionError::NoConvergence)?;

    let mut candidates: Vec<(f64, usize, Vec<f64>)> = (0..m)
        .map(|c| {
            let mut v: Vec<f64> = (0..m).map(|r| vectors[r * m + c]).collect();
            let lead = argmax_abs(&v);
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (values[c], lead, v)
        })
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    candidates.truncate(t);

    let explained_variance = candidates.iter().map(|c| c.0.max(0.0)).collect();
    let components = candidates.into_iter().map(|c| c.2).collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

/// Projects every row of `x`; ids and labels are carried over.
pub fn pca_transform(model: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix, ReductionError> {
    if x.cols() != model.input_dim() {
        return Err(ReductionError::DimensionMismatch {
            expected: model.input_dim(),
            found: x.cols(),
        });
    }
    let t = model.output_dim();
    let mut values = Vec::with_capacity(x.rows() * t);
    for row in x.iter_rows() {
        values.extend(model.project(row));
    }
    let ids: Vec<String> = x.ids().to_vec();
    let labels = x.labels().map(<[String]>::to_vec);
    Ok(FeatureMatrix::from_flat(ids, values, t, labels)?)
}

/// Share of retained variance carried by each component.
pub fn explained_variance_ratio(model: &PcaModel) -> Result<Vec<f64>, ReductionError> {
    let total: f64 = model.explained_variance.iter().sum();
    if total <= 0.0 {
        return Err(ReductionError::ZeroVariance);
    }
    Ok(model
        .explained_variance
        .iter()
        .map(|v| v / total)
        .collect())
}
