//! Root-cause clustering of DNN failures.
//!
//! The pipeline takes feature vectors extracted from error-inducing images,
//! reduces them with PCA, clusters them with DBSCAN whose `eps` comes from the
//! elbow of a k-distance profile and whose `min_pts` is picked by silhouette,
//! and then:
//!
//! - [`rootcause`] scores each cluster against simulator parameters
//!   (variance reduction, explanatory clusters, unsafe-value coverage);
//! - [`selection`] maps an unlabeled improvement set onto the clusters via
//!   their core points and picks an unsafe set to label and retrain on;
//! - [`evalstats`] compares accuracy samples (Vargha-Delaney A12,
//!   Mann-Whitney U).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, image decoding
//! and the command line live in the `safe-cli` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod clustering;
pub mod data;
pub mod evalstats;
pub mod imaging;
pub mod reduction;
pub mod rng;
pub mod rootcause;
pub mod selection;
pub mod synthgen;

mod linalg;

pub use clustering::{
    auto_cluster, dbscan, find_elbow, k_distance_profile, silhouette, tune_min_pts,
    AutoClusterOutcome, ClusteringError, ClusteringResult, KDistanceProfile, PointRole,
    RootCauseCluster, RootCauseClusterSet,
};
pub use data::{
    ClosenessRule, DataError, FeatureMatrix, MinPtsSweep, ParameterTable, RunConfig, UnsafeEntry,
    UnsafeValueSpec,
};
pub use reduction::{explained_variance_ratio, fit_pca, pca_transform, PcaModel, ReductionError};
