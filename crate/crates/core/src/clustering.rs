//! DBSCAN with automatic parameter selection.
//!
//! `eps` is read off the elbow of the sorted k-distance profile and `min_pts`
//! is the sweep value whose clustering has the highest silhouette. All
//! tie-breaks are by point index so results never depend on visiting order.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureMatrix, MinPtsSweep, RunConfig};
use crate::linalg::euclidean;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusteringError {
    #[error("need more than k = {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("elbow search needs at least 3 values, got {0}")]
    TooShort(usize),
    #[error("eps must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("min_pts = {min_pts} outside [2, {n}]")]
    InvalidMinPts { min_pts: usize, n: usize },
    #[error("min_pts sweep {lo}..={hi} outside [2, {n}]")]
    InvalidSweep { lo: usize, hi: usize, n: usize },
    #[error("assignment has {found} entries for {n} points")]
    AssignmentLength { n: usize, found: usize },
    #[error("silhouette needs at least 2 non-noise clusters")]
    UndefinedSilhouette,
    #[error("the k-distance elbow is at distance 0; all points coincide with their neighbors")]
    DegenerateEpsilon,
    #[error("no min_pts in the sweep produced at least 2 clusters")]
    NoValidClustering { trials: Vec<SweepTrial> },
}

/// Condensed pairwise Euclidean distances.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn euclidean(x: &FeatureMatrix) -> Self {
        let n = x.rows();
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                data.push(euclidean(x.row(i), x.row(j)));
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        // row a starts after sum_{r<a} (n - 1 - r) entries
        let start = a * (2 * self.n - a - 1) / 2;
        self.data[start + (b - a - 1)]
    }
}

/// Sorted per-point mean distance to the `k` nearest other points, with the
/// elbow of that curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KDistanceProfile {
    pub k: usize,
    pub distances: Vec<f64>,
    pub elbow_index: usize,
    pub epsilon: f64,
}

pub fn k_distance_profile(x: &FeatureMatrix, k: usize) -> Result<KDistanceProfile, ClusteringError> {
    k_distance_profile_with(&DistanceMatrix::euclidean(x), k)
}

pub fn k_distance_profile_with(
    dm: &DistanceMatrix,
    k: usize,
) -> Result<KDistanceProfile, ClusteringError> {
    let n = dm.len();
    if k == 0 {
        return Err(ClusteringError::ZeroK);
    }
    if n <= k {
        return Err(ClusteringError::TooFewPoints { n, k });
    }
    let mut row = Vec::with_capacity(n - 1);
    let mut distances: Vec<f64> = (0..n)
        .map(|i| {
            row.clear();
            row.extend((0..n).filter(|&j| j != i).map(|j| dm.get(i, j)));
            row.sort_unstable_by(f64::total_cmp);
            row[..k].iter().sum::<f64>() / k as f64
        })
        .collect();
    distances.sort_unstable_by(f64::total_cmp);
    let elbow_index = elbow_or_fallback(&distances);
    Ok(KDistanceProfile {
        k,
        epsilon: distances[elbow_index],
        distances,
        elbow_index,
    })
}

// Profiles shorter than 3 cannot have an elbow; use the last value.
fn elbow_or_fallback(distances: &[f64]) -> usize {
    find_elbow(distances).unwrap_or(distances.len() - 1)
}

/// Index of the point furthest from the chord joining the first and last
/// points of an ascending curve, after scaling both axes to `[0, 1]`.
///
/// Ties go to the lowest index. A flat or straight curve (max distance below
/// `1e-9`) has no elbow, and the 90th-percentile position
/// `floor(0.9 * (n - 1))` is returned instead.
pub fn find_elbow(distances: &[f64]) -> Result<usize, ClusteringError> {
    let n = distances.len();
    if n < 3 {
        return Err(ClusteringError::TooShort(n));
    }
    let fallback = (9 * (n - 1)) / 10;
    let lo = distances[0];
    let span = distances[n - 1] - lo;
    if !(span > 0.0) {
        return Ok(fallback);
    }
    let last = (n - 1) as f64;
    let mut best = 0;
    let mut best_dist = f64::NEG_INFINITY;
    for (i, d) in distances.iter().enumerate() {
        let x = i as f64 / last;
        let y = (d - lo) / span;
        // chord is y = x; perpendicular distance is |x - y| / sqrt(2)
        let dist = (x - y).abs() * core::f64::consts::FRAC_1_SQRT_2;
        if dist > best_dist {
            best_dist = dist;
            best = i;
        }
    }
    if best_dist < 1e-9 {
        Ok(fallback)
    } else {
        Ok(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRole {
    Core,
    Border,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub epsilon: f64,
    pub min_pts: usize,
    /// Cluster per point, `None` for noise. Ids are `0..cluster_count`, in
    /// order of each cluster's lowest-index core point.
    pub assignment: Vec<Option<usize>>,
    pub roles: Vec<PointRole>,
    pub cluster_count: usize,
    /// Silhouette over non-noise points; `None` with fewer than 2 clusters.
    pub silhouette: Option<f64>,
}

impl ClusteringResult {
    pub fn core_count(&self) -> usize {
        self.roles.iter().filter(|r| **r == PointRole::Core).count()
    }

    pub fn noise_count(&self) -> usize {
        self.roles.iter().filter(|r| **r == PointRole::Noise).count()
    }

    /// Member indices of each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count];
        for (i, a) in self.assignment.iter().enumerate() {
            if let Some(c) = a {
                out[*c].push(i);
            }
        }
        out
    }
}

/// Inclusive `eps`-neighborhoods, each sorted by index and containing the
/// point itself.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    eps: f64,
    neighbors: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn build(dm: &DistanceMatrix, eps: f64) -> Result<Self, ClusteringError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(ClusteringError::InvalidEpsilon(eps));
        }
        let n = dm.len();
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| dm.get(i, j) <= eps).collect())
            .collect();
        Ok(Self { eps, neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }
}

pub fn dbscan(x: &FeatureMatrix, eps: f64, min_pts: usize) -> Result<ClusteringResult, ClusteringError> {
    let dm = DistanceMatrix::euclidean(x);
    let graph = NeighborGraph::build(&dm, eps)?;
    dbscan_graph(&dm, &graph, min_pts)
}

/// DBSCAN on precomputed neighborhoods.
///
/// Core points are those with at least `min_pts` neighbors (self included).
/// Core points connected through core-core neighborhoods share a cluster. A
/// non-core point within `eps` of a core point becomes a border point of the
/// cluster of the lowest-index such core point; everything else is noise.
pub fn dbscan_graph(
    dm: &DistanceMatrix,
    graph: &NeighborGraph,
    min_pts: usize,
) -> Result<ClusteringResult, ClusteringError> {
    let n = graph.len();
    if min_pts < 2 || min_pts > n {
        return Err(ClusteringError::InvalidMinPts { min_pts, n });
    }
    let is_core: Vec<bool> = (0..n).map(|i| graph.neighbors(i).len() >= min_pts).collect();
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut cluster_count = 0;
    let mut stack = Vec::new();
    for seed in 0..n {
        if !is_core[seed] || assignment[seed].is_some() {
            continue;
        }
        let id = cluster_count;
        cluster_count += 1;
        assignment[seed] = Some(id);
        stack.push(seed);
        while let Some(p) = stack.pop() {
            for &q in graph.neighbors(p) {
                if is_core[q] && assignment[q].is_none() {
                    assignment[q] = Some(id);
                    stack.push(q);
                }
            }
        }
    }
    let mut roles = vec![PointRole::Noise; n];
    for i in 0..n {
        if is_core[i] {
            roles[i] = PointRole::Core;
        } else if let Some(&c) = graph.neighbors(i).iter().find(|&&j| is_core[j]) {
            roles[i] = PointRole::Border;
            assignment[i] = assignment[c];
        }
    }
    let silhouette = if cluster_count >= 2 {
        silhouette_with(dm, &assignment).ok()
    } else {
        None
    };
    Ok(ClusteringResult {
        epsilon: graph.eps,
        min_pts,
        assignment,
        roles,
        cluster_count,
        silhouette,
    })
}

pub fn silhouette(x: &FeatureMatrix, assignment: &[Option<usize>]) -> Result<f64, ClusteringError> {
    if assignment.len() != x.rows() {
        return Err(ClusteringError::AssignmentLength {
            n: x.rows(),
            found: assignment.len(),
        });
    }
    silhouette_with(&DistanceMatrix::euclidean(x), assignment)
}

/// Mean silhouette over non-noise points.
///
/// For point `i` in cluster `A`, `a(i)` is its mean distance to the other
/// members of `A` and `b(i)` the smallest mean distance to the members of
/// another cluster; `s(i) = (b - a) / max(a, b)`, and `s(i) = 0` for a
/// singleton cluster or when `a = b = 0`. Cluster ids need not be contiguous.
pub fn silhouette_with(
    dm: &DistanceMatrix,
    assignment: &[Option<usize>],
) -> Result<f64, ClusteringError> {
    if assignment.len() != dm.len() {
        return Err(ClusteringError::AssignmentLength {
            n: dm.len(),
            found: assignment.len(),
        });
    }
    // compact arbitrary ids into 0..K
    let mut labels: Vec<usize> = assignment.iter().flatten().copied().collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(ClusteringError::UndefinedSilhouette);
    }
    let k = labels.len();
    let compact: Vec<Option<usize>> = assignment
        .iter()
        .map(|a| a.map(|c| labels.binary_search(&c).unwrap_or(0)))
        .collect();
    let mut sizes = vec![0usize; k];
    for c in compact.iter().flatten() {
        sizes[*c] += 1;
    }
    let points: Vec<(usize, usize)> = compact
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| (i, c)))
        .collect();
    let mut sums = vec![0.0; k];
    let mut total = 0.0;
    for &(i, ci) in &points {
        if sizes[ci] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for &(j, cj) in &points {
            if j != i {
                sums[cj] += dm.get(i, j);
            }
        }
        let a = sums[ci] / (sizes[ci] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != ci)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / points.len() as f64)
}

/// One `min_pts` value tried during tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTrial {
    pub min_pts: usize,
    pub cluster_count: usize,
    pub noise_count: usize,
    pub silhouette: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunedClustering {
    pub min_pts: usize,
    pub result: ClusteringResult,
    pub trials: Vec<SweepTrial>,
}

pub fn tune_min_pts(
    x: &FeatureMatrix,
    eps: f64,
    sweep: MinPtsSweep,
) -> Result<TunedClustering, ClusteringError> {
    tune_min_pts_with(&DistanceMatrix::euclidean(x), eps, sweep)
}

/// Runs DBSCAN for every `min_pts` in the sweep and keeps the result with the
/// highest silhouette among those with at least 2 clusters; ties go to the
/// smallest `min_pts`.
pub fn tune_min_pts_with(
    dm: &DistanceMatrix,
    eps: f64,
    sweep: MinPtsSweep,
) -> Result<TunedClustering, ClusteringError> {
    let n = dm.len();
    let MinPtsSweep { lo, hi } = sweep;
    if lo < 2 || hi > n || lo > hi {
        return Err(ClusteringError::InvalidSweep { lo, hi, n });
    }
    let graph = NeighborGraph::build(dm, eps)?;
    let mut best: Option<ClusteringResult> = None;
    let mut trials = Vec::with_capacity(hi - lo + 1);
    for min_pts in lo..=hi {
        let result = dbscan_graph(dm, &graph, min_pts)?;
        trials.push(SweepTrial {
            min_pts,
            cluster_count: result.cluster_count,
            noise_count: result.noise_count(),
            silhouette: result.silhouette,
        });
        if let Some(s) = result.silhouette {
            let better = match &best {
                None => true,
                Some(b) => s > b.silhouette.unwrap_or(f64::NEG_INFINITY),
            };
            if better {
                best = Some(result);
            }
        }
    }
    match best {
        Some(result) => Ok(TunedClustering {
            min_pts: result.min_pts,
            result,
            trials,
        }),
        None => Err(ClusteringError::NoValidClustering { trials }),
    }
}

/// A root-cause cluster: its members and the subset that are core points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootCauseCluster {
    pub id: usize,
    pub member_ids: Vec<String>,
    pub core_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCauseClusterSet {
    pub epsilon: f64,
    pub min_pts: usize,
    pub clusters: Vec<RootCauseCluster>,
}

impl RootCauseClusterSet {
    /// Groups ids by cluster; noise points belong to no cluster. Member and
    /// core ids keep row order.
    pub fn from_result(result: &ClusteringResult, ids: &[String]) -> Self {
        let mut clusters: Vec<RootCauseCluster> = (0..result.cluster_count)
            .map(|id| RootCauseCluster {
                id,
                member_ids: Vec::new(),
                core_ids: Vec::new(),
            })
            .collect();
        for (i, (a, role)) in result.assignment.iter().zip(&result.roles).enumerate() {
            if let Some(c) = a {
                clusters[*c].member_ids.push(ids[i].clone());
                if *role == PointRole::Core {
                    clusters[*c].core_ids.push(ids[i].clone());
                }
            }
        }
        Self {
            epsilon: result.epsilon,
            min_pts: result.min_pts,
            clusters,
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn member_count(&self) -> usize {
        self.clusters.iter().map(|c| c.member_ids.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoClusterOutcome {
    pub profile: KDistanceProfile,
    pub trials: Vec<SweepTrial>,
    pub result: ClusteringResult,
    pub clusters: RootCauseClusterSet,
}

/// `eps` from the k-distance elbow, `min_pts` from the silhouette sweep. The
/// sweep's upper end is clipped to the number of points.
pub fn auto_cluster(x: &FeatureMatrix, config: &RunConfig) -> Result<AutoClusterOutcome, ClusteringError> {
    let n = x.rows();
    let k = config.k_neighbors;
    if k == 0 {
        return Err(ClusteringError::ZeroK);
    }
    if n < k + 1 {
        return Err(ClusteringError::TooFewPoints { n, k });
    }
    let dm = DistanceMatrix::euclidean(x);
    let profile = k_distance_profile_with(&dm, k)?;
    if profile.epsilon <= 0.0 {
        return Err(ClusteringError::DegenerateEpsilon);
    }
    let sweep = MinPtsSweep::new(config.minpts_sweep.lo, config.minpts_sweep.hi.min(n));
    let tuned = tune_min_pts_with(&dm, profile.epsilon, sweep)?;
    let clusters = RootCauseClusterSet::from_result(&tuned.result, x.ids());
    Ok(AutoClusterOutcome {
        profile,
        trials: tuned.trials,
        result: tuned.result,
        clusters,
    })
}
