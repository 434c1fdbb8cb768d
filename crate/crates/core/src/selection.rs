//! Picking the unsafe set: map improvement-set points onto root-cause clusters
//! through their closest core point, split a labeling budget across clusters
//! and take the points nearest to the cores.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::RootCauseClusterSet;
use crate::data::FeatureMatrix;
use crate::linalg::euclidean;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("improvement set has {found} features, cluster space has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no clusters with core points")]
    EmptyClusterSet,
    #[error("core id `{0}` is not in the cluster space")]
    UnknownCoreId(String),
    #[error("no improvement points were assigned")]
    EmptyImprovementSet,
    #[error("unsafe set is empty")]
    EmptyUnsafeSet,
    #[error("balancing target {target} is below the unsafe set size {size}")]
    TargetTooSmall { target: usize, size: usize },
    #[error("id `{0}` appears twice in the unsafe set")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedPoint {
    pub id: String,
    pub cluster_id: usize,
    pub closest_core_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreAssignment {
    pub cluster_count: usize,
    /// One entry per improvement point, in input order.
    pub points: Vec<AssignedPoint>,
}

impl CoreAssignment {
    /// Number of improvement points assigned to each cluster.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = alloc::vec![0; self.cluster_count];
        for p in &self.points {
            c[p.cluster_id] += 1;
        }
        c
    }
}

/// Assigns every improvement point to the cluster of its nearest core point.
/// Ties go to the lower cluster id, then to the lexicographically smaller core
/// id.
pub fn assign_to_clusters(
    improvement: &FeatureMatrix,
    clusters: &RootCauseClusterSet,
    cluster_space: &FeatureMatrix,
) -> Result<CoreAssignment, SelectionError> {
    if improvement.cols() != cluster_space.cols() {
        return Err(SelectionError::DimensionMismatch {
            expected: cluster_space.cols(),
            found: improvement.cols(),
        });
    }
    // (cluster id, core id, row), sorted so the first minimum wins ties
    let mut cores: Vec<(usize, &str, usize)> = Vec::new();
    for c in &clusters.clusters {
        for id in &c.core_ids {
            let row = cluster_space
                .position(id)
                .ok_or_else(|| SelectionError::UnknownCoreId(id.clone()))?;
            cores.push((c.id, id.as_str(), row));
        }
    }
    if cores.is_empty() {
        return Err(SelectionError::EmptyClusterSet);
    }
    cores.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let cluster_count = clusters.clusters.iter().map(|c| c.id + 1).max().unwrap_or(0);

    let points = improvement
        .ids()
        .iter()
        .zip(improvement.iter_rows())
        .map(|(id, x)| {
            let mut best = (f64::INFINITY, 0);
            for (k, &(_, _, row)) in cores.iter().enumerate() {
                let d = euclidean(x, cluster_space.row(row));
                if d < best.0 {
                    best = (d, k);
                }
            }
            let (cluster_id, core, _) = cores[best.1];
            AssignedPoint {
                id: id.clone(),
                cluster_id,
                closest_core_id: core.into(),
                distance: best.0,
            }
        })
        .collect();
    Ok(CoreAssignment {
        cluster_count,
        points,
    })
}

/// Size of the unsafe set, `test_set_size * sf * (1 - test_acc)` rounded half up.
pub fn unsafe_set_size(test_set_size: usize, sf: f64, test_acc: f64) -> usize {
    let raw = test_set_size as f64 * sf * (1.0 - test_acc);
    if raw <= 0.0 {
        0
    } else {
        libm::floor(raw + 0.5) as usize
    }
}

/// Splits `budget` across clusters in proportion to `counts` by the largest
/// remainder method. The quotas sum to `min(budget, total)`; remainder ties go
/// to the lower cluster index. With `budget >= total` every cluster gets its
/// full count.
pub fn cluster_quotas(budget: usize, counts: &[usize]) -> Result<Vec<usize>, SelectionError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(SelectionError::EmptyImprovementSet);
    }
    if budget >= total {
        return Ok(counts.to_vec());
    }
    let (n, c) = (budget as u128, total as u128);
    let mut quotas: Vec<usize> = counts.iter().map(|&ci| (n * ci as u128 / c) as usize).collect();
    let mut left = budget - quotas.iter().sum::<usize>();
    let mut order: Vec<(u128, usize)> = counts
        .iter()
        .enumerate()
        .map(|(i, &ci)| (n * ci as u128 % c, i))
        .collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, i) in order {
        if left == 0 {
            break;
        }
        quotas[i] += 1;
        left -= 1;
    }
    Ok(quotas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Cluster,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedId {
    pub id: String,
    /// Distance to the closest core point; absent for random selection.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSelection {
    /// `None` for the single pool of a random selection.
    pub cluster_id: Option<usize>,
    pub assigned: usize,
    pub quota: usize,
    pub selected: Vec<SelectedId>,
    /// How many points the quota asked for beyond what was assigned.
    pub shortfall: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub strategy: Strategy,
    pub budget: usize,
    pub clusters: Vec<ClusterSelection>,
}

impl SelectionPlan {
    pub fn selected_count(&self) -> usize {
        self.clusters.iter().map(|c| c.selected.len()).sum()
    }

    /// All selected ids, cluster by cluster.
    pub fn selected_ids(&self) -> Vec<String> {
        self.clusters
            .iter()
            .flat_map(|c| c.selected.iter().map(|s| s.id.clone()))
            .collect()
    }
}

/// Per cluster, the `quotas[i]` assigned points nearest to their core point,
/// ordered by distance then id. Clusters missing from `quotas` get quota 0.
pub fn select_unsafe_set(assignment: &CoreAssignment, budget: usize, quotas: &[usize]) -> SelectionPlan {
    let k = assignment.cluster_count.max(quotas.len());
    let mut pools: Vec<Vec<&AssignedPoint>> = (0..k).map(|_| Vec::new()).collect();
    for p in &assignment.points {
        pools[p.cluster_id].push(p);
    }
    let clusters = pools
        .into_iter()
        .enumerate()
        .map(|(i, mut pool)| {
            pool.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
            let quota = quotas.get(i).copied().unwrap_or(0);
            ClusterSelection {
                cluster_id: Some(i),
                assigned: pool.len(),
                quota,
                shortfall: quota.saturating_sub(pool.len()),
                selected: pool
                    .iter()
                    .take(quota)
                    .map(|p| SelectedId {
                        id: p.id.clone(),
                        distance: Some(p.distance),
                    })
                    .collect(),
            }
        })
        .collect();
    SelectionPlan {
        strategy: Strategy::Cluster,
        budget,
        clusters,
    }
}

/// A seeded uniform sample of `min(budget, |ids|)` distinct ids. The ids are
/// sorted first so the result does not depend on input order.
pub fn select_random(ids: &[String], budget: usize, seed: u64) -> SelectionPlan {
    let mut pool: Vec<&String> = ids.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let take = budget.min(pool.len());
    let mut rng = SeededRng::new(seed);
    // partial Fisher-Yates
    for i in 0..take {
        let j = i + rng.index(pool.len() - i);
        pool.swap(i, j);
    }
    SelectionPlan {
        strategy: Strategy::Random,
        budget,
        clusters: alloc::vec![ClusterSelection {
            cluster_id: None,
            assigned: pool.len(),
            quota: budget,
            shortfall: budget.saturating_sub(pool.len()),
            selected: pool[..take]
                .iter()
                .map(|id| SelectedId {
                    id: (*id).clone(),
                    distance: None,
                })
                .collect(),
        }],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replicated {
    pub id: String,
    pub count: usize,
}

/// Grows the unsafe set to `target` entries: each id once, then extras drawn
/// uniformly with replacement. Output keeps input order.
pub fn bootstrap_balance(
    unsafe_ids: &[String],
    target: usize,
    seed: u64,
) -> Result<Vec<Replicated>, SelectionError> {
    if unsafe_ids.is_empty() {
        return Err(SelectionError::EmptyUnsafeSet);
    }
    let mut seen = BTreeSet::new();
    for id in unsafe_ids {
        if !seen.insert(id.as_str()) {
            return Err(SelectionError::DuplicateId(id.clone()));
        }
    }
    if target < unsafe_ids.len() {
        return Err(SelectionError::TargetTooSmall {
            target,
            size: unsafe_ids.len(),
        });
    }
    let mut counts = alloc::vec![1usize; unsafe_ids.len()];
    let mut rng = SeededRng::new(seed);
    for _ in unsafe_ids.len()..target {
        counts[rng.index(unsafe_ids.len())] += 1;
    }
    Ok(unsafe_ids
        .iter()
        .zip(counts)
        .map(|(id, count)| Replicated {
            id: id.clone(),
            count,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Train,
    Unsafe,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub provenance: Provenance,
    pub weight: usize,
}

/// What an external trainer consumes: ids and weights only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrainManifest {
    pub seed: u64,
    pub original_train_ids: Vec<String>,
    pub unsafe_entries: Vec<Replicated>,
    /// Union of both sources. An id found in both is listed once with weight
    /// `1 + count`.
    pub entries: Vec<ManifestEntry>,
}

impl RetrainManifest {
    pub fn total_weight(&self) -> usize {
        self.entries.iter().map(|e| e.weight).sum()
    }
}

pub fn build_retrain_manifest(train_ids: &[String], balanced: &[Replicated], seed: u64) -> RetrainManifest {
    let unsafe_counts: BTreeMap<&str, usize> =
        balanced.iter().map(|r| (r.id.as_str(), r.count)).collect();
    let train: BTreeSet<&str> = train_ids.iter().map(String::as_str).collect();
    let mut entries: Vec<ManifestEntry> = train_ids
        .iter()
        .map(|id| match unsafe_counts.get(id.as_str()) {
            Some(c) => ManifestEntry {
                id: id.clone(),
                provenance: Provenance::Both,
                weight: 1 + c,
            },
            None => ManifestEntry {
                id: id.clone(),
                provenance: Provenance::Train,
                weight: 1,
            },
        })
        .collect();
    entries.extend(
        balanced
            .iter()
            .filter(|r| !train.contains(r.id.as_str()))
            .map(|r| ManifestEntry {
                id: r.id.clone(),
                provenance: Provenance::Unsafe,
                weight: r.count,
            }),
    );
    RetrainManifest {
        seed,
        original_train_ids: train_ids.to_vec(),
        unsafe_entries: balanced.to_vec(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::RootCauseCluster;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn fm(prefix: &str, rows: &[Vec<f64>]) -> FeatureMatrix {
        let ids = (0..rows.len()).map(|i| format!("{prefix}{i:03}")).collect();
        FeatureMatrix::new(ids, rows.to_vec(), None).unwrap()
    }

    fn set(cores: &[&[usize]], prefix: &str) -> RootCauseClusterSet {
        RootCauseClusterSet {
            epsilon: 1.0,
            min_pts: 2,
            clusters: cores
                .iter()
                .enumerate()
                .map(|(id, c)| {
                    let ids: Vec<String> = c.iter().map(|i| format!("{prefix}{i:03}")).collect();
                    RootCauseCluster {
                        id,
                        member_ids: ids.clone(),
                        core_ids: ids,
                    }
                })
                .collect(),
        }
    }

    fn brute_force(imp: &[Vec<f64>], space: &[Vec<f64>], cores: &[&[usize]]) -> Vec<(usize, usize, f64)> {
        imp.iter()
            .map(|x| {
                let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
                for (c, list) in cores.iter().enumerate() {
                    for &r in *list {
                        let d: f64 = x.iter().zip(&space[r]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                        if d < best.2 || (d == best.2 && (c, r) < (best.0, best.1)) {
                            best = (c, r, d);
                        }
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn identical_point_gets_distance_zero() {
        let space = fm("c", &[vec![0.0, 0.0], vec![5.0, 5.0]]);
        let imp = fm("i", &[vec![5.0, 5.0]]);
        let a = assign_to_clusters(&imp, &set(&[&[0], &[1]], "c"), &space).unwrap();
        assert_eq!(a.points[0].cluster_id, 1);
        assert_eq!(a.points[0].closest_core_id, "c001");
        assert_eq!(a.points[0].distance, 0.0);
    }

    #[test]
    fn equidistant_goes_to_lower_cluster() {
        let space = fm("c", &[vec![-1.0], vec![1.0]]);
        let imp = fm("i", &[vec![0.0]]);
        let a = assign_to_clusters(&imp, &set(&[&[1], &[0]], "c"), &space).unwrap();
        assert_eq!(a.points[0].cluster_id, 0);
        assert_eq!(a.points[0].closest_core_id, "c001");
    }

    #[test]
    fn planted_points_match_brute_force() {
        let space_rows = vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![10.0, 10.0], vec![10.0, 9.0]];
        let imp_rows = vec![
            vec![0.1, 0.2],
            vec![0.6, -0.1],
            vec![9.0, 9.5],
            vec![11.0, 10.0],
            vec![5.0, 5.0],
            vec![4.0, 4.0],
        ];
        let cores: [&[usize]; 2] = [&[0, 1], &[2, 3]];
        let a = assign_to_clusters(&fm("i", &imp_rows), &set(&cores, "c"), &fm("c", &space_rows)).unwrap();
        for (p, (c, r, d)) in a.points.iter().zip(brute_force(&imp_rows, &space_rows, &cores)) {
            assert_eq!(p.cluster_id, c);
            assert_eq!(p.closest_core_id, format!("c{r:03}"));
            assert!((p.distance - d).abs() < 1e-12);
        }
    }

    #[test]
    fn assignment_errors() {
        let space = fm("c", &[vec![0.0, 0.0]]);
        let imp = fm("i", &[vec![0.0]]);
        assert!(matches!(
            assign_to_clusters(&imp, &set(&[&[0]], "c"), &space),
            Err(SelectionError::DimensionMismatch { expected: 2, found: 1 })
        ));
        let imp = fm("i", &[vec![0.0, 1.0]]);
        assert_eq!(
            assign_to_clusters(&imp, &set(&[], "c"), &space),
            Err(SelectionError::EmptyClusterSet)
        );
        assert_eq!(
            assign_to_clusters(&imp, &set(&[&[4]], "c"), &space),
            Err(SelectionError::UnknownCoreId("c004".into()))
        );
    }

    #[test]
    fn unsafe_set_sizes() {
        assert_eq!(unsafe_set_size(1000, 0.3, 0.9), 30);
        assert_eq!(unsafe_set_size(1000, 0.0, 0.5), 0);
        assert_eq!(unsafe_set_size(4232, 0.3, 0.8803), 152);
        assert_eq!(unsafe_set_size(10, 1.0, 0.95), 1);
        assert_eq!(unsafe_set_size(10, 1.0, 1.0), 0);
    }

    #[test]
    fn quotas() {
        assert_eq!(cluster_quotas(10, &[5, 5]), Ok(vec![5, 5]));
        assert_eq!(cluster_quotas(7, &[5, 3]), Ok(vec![4, 3]));
        assert_eq!(cluster_quotas(100, &[5, 3]), Ok(vec![5, 3]));
        assert_eq!(cluster_quotas(1, &[2, 2]), Ok(vec![1, 0]));
        assert_eq!(cluster_quotas(0, &[2, 2]), Ok(vec![0, 0]));
        assert_eq!(cluster_quotas(3, &[0, 0]), Err(SelectionError::EmptyImprovementSet));
    }

    fn assignment(dists: &[(usize, &str, f64)], k: usize) -> CoreAssignment {
        CoreAssignment {
            cluster_count: k,
            points: dists
                .iter()
                .map(|(c, id, d)| AssignedPoint {
                    id: (*id).into(),
                    cluster_id: *c,
                    closest_core_id: "core".into(),
                    distance: *d,
                })
                .collect(),
        }
    }

    #[test]
    fn nearest_are_selected() {
        let a = assignment(&[(0, "x", 3.0), (0, "y", 1.0), (0, "z", 2.0)], 1);
        let plan = select_unsafe_set(&a, 2, &[2]);
        assert_eq!(plan.selected_ids(), vec!["y", "z"]);
        let all = select_unsafe_set(&a, 3, &[3]);
        assert_eq!(all.selected_count(), 3);
        let none = select_unsafe_set(&a, 0, &[0]);
        assert_eq!(none.selected_count(), 0);
    }

    #[test]
    fn shortfall_is_recorded() {
        let a = assignment(&[(0, "x", 3.0), (1, "y", 1.0)], 2);
        let plan = select_unsafe_set(&a, 6, &[4, 2]);
        assert_eq!(plan.clusters[0].shortfall, 3);
        assert_eq!(plan.clusters[1].shortfall, 1);
        assert_eq!(plan.selected_count(), 2);
    }

    #[test]
    fn distance_ties_break_by_id() {
        let a = assignment(&[(0, "b", 1.0), (0, "a", 1.0), (0, "c", 0.5)], 1);
        assert_eq!(select_unsafe_set(&a, 2, &[2]).selected_ids(), vec!["c", "a"]);
    }

    #[test]
    fn random_selection_is_seeded() {
        let ids: Vec<String> = (0..50).map(|i| format!("i{i}")).collect();
        let a = select_random(&ids, 10, 3);
        let mut rev = ids.clone();
        rev.reverse();
        assert_eq!(a, select_random(&rev, 10, 3));
        assert_eq!(a.selected_count(), 10);
        let uniq: BTreeSet<_> = a.selected_ids().into_iter().collect();
        assert_eq!(uniq.len(), 10);
        assert_eq!(select_random(&ids, 80, 3).selected_count(), 50);
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i}")).collect()
    }

    #[test]
    fn balancing() {
        let one = bootstrap_balance(&ids(5), 5, 1).unwrap();
        assert!(one.iter().all(|r| r.count == 1));
        let b = bootstrap_balance(&ids(10), 20, 9).unwrap();
        assert_eq!(b.iter().map(|r| r.count).sum::<usize>(), 20);
        assert!(b.iter().all(|r| r.count >= 1));
        assert_eq!(b, bootstrap_balance(&ids(10), 20, 9).unwrap());
        assert_eq!(bootstrap_balance(&[], 3, 0), Err(SelectionError::EmptyUnsafeSet));
        assert!(matches!(
            bootstrap_balance(&ids(4), 3, 0),
            Err(SelectionError::TargetTooSmall { .. })
        ));
        let dup = vec!["a".into(), "a".into()];
        assert_eq!(bootstrap_balance(&dup, 3, 0), Err(SelectionError::DuplicateId("a".into())));
    }

    #[test]
    fn manifests() {
        let train: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
        let empty = build_retrain_manifest(&train, &[], 0);
        assert_eq!(empty.entries.len(), 100);
        assert!(empty.entries.iter().all(|e| e.provenance == Provenance::Train));

        let balanced = bootstrap_balance(&ids(10), 30, 4).unwrap();
        let m = build_retrain_manifest(&train, &balanced, 4);
        assert_eq!(m.total_weight(), 130);

        let clash = vec![Replicated {
            id: "t3".into(),
            count: 2,
        }];
        let m = build_retrain_manifest(&train, &clash, 0);
        assert_eq!(m.entries.len(), 100);
        let e = m.entries.iter().find(|e| e.id == "t3").unwrap();
        assert_eq!((e.provenance, e.weight), (Provenance::Both, 3));
    }

    proptest! {
        #[test]
        fn quotas_sum_and_cap(budget in 0usize..200, counts in proptest::collection::vec(0usize..40, 1..8)) {
            let total: usize = counts.iter().sum();
            prop_assume!(total > 0);
            let q = cluster_quotas(budget, &counts).unwrap();
            prop_assert_eq!(q.iter().sum::<usize>(), budget.min(total));
            for (qi, ci) in q.iter().zip(&counts) {
                prop_assert!(qi <= ci);
                // within one unit of the exact share
                let raw = budget.min(total) as f64 * *ci as f64 / total as f64;
                prop_assert!((*qi as f64 - raw).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn size_is_monotone(n in 0usize..10000, sf in 0.0f64..1.0, a1 in 0.0f64..1.0, a2 in 0.0f64..1.0) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            prop_assert!(unsafe_set_size(n, sf, hi) <= unsafe_set_size(n, sf, lo));
            prop_assert!(unsafe_set_size(n, sf, lo) <= unsafe_set_size(n + 1, sf, lo));
            prop_assert!(unsafe_set_size(n, sf * 0.5, lo) <= unsafe_set_size(n, sf, lo));
        }

        #[test]
        fn selection_is_permutation_invariant_and_dominant(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..40),
            budget in 0usize..30,
            rot in 0usize..40,
        ) {
            let space = fm("c", &[vec![-3.0, 0.0], vec![-2.5, 0.5], vec![3.0, 0.0]]);
            let cores = set(&[&[0, 1], &[2]], "c");
            let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
            let imp = fm("i", &rows);
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.rotate_left(rot % rows.len());
            order.reverse();
            let shuffled = imp.select_rows(&order).unwrap();

            let run = |m: &FeatureMatrix| {
                let a = assign_to_clusters(m, &cores, &space).unwrap();
                let q = cluster_quotas(budget, &a.counts()).unwrap();
                (a.clone(), select_unsafe_set(&a, budget, &q))
            };
            let (a, plan) = run(&imp);
            let (_, plan2) = run(&shuffled);
            prop_assert_eq!(&plan, &plan2);
            prop_assert_eq!(plan.selected_count(), budget.min(rows.len()));

            for c in &plan.clusters {
                let chosen: BTreeSet<&str> = c.selected.iter().map(|s| s.id.as_str()).collect();
                let worst = c.selected.iter().map(|s| s.distance.unwrap()).fold(f64::NEG_INFINITY, f64::max);
                for p in a.points.iter().filter(|p| Some(p.cluster_id) == c.cluster_id) {
                    if !chosen.contains(p.id.as_str()) {
                        prop_assert!(p.distance >= worst);
                    }
                }
            }
        }
    }
}
