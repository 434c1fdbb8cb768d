//! The pipeline subcommands. Each one reads its inputs, runs a stage and
//! writes JSON artifacts plus a `manifest.json` index under its output
//! directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use safe_core::clustering::SweepTrial;
use safe_core::evalstats::{compare as compare_samples, StatsComparison};
use safe_core::imaging::{surrogate_features, SURROGATE_FEATURES};
use safe_core::rng::derive_seed;
use safe_core::rootcause::{
    explanatory_clusters, inspection_ratio, reduction_histogram, unsafe_value_coverage, variance_reduction,
    RootCauseError, DEFAULT_THRESHOLDS,
};
use safe_core::selection::{
    assign_to_clusters, bootstrap_balance, build_retrain_manifest, cluster_quotas, select_random, select_unsafe_set,
    unsafe_set_size, Strategy,
};
use safe_core::synthgen::{generate, three_blob_unsafe_spec, SynthSpec};
use safe_core::{
    auto_cluster, fit_pca, pca_transform, ClusteringError, FeatureMatrix, MinPtsSweep, PcaModel, PointRole,
    RootCauseClusterSet, RunConfig,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::report::{render_html, render_text, Analysis, AnalysisSummary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Input(String),
    #[error("clustering failed: {0}")]
    Clustering(String),
    #[error("analysis inputs do not match: {0}")]
    Analysis(String),
    #[error("selection inputs do not match: {0}")]
    Selection(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) | CliError::Input(_) => 2,
            CliError::Clustering(_) => 3,
            CliError::Analysis(_) => 4,
            CliError::Selection(_) => 5,
        }
    }
}

/// Index of one command's outputs. Paths are relative to the output
/// directory; input paths are echoed as given.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| {
        CliError::Io(IoError::Io {
            path: dir.into(),
            source,
        })
    })
}

fn finish(
    dir: &Path,
    command: &str,
    inputs: &[(&str, &Path)],
    config: serde_json::Value,
    mut outputs: Vec<String>,
) -> Result<(), CliError> {
    outputs.push("manifest.json".into());
    let m = Manifest {
        command: command.into(),
        inputs: inputs
            .iter()
            .map(|(k, p)| ((*k).to_string(), p.display().to_string()))
            .collect(),
        config,
        outputs,
    };
    io::write_json(&dir.join("manifest.json"), &m)?;
    // timestamps live only here so the JSON outputs stay reproducible
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let log = format!("{secs} {command} ok\n");
    fs::write(dir.join("run.log"), log).map_err(|source| IoError::Io {
        path: dir.join("run.log"),
        source,
    })?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Worker pool for image decoding, capped by `SAFE_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SAFE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("SAFE_THREADS must be a positive integer, got `{v}`")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Input(e.to_string()))
}

// ---- extract ----

pub fn extract(images: Option<&Path>, features: Option<&Path>, out: &Path) -> Result<FeatureMatrix, CliError> {
    let x = match (images, features) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --images or --features, not both".into())),
        (None, None) => return Err(CliError::Usage("one of --images or --features is required".into())),
        (None, Some(f)) => io::load_feature_matrix(f)?,
        (Some(dir), None) => {
            let files = io::list_pgm(dir)?;
            if files.is_empty() {
                return Err(CliError::Input(format!("{}: no .pgm images", dir.display())));
            }
            let rows = thread_pool()?.install(|| {
                files
                    .par_iter()
                    .map(|(_, p)| {
                        let img = io::load_pgm(p)?;
                        surrogate_features(&img).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
                    })
                    .collect::<Result<Vec<_>, CliError>>()
            })?;
            let ids = files.into_iter().map(|(id, _)| id).collect();
            FeatureMatrix::from_flat(ids, rows.concat(), SURROGATE_FEATURES, None)
                .map_err(|e| CliError::Input(e.to_string()))?
        }
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    io::save_feature_matrix(&x, out)?;
    Ok(x)
}

// ---- cluster ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub id: String,
    pub cluster: Option<usize>,
    pub role: PointRole,
}

/// Everything `cluster` decided, per point and per sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub config: RunConfig,
    pub input_dim: usize,
    pub reduced_dim: usize,
    pub epsilon: f64,
    pub elbow_index: usize,
    pub min_pts: usize,
    pub silhouette: Option<f64>,
    pub cluster_count: usize,
    pub noise_count: usize,
    pub sweep: Vec<SweepTrial>,
    pub points: Vec<PointRecord>,
}

pub fn cluster(features: &Path, config: &RunConfig, out: &Path) -> Result<ClusteringReport, CliError> {
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let x = io::load_feature_matrix(features)?;
    let model = fit_pca(&x, config.target_dim).map_err(|e| CliError::Input(e.to_string()))?;
    let reduced = pca_transform(&model, &x).map_err(|e| CliError::Input(e.to_string()))?;
    let outcome = auto_cluster(&reduced, config).map_err(|e| match e {
        ClusteringError::NoValidClustering { trials } => {
            let sweep: Vec<String> = trials
                .iter()
                .map(|t| {
                    let s = t.silhouette.map_or("undefined".to_string(), |s| format!("{s:.4}"));
                    format!("min_pts {}: {} clusters, silhouette {s}", t.min_pts, t.cluster_count)
                })
                .collect();
            CliError::Clustering(format!("no min_pts gave two or more clusters\n  {}", sweep.join("\n  ")))
        }
        e => CliError::Clustering(e.to_string()),
    })?;

    let r = &outcome.result;
    let report = ClusteringReport {
        config: config.clone(),
        input_dim: x.cols(),
        reduced_dim: reduced.cols(),
        epsilon: r.epsilon,
        elbow_index: outcome.profile.elbow_index,
        min_pts: r.min_pts,
        silhouette: r.silhouette,
        cluster_count: r.cluster_count,
        noise_count: r.noise_count(),
        sweep: outcome.trials.clone(),
        points: x
            .ids()
            .iter()
            .zip(r.assignment.iter().zip(&r.roles))
            .map(|(id, (c, role))| PointRecord {
                id: id.clone(),
                cluster: *c,
                role: *role,
            })
            .collect(),
    };

    out_dir(out)?;
    io::write_json(&out.join("pca_model.json"), &model)?;
    io::write_json(&out.join("k_distance.json"), &outcome.profile)?;
    io::write_json(&out.join("clustering.json"), &report)?;
    io::write_json(&out.join("clusters.json"), &outcome.clusters)?;
    io::save_feature_matrix(&reduced, &out.join("reduced.csv"))?;
    finish(
        out,
        "cluster",
        &[("features", features)],
        to_value(config),
        ["pca_model.json", "k_distance.json", "clustering.json", "clusters.json", "reduced.csv"]
            .map(String::from)
            .to_vec(),
    )?;
    Ok(report)
}

// ---- analyze ----

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Up to `k` members per cluster ordered by distance to the nearest core point
/// of the same cluster, ties by id.
pub fn representatives(clusters: &RootCauseClusterSet, space: &FeatureMatrix, k: usize) -> Result<Vec<Vec<String>>, CliError> {
    let row = |id: &str| {
        space
            .position(id)
            .map(|i| space.row(i))
            .ok_or_else(|| CliError::Analysis(format!("id `{id}` is missing from reduced.csv")))
    };
    clusters
        .clusters
        .iter()
        .map(|c| {
            let cores = c.core_ids.iter().map(|id| row(id)).collect::<Result<Vec<_>, _>>()?;
            let mut scored = c
                .member_ids
                .iter()
                .map(|id| {
                    let x = row(id)?;
                    let d = cores.iter().map(|core| euclid(x, core)).fold(f64::INFINITY, f64::min);
                    Ok((d, id))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            Ok(scored.into_iter().take(k).map(|(_, id)| id.clone()).collect())
        })
        .collect()
}

pub fn analyze(
    clusters_dir: &Path,
    params: &Path,
    spec: &Path,
    rr_threshold: f64,
    out: &Path,
) -> Result<AnalysisSummary, CliError> {
    let report: ClusteringReport = io::read_json(&clusters_dir.join("clustering.json"))?;
    let clusters: RootCauseClusterSet = io::read_json(&clusters_dir.join("clusters.json"))?;
    let reduced = io::load_feature_matrix(&clusters_dir.join("reduced.csv"))?;
    let table = io::load_parameter_table(params)?;
    let spec = io::load_unsafe_spec(spec)?;

    let error_ids: Vec<String> = report.points.iter().map(|p| p.id.clone()).collect();
    let missing: Vec<&String> = error_ids.iter().filter(|id| !table.contains(id)).collect();
    if let Some(first) = missing.first() {
        return Err(CliError::Analysis(format!(
            "{} of {} clustered ids have no parameters, first `{first}`",
            missing.len(),
            error_ids.len()
        )));
    }
    let variance = variance_reduction(&clusters, &table, &error_ids).map_err(|e| CliError::Analysis(e.to_string()))?;
    let histogram = reduction_histogram(&variance, &DEFAULT_THRESHOLDS);
    let verdict = explanatory_clusters(&variance, &spec, rr_threshold).map_err(|e| match e {
        RootCauseError::UnknownParameter(p) => {
            CliError::Analysis(format!("spec parameter `{p}` is not a column of the parameter table"))
        }
        e => CliError::Analysis(e.to_string()),
    })?;
    let coverage = unsafe_value_coverage(&verdict, &spec);
    let reps = representatives(&clusters, &reduced, 5)?;

    let summary = AnalysisSummary {
        cluster_count: clusters.len(),
        error_count: error_ids.len(),
        noise_count: report.noise_count,
        inspection_ratio: inspection_ratio(clusters.len(), error_ids.len())
            .map_err(|e| CliError::Analysis(e.to_string()))?,
        rr_threshold,
        explanatory_count: verdict.explanatory_count(),
        explanatory_percent: verdict.explanatory_percent(),
        coverage_count: coverage.coverage_count,
        coverage_total: coverage.total,
        histogram,
    };
    let analysis = Analysis {
        summary: &summary,
        variance: &variance,
        verdict: &verdict,
        coverage: &coverage,
        representatives: &reps,
    };

    out_dir(out)?;
    io::write_json(&out.join("variance.json"), &variance)?;
    io::write_json(&out.join("explanatory.json"), &verdict)?;
    io::write_json(&out.join("coverage.json"), &coverage)?;
    io::write_json(&out.join("summary.json"), &summary)?;
    let write = |name: &str, text: String| {
        fs::write(out.join(name), text).map_err(|source| IoError::Io {
            path: out.join(name),
            source,
        })
    };
    write("report.txt", render_text(&analysis))?;
    write("report.html", render_html(&analysis))?;
    finish(
        out,
        "analyze",
        &[("clusters", clusters_dir), ("params", params)],
        serde_json::json!({ "rr_threshold": rr_threshold }),
        ["variance.json", "explanatory.json", "coverage.json", "summary.json", "report.txt", "report.html"]
            .map(String::from)
            .to_vec(),
    )?;
    Ok(summary)
}

// ---- select ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub test_size: usize,
    pub test_acc: f64,
    pub sf: f64,
    pub balance_target: Option<usize>,
    pub seed: u64,
    pub strategy: Strategy,
}

pub struct SelectOutcome {
    pub budget: usize,
    pub selected: Vec<String>,
    pub manifest: safe_core::selection::RetrainManifest,
}

pub fn select(
    clusters_dir: &Path,
    improvement: &Path,
    train_ids: Option<&Path>,
    cfg: &SelectConfig,
    out: &Path,
) -> Result<SelectOutcome, CliError> {
    if !(0.0..=1.0).contains(&cfg.sf) {
        return Err(CliError::Usage(format!("--sf must be in [0, 1], got {}", cfg.sf)));
    }
    if !(0.0..=1.0).contains(&cfg.test_acc) {
        return Err(CliError::Usage(format!("--test-acc must be in [0, 1], got {}", cfg.test_acc)));
    }
    let model: PcaModel = io::read_json(&clusters_dir.join("pca_model.json"))?;
    model
        .validate()
        .map_err(|e| CliError::Input(format!("pca_model.json: {e}")))?;
    let clusters: RootCauseClusterSet = io::read_json(&clusters_dir.join("clusters.json"))?;
    let space = io::load_feature_matrix(&clusters_dir.join("reduced.csv"))?;
    let imp = io::load_feature_matrix(improvement)?;
    if imp.cols() != model.input_dim() {
        return Err(CliError::Selection(format!(
            "improvement set has {} features, the stored model expects {}",
            imp.cols(),
            model.input_dim()
        )));
    }
    let imp_reduced = pca_transform(&model, &imp).map_err(|e| CliError::Selection(e.to_string()))?;
    let assignment =
        assign_to_clusters(&imp_reduced, &clusters, &space).map_err(|e| CliError::Selection(e.to_string()))?;
    let budget = unsafe_set_size(cfg.test_size, cfg.sf, cfg.test_acc);
    let plan = match cfg.strategy {
        Strategy::Cluster => {
            let quotas = if budget == 0 || assignment.points.is_empty() {
                vec![0; assignment.cluster_count]
            } else {
                cluster_quotas(budget, &assignment.counts()).map_err(|e| CliError::Selection(e.to_string()))?
            };
            select_unsafe_set(&assignment, budget, &quotas)
        }
        Strategy::Random => select_random(imp.ids(), budget, derive_seed(cfg.seed, "select")),
    };
    let selected = plan.selected_ids();
    let balanced = if selected.is_empty() {
        Vec::new()
    } else {
        let target = cfg.balance_target.unwrap_or(selected.len());
        bootstrap_balance(&selected, target, derive_seed(cfg.seed, "balance"))
            .map_err(|e| CliError::Usage(format!("--balance-target: {e}")))?
    };
    let train = match train_ids {
        Some(p) => io::load_id_list(p)?,
        None => Vec::new(),
    };
    let manifest = build_retrain_manifest(&train, &balanced, cfg.seed);

    out_dir(out)?;
    io::write_json(&out.join("plan.json"), &plan)?;
    io::write_json(&out.join("assignment.json"), &assignment)?;
    io::write_json(&out.join("retrain_manifest.json"), &manifest)?;
    let mut inputs = vec![("clusters", clusters_dir), ("improvement", improvement)];
    if let Some(p) = train_ids {
        inputs.push(("train_ids", p));
    }
    finish(
        out,
        "select",
        &inputs,
        to_value(cfg),
        ["plan.json", "assignment.json", "retrain_manifest.json"]
            .map(String::from)
            .to_vec(),
    )?;
    Ok(SelectOutcome {
        budget,
        selected,
        manifest,
    })
}

// ---- compare ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub x: String,
    pub y: String,
    #[serde(flatten)]
    pub stats: StatsComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: Vec<RunSummary>,
    pub pairs: Vec<PairComparison>,
}

/// Pairwise A12 and Mann-Whitney results over accuracy-list files.
pub fn compare(runs: &[PathBuf], out: Option<&Path>) -> Result<ComparisonReport, CliError> {
    if runs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two --runs files".into()));
    }
    let samples = runs
        .iter()
        .map(|p| io::load_real_list(p).map(|v| (p.display().to_string(), v)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pairs = Vec::new();
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let stats =
                compare_samples(&samples[i].1, &samples[j].1).map_err(|e| CliError::Input(e.to_string()))?;
            pairs.push(PairComparison {
                x: samples[i].0.clone(),
                y: samples[j].0.clone(),
                stats,
            });
        }
    }
    let report = ComparisonReport {
        runs: samples
            .iter()
            .map(|(run, v)| RunSummary {
                run: run.clone(),
                n: v.len(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
            })
            .collect(),
        pairs,
    };
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            out_dir(parent)?;
        }
        io::write_json(path, &report)?;
    }
    Ok(report)
}

// ---- synth ----

pub enum SynthSource<'a> {
    ThreeBlob {
        dim: usize,
        points: usize,
        noise_fraction: f64,
    },
    Spec(&'a Path),
}

/// Writes `features.csv`, `params.csv`, `truth.csv` and the generating spec.
/// The three-blob preset also writes the matching `unsafe_spec.json`.
pub fn synth(source: SynthSource, seed: Option<u64>, out: &Path) -> Result<SynthSpec, CliError> {
    let (mut spec, preset) = match source {
        SynthSource::ThreeBlob {
            dim,
            points,
            noise_fraction,
        } => (SynthSpec::three_blob(dim, points, noise_fraction, 0), true),
        SynthSource::Spec(p) => (io::read_json::<SynthSpec>(p)?, false),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = generate(&spec).map_err(|e| CliError::Input(e.to_string()))?;

    out_dir(out)?;
    io::save_feature_matrix(&data.features, &out.join("features.csv"))?;
    io::save_parameter_table(&data.params, &out.join("params.csv"))?;
    let mut truth = String::from("id,blob\n");
    for (id, t) in data.features.ids().iter().zip(&data.truth) {
        match t {
            Some(b) => truth.push_str(&format!("{id},{b}\n")),
            None => truth.push_str(&format!("{id},noise\n")),
        }
    }
    fs::write(out.join("truth.csv"), truth).map_err(|source| IoError::Io {
        path: out.join("truth.csv"),
        source,
    })?;
    io::write_json(&out.join("synth_spec.json"), &spec)?;
    let mut outputs: Vec<String> = ["features.csv", "params.csv", "truth.csv", "synth_spec.json"]
        .map(String::from)
        .to_vec();
    if preset {
        io::save_unsafe_spec(&three_blob_unsafe_spec(), &out.join("unsafe_spec.json"))?;
        outputs.push("unsafe_spec.json".into());
    }
    finish(
        out,
        "synth",
        &[],
        serde_json::json!({ "seed": spec.seed, "points": data.truth.len(), "feature_dim": spec.feature_dim }),
        outputs,
    )?;
    Ok(spec)
}

/// Parses `LO..HI` (inclusive) into a sweep.
pub fn parse_sweep(s: &str) -> Result<MinPtsSweep, String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected LO..HI, got `{s}`"))?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: usize = lo.trim().parse().map_err(|_| format!("bad lower bound in `{s}`"))?;
    let hi: usize = hi.trim().parse().map_err(|_| format!("bad upper bound in `{s}`"))?;
    if lo < 2 || lo > hi {
        return Err(format!("sweep `{s}` needs 2 <= LO <= HI"));
    }
    Ok(MinPtsSweep::new(lo, hi))
}
