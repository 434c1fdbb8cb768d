use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn safe(args: &[&str]) -> Output {
    safe_env(args, &[])
}

fn safe_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_safe"));
    cmd.args(args).env_remove("SAFE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Small three-blob dataset plus its clustering.
fn clustered(dir: &Path) -> (PathBuf, PathBuf) {
    let syn = dir.join("syn");
    let cl = dir.join("cl");
    ok(&safe(&["synth", "--preset", "three-blob", "--dim", "32", "--points", "90", "--seed", "5", "--out", s(&syn)]));
    ok(&safe(&[
        "cluster",
        "--features",
        s(&syn.join("features.csv")),
        "--target-dim",
        "16",
        "--out",
        s(&cl),
    ]));
    (syn, cl)
}

fn write_pgm(path: &Path, w: usize, h: usize, f: impl Fn(usize, usize) -> u8) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            bytes.push(f(x, y));
        }
    }
    fs::write(path, bytes).unwrap();
}

#[test]
fn extract_from_images() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = dir.path().join("imgs");
    fs::create_dir(&imgs).unwrap();
    for i in 0..3u8 {
        write_pgm(&imgs.join(format!("eye_{i}.pgm")), 240, 230, |x, y| ((x + y) as u8).wrapping_mul(i + 1));
    }
    fs::write(imgs.join("notes.txt"), "skip me").unwrap();
    let out = dir.path().join("f.csv");
    ok(&safe(&["extract", "--images", s(&imgs), "--out", s(&out)]));
    let x = safe_cli::io::load_feature_matrix(&out).unwrap();
    assert_eq!((x.rows(), x.cols()), (3, 512));
    assert_eq!(x.ids(), &["eye_0", "eye_1", "eye_2"]);

    let single = dir.path().join("g.csv");
    ok(&safe_env(&["extract", "--images", s(&imgs), "--out", s(&single)], &[("SAFE_THREADS", "1")]));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&single).unwrap());
    let bad = safe_env(&["extract", "--images", s(&imgs), "--out", s(&single)], &[("SAFE_THREADS", "zero")]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn extract_small_image_is_rejected_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    write_pgm(&dir.path().join("tiny.pgm"), 20, 20, |_, _| 7);
    let out = safe(&["extract", "--images", s(dir.path()), "--out", s(&dir.path().join("f.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tiny.pgm"));
}

#[test]
fn extract_validates_features_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.csv");
    fs::write(&f, "id,f0,f1\na,1,2\nb,3,4\n").unwrap();
    let g = dir.path().join("g.csv");
    ok(&safe(&["extract", "--features", s(&f), "--out", s(&g)]));
    assert_eq!(fs::read_to_string(&g).unwrap().lines().count(), 3);

    let both = safe(&["extract", "--features", s(&f), "--images", s(dir.path()), "--out", s(&g)]);
    assert_eq!(both.status.code(), Some(2));
    assert_eq!(safe(&["extract", "--out", s(&g)]).status.code(), Some(2));

    fs::write(&f, "id,f0,f1\na,1,2\nb,3\n").unwrap();
    let ragged = safe(&["extract", "--features", s(&f), "--out", s(&g)]);
    assert_eq!(ragged.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&ragged.stderr).contains("line 3"));
}

#[test]
fn cluster_finds_planted_blobs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (syn, cl) = clustered(dir.path());
    let clusters = json(cl.join("clusters.json"));
    assert_eq!(clusters["clusters"].as_array().unwrap().len(), 3);
    let report = json(cl.join("clustering.json"));
    assert_eq!(report["points"].as_array().unwrap().len(), 90);
    assert_eq!(report["config"]["target_dim"], 16);
    let manifest = json(cl.join("manifest.json"));
    assert!(manifest["outputs"].as_array().unwrap().iter().all(|o| cl.join(o.as_str().unwrap()).exists()));

    let again = dir.path().join("cl2");
    ok(&safe(&["cluster", "--features", s(&syn.join("features.csv")), "--target-dim", "16", "--out", s(&again)]));
    for f in ["pca_model.json", "k_distance.json", "clustering.json", "clusters.json", "manifest.json", "reduced.csv"] {
        assert_eq!(fs::read(cl.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn single_blob_exits_3_with_sweep_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("one.json");
    fs::write(
        &spec,
        r#"{"blobs": [{"center": [0, 0, 0, 0], "spread": 1.0, "count": 40}], "noise_count": 0, "feature_dim": 4, "seed": 3}"#,
    )
    .unwrap();
    ok(&safe(&["synth", "--spec", s(&spec), "--out", s(&dir.path().join("syn"))]));
    let out = safe(&[
        "cluster",
        "--features",
        s(&dir.path().join("syn/features.csv")),
        "--target-dim",
        "4",
        "--out",
        s(&dir.path().join("cl")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("min_pts 3") && err.contains("silhouette"), "{err}");
}

#[test]
fn analyze_reports_full_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let (syn, cl) = clustered(dir.path());
    let an = dir.path().join("an");
    ok(&safe(&[
        "analyze",
        "--clusters",
        s(&cl),
        "--params",
        s(&syn.join("params.csv")),
        "--spec",
        s(&syn.join("unsafe_spec.json")),
        "--out",
        s(&an),
    ]));
    let summary = json(an.join("summary.json"));
    assert_eq!(summary["coverage_count"], summary["coverage_total"]);
    assert_eq!(summary["explanatory_percent"], 100.0);
    let text = fs::read_to_string(an.join("report.txt")).unwrap();
    assert!(!text.contains('✗'));
    let html = fs::read_to_string(an.join("report.html")).unwrap();
    assert!(html.starts_with("<!DOCTYPE html>") && !html.contains("<script") && !html.contains("http"));
    // 3 clusters over 90 errors: 3 * 5 / 90 = 16.66..%
    assert_eq!(summary["inspection_ratio"], 16.66);
}

#[test]
fn analyze_with_empty_spec_and_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let (syn, cl) = clustered(dir.path());
    let empty = dir.path().join("empty.json");
    fs::write(&empty, "{}").unwrap();
    let an = dir.path().join("an");
    let params = syn.join("params.csv");
    ok(&safe(&["analyze", "--clusters", s(&cl), "--params", s(&params), "--spec", s(&empty), "--out", s(&an)]));
    assert_eq!(json(an.join("summary.json"))["explanatory_percent"], 0.0);

    let text = fs::read_to_string(&params).unwrap();
    let short: Vec<&str> = text.lines().take(10).collect();
    let partial = dir.path().join("partial.csv");
    fs::write(&partial, short.join("\n")).unwrap();
    let out = safe(&["analyze", "--clusters", s(&cl), "--params", s(&partial), "--spec", s(&empty), "--out", s(&an)]);
    assert_eq!(out.status.code(), Some(4));

    let other = dir.path().join("other.json");
    fs::write(&other, r#"{"Openness": {"unsafe_values": [1], "rule": {"kind": "at_most"}}}"#).unwrap();
    let out = safe(&["analyze", "--clusters", s(&cl), "--params", s(&params), "--spec", s(&other), "--out", s(&an)]);
    assert_eq!(out.status.code(), Some(4));
}

fn select_args<'a>(cl: &'a Path, imp: &'a Path, out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "select",
        "--clusters",
        s(cl),
        "--improvement",
        s(imp),
        "--test-size",
        "1000",
        "--test-acc",
        "0.9",
        "--out",
        s(out),
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn select_plan_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cl) = clustered(dir.path());
    let imp_dir = dir.path().join("imp");
    ok(&safe(&["synth", "--preset", "three-blob", "--dim", "32", "--points", "60", "--seed", "9", "--out", s(&imp_dir)]));
    let imp = imp_dir.join("features.csv");
    let train = dir.path().join("train.txt");
    fs::write(&train, (0..100).map(|i| format!("t{i}\n")).collect::<String>()).unwrap();

    let out = dir.path().join("sel");
    ok(&safe(&select_args(&cl, &imp, &out, &["--train-ids", s(&train), "--balance-target", "40", "--seed", "7"])));
    let plan = json(out.join("plan.json"));
    // 1000 * 0.3 * 0.1 with the default sf
    assert_eq!(plan["budget"], 30);
    let selected: usize = plan["clusters"].as_array().unwrap().iter().map(|c| c["selected"].as_array().unwrap().len()).sum();
    assert_eq!(selected, 30);
    let manifest = json(out.join("retrain_manifest.json"));
    let weight: u64 = manifest["entries"].as_array().unwrap().iter().map(|e| e["weight"].as_u64().unwrap()).sum();
    assert_eq!(weight, 140);
    assert_eq!(json(out.join("manifest.json"))["config"]["sf"], 0.3);

    let again = dir.path().join("sel2");
    ok(&safe(&select_args(&cl, &imp, &again, &["--train-ids", s(&train), "--balance-target", "40", "--seed", "7"])));
    for f in ["plan.json", "assignment.json", "retrain_manifest.json", "manifest.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }

    let zero = dir.path().join("zero");
    ok(&safe(&select_args(&cl, &imp, &zero, &["--sf", "0", "--train-ids", s(&train)])));
    let manifest = json(zero.join("retrain_manifest.json"));
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 100);
    assert!(manifest["unsafe_entries"].as_array().unwrap().is_empty());

    let random = dir.path().join("random");
    ok(&safe(&select_args(&cl, &imp, &random, &["--strategy", "random", "--seed", "7"])));
    let plan = json(random.join("plan.json"));
    assert_eq!(plan["strategy"], "random");
    assert_eq!(plan["clusters"][0]["selected"].as_array().unwrap().len(), 30);
}

#[test]
fn select_rejects_wrong_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cl) = clustered(dir.path());
    let imp = dir.path().join("imp.csv");
    fs::write(&imp, "id,f0,f1\na,1,2\n").unwrap();
    let out = safe(&select_args(&cl, &imp, &dir.path().join("sel"), &[]));
    assert_eq!(out.status.code(), Some(5));
}

/// Projects with the stored model, scans all cores by brute force and applies
/// largest-remainder quotas independently of the library.
#[test]
fn selection_matches_nearest_core_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cl) = clustered(dir.path());
    let imp_dir = dir.path().join("imp");
    ok(&safe(&["synth", "--preset", "three-blob", "--dim", "32", "--points", "45", "--seed", "11", "--out", s(&imp_dir)]));
    let imp = imp_dir.join("features.csv");
    let out = dir.path().join("sel");
    ok(&safe(&[
        "select",
        "--clusters",
        s(&cl),
        "--improvement",
        s(&imp),
        "--test-size",
        "200",
        "--test-acc",
        "0.8",
        "--out",
        s(&out),
    ]));

    let model = json(cl.join("pca_model.json"));
    let mean: Vec<f64> = serde_json::from_value(model["mean"].clone()).unwrap();
    let comps: Vec<Vec<f64>> = serde_json::from_value(model["components"].clone()).unwrap();
    let space = safe_cli::io::load_feature_matrix(&cl.join("reduced.csv")).unwrap();
    let x = safe_cli::io::load_feature_matrix(&imp).unwrap();
    let clusters = json(cl.join("clusters.json"));
    let cores: Vec<(usize, Vec<f64>)> = clusters["clusters"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .flat_map(|(c, cl)| {
            cl["core_ids"]
                .as_array()
                .unwrap()
                .iter()
                .map(|id| (c, space.row(space.position(id.as_str().unwrap()).unwrap()).to_vec()))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut per_cluster: Vec<Vec<(f64, String)>> = vec![Vec::new(); 3];
    for (i, row) in x.iter_rows().enumerate() {
        let y: Vec<f64> = comps
            .iter()
            .map(|c| c.iter().zip(row.iter().zip(&mean)).map(|(w, (v, m))| w * (v - m)).sum())
            .collect();
        let (c, d) = cores
            .iter()
            .map(|(c, core)| (*c, core.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()))
            .fold((usize::MAX, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        per_cluster[c].push((d, x.ids()[i].clone()));
    }
    // 200 * 0.3 * 0.2 = 12
    let budget = 12usize;
    let total: usize = per_cluster.iter().map(Vec::len).sum();
    let mut quotas: Vec<usize> = per_cluster.iter().map(|v| budget * v.len() / total).collect();
    let mut rem: Vec<(usize, usize)> = per_cluster.iter().enumerate().map(|(i, v)| (budget * v.len() % total, i)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = budget - quotas.iter().sum::<usize>();
    for (_, i) in rem.into_iter().take(short) {
        quotas[i] += 1;
    }
    let plan = json(out.join("plan.json"));
    for (c, mut pts) in per_cluster.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        let want: Vec<String> = pts.into_iter().take(quotas[c]).map(|p| p.1).collect();
        let got: Vec<String> = plan["clusters"][c]["selected"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["id"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(got, want, "cluster {c}");
    }
}

#[test]
fn compare_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    let c = dir.path().join("c.txt");
    fs::write(&a, "0.90\n0.91\n0.92\n0.93\n").unwrap();
    fs::write(&b, "0.90,0.91,0.92,0.93\n").unwrap();
    fs::write(&c, "0.95 0.96 0.97 0.98\n").unwrap();
    let out = dir.path().join("cmp.json");
    ok(&safe(&["compare", "--runs", s(&a), s(&b), s(&c), "--out", s(&out)]));
    let r = json(out);
    let pairs = r["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 3);
    assert_eq!(pairs[0]["a12"], 0.5);
    assert!(pairs[0]["p_value"].as_f64().unwrap() > 0.99);
    assert_eq!(pairs[2]["a12"], 0.0);
    assert_eq!(safe(&["compare", "--runs", s(&a)]).status.code(), Some(2));
}
