use std::path::Path;
use std::process::{Command, Output};

use endofinder_core::domain::endf::{self, EmbeddingRecord};
use endofinder_core::hash::BallTreeIndex;
use endofinder_core::knn::{classify, explain, EvidenceReport, KnnConfig, Metric};
use endofinder_core::{l2_normalize, quantize, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn endofinder(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_endofinder")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn random_records(rng: &mut ChaCha8Rng, n: usize, dim: usize, prefix: &str) -> Vec<EmbeddingRecord> {
    (0..n)
        .map(|i| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            EmbeddingRecord {
                id: format!("{prefix}{i:03}"),
                label: 1 + (i % 2) as i32,
                embedding: l2_normalize(&v).unwrap(),
            }
        })
        .collect()
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    assert_eq!(endofinder(&[]).status.code(), Some(1));
    assert_eq!(endofinder(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(endofinder(&["--help"]).status.code(), Some(0));
    assert_eq!(endofinder(&["hash", "--input"]).status.code(), Some(1));

    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.endf");
    let out = endofinder(&["hash", "--input", path(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.endf"));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let file = tmp.path().join("e.endf");
    endf::write(&file, 8, &random_records(&mut rng, 3, 8, "r")).unwrap();
    let mut bytes = std::fs::read(&file).unwrap();
    bytes.truncate(bytes.len() - 5);
    std::fs::write(&file, &bytes).unwrap();
    let out = endofinder(&["hash", "--input", path(&file)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("e.endf") && err.contains("offset"), "{err}");

    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"knn": {"k": 3, "kk": 1}}"#).unwrap();
    assert_eq!(endofinder(&["bench", "--config", path(&cfg)]).status.code(), Some(2));
    assert_eq!(endofinder(&["bench", "--k", "0", "--corpus-size", "10"]).status.code(), Some(1));
}

#[test]
fn hash_writes_the_sign_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let items = random_records(&mut rng, 5, 20, "h");
    let file = tmp.path().join("h.endf");
    endf::write(&file, 20, &items).unwrap();
    let out = endofinder(&["hash", "--input", path(&file)]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["bits"], 20);
    let (_, stored) = endf::read(&file).unwrap();
    for (row, item) in v["codes"].as_array().unwrap().iter().zip(&stored) {
        assert_eq!(row["id"], item.id.as_str());
        assert_eq!(row["hash_hex"], quantize(&item.embedding).to_hex().as_str());
    }
}

#[test]
fn identical_views_give_perfect_reid() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut items = Vec::new();
    for base in random_records(&mut rng, 30, 48, "inst-") {
        for v in 0..2 {
            items.push(EmbeddingRecord {
                id: format!("{}#v{v}", base.id),
                ..base.clone()
            });
        }
    }
    let file = tmp.path().join("views.endf");
    endf::write(&file, 48, &items).unwrap();
    let out = endofinder(&["eval-reid", "--input", path(&file), "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row["uap"], 1.0, "{row}");
        assert_eq!(row["acc_at_1"], 1.0, "{row}");
    }
    let table = endofinder(&["eval-reid", "--input", path(&file)]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("uAP"));
}

#[test]
fn index_query_matches_library_classify() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let refs = random_records(&mut rng, 120, 32, "ref-");
    let queries = random_records(&mut rng, 25, 32, "q-");
    let (ref_file, query_file, index_file) = (tmp.path().join("r.endf"), tmp.path().join("q.endf"), tmp.path().join("r.endx"));
    endf::write(&ref_file, 32, &refs).unwrap();
    endf::write(&query_file, 32, &queries).unwrap();
    assert!(endofinder(&["index-build", "--input", path(&ref_file), "--out", path(&index_file)]).status.success());

    let out = endofinder(&["index-query", "--index", path(&index_file), "--query", path(&query_file), "--k", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got: Vec<EvidenceReport> = serde_json::from_slice(&out.stdout).unwrap();

    let index = BallTreeIndex::load(&index_file).unwrap();
    let cfg = KnnConfig { k: 3, metric: Metric::Hamming };
    assert_eq!(got.len(), queries.len());
    for (report, (_, q)) in got.iter().zip(endf::read(&query_file).unwrap().1.iter().enumerate()) {
        let want = explain(&classify(&index, &q.embedding, &cfg).unwrap(), index.records(), Some(&q.id)).unwrap();
        assert_eq!(report, &want);
    }
}

#[test]
fn small_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.synth.num_instances = 30;
    cfg.synth.image_size = 32;
    cfg.train.epochs = 2;
    let config = tmp.path().join("config.json");
    std::fs::write(&config, cfg.to_json()).unwrap();
    let p = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    let c = path(&config);
    let steps: Vec<Vec<String>> = vec![
        vec!["synth-gen", "--out", &p("data"), "--config", c],
        vec!["synth-gen", "--out", &p("views"), "--views", "--config", c],
        vec!["train", "--data", &p("data"), "--out", &p("m.endp"), "--log", &p("log.json"), "--config", c],
        vec!["embed", "--params", &p("m.endp"), "--data", &p("data"), "--out", &p("e.endf")],
        vec!["embed", "--params", &p("m.endp"), "--data", &p("views"), "--out", &p("v.endf")],
        vec!["eval-reid", "--input", &p("v.endf"), "--out", &p("reid.json")],
        vec!["eval-classify", "--input", &p("e.endf"), "--out", &p("cv.json"), "--config", c],
    ]
    .into_iter()
    .map(|s| s.into_iter().map(String::from).collect())
    .collect();
    for s in &steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        let out = endofinder(&args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let log: Value = serde_json::from_str(&std::fs::read_to_string(p("log.json")).unwrap()).unwrap();
    assert_eq!(log["epochs"].as_array().unwrap().len(), 2);
    let cv: Value = serde_json::from_str(&std::fs::read_to_string(p("cv.json")).unwrap()).unwrap();
    assert_eq!(cv["methods"][0]["folds"].as_array().unwrap().len(), 5);
    let (_, views) = endf::read(p("v.endf")).unwrap();
    assert_eq!(views.len(), 60);
}

#[test]
fn bench_reports_speedup() {
    let out = endofinder(&["bench", "--corpus-size", "2000", "--dim", "64", "--queries", "20", "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["speedup"].as_f64().unwrap() > 0.0);
    let fps = v["fps"].as_f64().unwrap();
    assert!((fps - 1.0 / v["hash_query_s"].as_f64().unwrap()).abs() < 1e-6 * fps);
}
