use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use endofinder_core::domain::endf::{self, EmbeddingRecord};
use endofinder_core::encoder::{embed_image, train};
use endofinder_core::eval::{bench_retrieval, cross_validate, evaluate_reid, report};
use endofinder_core::hash::{BallTreeIndex, quantize};
use endofinder_core::knn::{classify, explain, EvidenceReport, KnnConfig, Metric};
use endofinder_core::synth::{generate, make_views, mix_seed, read_dataset, write_dataset, SynthSample};
use endofinder_core::{EncoderParams, PipelineConfig};
use serde::Serialize;

use crate::args::{Command, GlobalArgs, ReportArgs};
use crate::{service, UsageError};

/// Salt for the augmentation seed of `synth-gen --views`.
const VIEW_SALT: u64 = 0x5649_4557;

pub fn load_config(global: &GlobalArgs) -> Result<PipelineConfig> {
    let mut cfg = match &global.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("loading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

/// Re-validates after command-line overrides; failures are usage errors.
fn check(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate().map_err(|e| UsageError(e.to_string()).into())
}

pub fn run(command: Command, global: &GlobalArgs) -> Result<()> {
    let mut cfg = load_config(global)?;
    match command {
        Command::SynthGen { out, instances, views } => {
            if let Some(n) = instances {
                cfg.synth.num_instances = n;
            }
            check(&cfg)?;
            synth_gen(&cfg, &out, views)
        }
        Command::Train { data, out, epochs, log } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            check(&cfg)?;
            train_cmd(&cfg, &data, &out, log.as_deref())
        }
        Command::Embed { params, data, out } => embed_cmd(&params, &data, &out),
        Command::Hash { input, out } => hash_cmd(&input, out.as_deref()),
        Command::IndexBuild { input, out } => index_build(&cfg, &input, &out),
        Command::IndexQuery { index, query, k, out } => {
            if let Some(k) = k {
                cfg.knn.k = k;
            }
            check(&cfg)?;
            if cfg.knn.metric != Metric::Hamming {
                bail!(UsageError("index files hold hash codes only; set knn.metric to hamming".into()));
            }
            let reports = index_query(&index, &query, cfg.knn.k)?;
            emit_json(&reports, out.as_deref())
        }
        Command::EvalReid { input, report: r } => {
            let (_, items) = read_endf(&input)?;
            let rep = evaluate_reid(&items).with_context(|| format!("evaluating {}", input.display()))?;
            emit_report(&rep, &report::reid_table(&rep), &r)
        }
        Command::EvalClassify { input, folds, k, report: r } => {
            if let Some(f) = folds {
                cfg.eval.n_folds = f;
            }
            if let Some(k) = k {
                cfg.knn.k = k;
            }
            check(&cfg)?;
            let (_, items) = read_endf(&input)?;
            let rep = cross_validate(&items, &cfg.cv_config(), cfg.eval.seed)
                .with_context(|| format!("cross-validating {}", input.display()))?;
            emit_report(&rep, &report::classify_table(&rep), &r)
        }
        Command::Bench { corpus_size, dim, queries, k, report: r } => {
            let b = &mut cfg.eval.bench;
            if let Some(n) = corpus_size {
                b.corpus_size = n;
            }
            if let Some(d) = dim {
                b.dim = d;
                b.code_bits = d;
            }
            if let Some(q) = queries {
                b.n_queries = q;
            }
            if let Some(k) = k {
                b.k = k;
            }
            check(&cfg)?;
            let rep = bench_retrieval(&cfg.eval.bench)?;
            emit_report(&rep, &report::bench_table(&rep), &r)
        }
        Command::Serve { index, params, host, port, k } => {
            if let Some(h) = host {
                cfg.serve.host = h;
            }
            if let Some(p) = port {
                cfg.serve.port = p;
            }
            if let Some(k) = k {
                cfg.knn.k = k;
            }
            check(&cfg)?;
            serve_cmd(&cfg, &index, params.as_deref())
        }
    }
}

pub fn synth_gen(cfg: &PipelineConfig, out: &Path, views: bool) -> Result<()> {
    let mut samples = generate(&cfg.synth)?;
    if views {
        samples = make_views(&samples, 2, mix_seed(cfg.synth.seed, VIEW_SALT));
    }
    write_dataset(out, &samples, cfg.synth.num_classes).with_context(|| format!("writing dataset to {}", out.display()))?;
    eprintln!("wrote {} images to {}", samples.len(), out.display());
    Ok(())
}

fn read_data(dir: &Path) -> Result<Vec<SynthSample>> {
    let (_, samples) = read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    Ok(samples)
}

fn read_endf(path: &Path) -> Result<(usize, Vec<EmbeddingRecord>)> {
    endf::read(path).with_context(|| format!("reading embeddings {}", path.display()))
}

fn train_cmd(cfg: &PipelineConfig, data: &Path, out: &Path, log_path: Option<&Path>) -> Result<()> {
    let samples = read_data(data)?;
    let (params, log) = train(&samples, &cfg.train_config())?;
    params.save(out).with_context(|| format!("writing {}", out.display()))?;
    if let (Some(first), Some(last)) = (&log.initial, log.epochs.last()) {
        eprintln!("loss {:.4} -> {:.4} over {} epochs", first.total, last.loss.total, log.epochs.len());
    }
    if let Some(path) = log_path {
        fs::write(path, serde_json::to_string_pretty(&log)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Embeds samples in order, keeping their ids and class labels.
pub fn embed_samples(params: &EncoderParams, samples: &[SynthSample]) -> Result<Vec<EmbeddingRecord>> {
    samples
        .iter()
        .map(|s| {
            let embedding = embed_image(params, &s.image).with_context(|| format!("embedding {}", s.instance_id))?;
            Ok(EmbeddingRecord {
                id: s.instance_id.clone(),
                label: i32::try_from(s.class_label)?,
                embedding,
            })
        })
        .collect()
}

fn embed_cmd(params_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let params = EncoderParams::load(params_path).with_context(|| format!("loading {}", params_path.display()))?;
    let records = embed_samples(&params, &read_data(data)?)?;
    endf::write(out, params.dim, &records).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} embeddings to {}", records.len(), out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct CodeRow {
    id: String,
    label: i32,
    hash_hex: String,
}

#[derive(Debug, Serialize)]
struct CodeFile {
    bits: usize,
    codes: Vec<CodeRow>,
}

fn hash_cmd(input: &Path, out: Option<&Path>) -> Result<()> {
    let (dim, items) = read_endf(input)?;
    let codes = items
        .into_iter()
        .map(|r| CodeRow {
            hash_hex: quantize(&r.embedding).to_hex(),
            id: r.id,
            label: r.label,
        })
        .collect();
    emit_json(&CodeFile { bits: dim, codes }, out)
}

pub fn build_index(cfg: &PipelineConfig, items: &[EmbeddingRecord]) -> Result<BallTreeIndex> {
    let records = items.iter().map(EmbeddingRecord::to_reference).collect::<endofinder_core::Result<Vec<_>>>()?;
    Ok(BallTreeIndex::build(records, &cfg.hash)?)
}

fn index_build(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let (_, items) = read_endf(input)?;
    let index = build_index(cfg, &items).with_context(|| format!("indexing {}", input.display()))?;
    index.save(out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("indexed {} records ({} nodes) into {}", index.len(), index.num_nodes(), out.display());
    Ok(())
}

fn load_index(path: &Path) -> Result<BallTreeIndex> {
    BallTreeIndex::load(path).with_context(|| format!("loading index {}", path.display()))
}

pub fn index_query(index_path: &Path, query: &Path, k: usize) -> Result<Vec<EvidenceReport>> {
    let index = load_index(index_path)?;
    let (_, items) = read_endf(query)?;
    let cfg = KnnConfig { k, metric: Metric::Hamming };
    items
        .iter()
        .map(|q| {
            let result = classify(&index, &q.embedding, &cfg).with_context(|| format!("querying {}", q.id))?;
            Ok(explain(&result, index.records(), Some(&q.id))?)
        })
        .collect()
}

fn serve_cmd(cfg: &PipelineConfig, index_path: &Path, params: Option<&Path>) -> Result<()> {
    let index = load_index(index_path)?;
    if let Some(p) = params {
        let params = EncoderParams::load(p).with_context(|| format!("loading {}", p.display()))?;
        if params.dim != index.code_bits() {
            bail!("encoder dimension {} does not match the {}-bit index", params.dim, index.code_bits());
        }
    }
    let state = service::ServiceState::new(index, cfg.knn.k);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let addr = format!("{}:{}", cfg.serve.host, cfg.serve.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        service::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn emit_report<T: Serialize>(value: &T, table: &str, args: &ReportArgs) -> Result<()> {
    if args.json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{table}");
    }
    if let Some(path) = &args.out {
        fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
