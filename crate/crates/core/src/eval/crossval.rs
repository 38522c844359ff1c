use serde::{Deserialize, Serialize};

use super::kfold::{kfold, FoldPlan};
use super::metrics::{classification_metrics, ClassificationMetrics};
use crate::domain::endf::EmbeddingRecord;
use crate::domain::ReferenceRecord;
use crate::error::Result;
use crate::hash::{BallTreeConfig, BallTreeIndex};
use crate::knn::{classify, KnnConfig, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub n_folds: usize,
    pub k: usize,
    /// The class counted as "positive" for SEN/SPE/F1.
    pub positive_class: u32,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            k: 5,
            positive_class: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_reference: usize,
    pub n_test: usize,
    pub metrics: ClassificationMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCv {
    pub metric: Metric,
    pub folds: Vec<FoldResult>,
    /// Per-metric mean over the folds where that metric is defined.
    pub mean: MeanMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub acc: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: CvConfig,
    pub plan: FoldPlan,
    pub methods: Vec<MethodCv>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Rotating k-fold evaluation: each fold in turn is classified against the
/// union of the other folds, once with raw cosine and once with hashed retrieval.
pub fn cross_validate(items: &[EmbeddingRecord], cfg: &CvConfig, seed: u64) -> Result<CvReport> {
    let records = items.iter().map(EmbeddingRecord::to_reference).collect::<Result<Vec<_>>>()?;
    crate::domain::validate_records(&records, None)?;
    let plan = kfold(records.len(), cfg.n_folds, seed)?;

    let mut methods = Vec::new();
    for metric in [Metric::Cosine, Metric::Hamming] {
        let knn = KnnConfig { k: cfg.k, metric };
        let mut folds = Vec::with_capacity(cfg.n_folds);
        for fold in 0..cfg.n_folds {
            let refs: Vec<ReferenceRecord> = plan.train_indices(fold).into_iter().map(|i| records[i].clone()).collect();
            let test = plan.test_indices(fold);
            let n_reference = refs.len();
            let index = BallTreeIndex::build(refs, &BallTreeConfig::default())?;
            let mut preds = Vec::with_capacity(test.len());
            let mut truths = Vec::with_capacity(test.len());
            for &i in &test {
                let query = records[i].raw.as_ref().expect("built from embeddings");
                preds.push(classify(&index, query, &knn)?.predicted_label);
                truths.push(records[i].label);
            }
            folds.push(FoldResult {
                fold,
                n_reference,
                n_test: test.len(),
                metrics: classification_metrics(&preds, &truths, cfg.positive_class)?,
            });
        }
        let mean = MeanMetrics {
            acc: mean_of(folds.iter().map(|f| f.metrics.acc)),
            sen: mean_of(folds.iter().map(|f| f.metrics.sen)),
            spe: mean_of(folds.iter().map(|f| f.metrics.spe)),
            f1: mean_of(folds.iter().map(|f| f.metrics.f1)),
        };
        methods.push(MethodCv { metric, folds, mean });
    }
    Ok(CvReport {
        config: *cfg,
        plan,
        methods,
    })
}
