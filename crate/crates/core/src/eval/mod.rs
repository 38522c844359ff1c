//! Retrieval and classification metrics, the cross-validation protocol, the
//! re-identification harness and the retrieval-latency benchmark.

mod bench;
mod crossval;
mod kfold;
mod metrics;
mod reid;
pub mod report;

pub use bench::{bench_retrieval, clustered_corpus, BenchConfig, BenchReport};
pub use crossval::{cross_validate, CvConfig, CvReport, FoldResult, MeanMetrics, MethodCv};
pub use kfold::{kfold, FoldPlan};
pub use metrics::{
    acc_at_1, classification_metrics, micro_ap, recall_at_p90, recall_at_precision,
    ClassificationMetrics, QueryRanking, ScoredPair,
};
pub use reid::{evaluate_reid, reid_pairs, ReidMethod, ReidReport, ReidRow};
