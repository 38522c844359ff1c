//! Retrieval-based polyp diagnosis at desk scale.
//!
//! The pipeline learns embeddings with a combined masked-reconstruction and
//! contrastive objective, sign-quantizes them into packed binary codes,
//! indexes the codes in a Hamming-space ball tree, and classifies queries by
//! K-nearest-neighbor majority vote. The retrieved neighbors are returned as
//! evidence alongside every prediction.
//!
//! Module map:
//!
//! - [`domain`]: value types, vector math and the `.endf` embedding file.
//! - [`synth`]: deterministic synthetic images, masks and augmentations.
//! - [`masking`]: foreground-aware patch masking plans.
//! - [`objectives`]: reconstruction and contrastive losses with gradients.
//! - [`encoder`]: the patch encoder/decoder, its training loop and `.endp` params.
//! - [`hash`]: sign quantization, Hamming arithmetic, the ball tree and `.endx`.
//! - [`knn`]: majority-vote classification and evidence reports.
//! - [`eval`]: retrieval and classification metrics, k-fold plans, benchmarks.
//! - [`config`]: the serialized pipeline configuration.

pub mod config;
pub mod domain;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hash;
pub mod knn;
pub mod masking;
pub mod objectives;
pub mod synth;

pub use config::PipelineConfig;
pub use domain::{
    cosine_similarity, l2_normalize, EmbeddingVector, HashCode, Image, Neighbor, PatchMatrix, ReferenceRecord,
    RetrievalResult, SegMask,
};
pub use encoder::{EncoderParams, TrainConfig, TrainLog};
pub use error::{Error, Result};
pub use hash::{hamming, quantize, BallTreeIndex, QueryBudget};
pub use knn::{classify, explain, EvidenceReport, KnnConfig, Metric};
pub use masking::{MaskPlan, MaskingConfig};
pub use objectives::{BatchPairing, LossConfig};
pub use synth::{SynthSample, SynthSpec};
