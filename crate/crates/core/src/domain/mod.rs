//! Core value types and vector math shared by every stage of the pipeline.

mod code;
pub mod endf;
pub(crate) mod wire;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use code::HashCode;

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Tolerance on `‖z‖₂ = 1` for a normalized embedding.
pub const UNIT_TOL: f64 = 1e-6;

/// A single-channel image with pixels in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::BadSpec("image dimensions must be positive".into()));
        }
        if pixels.len() != height * width {
            return Err(Error::DimMismatch {
                expected: height * width,
                found: pixels.len(),
            });
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds an image, clamping every pixel into `[0, 1]`.
    pub(crate) fn from_clamped(height: usize, width: usize, mut pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), height * width);
        for p in &mut pixels {
            *p = p.clamp(0.0, 1.0);
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

/// Binary polyp segmentation; `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    height: usize,
    width: usize,
    values: Vec<bool>,
}

impl SegMask {
    pub fn new(height: usize, width: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::DimMismatch {
                expected: height * width,
                found: values.len(),
            });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![false; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![true; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> bool {
        self.values[row * self.width + col]
    }

    /// Fraction of pixels marked foreground.
    pub fn fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|v| **v).count() as f64 / self.values.len() as f64
    }
}

/// A real embedding vector. Vectors produced by [`l2_normalize`] are unit-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wraps finite values as-is, without normalizing.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimMismatch {
                expected: 1,
                found: 0,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scales `v` to unit Euclidean norm.
pub fn l2_normalize(v: &[f64]) -> Result<EmbeddingVector> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let n = norm(v);
    if n <= NORM_EPS {
        return Err(Error::ZeroVector);
    }
    Ok(EmbeddingVector(v.iter().map(|x| x / n).collect()))
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(dot(&a.0, &b.0).clamp(-1.0, 1.0))
}

/// Patches of one image as a row-major `rows × cols` matrix (one patch per row).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl PatchMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// One row of the reference database.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRecord {
    pub id: String,
    pub label: u32,
    pub code: HashCode,
    pub raw: Option<EmbeddingVector>,
}

impl ReferenceRecord {
    pub fn new(id: impl Into<String>, label: u32, code: HashCode) -> Self {
        Self {
            id: id.into(),
            label,
            code,
            raw: None,
        }
    }

    /// Quantizes `raw` and keeps it alongside the code.
    pub fn from_embedding(id: impl Into<String>, label: u32, raw: EmbeddingVector) -> Self {
        Self {
            id: id.into(),
            label,
            code: crate::hash::quantize(&raw),
            raw: Some(raw),
        }
    }
}

/// Checks id uniqueness/non-emptiness, label range and uniform code length.
pub fn validate_records(records: &[ReferenceRecord], num_classes: Option<u32>) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(records.len());
    let bits = records.first().map(|r| r.code.bits());
    for r in records {
        if r.id.is_empty() {
            return Err(Error::InvalidConfig("record id must be nonempty".into()));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
        if r.label == 0 || num_classes.is_some_and(|c| r.label > c) {
            return Err(Error::InvalidConfig(format!(
                "record {:?} has label {} outside 1..={}",
                r.id,
                r.label,
                num_classes.map_or("C".to_string(), |c| c.to_string())
            )));
        }
        if Some(r.code.bits()) != bits {
            return Err(Error::DimMismatch {
                expected: bits.unwrap_or(0),
                found: r.code.bits(),
            });
        }
    }
    Ok(())
}

/// A retrieved reference record with its distance to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub label: u32,
    pub distance: f64,
}

/// Ranked neighbors plus the vote that produced the predicted label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub neighbors: Vec<Neighbor>,
    pub predicted_label: u32,
    /// Votes per class present among the neighbors.
    pub vote_histogram: BTreeMap<u32, usize>,
}
