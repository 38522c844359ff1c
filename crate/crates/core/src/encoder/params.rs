use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::wire::{Reader, Writer};
use crate::domain::PatchMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"ENDP1\0";

/// Weights are row-major `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub patch_size: usize,
    pub hidden: usize,
    pub dim: usize,
    pub embed_w: Vec<f64>,
    pub embed_b: Vec<f64>,
    pub mask_token: Vec<f64>,
    pub proj_w: Vec<f64>,
    pub proj_b: Vec<f64>,
    /// Running mean of the projection output, subtracted before normalization.
    /// Maintained by training as a moving average rather than by gradient steps.
    pub center: Vec<f64>,
    pub decode_w: Vec<f64>,
    pub decode_b: Vec<f64>,
}

impl EncoderParams {
    pub const INIT_SCALE: f64 = 0.05;

    /// Uniform(−0.05, 0.05) weights and biases; zero mask token and center.
    pub fn init(patch_size: usize, hidden: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(patch_size, hidden, dim);
        for (name, t) in p.tensors_mut() {
            if name != "mask_token" && name != "center" {
                t.iter_mut()
                    .for_each(|v| *v = rng.random_range(-Self::INIT_SCALE..Self::INIT_SCALE));
            }
        }
        p
    }

    pub fn zeros(patch_size: usize, hidden: usize, dim: usize) -> Self {
        let pp = patch_size * patch_size;
        Self {
            patch_size,
            hidden,
            dim,
            embed_w: vec![0.0; hidden * pp],
            embed_b: vec![0.0; hidden],
            mask_token: vec![0.0; hidden],
            proj_w: vec![0.0; dim * hidden],
            proj_b: vec![0.0; dim],
            center: vec![0.0; dim],
            decode_w: vec![0.0; pp * hidden],
            decode_b: vec![0.0; pp],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.patch_size, self.hidden, self.dim)
    }

    pub fn patch_pixels(&self) -> usize {
        self.patch_size * self.patch_size
    }

    /// Tensors in their persisted order.
    pub fn tensors(&self) -> [(&'static str, &Vec<f64>); 8] {
        [
            ("embed_w", &self.embed_w),
            ("embed_b", &self.embed_b),
            ("mask_token", &self.mask_token),
            ("proj_w", &self.proj_w),
            ("proj_b", &self.proj_b),
            ("center", &self.center),
            ("decode_w", &self.decode_w),
            ("decode_b", &self.decode_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 8] {
        [
            ("embed_w", &mut self.embed_w),
            ("embed_b", &mut self.embed_b),
            ("mask_token", &mut self.mask_token),
            ("proj_w", &mut self.proj_w),
            ("proj_b", &mut self.proj_b),
            ("center", &mut self.center),
            ("decode_w", &mut self.decode_w),
            ("decode_b", &mut self.decode_b),
        ]
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn check_patches(&self, patches: &PatchMatrix) -> Result<()> {
        if patches.cols != self.patch_pixels() || patches.rows == 0 {
            return Err(Error::DimMismatch {
                expected: self.patch_pixels(),
                found: patches.cols,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u32(self.patch_size as u32);
        w.u32(self.hidden as u32);
        w.u32(self.dim as u32);
        for (_, t) in self.tensors() {
            for v in t {
                w.f32(*v as f32);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "endp");
        r.magic(MAGIC)?;
        let patch_size = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if patch_size == 0 || hidden == 0 || dim == 0 {
            return Err(r.corrupt("zero-sized shape"));
        }
        let mut p = Self::zeros(patch_size, hidden, dim);
        r.check_remaining(p.num_values() as u64, 4)?;
        for (name, t) in p.tensors_mut() {
            for v in t.iter_mut() {
                *v = f64::from(r.f32()?);
                if !v.is_finite() {
                    return Err(r.corrupt(format!("non-finite value in {name}")));
                }
            }
        }
        if !r.is_empty() {
            return Err(r.corrupt("trailing bytes"));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
