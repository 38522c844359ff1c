//! A small patch encoder/decoder trained end to end on the combined objective.
//!
//! Visible pixels are first rescaled so their mean sits at [`INTENSITY_LEVEL`],
//! which makes the embedding indifferent to global brightness. Each visible
//! patch is then embedded by a linear map followed by a ReLU; masked patches
//! are replaced by a learned mask token in latent space. The mean of all patch
//! latents stands in for a class token and goes through a linear projection,
//! a centering shift and L2 normalization to give the embedding. A per-patch linear readout
//! reconstructs pixels from the latents.

mod params;
mod train;

pub use params::EncoderParams;
pub use train::{
    initial_params, model_gradients, model_loss, train, train_from, ContrastiveInput, EpochLog, Optimizer, TrainConfig, TrainLog,
};

use crate::domain::{l2_normalize, EmbeddingVector, Image, PatchMatrix};
use crate::error::{Error, Result};
use crate::masking::MaskPlan;

/// Splits an image into `P × patch_size²` rows, patches in row-major order.
pub fn patchify(image: &Image, patch_size: usize) -> Result<PatchMatrix> {
    let (h, w) = (image.height(), image.width());
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return Err(Error::DimMismatch {
            expected: patch_size,
            found: if patch_size != 0 && h % patch_size == 0 { w } else { h },
        });
    }
    let pw = w / patch_size;
    let rows = (h / patch_size) * pw;
    let cols = patch_size * patch_size;
    let mut out = PatchMatrix::zeros(rows, cols);
    for p in 0..rows {
        let (r0, c0) = ((p / pw) * patch_size, (p % pw) * patch_size);
        let row = out.row_mut(p);
        for dr in 0..patch_size {
            for dc in 0..patch_size {
                row[dr * patch_size + dc] = image.at(r0 + dr, c0 + dc);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`].
pub fn unpatchify(patches: &PatchMatrix, height: usize, width: usize, patch_size: usize) -> Result<Image> {
    if patch_size == 0
        || height % patch_size != 0
        || width % patch_size != 0
        || patches.cols != patch_size * patch_size
        || patches.rows != (height / patch_size) * (width / patch_size)
    {
        return Err(Error::DimMismatch {
            expected: height * width,
            found: patches.rows * patches.cols,
        });
    }
    let pw = width / patch_size;
    let mut pixels = vec![0.0; height * width];
    for p in 0..patches.rows {
        let (r0, c0) = ((p / pw) * patch_size, (p % pw) * patch_size);
        for dr in 0..patch_size {
            for dc in 0..patch_size {
                pixels[(r0 + dr) * width + c0 + dc] = patches.row(p)[dr * patch_size + dc];
            }
        }
    }
    Image::new(height, width, pixels)
}

/// Mean intensity that visible pixels are rescaled to before embedding.
pub const INTENSITY_LEVEL: f64 = 0.5;

/// Below this visible-pixel mean the image is treated as black and left unscaled.
const DARK_MEAN: f64 = 1e-6;

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub z: EmbeddingVector,
    /// `P × h` patch latents (mask token rows for masked patches).
    pub latents: PatchMatrix,
    /// Factor applied to every visible pixel before the patch embedding.
    pub input_scale: f64,
    pub(crate) pooled: Vec<f64>,
    /// Projection output after the center is subtracted.
    pub(crate) projected: Vec<f64>,
}

#[inline]
pub(crate) fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(n_in).zip(b)) {
        *o = bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `INTENSITY_LEVEL / mean` over the pixels of unmasked patches.
fn visible_scale(patches: &PatchMatrix, plan: &MaskPlan) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for p in (0..patches.rows).filter(|&p| !plan.masked[p]) {
        sum += patches.row(p).iter().sum::<f64>();
        count += patches.cols;
    }
    if count == 0 || sum / (count as f64) <= DARK_MEAN {
        1.0
    } else {
        INTENSITY_LEVEL * count as f64 / sum
    }
}

pub fn encode(params: &EncoderParams, patches: &PatchMatrix, plan: &MaskPlan) -> Result<Forward> {
    params.check_patches(patches)?;
    if plan.num_patches() != patches.rows {
        return Err(Error::DimMismatch {
            expected: patches.rows,
            found: plan.num_patches(),
        });
    }
    let h = params.hidden;
    let input_scale = visible_scale(patches, plan);
    let mut scaled = vec![0.0; patches.cols];
    let mut latents = PatchMatrix::zeros(patches.rows, h);
    for p in 0..patches.rows {
        let out = latents.row_mut(p);
        if plan.masked[p] {
            out.copy_from_slice(&params.mask_token);
        } else {
            scaled
                .iter_mut()
                .zip(patches.row(p))
                .for_each(|(s, x)| *s = x * input_scale);
            affine(&params.embed_w, &params.embed_b, &scaled, out);
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    let mut pooled = vec![0.0; h];
    for p in 0..latents.rows {
        for (acc, v) in pooled.iter_mut().zip(latents.row(p)) {
            *acc += v;
        }
    }
    let inv = 1.0 / latents.rows as f64;
    pooled.iter_mut().for_each(|v| *v *= inv);
    let mut projected = vec![0.0; params.dim];
    affine(&params.proj_w, &params.proj_b, &pooled, &mut projected);
    projected.iter_mut().zip(&params.center).for_each(|(u, c)| *u -= c);
    let z = l2_normalize(&projected)?;
    Ok(Forward {
        z,
        latents,
        input_scale,
        pooled,
        projected,
    })
}

/// Embeds an image with nothing masked, as used at inference time.
pub fn embed_image(params: &EncoderParams, image: &Image) -> Result<EmbeddingVector> {
    let patches = patchify(image, params.patch_size)?;
    Ok(encode(params, &patches, &MaskPlan::empty(patches.rows))?.z)
}

/// Per-patch linear readout of pixels from latents.
pub fn decode(params: &EncoderParams, latents: &PatchMatrix) -> Result<PatchMatrix> {
    if latents.cols != params.hidden {
        return Err(Error::DimMismatch {
            expected: params.hidden,
            found: latents.cols,
        });
    }
    let pp = params.patch_pixels();
    let mut out = PatchMatrix::zeros(latents.rows, pp);
    for p in 0..latents.rows {
        affine(&params.decode_w, &params.decode_b, latents.row(p), out.row_mut(p));
    }
    Ok(out)
}
