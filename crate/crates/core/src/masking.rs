//! Foreground-aware patch masking.
//!
//! Background patches are masked at a higher rate than foreground patches while
//! the total number of masked patches stays fixed at `round(ratio · P)`. The
//! foreground rate targets `slope · r · ratio` (floored at `fg_rate_min`), where
//! `r` is the foreground patch fraction, and the background rate absorbs the
//! remainder. With no foreground or no background this is plain uniform masking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::SegMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskingConfig {
    /// Overall masking ratio ρ.
    pub ratio: f64,
    /// Minimum in-mask pixel fraction for a patch to count as foreground.
    pub fg_threshold: f64,
    /// Slope `c` of the foreground target rate.
    pub fg_slope: f64,
    /// Floor on the foreground target rate.
    pub fg_rate_min: f64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            ratio: 0.75,
            fg_threshold: 0.25,
            fg_slope: 1.0,
            fg_rate_min: 0.1,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidConfig("masking ratio must be in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.fg_threshold) {
            return Err(Error::InvalidConfig("fg_threshold must be in [0, 1]".into()));
        }
        if !(self.fg_slope >= 0.0 && self.fg_slope.is_finite()) {
            return Err(Error::InvalidConfig("fg_slope must be finite and >= 0".into()));
        }
        if !(self.fg_rate_min >= 0.0 && self.fg_rate_min <= self.ratio) {
            return Err(Error::InvalidConfig("fg_rate_min must be in [0, ratio]".into()));
        }
        Ok(())
    }
}

/// Per-patch masking decision for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub masked: Vec<bool>,
    pub fg_patch: Vec<bool>,
    pub overall_ratio: f64,
    /// Realized fraction of foreground patches masked (0 when there are none).
    pub fg_rate: f64,
    /// Realized fraction of background patches masked (0 when there are none).
    pub bg_rate: f64,
}

impl MaskPlan {
    /// A plan that masks nothing, used at inference time.
    pub fn empty(num_patches: usize) -> Self {
        Self {
            masked: vec![false; num_patches],
            fg_patch: vec![false; num_patches],
            overall_ratio: 0.0,
            fg_rate: 0.0,
            bg_rate: 0.0,
        }
    }

    pub fn num_patches(&self) -> usize {
        self.masked.len()
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|m| **m).count()
    }

    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.masked
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| i)
    }
}

/// Marks a patch foreground when its in-mask pixel fraction reaches `fg_threshold`.
/// Patches are in row-major order.
pub fn classify_patches(mask: &SegMask, patch_size: usize, fg_threshold: f64) -> Result<Vec<bool>> {
    let (h, w) = (mask.height(), mask.width());
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return Err(Error::DimMismatch {
            expected: patch_size,
            found: if h % patch_size.max(1) != 0 { h } else { w },
        });
    }
    let (ph, pw) = (h / patch_size, w / patch_size);
    let area = (patch_size * patch_size) as f64;
    Ok((0..ph * pw)
        .map(|p| {
            let (r0, c0) = ((p / pw) * patch_size, (p % pw) * patch_size);
            let inside = (r0..r0 + patch_size)
                .flat_map(|r| (c0..c0 + patch_size).map(move |c| (r, c)))
                .filter(|&(r, c)| mask.at(r, c))
                .count();
            inside as f64 / area >= fg_threshold
        })
        .collect())
}

/// Target rates `(fg, bg)` before rounding to whole patches.
pub fn target_rates(fg_fraction: f64, cfg: &MaskingConfig) -> (f64, f64) {
    let r = fg_fraction;
    let rho = cfg.ratio;
    if r <= 0.0 || r >= 1.0 {
        return (rho, rho);
    }
    let fg = (cfg.fg_slope * r * rho).clamp(cfg.fg_rate_min, rho);
    let bg = ((rho - r * fg) / (1.0 - r)).clamp(0.0, 1.0);
    (fg, bg)
}

/// Exact masked counts `(n_fg, n_bg)` for the given pool sizes.
pub fn masked_counts(n_fg_patches: usize, n_bg_patches: usize, cfg: &MaskingConfig) -> (usize, usize) {
    let p = n_fg_patches + n_bg_patches;
    let total = (cfg.ratio * p as f64).round() as usize;
    if n_fg_patches == 0 {
        return (0, total);
    }
    if n_bg_patches == 0 {
        return (total, 0);
    }
    let r = n_fg_patches as f64 / p as f64;
    let (fg_target, _) = target_rates(r, cfg);
    let mut n_f = ((fg_target * n_fg_patches as f64).round() as usize)
        .min(n_fg_patches)
        .min(total);
    let mut n_b = total - n_f;
    if n_b > n_bg_patches {
        n_f += n_b - n_bg_patches;
        n_b = n_bg_patches;
    }
    // Rounding can leave the foreground rate above the background rate; shift
    // masks to the background until it no longer is (always reachable).
    while n_f * n_bg_patches > n_b * n_fg_patches && n_b < n_bg_patches {
        n_f -= 1;
        n_b += 1;
    }
    (n_f, n_b)
}

pub fn plan_mask(fg_patches: &[bool], cfg: &MaskingConfig, rng_seed: u64) -> MaskPlan {
    let fg_idx: Vec<usize> = (0..fg_patches.len()).filter(|&i| fg_patches[i]).collect();
    let bg_idx: Vec<usize> = (0..fg_patches.len()).filter(|&i| !fg_patches[i]).collect();
    let (n_f, n_b) = masked_counts(fg_idx.len(), bg_idx.len(), cfg);

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut masked = vec![false; fg_patches.len()];
    for pool in [(&fg_idx, n_f), (&bg_idx, n_b)] {
        let (idx, n) = pool;
        for j in sample(&mut rng, idx.len(), n) {
            masked[idx[j]] = true;
        }
    }
    let rate = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    MaskPlan {
        masked,
        fg_patch: fg_patches.to_vec(),
        overall_ratio: cfg.ratio,
        fg_rate: rate(n_f, fg_idx.len()),
        bg_rate: rate(n_b, bg_idx.len()),
    }
}
