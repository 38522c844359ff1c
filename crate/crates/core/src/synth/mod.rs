//! Deterministic synthetic polyp-like images with paired segmentation masks.
//!
//! Every instance is a textured elliptical blob on a shaded background. The
//! class controls the blob texture: class 1 is a smooth dome, higher classes
//! carry stripes whose period shrinks as the class index grows. Everything
//! else (levels, blob geometry, background shading, stripe orientation) is
//! drawn per instance so that instances are individually recognizable.

mod files;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use files::{read_dataset, write_dataset, Manifest, ManifestEntry};

use crate::domain::{Image, SegMask};
use crate::error::{Error, Result};

/// Separator between an instance id and a view suffix, e.g. `inst-00007#v1`.
pub const VIEW_SEP: char = '#';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub image_size: usize,
    pub patch_size: usize,
    pub num_instances: usize,
    pub views_per_instance: usize,
    pub num_classes: u32,
    pub seed: u64,
    pub min_mask_fraction: f64,
    pub max_mask_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            image_size: 64,
            patch_size: 4,
            num_instances: 200,
            views_per_instance: 2,
            num_classes: 2,
            seed: 7,
            min_mask_fraction: 0.02,
            max_mask_fraction: 0.6,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadSpec(m.to_string()));
        if self.patch_size == 0 || self.image_size == 0 {
            return bad("image_size and patch_size must be positive");
        }
        if self.image_size % self.patch_size != 0 {
            return bad("image_size must be a multiple of patch_size");
        }
        if self.image_size < 8 {
            return bad("image_size must be at least 8");
        }
        if self.views_per_instance != 2 {
            return bad("views_per_instance must be 2");
        }
        if self.num_classes == 0 {
            return bad("num_classes must be at least 1");
        }
        let (lo, hi) = (self.min_mask_fraction, self.max_mask_fraction);
        if !(0.0..1.0).contains(&lo) || !(lo < hi && hi <= 1.0) || hi - lo < 0.05 {
            return bad("mask fraction bounds must satisfy 0 <= min < max <= 1 with a 0.05 gap");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub instance_id: String,
    pub class_label: u32,
    pub image: Image,
    pub mask: SegMask,
}

impl SynthSample {
    /// The instance a view id belongs to (the id itself for base samples).
    pub fn instance_of(id: &str) -> &str {
        id.rsplit_once(VIEW_SEP).map_or(id, |(inst, _)| inst)
    }
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate(spec: &SynthSpec) -> Result<Vec<SynthSample>> {
    spec.validate()?;
    (0..spec.num_instances)
        .map(|i| generate_instance(spec, i))
        .collect()
}

/// Generates instance `index` alone; `generate` is the map of this over `0..n`.
pub fn generate_instance(spec: &SynthSpec, index: usize) -> Result<SynthSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let label = (index % spec.num_classes as usize) as u32 + 1;
    let s = spec.image_size;
    let lo = spec.min_mask_fraction.max(0.06);
    let hi = spec.max_mask_fraction.min(0.35).max(lo + 0.01);

    loop {
        let blob = Blob::sample(&mut rng, s, lo, hi);
        let mask_vals: Vec<bool> = (0..s * s)
            .map(|p| blob.radius2((p / s) as f64 + 0.5, (p % s) as f64 + 0.5) <= 1.0)
            .collect();
        let frac = mask_vals.iter().filter(|v| **v).count() as f64 / (s * s) as f64;
        if frac < spec.min_mask_fraction || frac > spec.max_mask_fraction {
            continue;
        }

        let bg_level = rng.random_range(0.12..0.45);
        let mucosa: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                let period = rng.random_range(3.0..10.0);
                let psi: f64 = rng.random_range(0.0..PI);
                let amp = rng.random_range(0.04..0.12);
                (2.0 * PI * psi.cos() / period, 2.0 * PI * psi.sin() / period, amp, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        let fg_level = rng.random_range(0.55..0.9);
        let texture = Texture::sample(&mut rng, label, spec.num_classes);

        let pixels = (0..s * s)
            .map(|p| {
                let (y, x) = ((p / s) as f64 + 0.5, (p % s) as f64 + 0.5);
                if mask_vals[p] {
                    texture.value(fg_level, x, y, blob.radius2(y, x))
                } else {
                    bg_level
                        + mucosa
                            .iter()
                            .map(|(kx, ky, amp, phase)| amp * (kx * x + ky * y + phase).sin())
                            .sum::<f64>()
                }
            })
            .collect();

        return Ok(SynthSample {
            instance_id: format!("inst-{index:05}"),
            class_label: label,
            image: Image::from_clamped(s, s, pixels),
            mask: SegMask::new(s, s, mask_vals)?,
        });
    }
}

struct Blob {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Blob {
    fn sample(rng: &mut ChaCha8Rng, s: usize, lo: f64, hi: f64) -> Self {
        let s = s as f64;
        let area = rng.random_range(lo..hi) * s * s;
        let aspect = rng.random_range(0.55..1.0);
        let a = (area / (PI * aspect)).sqrt();
        let b = aspect * a;
        let theta = rng.random_range(0.0..PI);
        let margin = a.min(s / 2.0 - 1.0);
        let (c_lo, c_hi) = (margin, s - margin);
        let mut center = || {
            if c_hi - c_lo > 1e-9 {
                rng.random_range(c_lo..c_hi)
            } else {
                s / 2.0
            }
        };
        let (cy, cx) = (center(), center());
        Self {
            cy,
            cx,
            a,
            b,
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    /// Squared normalized elliptical radius; `<= 1` inside the blob.
    fn radius2(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }
}

enum Texture {
    Smooth { dome: f64 },
    Striped { period: f64, amp: f64, cos: f64, sin: f64, phase: f64 },
}

impl Texture {
    fn sample(rng: &mut ChaCha8Rng, label: u32, num_classes: u32) -> Self {
        if label == 1 {
            return Texture::Smooth {
                dome: rng.random_range(0.1..0.3),
            };
        }
        // Striped classes split the period band [2.5, 8) pixels; higher class, finer stripes.
        let bands = (num_classes - 1) as f64;
        let slot = (label - 2) as f64;
        let width = 5.5 / bands;
        let hi = 8.0 - slot * width;
        let period = rng.random_range(hi - width * 0.8..hi);
        let psi = rng.random_range(0.0..PI);
        Texture::Striped {
            period,
            amp: rng.random_range(0.18..0.3),
            cos: psi.cos(),
            sin: psi.sin(),
            phase: rng.random_range(0.0..2.0 * PI),
        }
    }

    fn value(&self, level: f64, x: f64, y: f64, r2: f64) -> f64 {
        match *self {
            Texture::Smooth { dome } => level * (1.0 - dome * r2),
            Texture::Striped {
                period,
                amp,
                cos,
                sin,
                phase,
            } => level + amp * (2.0 * PI * (x * cos + y * sin) / period + phase).sin(),
        }
    }
}

/// Knobs for [`augment_with`]; [`augment`] uses the defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub max_shift_fraction: f64,
    pub brightness: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            max_shift_fraction: 0.125,
            brightness: (0.8, 1.2),
            noise_sigma: 0.02,
        }
    }
}

/// Random flips, translation, brightness and noise. The mask follows the
/// geometric transforms only.
pub fn augment(sample: &SynthSample, rng_seed: u64) -> SynthSample {
    augment_with(sample, rng_seed, &AugmentConfig::default())
}

pub fn augment_with(sample: &SynthSample, rng_seed: u64, cfg: &AugmentConfig) -> SynthSample {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (h, w) = (sample.image.height(), sample.image.width());
    let flip_h = rng.random_bool(cfg.flip_prob);
    let flip_v = rng.random_bool(cfg.flip_prob);
    let max_dx = (cfg.max_shift_fraction * w as f64).floor() as i64;
    let max_dy = (cfg.max_shift_fraction * h as f64).floor() as i64;
    let dx = rng.random_range(-max_dx..=max_dx);
    let dy = rng.random_range(-max_dy..=max_dy);
    let scale = if cfg.brightness.0 < cfg.brightness.1 {
        rng.random_range(cfg.brightness.0..=cfg.brightness.1)
    } else {
        cfg.brightness.0
    };

    // Source pixel for each destination pixel: translate (edge-replicated), then flip.
    let source = |r: usize, c: usize| -> usize {
        let sr = (r as i64 - dy).clamp(0, h as i64 - 1) as usize;
        let sc = (c as i64 - dx).clamp(0, w as i64 - 1) as usize;
        let sr = if flip_v { h - 1 - sr } else { sr };
        let sc = if flip_h { w - 1 - sc } else { sc };
        sr * w + sc
    };

    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    let mut pixels = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let s = source(r, c);
            let mut p = sample.image.pixels()[s] * scale;
            if cfg.noise_sigma > 0.0 {
                p += noise.sample(&mut rng);
            }
            pixels.push(p);
            mask.push(sample.mask.values()[s]);
        }
    }
    SynthSample {
        instance_id: sample.instance_id.clone(),
        class_label: sample.class_label,
        image: Image::from_clamped(h, w, pixels),
        mask: SegMask::new(h, w, mask).expect("same dims"),
    }
}

/// Two augmented views per instance, ids suffixed `#v0`, `#v1`.
pub fn make_views(samples: &[SynthSample], views: usize, seed: u64) -> Vec<SynthSample> {
    samples
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            (0..views).map(move |v| {
                let mut view = augment(s, mix_seed(seed, (i as u64) << 8 | v as u64));
                view.instance_id = format!("{}{VIEW_SEP}v{v}", s.instance_id);
                view
            })
        })
        .collect()
}
