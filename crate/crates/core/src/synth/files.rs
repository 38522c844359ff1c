//! On-disk synthetic datasets: one flat binary file per image and per mask
//! plus a `manifest.json`.
//!
//! Image file: `u32 height, u32 width, height·width × f64` (little-endian).
//! Mask file: `u32 height, u32 width, height·width × u8` with values 0 or 1.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SynthSample;
use crate::domain::wire::{Reader, Writer};
use crate::domain::{Image, SegMask};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub image_size: usize,
    pub num_classes: u32,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub label: u32,
    pub image: String,
    pub mask: String,
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

pub fn write_dataset(dir: &Path, samples: &[SynthSample], num_classes: u32) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let stem = file_stem(&s.instance_id);
        let (image, mask) = (format!("{stem}.img"), format!("{stem}.mask"));

        let mut w = Writer::new();
        w.u32(s.image.height() as u32);
        w.u32(s.image.width() as u32);
        for p in s.image.pixels() {
            w.bytes(&p.to_le_bytes());
        }
        fs::write(dir.join(&image), w.finish())?;

        let mut w = Writer::new();
        w.u32(s.mask.height() as u32);
        w.u32(s.mask.width() as u32);
        for v in s.mask.values() {
            w.u8(u8::from(*v));
        }
        fs::write(dir.join(&mask), w.finish())?;

        entries.push(ManifestEntry {
            id: s.instance_id.clone(),
            label: s.class_label,
            image,
            mask,
        });
    }
    let manifest = Manifest {
        image_size: samples.first().map_or(0, |s| s.image.width()),
        num_classes,
        samples: entries,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<SynthSample>)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    let samples = manifest
        .samples
        .iter()
        .map(|e| {
            Ok(SynthSample {
                instance_id: e.id.clone(),
                class_label: e.label,
                image: read_image(&dir.join(&e.image))?,
                mask: read_mask(&dir.join(&e.mask))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, "image");
    let (h, w) = (r.u32()? as usize, r.u32()? as usize);
    let n = r.check_remaining((h * w) as u64, 8)?;
    let pixels = (0..n)
        .map(|_| Ok(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"))))
        .collect::<Result<Vec<_>>>()?;
    if !r.is_empty() {
        return Err(r.corrupt("trailing bytes"));
    }
    Image::new(h, w, pixels)
        .map_err(|e| Error::CorruptFile(format!("{}: {e}", path.display())))
}

fn read_mask(path: &Path) -> Result<SegMask> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, "mask");
    let (h, w) = (r.u32()? as usize, r.u32()? as usize);
    let n = r.check_remaining((h * w) as u64, 1)?;
    let values = r
        .take(n)?
        .iter()
        .map(|b| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::CorruptFile(format!("{}: mask value {b}", path.display()))),
        })
        .collect::<Result<Vec<_>>>()?;
    if !r.is_empty() {
        return Err(r.corrupt("trailing bytes"));
    }
    SegMask::new(h, w, values)
}
