//! Analytic gradients against central finite differences. The losses are
//! re-implemented here from their definitions so the differences are taken on
//! an independent oracle rather than on the code under test.
//!
//! Each check returns the largest relative error it saw, or a description of
//! the first loss value that disagreed with the oracle.

use endofinder_core::encoder::{model_gradients, model_loss, ContrastiveInput};
use endofinder_core::masking::MaskPlan;
use endofinder_core::objectives::{
    contrastive_gradient, contrastive_loss, loss_gradients, mae_gradient, mae_loss, BatchPairing, LossConfig,
};
use endofinder_core::{l2_normalize, EmbeddingVector, EncoderParams, PatchMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na.max(nb) == 0.0 {
        0.0
    } else {
        diff / na.max(nb)
    }
}

fn central_diff(x: &mut [f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let orig = x[k];
            x[k] = orig + H;
            let up = f(x);
            x[k] = orig - H;
            let down = f(x);
            x[k] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn oracle_mae(recon: &[Vec<f64>], orig: &[Vec<f64>], masked: &[Vec<bool>], cols: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..recon.len() {
        let mut sse = 0.0;
        let mut count = 0;
        for (p, &m) in masked[i].iter().enumerate() {
            if m {
                for c in 0..cols {
                    let d = recon[i][p * cols + c] - orig[i][p * cols + c];
                    sse += d * d;
                    count += 1;
                }
            }
        }
        total += sse / count as f64;
    }
    total / recon.len() as f64
}

/// Direct transcription of the contrastive objective, no numerical tricks.
fn oracle_contrastive(z: &[Vec<f64>], n: usize, cfg: &LossConfig) -> f64 {
    let m = 2 * n;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let pos = |i: usize| if i < n { i + n } else { i - n };
    let mut nce = 0.0;
    for i in 0..m {
        let num = (dot(&z[i], &z[pos(i)]) / cfg.temperature).exp();
        let den: f64 = (0..m).filter(|&k| k != i).map(|k| (dot(&z[i], &z[k]) / cfg.temperature).exp()).sum();
        nce -= (num / den).ln();
    }
    nce /= m as f64;
    let anchors = if cfg.entropy_over_all_views { m } else { n };
    let mut ent = 0.0;
    for i in 0..anchors {
        let nearest = (0..m)
            .filter(|&j| j != i && j != pos(i))
            .map(|j| z[i].iter().zip(&z[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        ent += nearest.max(cfg.entropy_floor).ln();
    }
    nce - cfg.entropy_weight * ent / anchors as f64
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> EmbeddingVector {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    l2_normalize(&v).unwrap()
}

fn random_plan(rng: &mut ChaCha8Rng, patches: usize) -> MaskPlan {
    let mut masked: Vec<bool> = (0..patches).map(|_| rng.random_bool(0.5)).collect();
    let forced = rng.random_range(0..patches);
    masked[forced] = true;
    let count = masked.iter().filter(|m| **m).count();
    MaskPlan {
        fg_patch: vec![false; patches],
        overall_ratio: count as f64 / patches as f64,
        fg_rate: 0.0,
        bg_rate: count as f64 / patches as f64,
        masked,
    }
}

fn random_patches(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> PatchMatrix {
    PatchMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn random_loss_config(rng: &mut ChaCha8Rng) -> LossConfig {
    LossConfig {
        temperature: rng.random_range(0.1..1.0),
        entropy_weight: rng.random_range(0.0..2.0),
        recon_weight: rng.random_range(0.1..2.0),
        entropy_over_all_views: rng.random_bool(0.5),
        ..LossConfig::default()
    }
}

pub fn reconstruction(cases: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let (images, rows, cols) = (rng.random_range(1..5), rng.random_range(2..6), rng.random_range(1..5));
        let orig: Vec<_> = (0..images).map(|_| random_patches(&mut rng, rows, cols)).collect();
        let recon: Vec<_> = (0..images).map(|_| random_patches(&mut rng, rows, cols)).collect();
        let plans: Vec<_> = (0..images).map(|_| random_plan(&mut rng, rows)).collect();

        let masked: Vec<Vec<bool>> = plans.iter().map(|p| p.masked.clone()).collect();
        let o: Vec<Vec<f64>> = orig.iter().map(|m| m.data.clone()).collect();
        let mut flat: Vec<f64> = recon.iter().flat_map(|m| m.data.clone()).collect();
        let per = rows * cols;
        let f = |x: &[f64]| {
            let r: Vec<Vec<f64>> = x.chunks(per).map(<[f64]>::to_vec).collect();
            oracle_mae(&r, &o, &masked, cols)
        };
        let lib = mae_loss(&recon, &orig, &plans).map_err(|e| e.to_string())?;
        if (lib - f(&flat)).abs() >= 1e-12 {
            return Err(format!("case {case}: loss {lib} vs oracle {}", f(&flat)));
        }
        let numeric = central_diff(&mut flat, f);
        let analytic: Vec<f64> = mae_gradient(&recon, &orig, &plans)
            .map_err(|e| e.to_string())?
            .into_iter()
            .flat_map(|m| m.data)
            .collect();
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    Ok(worst)
}

pub fn contrastive(cases: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let n = rng.random_range(2..6);
        let d = rng.random_range(3..10);
        let cfg = random_loss_config(&mut rng);
        let z: Vec<_> = (0..2 * n).map(|_| random_unit(&mut rng, d)).collect();
        let pairing = BatchPairing::new(n).unwrap();

        let mut flat: Vec<f64> = z.iter().flat_map(|v| v.as_slice().to_vec()).collect();
        let f = |x: &[f64]| {
            let rows: Vec<Vec<f64>> = x.chunks(d).map(<[f64]>::to_vec).collect();
            oracle_contrastive(&rows, n, &cfg)
        };
        let lib = contrastive_loss(&z, &pairing, &cfg).map_err(|e| e.to_string())?.total();
        if (lib - f(&flat)).abs() >= 1e-9 {
            return Err(format!("case {case}: loss {lib} vs oracle {}", f(&flat)));
        }
        let numeric = central_diff(&mut flat, f);
        let (_, grad) = contrastive_gradient(&z, &pairing, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(rel_err(&grad.concat(), &numeric));
    }
    Ok(worst)
}

pub fn combined(cases: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let n = rng.random_range(2..4);
        let d = rng.random_range(3..8);
        let (rows, cols) = (rng.random_range(2..5), rng.random_range(1..4));
        let cfg = random_loss_config(&mut rng);
        let pairing = BatchPairing::new(n).unwrap();
        let z: Vec<_> = (0..2 * n).map(|_| random_unit(&mut rng, d)).collect();
        let orig: Vec<_> = (0..2 * n).map(|_| random_patches(&mut rng, rows, cols)).collect();
        let recon: Vec<_> = (0..2 * n).map(|_| random_patches(&mut rng, rows, cols)).collect();
        let plans: Vec<_> = (0..2 * n).map(|_| random_plan(&mut rng, rows)).collect();

        let masked: Vec<Vec<bool>> = plans.iter().map(|p| p.masked.clone()).collect();
        let o: Vec<Vec<f64>> = orig.iter().map(|m| m.data.clone()).collect();
        let per = rows * cols;
        let split = 2 * n * d;
        let mut flat: Vec<f64> = z.iter().flat_map(|v| v.as_slice().to_vec()).collect();
        flat.extend(recon.iter().flat_map(|m| m.data.clone()));
        let f = |x: &[f64]| {
            let zs: Vec<Vec<f64>> = x[..split].chunks(d).map(<[f64]>::to_vec).collect();
            let rs: Vec<Vec<f64>> = x[split..].chunks(per).map(<[f64]>::to_vec).collect();
            oracle_contrastive(&zs, n, &cfg) + cfg.recon_weight * oracle_mae(&rs, &o, &masked, cols)
        };
        let lg = loss_gradients(&recon, &orig, &plans, &z, &pairing, &cfg).map_err(|e| e.to_string())?;
        if (lg.parts.total - f(&flat)).abs() >= 1e-9 {
            return Err(format!("case {case}: loss {} vs oracle {}", lg.parts.total, f(&flat)));
        }
        let numeric = central_diff(&mut flat, f);
        let mut analytic = lg.z.concat();
        analytic.extend(lg.recon.into_iter().flat_map(|m| m.data));
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    Ok(worst)
}

fn flatten(p: &EncoderParams) -> Vec<f64> {
    p.tensors().into_iter().flat_map(|(_, t)| t.clone()).collect()
}

fn unflatten(template: &EncoderParams, x: &[f64]) -> EncoderParams {
    let mut p = template.clone();
    let mut offset = 0;
    for (_, t) in p.tensors_mut() {
        let len = t.len();
        t.copy_from_slice(&x[offset..offset + len]);
        offset += len;
    }
    p
}

/// The whole encoder on 8×8 images with 4×4 patches, h = 8, d = 8, N = 2,
/// alternating which encoding feeds the contrastive term.
pub fn full_model(cases: usize, seed: u64) -> Result<f64, String> {
    let (patch, hidden, dim, n) = (4, 8, 8, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let input = if case % 2 == 0 { ContrastiveInput::Full } else { ContrastiveInput::Masked };
        let mut params = EncoderParams::init(patch, hidden, dim, case as u64);
        for (_, t) in params.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
        let views: Vec<_> = (0..2 * n).map(|_| random_patches(&mut rng, 4, patch * patch)).collect();
        let plans: Vec<_> = (0..2 * n).map(|_| random_plan(&mut rng, 4)).collect();
        let cfg = LossConfig {
            temperature: 0.5,
            ..LossConfig::default()
        };

        let (_, grad) = model_gradients(&params, &views, &plans, &cfg, input).map_err(|e| e.to_string())?;
        let mut flat = flatten(&params);
        let numeric = central_diff(&mut flat, |x| {
            model_loss(&unflatten(&params, x), &views, &plans, &cfg, input).unwrap().total
        });
        worst = worst.max(rel_err(&flatten(&grad), &numeric));
    }
    Ok(worst)
}
