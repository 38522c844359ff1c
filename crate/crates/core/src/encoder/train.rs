use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{decode, encode, patchify, EncoderParams, Forward};
use crate::domain::PatchMatrix;
use crate::error::{Error, Result};
use crate::masking::{classify_patches, plan_mask, MaskPlan, MaskingConfig};
use crate::objectives::{combined_loss, loss_gradients, BatchPairing, LossConfig, LossParts};
use crate::synth::{augment, mix_seed, SynthSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Heavy-ball gradient descent: `v ← βv + g`, `θ ← θ − ηv`.
    Momentum,
    /// Adam with bias correction, `momentum` as β₁.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Originals per step; each contributes two augmented views.
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Adam's second-moment decay β₂.
    pub beta2: f64,
    /// Adam's denominator guard.
    pub epsilon: f64,
    pub contrastive_input: ContrastiveInput,
    /// Decay of the moving average that tracks the mean projection output;
    /// 1 freezes the center at zero.
    pub center_momentum: f64,
    pub seed: u64,
    pub patch_size: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Filled from the pipeline's `loss` section.
    #[serde(skip)]
    pub loss: LossConfig,
    /// Filled from the pipeline's `masking` section.
    #[serde(skip)]
    pub masking: MaskingConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            optimizer: Optimizer::Adam,
            learning_rate: 0.003,
            momentum: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            contrastive_input: ContrastiveInput::Full,
            center_momentum: 0.9,
            seed: 7,
            patch_size: 4,
            hidden: 64,
            embed_dim: 256,
            loss: LossConfig::default(),
            masking: MaskingConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be >= 2".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("beta2 must be in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be finite and > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.center_momentum) {
            return Err(Error::InvalidConfig("center_momentum must be in [0, 1]".into()));
        }
        if self.patch_size == 0 || self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidConfig("model shape must be positive".into()));
        }
        self.loss.validate()?;
        self.masking.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub loss: LossParts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub config: TrainConfig,
    pub loss_config: LossConfig,
    pub masking_config: MaskingConfig,
    /// Loss on the first batch before any update.
    pub initial: Option<LossParts>,
    pub epochs: Vec<EpochLog>,
}

/// Which encoding of a view feeds the contrastive term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastiveInput {
    /// The same masked encoding that feeds reconstruction.
    Masked,
    /// A second, unmasked encoding of the view, matching inference.
    #[default]
    Full,
}

struct BatchForward {
    /// Encodings whose embeddings enter the contrastive term.
    contrastive: Vec<Forward>,
    /// Masked encodings behind the reconstructions; `None` when shared with `contrastive`.
    masked: Option<Vec<Forward>>,
    recon: Vec<PatchMatrix>,
}

fn forward_batch(
    params: &EncoderParams,
    views: &[PatchMatrix],
    plans: &[MaskPlan],
    input: ContrastiveInput,
) -> Result<BatchForward> {
    if views.len() != plans.len() {
        return Err(Error::LengthMismatch {
            left: views.len(),
            right: plans.len(),
        });
    }
    let masked = views
        .iter()
        .zip(plans)
        .map(|(v, p)| encode(params, v, p))
        .collect::<Result<Vec<_>>>()?;
    let recon = masked
        .iter()
        .map(|f| decode(params, &f.latents))
        .collect::<Result<Vec<_>>>()?;
    Ok(match input {
        ContrastiveInput::Masked => BatchForward {
            contrastive: masked,
            masked: None,
            recon,
        },
        ContrastiveInput::Full => BatchForward {
            contrastive: views
                .iter()
                .map(|v| encode(params, v, &MaskPlan::empty(v.rows)))
                .collect::<Result<Vec<_>>>()?,
            masked: Some(masked),
            recon,
        },
    })
}

fn pairing_for(views: &[PatchMatrix]) -> Result<BatchPairing> {
    if views.len() % 2 != 0 {
        return Err(Error::InvalidConfig("batch must hold an even number of views".into()));
    }
    BatchPairing::new(views.len() / 2)
}

/// The combined loss of the whole model on one batch.
pub fn model_loss(
    params: &EncoderParams,
    views: &[PatchMatrix],
    plans: &[MaskPlan],
    cfg: &LossConfig,
    input: ContrastiveInput,
) -> Result<LossParts> {
    let pairing = pairing_for(views)?;
    let fwd = forward_batch(params, views, plans, input)?;
    let z: Vec<_> = fwd.contrastive.into_iter().map(|f| f.z).collect();
    combined_loss(&fwd.recon, views, plans, &z, &pairing, cfg)
}

/// The combined loss and its gradient with respect to every parameter.
pub fn model_gradients(
    params: &EncoderParams,
    views: &[PatchMatrix],
    plans: &[MaskPlan],
    cfg: &LossConfig,
    input: ContrastiveInput,
) -> Result<(LossParts, EncoderParams)> {
    batch_step(params, views, plans, cfg, input).map(|(parts, grad, _)| (parts, grad))
}

/// Loss, gradient and the batch mean of the uncentered contrastive projection.
fn batch_step(
    params: &EncoderParams,
    views: &[PatchMatrix],
    plans: &[MaskPlan],
    cfg: &LossConfig,
    input: ContrastiveInput,
) -> Result<(LossParts, EncoderParams, Vec<f64>)> {
    let pairing = pairing_for(views)?;
    let fwd = forward_batch(params, views, plans, input)?;
    let z: Vec<_> = fwd.contrastive.iter().map(|f| f.z.clone()).collect();
    let lg = loss_gradients(&fwd.recon, views, plans, &z, &pairing, cfg)?;
    let mut grad = params.zeros_like();
    match &fwd.masked {
        None => {
            for i in 0..views.len() {
                backward(params, &views[i], &plans[i], &fwd.contrastive[i], &lg.z[i], &lg.recon[i], &mut grad);
            }
        }
        Some(masked) => {
            let no_z = vec![0.0; params.dim];
            for i in 0..views.len() {
                let full = MaskPlan::empty(views[i].rows);
                let no_recon = PatchMatrix::zeros(views[i].rows, views[i].cols);
                backward(params, &views[i], &full, &fwd.contrastive[i], &lg.z[i], &no_recon, &mut grad);
                backward(params, &views[i], &plans[i], &masked[i], &no_z, &lg.recon[i], &mut grad);
            }
        }
    }
    let inv = 1.0 / fwd.contrastive.len() as f64;
    let mut mean = params.center.clone();
    for f in &fwd.contrastive {
        mean.iter_mut().zip(&f.projected).for_each(|(m, u)| *m += u * inv);
    }
    Ok((lg.parts, grad, mean))
}

fn backward(
    params: &EncoderParams,
    patches: &PatchMatrix,
    plan: &MaskPlan,
    fwd: &Forward,
    gz: &[f64],
    grecon: &PatchMatrix,
    grad: &mut EncoderParams,
) {
    let (h, d, pp) = (params.hidden, params.dim, params.patch_pixels());

    // z = u / ‖u‖  ⇒  ∂L/∂u = (g − z (z·g)) / ‖u‖
    let z = fwd.z.as_slice();
    let norm = crate::domain::norm(&fwd.projected);
    let zg: f64 = z.iter().zip(gz).map(|(a, b)| a * b).sum();
    let gu: Vec<f64> = z.iter().zip(gz).map(|(zk, gk)| (gk - zk * zg) / norm).collect();

    let mut gm = vec![0.0; h];
    for o in 0..d {
        let row = &params.proj_w[o * h..(o + 1) * h];
        let grow = &mut grad.proj_w[o * h..(o + 1) * h];
        for k in 0..h {
            grow[k] += gu[o] * fwd.pooled[k];
            gm[k] += row[k] * gu[o];
        }
        grad.proj_b[o] += gu[o];
        grad.center[o] -= gu[o];
    }

    let inv_p = 1.0 / patches.rows as f64;
    let mut gl = vec![0.0; h];
    for p in 0..patches.rows {
        let latent = fwd.latents.row(p);
        gl.iter_mut().zip(&gm).for_each(|(g, m)| *g = m * inv_p);
        if plan.masked[p] {
            let gr = grecon.row(p);
            for q in 0..pp {
                let wrow = &params.decode_w[q * h..(q + 1) * h];
                let grow = &mut grad.decode_w[q * h..(q + 1) * h];
                for k in 0..h {
                    grow[k] += gr[q] * latent[k];
                    gl[k] += wrow[k] * gr[q];
                }
                grad.decode_b[q] += gr[q];
            }
            grad.mask_token.iter_mut().zip(&gl).for_each(|(t, g)| *t += g);
        } else {
            let x = patches.row(p);
            let scale = fwd.input_scale;
            for k in (0..h).filter(|&k| latent[k] > 0.0) {
                let ga = gl[k];
                let grow = &mut grad.embed_w[k * pp..(k + 1) * pp];
                grow.iter_mut().zip(x).for_each(|(g, xi)| *g += ga * xi * scale);
                grad.embed_b[k] += ga;
            }
        }
    }
}

fn apply_update(
    cfg: &TrainConfig,
    t: i32,
    params: &mut EncoderParams,
    first: &mut EncoderParams,
    second: &mut EncoderParams,
    grad: &EncoderParams,
) {
    let (lr, b1, b2) = (cfg.learning_rate, cfg.momentum, cfg.beta2);
    let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(first.tensors_mut())
        .zip(second.tensors_mut())
        .zip(grad.tensors());
    for ((((name, p), (_, m)), (_, v)), (_, g)) in tensors {
        if name == "center" {
            continue;
        }
        for (((pk, mk), vk), gk) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            match cfg.optimizer {
                Optimizer::Momentum => {
                    *mk = b1 * *mk + gk;
                    *pk -= lr * *mk;
                }
                Optimizer::Adam => {
                    *mk = b1 * *mk + (1.0 - b1) * gk;
                    *vk = b2 * *vk + (1.0 - b2) * gk * gk;
                    *pk -= lr * (*mk / c1) / ((*vk / c2).sqrt() + cfg.epsilon);
                }
            }
        }
    }
}

/// A training view: patches plus its masking plan.
fn prepare_view(
    sample: &SynthSample,
    cfg: &TrainConfig,
    view_seed: u64,
) -> Result<(PatchMatrix, MaskPlan)> {
    let view = augment(sample, view_seed);
    let patches = patchify(&view.image, cfg.patch_size)?;
    let fg = classify_patches(&view.mask, cfg.patch_size, cfg.masking.fg_threshold)?;
    let plan = plan_mask(&fg, &cfg.masking, mix_seed(view_seed, 0x6d61_736b));
    Ok((patches, plan))
}

/// Trains from a fresh initialization derived from `cfg.seed`.
pub fn train(dataset: &[SynthSample], cfg: &TrainConfig) -> Result<(EncoderParams, TrainLog)> {
    train_from(initial_params(cfg), dataset, cfg)
}

/// The parameters [`train`] starts from.
pub fn initial_params(cfg: &TrainConfig) -> EncoderParams {
    EncoderParams::init(cfg.patch_size, cfg.hidden, cfg.embed_dim, mix_seed(cfg.seed, 1))
}

/// Minimizes the combined loss starting from `params`.
pub fn train_from(
    mut params: EncoderParams,
    dataset: &[SynthSample],
    cfg: &TrainConfig,
) -> Result<(EncoderParams, TrainLog)> {
    cfg.validate()?;
    if dataset.len() < 2 {
        return Err(Error::InvalidConfig("training needs at least 2 instances".into()));
    }
    let mut log = TrainLog {
        config: cfg.clone(),
        loss_config: cfg.loss,
        masking_config: cfg.masking,
        initial: None,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let mut first = params.zeros_like();
    let mut second = params.zeros_like();
    let mut t = 0i32;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut view_counter = 0u64;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0f64; 5];
        let mut steps = 0;
        for batch in order.chunks(cfg.batch_size).filter(|b| b.len() >= 2) {
            let n = batch.len();
            let mut views = Vec::with_capacity(2 * n);
            let mut plans = Vec::with_capacity(2 * n);
            for _ in 0..2 {
                for &idx in batch {
                    let seed = mix_seed(cfg.seed ^ 0xa5a5, view_counter);
                    view_counter += 1;
                    let (patches, plan) = prepare_view(&dataset[idx], cfg, seed)?;
                    views.push(patches);
                    plans.push(plan);
                }
            }
            let (parts, grad, mean) = match batch_step(&params, &views, &plans, &cfg.loss, cfg.contrastive_input) {
                // blown-up weights surface as non-finite or degenerate embeddings
                Err(Error::NonFinite(_) | Error::ZeroVector) if log.initial.is_some() => {
                    return Err(Error::Divergence { epoch })
                }
                r => r?,
            };
            if !parts.total.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            if log.initial.is_none() {
                log.initial = Some(parts);
            }
            t += 1;
            apply_update(cfg, t, &mut params, &mut first, &mut second, &grad);
            let cm = cfg.center_momentum;
            params
                .center
                .iter_mut()
                .zip(&mean)
                .for_each(|(c, m)| *c = cm * *c + (1.0 - cm) * m);
            if !params.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            for (s, v) in sums
                .iter_mut()
                .zip([parts.total, parts.con, parts.mae, parts.info_nce, parts.entropy])
            {
                *s += v;
            }
            steps += 1;
        }
        let mean = |k: usize| if steps == 0 { 0.0 } else { sums[k] / steps as f64 };
        log.epochs.push(EpochLog {
            epoch,
            steps,
            loss: LossParts {
                total: mean(0),
                con: mean(1),
                mae: mean(2),
                info_nce: mean(3),
                entropy: mean(4),
            },
        });
    }
    Ok((params, log))
}
