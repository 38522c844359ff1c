//! Training objectives: masked reconstruction error, InfoNCE with a
//! nearest-negative entropy regularizer, and their weighted sum, each with an
//! analytic gradient.
//!
//! A batch holds `2N` views: view 0 of original `i` at index `i`, view 1 at
//! `i + N`. Similarities are `s_ij = (z_i · z_j) / τ` on unit vectors.

use serde::{Deserialize, Serialize};

use crate::domain::{EmbeddingVector, PatchMatrix};
use crate::error::{Error, Result};
use crate::masking::MaskPlan;

/// How far `‖z‖` may stray from 1 before the contrastive loss rejects it.
pub const NORM_CHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Softmax temperature τ.
    pub temperature: f64,
    /// Weight γ of the entropy regularizer.
    pub entropy_weight: f64,
    /// Weight λ of the reconstruction loss.
    pub recon_weight: f64,
    /// Lower bound on the nearest-negative distance inside the log.
    pub entropy_floor: f64,
    /// Sum the entropy term over all `2N` views instead of the first `N`.
    pub entropy_over_all_views: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.05,
            entropy_weight: 1.0,
            recon_weight: 1.0,
            entropy_floor: 1e-6,
            entropy_over_all_views: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig("temperature must be > 0".into()));
        }
        if !(self.entropy_weight >= 0.0 && self.recon_weight >= 0.0) {
            return Err(Error::InvalidConfig("loss weights must be >= 0".into()));
        }
        if !(self.entropy_floor > 0.0) {
            return Err(Error::InvalidConfig("entropy_floor must be > 0".into()));
        }
        Ok(())
    }
}

/// Positive pairs `(i, i+N)` and `(i+N, i)` over a batch of `2N` views.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPairing {
    n: usize,
}

impl BatchPairing {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("batch needs at least one original".into()));
        }
        Ok(Self { n })
    }

    /// Number of originals `N`.
    pub fn originals(&self) -> usize {
        self.n
    }

    /// Number of views `2N`.
    pub fn views(&self) -> usize {
        2 * self.n
    }

    pub fn positive(&self, i: usize) -> usize {
        (i + self.n) % (2 * self.n)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.views()).map(|i| (i, self.positive(i)))
    }

    /// Whether `j` is in `P̂_i = P_i ∪ {i}`.
    pub fn excluded(&self, i: usize, j: usize) -> bool {
        j == i || j == self.positive(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveParts {
    pub info_nce: f64,
    /// Already multiplied by γ.
    pub entropy: f64,
}

impl ContrastiveParts {
    pub fn total(&self) -> f64 {
        self.info_nce + self.entropy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub con: f64,
    pub mae: f64,
    pub info_nce: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub parts: LossParts,
    /// ∂L/∂Î for every reconstructed pixel, shaped like the inputs.
    pub recon: Vec<PatchMatrix>,
    /// ∂L/∂z for every embedding coordinate.
    pub z: Vec<Vec<f64>>,
}

fn check_mae_inputs(recon: &[PatchMatrix], orig: &[PatchMatrix], plans: &[MaskPlan]) -> Result<()> {
    if recon.len() != orig.len() || recon.len() != plans.len() {
        return Err(Error::LengthMismatch {
            left: recon.len(),
            right: orig.len().min(plans.len()),
        });
    }
    if recon.is_empty() {
        return Err(Error::InvalidConfig("reconstruction batch is empty".into()));
    }
    for (i, ((r, o), p)) in recon.iter().zip(orig).zip(plans).enumerate() {
        if !r.same_shape(o) || p.num_patches() != r.rows {
            return Err(Error::DimMismatch {
                expected: o.rows * o.cols,
                found: r.rows * r.cols,
            });
        }
        if p.masked_count() == 0 {
            return Err(Error::EmptyMask { image: i });
        }
    }
    Ok(())
}

/// Mean over images of the mean squared error on masked-patch pixels.
pub fn mae_loss(recon: &[PatchMatrix], orig: &[PatchMatrix], plans: &[MaskPlan]) -> Result<f64> {
    check_mae_inputs(recon, orig, plans)?;
    let images = recon.len() as f64;
    let mut total = 0.0;
    for ((r, o), plan) in recon.iter().zip(orig).zip(plans) {
        let set_size = (plan.masked_count() * r.cols) as f64;
        let sse: f64 = plan
            .masked_indices()
            .flat_map(|p| r.row(p).iter().zip(o.row(p)))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += sse / set_size;
    }
    Ok(total / images)
}

/// ∂L_MAE/∂Î; zero for unmasked pixels.
pub fn mae_gradient(
    recon: &[PatchMatrix],
    orig: &[PatchMatrix],
    plans: &[MaskPlan],
) -> Result<Vec<PatchMatrix>> {
    check_mae_inputs(recon, orig, plans)?;
    let images = recon.len() as f64;
    Ok(recon
        .iter()
        .zip(orig)
        .zip(plans)
        .map(|((r, o), plan)| {
            let scale = 2.0 / (images * (plan.masked_count() * r.cols) as f64);
            let mut g = PatchMatrix::zeros(r.rows, r.cols);
            for p in plan.masked_indices() {
                for ((gk, a), b) in g.row_mut(p).iter_mut().zip(r.row(p)).zip(o.row(p)) {
                    *gk = scale * (a - b);
                }
            }
            g
        })
        .collect())
}

fn check_embeddings(z: &[EmbeddingVector], pairing: &BatchPairing) -> Result<()> {
    if z.len() != pairing.views() {
        return Err(Error::LengthMismatch {
            left: z.len(),
            right: pairing.views(),
        });
    }
    let d = z[0].dim();
    for (i, v) in z.iter().enumerate() {
        if v.dim() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: v.dim(),
            });
        }
        let norm = v.norm();
        if (norm - 1.0).abs() > NORM_CHECK_TOL {
            return Err(Error::NotNormalized { index: i, norm });
        }
    }
    Ok(())
}

pub fn contrastive_loss(
    z: &[EmbeddingVector],
    pairing: &BatchPairing,
    cfg: &LossConfig,
) -> Result<ContrastiveParts> {
    check_embeddings(z, pairing)?;
    let rows: Vec<&[f64]> = z.iter().map(|v| v.as_slice()).collect();
    Ok(contrastive_eval(&rows, pairing, cfg, None))
}

/// ∂L_CON/∂z alongside the loss value.
pub fn contrastive_gradient(
    z: &[EmbeddingVector],
    pairing: &BatchPairing,
    cfg: &LossConfig,
) -> Result<(ContrastiveParts, Vec<Vec<f64>>)> {
    check_embeddings(z, pairing)?;
    let rows: Vec<&[f64]> = z.iter().map(|v| v.as_slice()).collect();
    let mut grad = vec![vec![0.0; z[0].dim()]; z.len()];
    let parts = contrastive_eval(&rows, pairing, cfg, Some(&mut grad));
    Ok((parts, grad))
}

/// Index of the nearest view outside `P̂_i`, lowest index on ties.
fn nearest_negative(z: &[&[f64]], pairing: &BatchPairing, i: usize) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for j in (0..z.len()).filter(|&j| !pairing.excluded(i, j)) {
        let d2: f64 = z[i].iter().zip(z[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((j, d2));
        }
    }
    best.map(|(j, d2)| (j, d2.sqrt()))
}

fn contrastive_eval(
    z: &[&[f64]],
    pairing: &BatchPairing,
    cfg: &LossConfig,
    mut grad: Option<&mut Vec<Vec<f64>>>,
) -> ContrastiveParts {
    let m = z.len();
    let tau = cfg.temperature;
    let sim: Vec<f64> = (0..m * m)
        .map(|k| z[k / m].iter().zip(z[k % m]).map(|(a, b)| a * b).sum::<f64>() / tau)
        .collect();

    let n_pairs = m as f64;
    let mut info_nce = 0.0;
    let mut weights = vec![0.0; m];
    for (i, j) in pairing.pairs() {
        let row = &sim[i * m..(i + 1) * m];
        let max = (0..m).filter(|&v| v != i).map(|v| row[v]).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..m).filter(|&v| v != i).map(|v| (row[v] - max).exp()).sum();
        let lse = max + sum.ln();
        info_nce -= (row[j] - lse) / n_pairs;

        if let Some(g) = grad.as_deref_mut() {
            // ∂ℓ/∂s_iv = (softmax_iv − δ_vj) / |P|
            for v in 0..m {
                weights[v] = if v == i { 0.0 } else { (row[v] - max).exp() / sum };
            }
            weights[j] -= 1.0;
            for v in (0..m).filter(|&v| v != i) {
                let w = weights[v] / (n_pairs * tau);
                for k in 0..z[i].len() {
                    g[i][k] += w * z[v][k];
                    g[v][k] += w * z[i][k];
                }
            }
        }
    }

    let anchors = if cfg.entropy_over_all_views { m } else { pairing.originals() };
    let mut entropy = 0.0;
    if cfg.entropy_weight > 0.0 {
        let scale = cfg.entropy_weight / anchors as f64;
        for i in 0..anchors {
            let Some((j, dist)) = nearest_negative(z, pairing, i) else {
                continue;
            };
            entropy -= scale * dist.max(cfg.entropy_floor).ln();
            if let Some(g) = grad.as_deref_mut() {
                if dist > cfg.entropy_floor {
                    // ∂(−log‖z_i − z_j‖)/∂z_i = −(z_i − z_j)/‖z_i − z_j‖²
                    let w = scale / (dist * dist);
                    for k in 0..z[i].len() {
                        let diff = z[i][k] - z[j][k];
                        g[i][k] -= w * diff;
                        g[j][k] += w * diff;
                    }
                }
            }
        }
    }
    ContrastiveParts { info_nce, entropy }
}

/// `L = L_CON + λ·L_MAE`.
pub fn combined_loss(
    recon: &[PatchMatrix],
    orig: &[PatchMatrix],
    plans: &[MaskPlan],
    z: &[EmbeddingVector],
    pairing: &BatchPairing,
    cfg: &LossConfig,
) -> Result<LossParts> {
    let con = contrastive_loss(z, pairing, cfg)?;
    let mae = mae_loss(recon, orig, plans)?;
    Ok(LossParts {
        total: con.total() + cfg.recon_weight * mae,
        con: con.total(),
        mae,
        info_nce: con.info_nce,
        entropy: con.entropy,
    })
}

/// Gradients of the combined loss w.r.t. every reconstructed pixel and every
/// embedding coordinate.
pub fn loss_gradients(
    recon: &[PatchMatrix],
    orig: &[PatchMatrix],
    plans: &[MaskPlan],
    z: &[EmbeddingVector],
    pairing: &BatchPairing,
    cfg: &LossConfig,
) -> Result<LossGradients> {
    let (con, z_grad) = contrastive_gradient(z, pairing, cfg)?;
    let mae = mae_loss(recon, orig, plans)?;
    let mut recon_grad = mae_gradient(recon, orig, plans)?;
    for g in &mut recon_grad {
        for v in &mut g.data {
            *v *= cfg.recon_weight;
        }
    }
    Ok(LossGradients {
        parts: LossParts {
            total: con.total() + cfg.recon_weight * mae,
            con: con.total(),
            mae,
            info_nce: con.info_nce,
            entropy: con.entropy,
        },
        recon: recon_grad,
        z: z_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::l2_normalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(v: &[f64]) -> EmbeddingVector {
        l2_normalize(v).unwrap()
    }

    fn plan(masked: &[bool]) -> MaskPlan {
        MaskPlan {
            masked: masked.to_vec(),
            fg_patch: vec![false; masked.len()],
            overall_ratio: 0.5,
            fg_rate: 0.0,
            bg_rate: 0.5,
        }
    }

    fn axis_batch() -> Vec<EmbeddingVector> {
        vec![unit(&[1.0, 0.0]), unit(&[0.0, 1.0]), unit(&[1.0, 0.0]), unit(&[0.0, 1.0])]
    }

    #[test]
    fn pairing_structure() {
        let p = BatchPairing::new(3).unwrap();
        let pairs: Vec<_> = p.pairs().collect();
        assert_eq!(pairs, vec![(0, 3), (1, 4), (2, 5), (3, 0), (4, 1), (5, 2)]);
        assert!(p.excluded(1, 4) && p.excluded(4, 4) && !p.excluded(1, 2));
        assert!(BatchPairing::new(0).is_err());
    }

    #[test]
    fn mae_examples() {
        let orig = vec![
            PatchMatrix::from_vec(2, 1, vec![0.0, 0.5]).unwrap(),
            PatchMatrix::from_vec(2, 1, vec![0.0, 0.5]).unwrap(),
        ];
        let plans = vec![plan(&[true, false]), plan(&[true, false])];
        assert_eq!(mae_loss(&orig, &orig, &plans).unwrap(), 0.0);
        // errors 1 and 3 on the single masked pixel of each image: (1 + 9) / 2
        let recon = vec![
            PatchMatrix::from_vec(2, 1, vec![1.0, 0.9]).unwrap(),
            PatchMatrix::from_vec(2, 1, vec![3.0, 0.9]).unwrap(),
        ];
        assert_eq!(mae_loss(&recon, &orig, &plans).unwrap(), 5.0);
        let mut worse = recon.clone();
        worse[0].data[1] = 7.0;
        worse[1].data[1] = -7.0;
        assert_eq!(mae_loss(&worse, &orig, &plans).unwrap(), 5.0);
    }

    #[test]
    fn mae_gradient_closed_form() {
        let orig = vec![PatchMatrix::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap(); 2];
        let recon = vec![
            PatchMatrix::from_vec(2, 2, vec![0.5, 0.2, 0.0, 1.0]).unwrap(),
            PatchMatrix::from_vec(2, 2, vec![0.0, 0.0, 0.0, 0.0]).unwrap(),
        ];
        let plans = vec![plan(&[true, false]), plan(&[false, true])];
        let g = mae_gradient(&recon, &orig, &plans).unwrap();
        // N = 1 original, |M_i| = 2 pixels: (Î − I) / (N |M_i|)
        assert!((g[0].data[0] - 0.4 / 2.0).abs() < 1e-15);
        assert_eq!(g[0].data[1], 0.0);
        assert_eq!(&g[0].data[2..], &[0.0, 0.0]);
        assert_eq!(&g[1].data[..2], &[0.0, 0.0]);
        assert!((g[1].data[3] + 0.4 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn mae_rejects_empty_mask() {
        let m = vec![PatchMatrix::zeros(2, 1)];
        assert!(matches!(
            mae_loss(&m, &m, &[plan(&[false, false])]),
            Err(Error::EmptyMask { image: 0 })
        ));
    }

    #[test]
    fn contrastive_worked_examples() {
        let z = axis_batch();
        let p = BatchPairing::new(2).unwrap();
        let cfg = LossConfig {
            temperature: 1.0,
            entropy_weight: 0.0,
            ..LossConfig::default()
        };
        let parts = contrastive_loss(&z, &p, &cfg).unwrap();
        assert!((parts.info_nce - 0.551_444_713_932_050_9).abs() < 1e-12);
        assert_eq!(parts.entropy, 0.0);
        let cfg = LossConfig {
            entropy_weight: 1.0,
            ..cfg
        };
        let parts = contrastive_loss(&z, &p, &cfg).unwrap();
        assert!((parts.entropy + 0.346_573_590_279_972_7).abs() < 1e-12);
    }

    #[test]
    fn contrastive_rejects_unnormalized() {
        let mut z = axis_batch();
        z[2] = EmbeddingVector::from_values(vec![2.0, 0.0]).unwrap();
        let p = BatchPairing::new(2).unwrap();
        assert!(matches!(
            contrastive_loss(&z, &p, &LossConfig::default()),
            Err(Error::NotNormalized { index: 2, .. })
        ));
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<EmbeddingVector> {
        (0..2 * n)
            .map(|_| unit(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn permuting_originals_leaves_loss_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4;
        let z = random_batch(&mut rng, n, 6);
        let perm = [2usize, 0, 3, 1];
        let permuted: Vec<_> = (0..2 * n)
            .map(|k| z[perm[k % n] + if k < n { 0 } else { n }].clone())
            .collect();
        let p = BatchPairing::new(n).unwrap();
        let cfg = LossConfig::default();
        let a = contrastive_loss(&z, &p, &cfg).unwrap();
        let b = contrastive_loss(&permuted, &p, &cfg).unwrap();
        assert!((a.info_nce - b.info_nce).abs() < 1e-12);
        assert!((a.entropy - b.entropy).abs() < 1e-12);
    }

    #[test]
    fn combined_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_batch(&mut rng, 2, 4);
        let p = BatchPairing::new(2).unwrap();
        let orig: Vec<_> = (0..4)
            .map(|_| PatchMatrix::from_vec(2, 2, (0..4).map(|_| rng.random()).collect()).unwrap())
            .collect();
        let recon: Vec<_> = orig
            .iter()
            .map(|o| PatchMatrix::from_vec(2, 2, o.data.iter().map(|v| v + 0.3).collect()).unwrap())
            .collect();
        let plans = vec![plan(&[true, false]); 4];
        let at = |lambda: f64| {
            let cfg = LossConfig {
                recon_weight: lambda,
                ..LossConfig::default()
            };
            combined_loss(&recon, &orig, &plans, &z, &p, &cfg).unwrap()
        };
        let (l0, l1, l2) = (at(0.0), at(1.0), at(2.0));
        assert_eq!(l0.total, l0.con);
        assert!(((l2.total - l2.con) - 2.0 * (l1.total - l1.con)).abs() < 1e-12);
        assert!((l1.mae - 0.09).abs() < 1e-12);
    }

    #[test]
    fn entropy_gradient_only_touches_argmin_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let z = random_batch(&mut rng, n, 5);
        let p = BatchPairing::new(n).unwrap();
        let cfg = LossConfig::default();
        let rows: Vec<&[f64]> = z.iter().map(|v| v.as_slice()).collect();
        let mut touched = vec![false; 2 * n];
        for i in 0..n {
            touched[i] = true;
            touched[nearest_negative(&rows, &p, i).unwrap().0] = true;
        }
        let mut g = vec![vec![0.0; 5]; 2 * n];
        contrastive_eval(&rows, &p, &LossConfig { temperature: 1e9, ..cfg }, Some(&mut g));
        // With τ → ∞ the InfoNCE gradient vanishes, leaving the entropy part.
        for (j, row) in g.iter().enumerate() {
            if !touched[j] {
                assert!(row.iter().all(|v| v.abs() < 1e-8), "view {j}: {row:?}");
            }
        }
    }

    #[test]
    fn nearest_negative_breaks_ties_low() {
        let z = axis_batch();
        let rows: Vec<&[f64]> = z.iter().map(|v| v.as_slice()).collect();
        let p = BatchPairing::new(2).unwrap();
        assert_eq!(nearest_negative(&rows, &p, 0).unwrap().0, 1);
    }
}
