//! Generator inversion by gradient descent in latent space, and the
//! anomaly score built from it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{BnMode, GeneratorNet, LATENT_DIM, WINDOW_LEN};
use crate::sdtw::{euclidean, euclidean_grad, sdtw, sdtw_value_and_grad, SdtwConfig};
use crate::series::{windows, Segment};
use crate::tensor::Tensor3;
use crate::train::sample_latents;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftDtw,
    Euclidean,
}

/// How per-window losses are combined before differentiating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InvertConfig {
    pub steps: usize,
    /// `None` picks [`InvertConfig::default_step_size`] for `loss`.
    pub step_size: Option<f64>,
    pub loss: LossKind,
    pub bn_mode: BnMode,
    pub seed: u64,
    pub aggregate: Aggregate,
    /// Independent latent initializations per window; the best final loss
    /// wins.
    pub restarts: usize,
    /// Windows per inversion batch; `None` inverts a segment in one batch.
    pub batch_size: Option<usize>,
}

impl Default for InvertConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            step_size: None,
            loss: LossKind::SoftDtw,
            bn_mode: BnMode::Active,
            seed: 0,
            aggregate: Aggregate::Sum,
            restarts: 1,
            batch_size: None,
        }
    }
}

impl InvertConfig {
    /// Step size used when none is configured: 0.05 for soft-DTW, 0.01 for
    /// the euclidean loss.
    pub fn default_step_size(loss: LossKind) -> f64 {
        match loss {
            LossKind::SoftDtw => 0.05,
            LossKind::Euclidean => 0.01,
        }
    }

    pub fn effective_step_size(&self) -> f64 {
        self.step_size
            .unwrap_or_else(|| Self::default_step_size(self.loss))
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("invert: steps must be at least 1".into()));
        }
        if !(self.effective_step_size() > 0.0) {
            return Err(Error::Config("invert: step_size must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("invert: restarts must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("invert: batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Weights of the two score terms and the window-level threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreWeights {
    pub alpha_w: f64,
    pub beta_w: f64,
    pub threshold: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            alpha_w: 1.0,
            beta_w: 0.0,
            threshold: 1.0,
        }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_w < 0.0 || self.beta_w < 0.0 || (self.alpha_w == 0.0 && self.beta_w == 0.0) {
            return Err(Error::Config(
                "score: alpha_w and beta_w must be non-negative and not both zero".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    /// `(k, 100, 1)`
    pub z_final: Tensor3,
    /// `(k, 1, 48)`
    pub x_recon: Tensor3,
    /// Configured reconstruction loss per window at `z_final`.
    pub losses: Vec<f64>,
    pub latent_norms: Vec<f64>,
}

/// Standard normal starting latents, deterministic per seed.
pub fn init_latents(k: usize, seed: u64) -> Result<Tensor3> {
    if k == 0 {
        return Err(Error::arg("cannot initialize zero latent vectors"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_latents(&mut rng, k))
}

fn check_targets(x: &Tensor3) -> Result<()> {
    if x.channels() != 1 || x.len() != WINDOW_LEN || x.batch() == 0 {
        return Err(Error::arg(format!(
            "query windows must have shape (k, 1, {WINDOW_LEN}), got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

/// Per-window loss values and their gradients wrt the reconstruction.
fn losses_and_grads(
    recon: &Tensor3,
    target: &Tensor3,
    loss: LossKind,
    sdtw_cfg: &SdtwConfig,
) -> Result<(Vec<f64>, Tensor3)> {
    let k = recon.batch();
    let mut losses = Vec::with_capacity(k);
    let mut grad = Tensor3::zeros(k, 1, WINDOW_LEN);
    for i in 0..k {
        let (l, g) = match loss {
            LossKind::SoftDtw => sdtw_value_and_grad(recon.item(i), target.item(i), sdtw_cfg)?,
            LossKind::Euclidean => (
                euclidean(recon.item(i), target.item(i))?,
                euclidean_grad(recon.item(i), target.item(i))?,
            ),
        };
        losses.push(l);
        grad.item_mut(i).copy_from_slice(&g);
    }
    Ok((losses, grad))
}

fn latent_norms(z: &Tensor3) -> Vec<f64> {
    (0..z.batch())
        .map(|i| z.item(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Inverts `x` starting from latents drawn with `cfg.seed`.
pub fn invert_batch(
    x: &Tensor3,
    generator: &GeneratorNet,
    cfg: &InvertConfig,
    sdtw_cfg: &SdtwConfig,
) -> Result<Reconstruction> {
    check_targets(x)?;
    let z0 = init_latents(x.batch(), cfg.seed)?;
    invert_from(x, generator, z0, cfg, sdtw_cfg)
}

/// Runs exactly `cfg.steps` plain gradient-descent updates on `z0` with the
/// generator frozen.
pub fn invert_from(
    x: &Tensor3,
    generator: &GeneratorNet,
    z0: Tensor3,
    cfg: &InvertConfig,
    sdtw_cfg: &SdtwConfig,
) -> Result<Reconstruction> {
    cfg.validate()?;
    sdtw_cfg.validate()?;
    check_targets(x)?;
    if z0.shape() != (x.batch(), LATENT_DIM, 1) {
        return Err(Error::arg(format!(
            "initial latents {:?} do not match {} query windows",
            z0.shape(),
            x.batch()
        )));
    }
    let k = x.batch();
    let scale = match cfg.aggregate {
        Aggregate::Sum => 1.0,
        Aggregate::Mean => 1.0 / k as f64,
    };

    let step_size = cfg.effective_step_size();
    let mut z = z0;
    for step in 0..cfg.steps {
        let (recon, tape) = generator.forward_tape(&z, cfg.bn_mode)?;
        let (losses, mut dout) = losses_and_grads(&recon, x, cfg.loss, sdtw_cfg)?;
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numerical {
                context: format!("inversion loss at step {step}"),
            });
        }
        if scale != 1.0 {
            dout.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
        let dz = generator.input_gradient(&tape, &dout);
        z.data_mut()
            .iter_mut()
            .zip(dz.data())
            .for_each(|(v, g)| *v -= step_size * g);
    }

    let x_recon = generator.forward(&z, cfg.bn_mode)?;
    let (losses, _) = losses_and_grads(&x_recon, x, cfg.loss, sdtw_cfg)?;
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numerical {
            context: format!("inversion loss at step {}", cfg.steps),
        });
    }
    Ok(Reconstruction {
        latent_norms: latent_norms(&z),
        z_final: z,
        x_recon,
        losses,
    })
}

/// `alpha_w · SoftDTW(x_i, G(z_i)) + beta_w · ‖z_i‖₂` per window.
pub fn anomaly_score(
    x: &Tensor3,
    recon: &Reconstruction,
    weights: &ScoreWeights,
    sdtw_cfg: &SdtwConfig,
) -> Result<Vec<f64>> {
    Ok(score_terms(x, recon, weights, sdtw_cfg)?.2)
}

/// Soft-DTW term, latent norm and combined score per window.
fn score_terms(
    x: &Tensor3,
    recon: &Reconstruction,
    weights: &ScoreWeights,
    sdtw_cfg: &SdtwConfig,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if x.batch() != recon.x_recon.batch() {
        return Err(Error::arg("reconstruction does not match the query windows"));
    }
    let mut recon_loss = Vec::with_capacity(x.batch());
    let mut scores = Vec::with_capacity(x.batch());
    for i in 0..x.batch() {
        let d = sdtw(x.item(i), recon.x_recon.item(i), sdtw_cfg)?;
        recon_loss.push(d);
        scores.push(weights.alpha_w * d + weights.beta_w * recon.latent_norms[i]);
    }
    Ok((recon_loss, recon.latent_norms.clone(), scores))
}

/// Window scores of one segment, aligned with window starts.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentScores {
    pub starts: Vec<usize>,
    /// Soft-DTW between each window and its reconstruction.
    pub recon_loss: Vec<f64>,
    pub latent_norm: Vec<f64>,
    pub scores: Vec<f64>,
}

impl SegmentScores {
    /// Recombines the stored terms under different weights without
    /// re-running the inversion.
    pub fn rescored(&self, weights: &ScoreWeights) -> Vec<f64> {
        self.recon_loss
            .iter()
            .zip(&self.latent_norm)
            .map(|(d, n)| weights.alpha_w * d + weights.beta_w * n)
            .collect()
    }

    pub fn to_csv(&self, segment_id: usize) -> String {
        let mut out = String::from("segment_id,window_start,recon_loss,latent_norm,anomaly_score\n");
        for i in 0..self.starts.len() {
            out.push_str(&format!(
                "{segment_id},{},{},{},{}\n",
                self.starts[i], self.recon_loss[i], self.latent_norm[i], self.scores[i]
            ));
        }
        out
    }
}

/// Splits `n` windows into batches of at most `size`, never leaving a batch
/// of one behind when `n > 1` (active-mode batchnorm needs two).
fn batch_ranges(n: usize, size: Option<usize>) -> Vec<std::ops::Range<usize>> {
    let size = size.unwrap_or(n).max(1);
    let mut out: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(size)
        .map(|s| s..(s + size).min(n))
        .collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").end = last.end;
    }
    out
}

/// Inverts all windows of `segment` (latents for the whole segment are drawn
/// once from `cfg.seed`, then split into batches) and scores them.
pub fn score_segment(
    segment: &Segment,
    generator: &GeneratorNet,
    cfg: &InvertConfig,
    sdtw_cfg: &SdtwConfig,
    weights: &ScoreWeights,
    w: usize,
) -> Result<SegmentScores> {
    cfg.validate()?;
    weights.validate()?;
    if w != WINDOW_LEN {
        return Err(Error::arg(format!(
            "the generator produces windows of length {WINDOW_LEN}, not {w}"
        )));
    }
    let batch = windows(segment, w)?;
    let x = batch.to_tensor();
    let n = x.batch();

    let mut best: Option<Reconstruction> = None;
    for restart in 0..cfg.restarts {
        let z0 = init_latents(n, cfg.seed.wrapping_add(restart as u64))?;
        let mut parts = Vec::new();
        for r in batch_ranges(n, cfg.batch_size) {
            let idx: Vec<usize> = r.collect();
            parts.push(invert_from(&x.select(&idx), generator, z0.select(&idx), cfg, sdtw_cfg)?);
        }
        let merged = merge(parts);
        best = Some(match best {
            None => merged,
            Some(prev) => keep_better(prev, merged),
        });
    }
    let recon = best.expect("at least one restart");
    let (recon_loss, latent_norm, scores) = score_terms(&x, &recon, weights, sdtw_cfg)?;
    Ok(SegmentScores {
        starts: batch.starts,
        recon_loss,
        latent_norm,
        scores,
    })
}

fn concat(parts: &[&Tensor3]) -> Tensor3 {
    let (_, c, l) = parts[0].shape();
    let data: Vec<f64> = parts.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor3::from_vec(data.len() / (c * l), c, l, data).expect("consistent parts")
}

fn merge(parts: Vec<Reconstruction>) -> Reconstruction {
    Reconstruction {
        z_final: concat(&parts.iter().map(|p| &p.z_final).collect::<Vec<_>>()),
        x_recon: concat(&parts.iter().map(|p| &p.x_recon).collect::<Vec<_>>()),
        losses: parts.iter().flat_map(|p| p.losses.clone()).collect(),
        latent_norms: parts.iter().flat_map(|p| p.latent_norms.clone()).collect(),
    }
}

/// Window-wise pick of the lower final loss.
fn keep_better(mut a: Reconstruction, b: Reconstruction) -> Reconstruction {
    for i in 0..a.losses.len() {
        if b.losses[i] < a.losses[i] {
            a.losses[i] = b.losses[i];
            a.latent_norms[i] = b.latent_norms[i];
            a.z_final.item_mut(i).copy_from_slice(b.z_final.item(i));
            a.x_recon.item_mut(i).copy_from_slice(b.x_recon.item(i));
        }
    }
    a
}
