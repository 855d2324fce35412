//! WGAN training with weight clipping.
//!
//! Each full batch of real windows drives one critic update; every
//! `ncritic` critic updates are followed by one generator update.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{init_critic, init_generator, BnMode, CriticNet, GeneratorNet, Grads, LATENT_DIM, WINDOW_LEN};
use crate::series::WindowBatch;
use crate::tensor::Tensor3;

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub ncritic: usize,
    pub clip_c: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            ncritic: 5,
            clip_c: 0.01,
            batch_size: 128,
            epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train: {what}")));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.ncritic == 0 {
            return bad("ncritic must be at least 1");
        }
        if !(self.clip_c > 0.0) {
            return bad("clip_c must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        Ok(())
    }
}

/// First and second moment estimates for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Grads,
    pub v: Grads,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[&[f64]]) -> Self {
        let zeros: Grads = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified when a gradient is
/// non-finite.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
) -> Result<()> {
    if params.len() != grads.len()
        || params.len() != state.m.len()
        || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
    {
        return Err(Error::arg("adam: parameter and gradient shapes differ"));
    }
    if !grads.iter().flatten().all(|g| g.is_finite()) {
        return Err(Error::Numerical {
            context: "adam gradient".into(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// `(k, 100, 1)` standard normal latents.
pub fn sample_latents(rng: &mut impl RngCore, k: usize) -> Tensor3 {
    let data = (0..k * LATENT_DIM)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor3::from_vec(k, LATENT_DIM, 1, data).expect("shape matches")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn constant_grad(k: usize, value: f64) -> Tensor3 {
    Tensor3::from_vec(k, 1, 1, vec![value; k]).expect("shape matches")
}

fn add_into(acc: &mut Grads, other: Grads) {
    for (a, b) in acc.iter_mut().zip(other) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

/// Updates the critic towards a larger `mean D(real) - mean D(G(z))`, then
/// clips its parameters. Returns that difference as measured before the
/// update.
pub fn critic_step(
    critic: &mut CriticNet,
    opt: &mut AdamState,
    generator: &GeneratorNet,
    real: &Tensor3,
    z: &Tensor3,
    cfg: &TrainConfig,
) -> Result<f64> {
    let fake = generator.forward(z, BnMode::Active)?;
    let (s_real, tape_real) = critic.forward_tape(real, BnMode::Active)?;
    let (s_fake, tape_fake) = critic.forward_tape(&fake, BnMode::Active)?;
    let estimate = mean(&s_real) - mean(&s_fake);

    // loss = -(mean real - mean fake)
    let (_, g_real) = critic.net.backward(
        &tape_real,
        &constant_grad(s_real.len(), -1.0 / s_real.len() as f64),
        true,
    );
    let (_, g_fake) = critic.net.backward(
        &tape_fake,
        &constant_grad(s_fake.len(), 1.0 / s_fake.len() as f64),
        true,
    );
    let mut grads = g_real.expect("requested");
    add_into(&mut grads, g_fake.expect("requested"));

    adam_step(&mut critic.net.params_mut(), &grads, opt, cfg.lr, cfg.beta1, cfg.beta2)?;
    critic.net.absorb_batch_stats(&tape_real);
    critic.net.absorb_batch_stats(&tape_fake);
    critic.clip_params(cfg.clip_c)?;
    Ok(estimate)
}

/// Updates the generator towards a larger mean critic score on its samples.
/// Returns `-mean D(G(z))` before the update.
pub fn generator_step(
    generator: &mut GeneratorNet,
    opt: &mut AdamState,
    critic: &CriticNet,
    z: &Tensor3,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (fake, tape_g) = generator.forward_tape(z, BnMode::Active)?;
    let (scores, tape_d) = critic.forward_tape(&fake, BnMode::Active)?;
    let k = scores.len();
    let (dfake, _) = critic
        .net
        .backward(&tape_d, &constant_grad(k, -1.0 / k as f64), false);
    let (_, grads) = generator.net.backward(&tape_g, &dfake, true);
    adam_step(
        &mut generator.net.params_mut(),
        &grads.expect("requested"),
        opt,
        cfg.lr,
        cfg.beta1,
        cfg.beta2,
    )?;
    generator.net.absorb_batch_stats(&tape_g);
    Ok(-mean(&scores))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub critic_loss: f64,
    /// Present on iterations that also updated the generator.
    pub gen_loss: Option<f64>,
    /// Largest absolute critic parameter right after this iteration's clip.
    pub critic_max_abs: f64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub iterations: Vec<IterationLog>,
    /// Mean critic estimate per epoch.
    pub epoch_wasserstein: Vec<f64>,
    pub critic_updates: usize,
    pub generator_updates: usize,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,critic_loss,gen_loss\n");
        for it in &self.iterations {
            let gen = it.gen_loss.map(|g| g.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", it.iteration, it.critic_loss, gen));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub struct TrainOutcome {
    pub generator: GeneratorNet,
    pub critic: CriticNet,
    pub report: TrainReport,
}

/// Trains a fresh generator/critic pair on the windows of all batches.
///
/// Partial batches are dropped each epoch. Deterministic for a fixed seed.
pub fn train(data: &[WindowBatch], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(b) = data.iter().find(|b| b.w != WINDOW_LEN) {
        return Err(Error::arg(format!(
            "training windows must have length {WINDOW_LEN}, got {}",
            b.w
        )));
    }
    let pool: Vec<&[f64]> = data
        .iter()
        .flat_map(|b| (0..b.len()).map(move |i| b.window(i)))
        .collect();
    if pool.len() < cfg.batch_size {
        return Err(Error::NoTrainingData(format!(
            "{} training windows cannot fill a batch of {}",
            pool.len(),
            cfg.batch_size
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut generator = init_generator(rng.next_u64());
    let mut critic = init_critic(rng.next_u64());
    let mut gen_opt = AdamState::new(&generator.net.params());
    let mut critic_opt = AdamState::new(&critic.net.params());
    let mut report = TrainReport::default();
    let started = Instant::now();

    let mut order: Vec<usize> = (0..pool.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_n = 0;
        for chunk in order.chunks_exact(cfg.batch_size) {
            let mut flat = Vec::with_capacity(cfg.batch_size * WINDOW_LEN);
            for &i in chunk {
                flat.extend_from_slice(pool[i]);
            }
            let real = Tensor3::from_vec(cfg.batch_size, 1, WINDOW_LEN, flat)?;
            let z = sample_latents(&mut rng, cfg.batch_size);
            let critic_loss = critic_step(&mut critic, &mut critic_opt, &generator, &real, &z, cfg)?;
            report.critic_updates += 1;

            let gen_loss = if report.critic_updates % cfg.ncritic == 0 {
                let z = sample_latents(&mut rng, cfg.batch_size);
                let loss = generator_step(&mut generator, &mut gen_opt, &critic, &z, cfg)?;
                report.generator_updates += 1;
                Some(loss)
            } else {
                None
            };
            if !critic_loss.is_finite() || gen_loss.is_some_and(|g| !g.is_finite()) {
                return Err(Error::Numerical {
                    context: format!("training iteration {}", report.iterations.len()),
                });
            }
            epoch_sum += critic_loss;
            epoch_n += 1;
            report.iterations.push(IterationLog {
                iteration: report.iterations.len(),
                critic_loss,
                gen_loss,
                critic_max_abs: critic.max_abs_param(),
                elapsed_secs: started.elapsed().as_secs_f64(),
            });
        }
        report.epoch_wasserstein.push(epoch_sum / epoch_n as f64);
    }

    Ok(TrainOutcome {
        generator,
        critic,
        report,
    })
}
