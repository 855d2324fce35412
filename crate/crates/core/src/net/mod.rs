//! The fixed 1D-DCGAN generator and critic.
//!
//! Both networks are plain layer stacks ([`Sequential`]) with hand-written
//! backward passes. A forward pass returns a [`Tape`] that the backward pass
//! consumes; running batchnorm statistics are only touched through
//! [`Sequential::absorb_batch_stats`], so forward passes never mutate a
//! network.

mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub use self::layers::{BatchNorm1d, Conv1d, ConvTranspose1d, Layer, LayerKind, LayerSpec};
use self::layers::Cache;

pub const LATENT_DIM: usize = 100;
pub const WINDOW_LEN: usize = 48;

pub const INIT_STD: f64 = 0.02;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Which statistics batchnorm layers normalize with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BnMode {
    /// Statistics of the current batch (ASM).
    #[serde(rename = "asm")]
    Active,
    /// Running statistics gathered during training (SSM).
    #[serde(rename = "ssm")]
    Static,
}

/// Gradients aligned with [`Sequential::params`].
pub type Grads = Vec<Vec<f64>>;

/// Forward-pass record needed by [`Sequential::backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    caches: Vec<Cache>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::Batchnorm1d(_)))
    }

    /// Output shape for a given input shape, or `None` if the stack rejects it.
    pub fn out_shape(&self, shape: (usize, usize, usize)) -> Option<(usize, usize, usize)> {
        self.layers.iter().try_fold(shape, |s, l| l.out_shape(s))
    }

    /// Runs the stack; `name` prefixes layer names in numerical errors.
    pub fn forward(&self, x: &Tensor3, mode: BnMode, name: &str) -> Result<(Tensor3, Tape)> {
        if self.out_shape(x.shape()).is_none() {
            return Err(Error::arg(format!(
                "{name}: input of shape {:?} does not fit the network",
                x.shape()
            )));
        }
        if mode == BnMode::Active && self.has_batchnorm() && x.batch() < 2 {
            return Err(Error::InvalidMode(format!(
                "{name}: active statistics need a batch of at least 2, got {}",
                x.batch()
            )));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (next, cache) = layer.forward(&cur, mode);
            if !next.all_finite() {
                return Err(Error::Numerical {
                    context: format!("{name}.{i} ({:?})", layer.kind()),
                });
            }
            caches.push(cache);
            cur = next;
        }
        Ok((cur, Tape { caches }))
    }

    /// Back-propagates `dy` (gradient of a scalar loss wrt the output).
    ///
    /// Returns the input gradient and, when `want_params` is set, parameter
    /// gradients aligned with [`Sequential::params`].
    pub fn backward(&self, tape: &Tape, dy: &Tensor3, want_params: bool) -> (Tensor3, Option<Grads>) {
        let mut per_layer: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        let mut cur = dy.clone();
        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            let (dx, g) = layer.backward(cache, &cur, want_params);
            if let Some(g) = g {
                per_layer.push(g);
            }
            cur = dx;
        }
        let grads = want_params.then(|| per_layer.into_iter().rev().flatten().collect());
        (cur, grads)
    }

    /// Folds the batch statistics recorded on `tape` into the running
    /// statistics. No-op for tapes recorded in static mode.
    pub fn absorb_batch_stats(&mut self, tape: &Tape) {
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches) {
            if let (
                Layer::Batchnorm1d(bn),
                Cache::BatchNorm {
                    stats: Some((mean, var)),
                    ..
                },
            ) = (layer, cache)
            {
                bn.absorb(mean, var);
            }
        }
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Normalized pre-scale activations (`x̂`) of every batchnorm layer on
    /// the tape, in layer order.
    pub fn normalized_activations<'t>(&self, tape: &'t Tape) -> Vec<&'t [f64]> {
        tape.caches
            .iter()
            .filter_map(|c| match c {
                Cache::BatchNorm { xhat, .. } => Some(xhat.as_slice()),
                _ => None,
            })
            .collect()
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn conv_t(rng: &mut ChaCha8Rng, i: usize, o: usize, k: usize, s: usize, p: usize) -> Layer {
    Layer::ConvT1d(ConvTranspose1d {
        in_ch: i,
        out_ch: o,
        kernel: k,
        stride: s,
        padding: p,
        weight: normal_vec(rng, i * o * k, INIT_STD),
        bias: vec![0.0; o],
    })
}

fn conv(rng: &mut ChaCha8Rng, i: usize, o: usize, k: usize, s: usize, p: usize) -> Layer {
    Layer::Conv1d(Conv1d {
        in_ch: i,
        out_ch: o,
        kernel: k,
        stride: s,
        padding: p,
        weight: normal_vec(rng, i * o * k, INIT_STD),
        bias: vec![0.0; o],
    })
}

fn bn(channels: usize) -> Layer {
    Layer::Batchnorm1d(BatchNorm1d::new(channels, BN_MOMENTUM, BN_EPS))
}

/// Maps latents `(k, 100, 1)` to windows `(k, 1, 48)` in `(-1, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNet {
    pub net: Sequential,
}

/// Maps windows `(k, 1, 48)` to `k` unbounded scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticNet {
    pub net: Sequential,
}

/// Lengths 1 → 6 → 12 → 24 → 48; no batchnorm on the output layer.
pub fn init_generator(seed: u64) -> GeneratorNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        conv_t(&mut rng, LATENT_DIM, 256, 6, 1, 0),
        bn(256),
        Layer::Relu,
        conv_t(&mut rng, 256, 128, 4, 2, 1),
        bn(128),
        Layer::Relu,
        conv_t(&mut rng, 128, 64, 4, 2, 1),
        bn(64),
        Layer::Relu,
        conv_t(&mut rng, 64, 1, 4, 2, 1),
        Layer::Tanh,
    ];
    GeneratorNet {
        net: Sequential::new(layers),
    }
}

/// Lengths 48 → 24 → 12 → 6 → 1; batchnorm on the two middle layers only.
pub fn init_critic(seed: u64) -> CriticNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        conv(&mut rng, 1, 64, 4, 2, 1),
        Layer::LeakyRelu { slope: LEAKY_SLOPE },
        conv(&mut rng, 64, 128, 4, 2, 1),
        bn(128),
        Layer::LeakyRelu { slope: LEAKY_SLOPE },
        conv(&mut rng, 128, 256, 4, 2, 1),
        bn(256),
        Layer::LeakyRelu { slope: LEAKY_SLOPE },
        conv(&mut rng, 256, 1, 6, 1, 0),
    ];
    CriticNet {
        net: Sequential::new(layers),
    }
}

impl GeneratorNet {
    fn check_input(&self, z: &Tensor3) -> Result<()> {
        if z.channels() != LATENT_DIM || z.len() != 1 || z.batch() == 0 {
            return Err(Error::arg(format!(
                "generator expects latents of shape (k, {LATENT_DIM}, 1), got {:?}",
                z.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, z: &Tensor3, mode: BnMode) -> Result<Tensor3> {
        Ok(self.forward_tape(z, mode)?.0)
    }

    pub fn forward_tape(&self, z: &Tensor3, mode: BnMode) -> Result<(Tensor3, Tape)> {
        self.check_input(z)?;
        self.net.forward(z, mode, "generator")
    }

    /// Gradient of a scalar loss wrt the latents, given `dloss/doutput`.
    pub fn input_gradient(&self, tape: &Tape, dout: &Tensor3) -> Tensor3 {
        self.net.backward(tape, dout, false).0
    }
}

impl CriticNet {
    fn check_input(&self, x: &Tensor3) -> Result<()> {
        if x.channels() != 1 || x.len() != WINDOW_LEN || x.batch() == 0 {
            return Err(Error::arg(format!(
                "critic expects windows of shape (k, 1, {WINDOW_LEN}), got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor3, mode: BnMode) -> Result<Vec<f64>> {
        Ok(self.forward_tape(x, mode)?.0)
    }

    pub fn forward_tape(&self, x: &Tensor3, mode: BnMode) -> Result<(Vec<f64>, Tape)> {
        self.check_input(x)?;
        let (out, tape) = self.net.forward(x, mode, "critic")?;
        Ok((out.into_vec(), tape))
    }

    /// Clamps every parameter entry to `[-c, c]`.
    pub fn clip_params(&mut self, c: f64) -> Result<()> {
        if !(c > 0.0) {
            return Err(Error::arg(format!("clip value must be positive, got {c}")));
        }
        for p in self.net.params_mut() {
            p.iter_mut().for_each(|v| *v = v.clamp(-c, c));
        }
        Ok(())
    }

    pub fn max_abs_param(&self) -> f64 {
        self.net
            .params()
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Functional form of [`CriticNet::clip_params`].
pub fn clip_params(net: &CriticNet, c: f64) -> Result<CriticNet> {
    let mut out = net.clone();
    out.clip_params(c)?;
    Ok(out)
}
