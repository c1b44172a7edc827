//! Adversarial coupling between an encoder and a latent discriminator.
//!
//! Label convention: the discriminator is trained towards 1 on draws from
//! the matched normal ("fake" latents) and towards 0 on true encodings. The
//! generator term scores true encodings against 1, the opposite of their
//! discriminator target, and is scaled by the detached accuracy loss.
//! Encodings pass through small Gaussian noise before reaching the
//! discriminator; the decoder always sees the clean encodings.

use rand::Rng;

use crate::error::{Error, Result};
use crate::networks::{Discriminator, DEFAULT_HIDDEN};
use crate::nn::{Adam, AdamConfig, Graph, Module, Tensor, Var};
use crate::rng::{standard_normal, stream, streams, SeededRng};
use crate::scalar::Scalar;

/// Discriminator target for true encodings.
pub const TRUE_LABEL: f64 = 0.0;
/// Discriminator target for matched-normal draws.
pub const FAKE_LABEL: f64 = 1.0;
/// Target the encoder is pushed towards.
pub const GENERATOR_TARGET: f64 = 1.0;

pub const DEFAULT_NOISE_SCALE: f64 = 0.025;

#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialConfig {
    /// Noise standard deviation as a multiple of the encodings' std.
    pub noise_scale: f64,
    pub adam: AdamConfig,
    pub hidden: Vec<usize>,
    /// Seeds the discriminator weights, the noise and the fake draws.
    pub seed: u64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self { noise_scale: DEFAULT_NOISE_SCALE, adam: AdamConfig::default(), hidden: DEFAULT_HIDDEN.to_vec(), seed: 0 }
    }
}

impl AdversarialConfig {
    /// Model epochs are even, discriminator epochs odd.
    pub fn is_discriminator_epoch(epoch: usize) -> bool {
        epoch % 2 == 1
    }
}

/// Rows of encodings with their per-coordinate population statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBatch<T> {
    encodings: Tensor<T>,
    mean: Vec<T>,
    std: Vec<T>,
}

impl<T: Scalar> LatentBatch<T> {
    pub fn new(encodings: Tensor<T>) -> Result<Self> {
        let (n, d) = (encodings.rows(), encodings.cols());
        if encodings.is_empty() || n == 0 {
            return Err(Error::InvalidArgument("latent batch is empty".into()));
        }
        let nf = T::lit(n as f64);
        let mut mean = vec![T::zero(); d];
        for r in 0..n {
            for (m, &x) in mean.iter_mut().zip(encodings.row(r)) {
                *m = *m + x;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / nf);
        let mut var = vec![T::zero(); d];
        for r in 0..n {
            for ((v, &x), &m) in var.iter_mut().zip(encodings.row(r)).zip(&mean) {
                *v = *v + (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / nf).sqrt()).collect();
        Ok(Self { encodings, mean, std })
    }

    pub fn encodings(&self) -> &Tensor<T> {
        &self.encodings
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn std(&self) -> &[T] {
        &self.std
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn len(&self) -> usize {
        self.encodings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `count` independent draws from `N(mean, diag(std²))` of the batch.
pub fn sample_fake_latents<T: Scalar, R: Rng + ?Sized>(
    batch: &LatentBatch<T>,
    count: usize,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one fake latent".into()));
    }
    let d = batch.dim();
    let mut data = Vec::with_capacity(count * d);
    for _ in 0..count {
        for j in 0..d {
            data.push(batch.mean[j] + batch.std[j] * T::lit(standard_normal(rng)));
        }
    }
    Tensor::matrix(count, d, data)
}

/// Adds `N(0, (scale · std_j)²)` noise to each coordinate of each row of `e`.
pub fn inject_noise<T: Scalar, R: Rng + ?Sized>(
    e: &Tensor<T>,
    batch: &LatentBatch<T>,
    scale: T,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let noise = noise_like(e, batch, scale, rng)?;
    e.add(&noise)
}

fn noise_like<T: Scalar, R: Rng + ?Sized>(
    e: &Tensor<T>,
    batch: &LatentBatch<T>,
    scale: T,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if scale < T::zero() {
        return Err(Error::InvalidArgument("noise scale must be non-negative".into()));
    }
    let d = batch.dim();
    if e.cols() != d {
        return Err(Error::Shape(format!("latent width {} for batch of width {d}", e.cols())));
    }
    let mut out = Tensor::zeros(e.shape());
    for (k, x) in out.data_mut().iter_mut().enumerate() {
        let s = scale * batch.std[k % d];
        let z = T::lit(standard_normal(rng));
        *x = s * z;
    }
    Ok(out)
}

/// One Adam step of the discriminator on true and fake latents.
///
/// Returns the mean binary cross entropy before the update. Only the
/// discriminator's parameters change.
pub fn discriminator_epoch<T: Scalar>(
    disc: &mut Discriminator<T>,
    true_latents: &Tensor<T>,
    fake_latents: &Tensor<T>,
    opt: &mut Adam<T>,
) -> Result<T> {
    if true_latents.is_empty() || fake_latents.is_empty() {
        return Err(Error::InvalidArgument("discriminator epoch needs true and fake latents".into()));
    }
    let d = disc.latent_dim();
    if true_latents.cols() != d || fake_latents.cols() != d {
        return Err(Error::Shape(format!(
            "latents of width {} / {} for discriminator of width {d}",
            true_latents.cols(),
            fake_latents.cols()
        )));
    }
    let (nt, nf) = (true_latents.rows(), fake_latents.rows());
    let mut stacked = true_latents.data().to_vec();
    stacked.extend_from_slice(fake_latents.data());
    let inputs = Tensor::matrix(nt + nf, d, stacked)?;
    let mut targets = vec![T::lit(TRUE_LABEL); nt];
    targets.extend(std::iter::repeat_n(T::lit(FAKE_LABEL), nf));

    let mut g = Graph::new();
    let x = g.constant(inputs);
    let p = disc.probabilities(&mut g, x, true)?;
    let loss = g.bce(p, &targets)?;
    let value = g.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFinite("discriminator loss".into()));
    }
    let grads = g.backward(loss)?;
    let grads = grads.for_params(&disc.parameters());
    opt.step(&mut disc.parameters_mut(), &grads)?;
    Ok(value)
}

/// `accuracy_loss · mean bce(disc(e), 1)` over the rows of `true_latents`.
pub fn generator_term<T: Scalar>(disc: &Discriminator<T>, true_latents: &Tensor<T>, accuracy_loss: T) -> Result<T> {
    if accuracy_loss < T::zero() {
        return Err(Error::InvalidArgument("accuracy loss must be non-negative".into()));
    }
    let probs = disc.discriminate_batch(true_latents)?;
    if probs.is_empty() {
        return Err(Error::InvalidArgument("no latents".into()));
    }
    let target = T::lit(GENERATOR_TARGET);
    let mut s = T::zero();
    for &p in &probs {
        s = s + crate::nn::bce_loss(p, target)?;
    }
    Ok(accuracy_loss * s / T::lit(probs.len() as f64))
}

/// Records the generator term on a graph; gradients reach `latents` but the
/// discriminator is held constant.
pub fn generator_term_graph<T: Scalar>(
    g: &mut Graph<T>,
    disc: &Discriminator<T>,
    latents: Var,
    accuracy_loss: T,
) -> Result<Var> {
    let p = disc.probabilities(g, latents, false)?;
    let n = g.value(p).len();
    let ce = g.bce(p, &vec![T::lit(GENERATOR_TARGET); n])?;
    Ok(g.scale(ce, accuracy_loss))
}

/// Discriminator, its optimizer and the random stream it consumes.
pub struct AdversarialCoupling<T> {
    disc: Discriminator<T>,
    opt: Adam<T>,
    noise_scale: T,
    rng: SeededRng,
}

impl<T: Scalar> AdversarialCoupling<T> {
    pub fn new(latent_dim: usize, config: &AdversarialConfig) -> Result<Self> {
        if !(config.noise_scale >= 0.0) {
            return Err(Error::InvalidArgument("noise scale must be non-negative".into()));
        }
        let mut rng = stream(config.seed, streams::ADVERSARY);
        let disc = Discriminator::new(latent_dim, &config.hidden, &mut rng)?;
        Ok(Self { disc, opt: Adam::new(config.adam)?, noise_scale: T::lit(config.noise_scale), rng })
    }

    pub fn with_discriminator(disc: Discriminator<T>, config: &AdversarialConfig) -> Result<Self> {
        Ok(Self {
            disc,
            opt: Adam::new(config.adam)?,
            noise_scale: T::lit(config.noise_scale),
            rng: stream(config.seed, streams::ADVERSARY),
        })
    }

    pub fn discriminator(&self) -> &Discriminator<T> {
        &self.disc
    }

    /// Trains the discriminator for one epoch on the current clean
    /// encodings: noisy true latents against one fresh fake per encoding.
    pub fn discriminator_epoch(&mut self, encodings: &Tensor<T>) -> Result<T> {
        let batch = LatentBatch::new(encodings.clone())?;
        let noisy = inject_noise(encodings, &batch, self.noise_scale, &mut self.rng)?;
        let fakes = sample_fake_latents(&batch, encodings.rows(), &mut self.rng)?;
        discriminator_epoch(&mut self.disc, &noisy, &fakes, &mut self.opt)
    }

    /// Adds noise to the recorded encodings and returns the weighted
    /// generator term.
    pub fn generator_term(&mut self, g: &mut Graph<T>, encodings: Var, accuracy_loss: T) -> Result<Var> {
        let batch = LatentBatch::new(g.value(encodings).clone())?;
        let noise = noise_like(g.value(encodings), &batch, self.noise_scale, &mut self.rng)?;
        let noise = g.constant(noise);
        let noisy = g.add(encodings, noise)?;
        generator_term_graph(g, &self.disc, noisy, accuracy_loss)
    }
}
