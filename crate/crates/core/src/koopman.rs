//! Koopman autoencoder: encoder `E`, bias-free tridiagonal latent map `K`
//! and decoder `R`, with `s_n ≈ R(Kⁿ E(s_0))`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::adversarial::{AdversarialConfig, AdversarialCoupling};
use crate::datagen::Trajectory;
use crate::error::{shape_err, Error, Result};
use crate::networks::{Mlp, TridiagonalOperator};
use crate::nn::{clip_global_norm, Adam, Checkpointable, Graph, Module, Parameter, SwaState, Tensor, Var};
use crate::scalar::Scalar;
use crate::training::{check_finite, LossHistory, LossRecord, TrainConfig};

pub const DEFAULT_ENCODING_DIM: usize = 16;
pub const DEFAULT_CLIP_NORM: f64 = 1.0;
pub const LOSS_COLUMNS: [&str; 5] =
    ["pred_term", "recon_term", "unitary_term", "adversarial_term", "discriminator_loss"];

const DECODER_FIRST_ID: u32 = 1000;
const OPERATOR_ID: u32 = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanModel<T> {
    encoder: Mlp<T>,
    decoder: Mlp<T>,
    operator: TridiagonalOperator<T>,
}

impl<T: Scalar> KoopmanModel<T> {
    /// Random encoder and decoder; `K` starts at the identity.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, encoding_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let enc: Vec<usize> =
            std::iter::once(state_dim).chain(hidden.iter().copied()).chain(std::iter::once(encoding_dim)).collect();
        let dec: Vec<usize> = enc.iter().rev().copied().collect();
        Self::from_parts(
            Mlp::new(&enc, 0, "encoder", rng)?,
            Mlp::new(&dec, DECODER_FIRST_ID, "decoder", rng)?,
            TridiagonalOperator::new(encoding_dim, OPERATOR_ID)?,
        )
    }

    pub fn from_parts(encoder: Mlp<T>, decoder: Mlp<T>, operator: TridiagonalOperator<T>) -> Result<Self> {
        let d = operator.dim();
        if encoder.output_width() != d || decoder.input_width() != d {
            return shape_err(format!(
                "encoder out {}, operator {d}, decoder in {}",
                encoder.output_width(),
                decoder.input_width()
            ));
        }
        if encoder.input_width() != decoder.output_width() {
            return shape_err("encoder input and decoder output widths differ");
        }
        Ok(Self { encoder, decoder, operator })
    }

    pub fn encoder(&self) -> &Mlp<T> {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut Mlp<T> {
        &mut self.encoder
    }

    pub fn decoder(&self) -> &Mlp<T> {
        &self.decoder
    }

    pub fn decoder_mut(&mut self) -> &mut Mlp<T> {
        &mut self.decoder
    }

    pub fn operator(&self) -> &TridiagonalOperator<T> {
        &self.operator
    }

    /// Replaces `K`, masking it to the band.
    pub fn set_operator(&mut self, k: &Tensor<T>) -> Result<()> {
        let d = self.encoding_dim();
        if k.shape() != [d, d] {
            return shape_err(format!("operator {:?} for encoding dimension {d}", k.shape()));
        }
        self.operator = TridiagonalOperator::from_matrix(k.clone(), OPERATOR_ID)?;
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn encoding_dim(&self) -> usize {
        self.operator.dim()
    }

    /// Latents `Kⁱ E(s_0)` for `i = 0..=n`.
    pub fn latent_rollout(&self, s0: &Tensor<T>, n: usize) -> Result<Vec<Tensor<T>>> {
        if s0.len() != self.state_dim() {
            return shape_err(format!("state of length {} for dimension {}", s0.len(), self.state_dim()));
        }
        let mut e = self.encoder.forward(&Tensor::vector(s0.data().to_vec()))?;
        let mut out = Vec::with_capacity(n + 1);
        out.push(e.clone());
        for _ in 0..n {
            e = self.operator.apply(&e, 1)?;
            out.push(e.clone());
        }
        Ok(out)
    }

    /// `[R(K⁰E(s_0)), …, R(KⁿE(s_0))]`; the encoder runs once.
    pub fn rollout(&self, s0: &Tensor<T>, n: usize) -> Result<Vec<Tensor<T>>> {
        let latents = self.latent_rollout(s0, n)?;
        let stacked = Tensor::from_rows(&latents)?;
        let decoded = self.decoder.forward(&stacked)?;
        Ok((0..=n).map(|i| Tensor::vector(decoded.row(i).to_vec())).collect())
    }

    /// Rollout of every row of `s0` at once; entry `i` holds the states at step `i`.
    pub fn rollout_batch(&self, s0: &Tensor<T>, n: usize) -> Result<Vec<Tensor<T>>> {
        if s0.cols() != self.state_dim() {
            return shape_err(format!("states of width {} for dimension {}", s0.cols(), self.state_dim()));
        }
        let mut g = Graph::new();
        let k = g.constant(self.operator.matrix().clone());
        let v0 = g.constant(Tensor::matrix(s0.rows(), s0.cols(), s0.data().to_vec())?);
        let mut z = self.encoder.forward_frozen(&mut g, v0)?;
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..=n {
            if i > 0 {
                z = g.linear(z, k, None)?;
            }
            let s = self.decoder.forward_frozen(&mut g, z)?;
            out.push(g.value(s).clone());
        }
        Ok(out)
    }
}

impl<T: Scalar> Module<T> for KoopmanModel<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut p = self.encoder.parameters();
        p.extend(self.decoder.parameters());
        p.push(self.operator.parameter());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut p = self.encoder.parameters_mut();
        p.extend(self.decoder.parameters_mut());
        p.extend(self.operator.parameters_mut());
        p
    }
}

impl<T: Scalar> Checkpointable<T> for KoopmanModel<T> {
    const KIND: &'static str = "koopman";

    fn layer_sizes(&self) -> BTreeMap<String, Vec<usize>> {
        BTreeMap::from([
            ("encoder".to_string(), self.encoder.widths().to_vec()),
            ("decoder".to_string(), self.decoder.widths().to_vec()),
            ("operator".to_string(), vec![self.encoding_dim()]),
        ])
    }

    fn from_layer_sizes(sizes: &BTreeMap<String, Vec<usize>>) -> Result<Self> {
        let get = |k: &str| sizes.get(k).ok_or_else(|| Error::Format(format!("missing `{k}` widths")));
        let d = match get("operator")?.as_slice() {
            [d] => *d,
            other => return Err(Error::Format(format!("operator size {other:?}"))),
        };
        Self::from_parts(
            Mlp::zeros(get("encoder")?, 0, "encoder")?,
            Mlp::zeros(get("decoder")?, DECODER_FIRST_ID, "decoder")?,
            TridiagonalOperator::new(d, OPERATOR_ID)?,
        )
    }
}

/// Trajectories of equal length stacked for full-batch evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch<T> {
    /// Initial states, one row per trajectory.
    pub initial: Tensor<T>,
    /// States `v_1..v_n`, step-major: rows `(i-1)·B .. i·B` hold step `i`.
    pub future: Tensor<T>,
    /// States `v_0..v_{n-1}`, step-major.
    pub past: Tensor<T>,
    pub steps: usize,
    pub batch: usize,
}

impl<T: Scalar> TrajectoryBatch<T> {
    pub fn new(trajs: &[&Trajectory<T>]) -> Result<Self> {
        let Some(first) = trajs.first() else {
            return Err(Error::InvalidArgument("no trajectories".into()));
        };
        let (n, dim, b) = (first.steps(), first.dim(), trajs.len());
        if n == 0 {
            return Err(Error::InvalidArgument("trajectories need at least one step".into()));
        }
        if trajs.iter().any(|t| t.steps() != n || t.dim() != dim) {
            return Err(Error::InvalidArgument("trajectories must share length and dimension".into()));
        }
        let gather = |range: std::ops::Range<usize>| {
            let mut data = Vec::with_capacity(range.len() * b * dim);
            for i in range.clone() {
                for t in trajs {
                    data.extend_from_slice(t.states().row(i));
                }
            }
            Tensor::matrix(range.len() * b, dim, data)
        };
        Ok(Self { initial: gather(0..1)?, future: gather(1..n + 1)?, past: gather(0..n)?, steps: n, batch: b })
    }
}

/// Graph handles for the loss terms of one batch.
#[derive(Clone, Copy, Debug)]
pub struct KoopmanTerms {
    pub pred: Var,
    pub recon: Var,
    pub unitary: Var,
    /// `pred + recon + unitary`.
    pub total: Var,
    /// Encodings of the initial states, one row per trajectory.
    pub encodings: Var,
}

/// Records the three loss terms, averaged over the batch.
///
/// `pred = Σ_{i=1..n} ‖R(KⁱE(v_0)) − v_i‖² / n`,
/// `recon = Σ_{i=0..n-1} ‖R(E(v_i)) − v_i‖² / n`,
/// `unitary = ‖KKᵀ − I‖²_F`.
pub fn record_koopman_loss<T: Scalar>(
    g: &mut Graph<T>,
    model: &KoopmanModel<T>,
    batch: &TrajectoryBatch<T>,
    trainable: bool,
) -> Result<KoopmanTerms> {
    if batch.initial.cols() != model.state_dim() {
        return shape_err(format!("states of width {} for dimension {}", batch.initial.cols(), model.state_dim()));
    }
    let enc: fn(&Mlp<T>, &mut Graph<T>, Var) -> Result<Var> =
        if trainable { Mlp::forward_graph } else { Mlp::forward_frozen };
    let dec = enc;
    let k = if trainable { g.param(model.operator.parameter()) } else { g.constant(model.operator.matrix().clone()) };
    let norm = T::lit((batch.steps * batch.batch) as f64);

    let v0 = g.constant(batch.initial.clone());
    let mut z = enc(&model.encoder, g, v0)?;
    let encodings = z;
    let mut rolled = Vec::with_capacity(batch.steps);
    for _ in 0..batch.steps {
        z = g.linear(z, k, None)?;
        rolled.push(z);
    }
    let rolled = g.vstack(&rolled)?;
    let pred_states = dec(&model.decoder, g, rolled)?;
    let future = g.constant(batch.future.clone());
    let diff = g.sub(pred_states, future)?;
    let sq = g.square(diff);
    let s = g.sum(sq);
    let pred = g.scale(s, T::one() / norm);

    let past = g.constant(batch.past.clone());
    let past_encodings = enc(&model.encoder, g, past)?;
    let recon_states = dec(&model.decoder, g, past_encodings)?;
    let diff = g.sub(recon_states, past)?;
    let sq = g.square(diff);
    let s = g.sum(sq);
    let recon = g.scale(s, T::one() / norm);

    // K·Kᵀ as linear(K, K): rows of K against rows of K
    let kkt = g.linear(k, k, None)?;
    let eye = g.constant(Tensor::identity(model.encoding_dim()));
    let diff = g.sub(kkt, eye)?;
    let sq = g.square(diff);
    let unitary = g.sum(sq);

    let total = g.add(pred, recon)?;
    let total = g.add(total, unitary)?;
    Ok(KoopmanTerms { pred, recon, unitary, total, encodings })
}

/// The three loss terms for one trajectory.
pub fn koopman_loss_terms<T: Scalar>(model: &KoopmanModel<T>, traj: &Trajectory<T>) -> Result<(T, T, T)> {
    let batch = TrajectoryBatch::new(&[traj])?;
    let mut g = Graph::new();
    let t = record_koopman_loss(&mut g, model, &batch, false)?;
    Ok((g.scalar(t.pred), g.scalar(t.recon), g.scalar(t.unitary)))
}

pub fn koopman_loss<T: Scalar>(model: &KoopmanModel<T>, traj: &Trajectory<T>) -> Result<T> {
    let (a, b, c) = koopman_loss_terms(model, traj)?;
    Ok(a + b + c)
}

/// Builds the discriminator coupling for a Koopman model; it sees encodings.
pub fn koopman_coupling<T: Scalar>(
    model: &KoopmanModel<T>,
    config: &AdversarialConfig,
) -> Result<AdversarialCoupling<T>> {
    AdversarialCoupling::new(model.encoding_dim(), config)
}

/// Full-batch training on equal-length trajectories.
///
/// Gradients are clipped to `config.clip_norm` (the caller normally sets
/// [`DEFAULT_CLIP_NORM`]) and `K` is re-masked after every step. With a
/// coupling, odd epochs train the discriminator on the encodings of the
/// initial states and even epochs add the generator term, weighted by the
/// prediction loss.
pub fn train_koopman<T: Scalar>(
    model: &mut KoopmanModel<T>,
    data: &[Trajectory<T>],
    config: &TrainConfig,
    adversary: Option<&mut AdversarialCoupling<T>>,
) -> Result<LossHistory> {
    train_koopman_observed(model, data, config, adversary, |_, _| {})
}

/// [`train_koopman`], calling `observe(epoch, model)` after every epoch's
/// update and before the weight-averaging snapshot.
pub fn train_koopman_observed<T: Scalar>(
    model: &mut KoopmanModel<T>,
    data: &[Trajectory<T>],
    config: &TrainConfig,
    mut adversary: Option<&mut AdversarialCoupling<T>>,
    mut observe: impl FnMut(usize, &KoopmanModel<T>),
) -> Result<LossHistory> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("no training trajectories".into()));
    }
    let batch = TrajectoryBatch::new(&data.iter().collect::<Vec<_>>())?;
    let mut opt = Adam::new(config.adam)?;
    let mut swa = SwaState::new();
    let swa_start = config.swa_start();
    let mut history = LossHistory::new(&LOSS_COLUMNS);

    for epoch in 0..config.epochs {
        let terms = match adversary.as_deref_mut() {
            Some(adv) if AdversarialConfig::is_discriminator_epoch(epoch) => {
                let enc = model.encoder.forward(&batch.initial)?;
                let d = adv.discriminator_epoch(&enc)?.to_f64_lossy();
                check_finite(epoch, "discriminator loss", d)?;
                vec![None, None, None, None, Some(d)]
            }
            adv => {
                let mut g = Graph::new();
                let t = record_koopman_loss(&mut g, model, &batch, true)?;
                let (p, r, u) = (g.scalar(t.pred), g.scalar(t.recon), g.scalar(t.unitary));
                check_finite(epoch, "training loss", (p + r + u).to_f64_lossy())?;
                let (total, adv_term) = match adv {
                    Some(adv) => {
                        let term = adv.generator_term(&mut g, t.encodings, p)?;
                        let tv = g.scalar(term).to_f64_lossy();
                        check_finite(epoch, "adversarial term", tv)?;
                        (g.add(t.total, term)?, Some(tv))
                    }
                    None => (t.total, None),
                };
                let mut grads = g.backward(total)?.for_params(&model.parameters());
                if let Some(c) = config.clip_norm {
                    clip_global_norm(&mut grads, T::lit(c));
                }
                opt.step(&mut model.parameters_mut(), &grads)?;
                model.operator.apply_mask();
                let f = |x: T| Some(x.to_f64_lossy());
                vec![f(p), f(r), f(u), adv_term, None]
            }
        };
        observe(epoch, model);
        if epoch >= swa_start {
            swa.accumulate(model)?;
        }
        history.push(LossRecord {
            epoch,
            terms,
            model_checksum: model.checksum(),
            discriminator_checksum: adversary.as_deref().map(|a| a.discriminator().checksum()),
        });
    }
    if swa.count() > 0 {
        swa.finalize_into(model)?;
        model.operator.apply_mask();
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn identity_model(dim: usize) -> KoopmanModel<f64> {
        let mut e = Mlp::zeros(&[dim, dim], 0, "encoder").unwrap();
        e.layers_mut()[0].weight.assign(&Tensor::identity(dim)).unwrap();
        let mut r = Mlp::zeros(&[dim, dim], DECODER_FIRST_ID, "decoder").unwrap();
        r.layers_mut()[0].weight.assign(&Tensor::identity(dim)).unwrap();
        KoopmanModel::from_parts(e, r, TridiagonalOperator::new(dim, OPERATOR_ID).unwrap()).unwrap()
    }

    #[test]
    fn identity_operator_rollout() {
        let m = identity_model(3);
        let s0 = Tensor::vector(vec![0.5, -1.0, 2.0]);
        let out = m.rollout(&s0, 3).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|s| *s == s0));
        assert_eq!(m.rollout(&s0, 0).unwrap().len(), 1);
        assert!(m.rollout(&Tensor::vector(vec![1.0]), 2).is_err());
    }

    #[test]
    fn batch_rollout_agrees_with_single() {
        let m = KoopmanModel::<f64>::new(3, 4, &[8], &mut stream(1, 0)).unwrap();
        let s0 = Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.0]).unwrap();
        let batched = m.rollout_batch(&s0, 4).unwrap();
        for r in 0..2 {
            let single = m.rollout(&Tensor::vector(s0.row(r).to_vec()), 4).unwrap();
            for i in 0..=4 {
                for (a, b) in single[i].data().iter().zip(batched[i].row(r)) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn unitary_term_values() {
        let mut m = identity_model(4);
        let traj = Trajectory::new(Tensor::matrix(2, 4, vec![0.0; 8]).unwrap(), 0.1).unwrap();
        assert_eq!(koopman_loss_terms(&m, &traj).unwrap().2, 0.0);
        m.set_operator(&Tensor::zeros(&[4, 4])).unwrap();
        assert_eq!(koopman_loss_terms(&m, &traj).unwrap().2, 4.0);
    }

    #[test]
    fn exact_model_has_zero_loss() {
        let m = identity_model(2);
        let states = Tensor::matrix(3, 2, vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).unwrap();
        let traj = Trajectory::new(states, 0.1).unwrap();
        assert_eq!(koopman_loss(&m, &traj).unwrap(), 0.0);
        let single = Trajectory::new(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap(), 0.1).unwrap();
        assert!(koopman_loss(&m, &single).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = KoopmanModel::<f64>::new(3, 4, &[5], &mut stream(2, 0)).unwrap();
        let mut k = m.operator().matrix().clone();
        k.set(0, 1, 0.25);
        m.set_operator(&k).unwrap();
        let (back, _) = KoopmanModel::<f64>::from_checkpoint_bytes(&m.to_checkpoint_bytes(0).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
