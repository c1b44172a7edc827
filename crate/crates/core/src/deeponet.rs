//! DeepONet: a branch network over sensor values of the input function and a
//! trunk network over query coordinates, combined by a dot product.
//!
//! The dot product is divided by the latent dimension. This is a fixed
//! rescaling of the branch output, so the model family is unchanged, but
//! with the default widths it trains far faster from Glorot initialization.

use std::collections::BTreeMap;

use rand::Rng;

use crate::adversarial::{AdversarialConfig, AdversarialCoupling};
use crate::datagen::{FieldSolution, Grid1D};
use crate::error::{shape_err, Error, Result};
use crate::networks::Mlp;
use crate::nn::{clip_global_norm, Adam, Checkpointable, Graph, Module, Parameter, SwaState, Tensor, Var};
use crate::rng::{stream, streams};
use crate::scalar::Scalar;
use crate::training::{check_finite, LossHistory, LossRecord, TrainConfig};

pub const DEFAULT_LATENT_DIM: usize = 64;
/// Time slices whose grid points form the queries of one training step.
pub const SLICES_PER_STEP: usize = 5;
/// Query coordinates are `(x, t)`.
pub const COORD_DIM: usize = 2;
pub const LOSS_COLUMNS: [&str; 3] = ["train_loss", "adversarial_term", "discriminator_loss"];

const TRUNK_FIRST_ID: u32 = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct DeepONet<T> {
    branch: Mlp<T>,
    trunk: Mlp<T>,
}

impl<T: Scalar> DeepONet<T> {
    pub fn new<R: Rng + ?Sized>(
        sensors: usize,
        coord_dim: usize,
        hidden: &[usize],
        latent_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let branch = Mlp::new(&widths(sensors, hidden, latent_dim), 0, "branch", rng)?;
        let trunk = Mlp::new(&widths(coord_dim, hidden, latent_dim), TRUNK_FIRST_ID, "trunk", rng)?;
        Self::from_parts(branch, trunk)
    }

    pub fn from_parts(branch: Mlp<T>, trunk: Mlp<T>) -> Result<Self> {
        if branch.output_width() != trunk.output_width() {
            return shape_err(format!(
                "branch width {} differs from trunk width {}",
                branch.output_width(),
                trunk.output_width()
            ));
        }
        Ok(Self { branch, trunk })
    }

    pub fn branch(&self) -> &Mlp<T> {
        &self.branch
    }

    pub fn branch_mut(&mut self) -> &mut Mlp<T> {
        &mut self.branch
    }

    pub fn trunk(&self) -> &Mlp<T> {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp<T> {
        &mut self.trunk
    }

    pub fn sensors(&self) -> usize {
        self.branch.input_width()
    }

    pub fn coord_dim(&self) -> usize {
        self.trunk.input_width()
    }

    pub fn latent_dim(&self) -> usize {
        self.branch.output_width()
    }

    fn encode(&self, u: &Tensor<T>) -> Result<Tensor<T>> {
        if u.len() != self.sensors() {
            return shape_err(format!("{} sensor values for a branch of width {}", u.len(), self.sensors()));
        }
        self.branch.forward(&Tensor::vector(u.data().to_vec()))
    }

    fn dot_scale(&self) -> T {
        T::lit(1.0 / self.latent_dim() as f64)
    }

    /// Records `branch · trunkᵀ / p` for row-batched branch and trunk outputs.
    pub fn combine_graph(&self, g: &mut Graph<T>, branch: Var, trunk: Var) -> Result<Var> {
        let p = g.matmul_nt(branch, trunk)?;
        Ok(g.scale(p, self.dot_scale()))
    }

    /// `⟨branch(u), trunk(x)⟩ / p`.
    pub fn forward(&self, u: &Tensor<T>, x: &Tensor<T>) -> Result<T> {
        Ok(self.batch_forward(u, &Tensor::vector(x.data().to_vec()))?[0])
    }

    /// Predictions at each row of `queries`, with a single branch pass.
    pub fn batch_forward(&self, u: &Tensor<T>, queries: &Tensor<T>) -> Result<Vec<T>> {
        if queries.cols() != self.coord_dim() {
            return shape_err(format!("queries of width {} for a trunk of width {}", queries.cols(), self.coord_dim()));
        }
        let b = self.encode(u)?;
        let mut out = Vec::with_capacity(queries.rows());
        for r in 0..queries.rows() {
            // one trunk pass per query keeps every prediction independent of its batch
            let t = self.trunk.forward(&Tensor::vector(queries.row(r).to_vec()))?;
            out.push(b.dot(&t)? * self.dot_scale());
        }
        Ok(out)
    }

    /// Predictions for many input functions (rows of `inputs`) at shared
    /// queries, as an `inputs.rows() × queries.rows()` matrix.
    pub fn predict(&self, inputs: &Tensor<T>, queries: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let u = g.constant(inputs.clone());
        let b = self.branch.forward_frozen(&mut g, u)?;
        let x = g.constant(queries.clone());
        let t = self.trunk.forward_frozen(&mut g, x)?;
        let p = self.combine_graph(&mut g, b, t)?;
        Ok(g.value(p).clone())
    }

    /// Full space-time prediction from an initial condition, one row per slice.
    pub fn predict_field(&self, u0: &Tensor<T>, grid: &Grid1D, slices: usize) -> Result<Tensor<T>> {
        let q = space_time_queries(grid, slices, &(0..slices).collect::<Vec<_>>());
        let u = Tensor::matrix(1, u0.len(), u0.data().to_vec())?;
        self.predict(&u, &q)?.reshape(&[slices, grid.points])
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
}

impl<T: Scalar> Module<T> for DeepONet<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut p = self.branch.parameters();
        p.extend(self.trunk.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut p = self.branch.parameters_mut();
        p.extend(self.trunk.parameters_mut());
        p
    }
}

impl<T: Scalar> Checkpointable<T> for DeepONet<T> {
    const KIND: &'static str = "deeponet";

    fn layer_sizes(&self) -> BTreeMap<String, Vec<usize>> {
        BTreeMap::from([
            ("branch".to_string(), self.branch.widths().to_vec()),
            ("trunk".to_string(), self.trunk.widths().to_vec()),
        ])
    }

    fn from_layer_sizes(sizes: &BTreeMap<String, Vec<usize>>) -> Result<Self> {
        let get = |k: &str| sizes.get(k).ok_or_else(|| Error::Format(format!("missing `{k}` widths")));
        Self::from_parts(Mlp::zeros(get("branch")?, 0, "branch")?, Mlp::zeros(get("trunk")?, TRUNK_FIRST_ID, "trunk")?)
    }
}

/// One input function with solution values at a set of query points.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionSample<T> {
    pub u: Tensor<T>,
    /// One query coordinate per row.
    pub queries: Tensor<T>,
    pub targets: Vec<T>,
}

impl<T: Scalar> FunctionSample<T> {
    pub fn new(u: Tensor<T>, queries: Tensor<T>, targets: Vec<T>) -> Result<Self> {
        if queries.rows() != targets.len() {
            return shape_err(format!("{} queries but {} targets", queries.rows(), targets.len()));
        }
        Ok(Self { u, queries, targets })
    }

    /// Initial slice as input, every grid point of the chosen slices as queries.
    pub fn from_field(field: &FieldSolution<T>, slices: &[usize]) -> Result<Self> {
        if let Some(&s) = slices.iter().find(|&&s| s >= field.slices()) {
            return Err(Error::InvalidArgument(format!("slice {s} of a {}-slice field", field.slices())));
        }
        let queries = space_time_queries(field.grid(), field.slices(), slices);
        let targets = slices.iter().flat_map(|&s| field.slice(s).iter().copied()).collect();
        Self::new(field.initial(), queries, targets)
    }
}

/// `(x, t)` pairs, both normalized to `[0, 1]`, for every grid point of each
/// listed slice, slice-major.
pub fn space_time_queries<T: Scalar>(grid: &Grid1D, n_slices: usize, slices: &[usize]) -> Tensor<T> {
    let mut data = Vec::with_capacity(slices.len() * grid.points * COORD_DIM);
    let denom = (n_slices.max(2) - 1) as f64;
    for &s in slices {
        let t = s as f64 / denom;
        for j in 0..grid.points {
            data.push(T::lit(grid.normalized(j)));
            data.push(T::lit(t));
        }
    }
    Tensor::matrix(slices.len() * grid.points, COORD_DIM, data).expect("sized above")
}

/// Mean over every (sample, query) pair of the squared prediction error.
pub fn deeponet_loss<T: Scalar>(model: &DeepONet<T>, batch: &[FunctionSample<T>]) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for s in batch {
        let pred = model.batch_forward(&s.u, &s.queries)?;
        for (p, y) in pred.into_iter().zip(&s.targets) {
            total = total + (p - *y) * (p - *y);
        }
        count += s.targets.len();
    }
    if count == 0 {
        return Err(Error::InvalidArgument("batch has no queries".into()));
    }
    Ok(total / T::lit(count as f64))
}

/// Builds the discriminator coupling for a DeepONet; it sees branch outputs.
pub fn deeponet_coupling<T: Scalar>(model: &DeepONet<T>, config: &AdversarialConfig) -> Result<AdversarialCoupling<T>> {
    AdversarialCoupling::new(model.latent_dim(), config)
}

/// Full-batch training on the given fields.
///
/// Each model epoch draws [`SLICES_PER_STEP`] time slices shared by the
/// whole batch. With a coupling, odd epochs train the discriminator on the
/// branch outputs and even epochs train the model with the generator term
/// added. The final model is the weight average over the SWA window.
pub fn train_deeponet<T: Scalar>(
    model: &mut DeepONet<T>,
    data: &[FieldSolution<T>],
    config: &TrainConfig,
    mut adversary: Option<&mut AdversarialCoupling<T>>,
) -> Result<LossHistory> {
    config.validate()?;
    let Some(first) = data.first() else {
        return Err(Error::InvalidArgument("no training fields".into()));
    };
    let (grid, n_slices) = (*first.grid(), first.slices());
    if data.iter().any(|f| *f.grid() != grid || f.slices() != n_slices) {
        return Err(Error::InvalidArgument("training fields must share grid and slice count".into()));
    }
    if grid.points != model.sensors() {
        return shape_err(format!("{} grid points for {} sensors", grid.points, model.sensors()));
    }
    let batch = data.len();
    let inputs = Tensor::from_rows(&data.iter().map(|f| f.initial()).collect::<Vec<_>>())?;
    let per_step = SLICES_PER_STEP.min(n_slices);

    let mut rng = stream(config.seed, streams::BATCHING);
    let mut opt = Adam::new(config.adam)?;
    let mut swa = SwaState::new();
    let swa_start = config.swa_start();
    let mut history = LossHistory::new(&LOSS_COLUMNS);

    for epoch in 0..config.epochs {
        let terms = match adversary.as_deref_mut() {
            Some(adv) if AdversarialConfig::is_discriminator_epoch(epoch) => {
                let enc = model.branch.forward(&inputs)?;
                let d = adv.discriminator_epoch(&enc)?.to_f64_lossy();
                check_finite(epoch, "discriminator loss", d)?;
                vec![None, None, Some(d)]
            }
            adv => {
                let slices = rand::seq::index::sample(&mut rng, n_slices, per_step).into_vec();
                let queries = space_time_queries::<T>(&grid, n_slices, &slices);
                let mut targets = Vec::with_capacity(batch * queries.rows());
                for f in data {
                    for &s in &slices {
                        targets.extend_from_slice(f.slice(s));
                    }
                }
                let targets = Tensor::matrix(batch, queries.rows(), targets)?;

                let mut g = Graph::new();
                let u = g.constant(inputs.clone());
                let b = model.branch.forward_graph(&mut g, u)?;
                let x = g.constant(queries);
                let t = model.trunk.forward_graph(&mut g, x)?;
                let pred = model.combine_graph(&mut g, b, t)?;
                let y = g.constant(targets);
                let loss = g.mse(pred, y)?;
                let lv = g.scalar(loss);
                check_finite(epoch, "training loss", lv.to_f64_lossy())?;
                let (total, adv_term) = match adv {
                    Some(adv) => {
                        let term = adv.generator_term(&mut g, b, lv)?;
                        let tv = g.scalar(term).to_f64_lossy();
                        check_finite(epoch, "adversarial term", tv)?;
                        (g.add(loss, term)?, Some(tv))
                    }
                    None => (loss, None),
                };
                let mut grads = g.backward(total)?.for_params(&model.parameters());
                if let Some(c) = config.clip_norm {
                    clip_global_norm(&mut grads, T::lit(c));
                }
                opt.step(&mut model.parameters_mut(), &grads)?;
                vec![Some(lv.to_f64_lossy()), adv_term, None]
            }
        };
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
    }
    Ok(history)
}
