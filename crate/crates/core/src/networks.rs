//! Parameterized building blocks: tanh multilayer perceptrons, the
//! bias-free tridiagonal latent operator and the sigmoid-headed
//! discriminator.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::nn::{Checkpointable, Graph, Module, ParamId, Parameter, Tensor, Var};
use crate::rng::uniform;
use crate::scalar::Scalar;

pub const DEFAULT_HIDDEN: [usize; 3] = [64, 64, 64];

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

/// Affine layers with tanh between them and an identity output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    widths: Vec<usize>,
    layers: Vec<Dense<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights, zero biases. Parameter ids start at `first_id`
    /// and advance by two per layer (weight, bias).
    pub fn new<R: Rng + ?Sized>(widths: &[usize], first_id: u32, name: &str, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, first_id, name)?;
        for layer in &mut net.layers {
            let (out, inp) = (layer.weight.shape()[0], layer.weight.shape()[1]);
            let limit = (6.0 / (inp + out) as f64).sqrt();
            for w in layer.weight.data_mut() {
                *w = T::lit(uniform(rng, -limit, limit));
            }
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], first_id: u32, name: &str) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("mlp widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let id = first_id + 2 * l as u32;
                Dense {
                    weight: Parameter::new(ParamId(id), format!("{name}.{l}.weight"), Tensor::zeros(&[w[1], w[0]])),
                    bias: Parameter::new(ParamId(id + 1), format!("{name}.{l}.bias"), Tensor::zeros(&[w[1]])),
                }
            })
            .collect();
        Ok(Self { widths: widths.to_vec(), layers })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    fn build(&self, g: &mut Graph<T>, x: Var, trainable: bool) -> Result<Var> {
        if g.value(x).cols() != self.input_width() {
            return shape_err(format!("mlp expects width {}, got {}", self.input_width(), g.value(x).cols()));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (w, b) = if trainable {
                (g.param(&layer.weight), g.param(&layer.bias))
            } else {
                (g.constant(layer.weight.value().clone()), g.constant(layer.bias.value().clone()))
            };
            h = g.linear(h, w, Some(b))?;
            if l < last {
                h = g.tanh(h);
            }
        }
        Ok(h)
    }

    /// Records the forward pass with trainable parameters.
    pub fn forward_graph(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.build(g, x, true)
    }

    /// Records the forward pass with the parameters held constant.
    pub fn forward_frozen(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.build(g, x, false)
    }

    /// Evaluates a single input vector or a batch of row inputs.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let y = self.build(&mut g, v, false)?;
        let out = g.value(y).clone();
        if x.rank() <= 1 {
            let n = out.len();
            return out.reshape(&[n]);
        }
        Ok(out)
    }
}

impl<T: Scalar> Module<T> for Mlp<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

/// Square latent map without bias, constrained to a tridiagonal band.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalOperator<T> {
    matrix: Parameter<T>,
}

impl<T: Scalar> TridiagonalOperator<T> {
    /// Identity initialization.
    pub fn new(dim: usize, id: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("operator dimension must be positive".into()));
        }
        Ok(Self { matrix: Parameter::new(ParamId(id), "koopman", Tensor::identity(dim)) })
    }

    /// Wraps an arbitrary square matrix and projects it onto the band.
    pub fn from_matrix(matrix: Tensor<T>, id: u32) -> Result<Self> {
        if matrix.rank() != 2 || matrix.rows() != matrix.cols() {
            return shape_err(format!("operator must be square, got {:?}", matrix.shape()));
        }
        let mut op = Self { matrix: Parameter::new(ParamId(id), "koopman", matrix) };
        op.apply_mask();
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn matrix(&self) -> &Tensor<T> {
        self.matrix.value()
    }

    pub fn parameter(&self) -> &Parameter<T> {
        &self.matrix
    }

    /// Zeroes every entry more than one step off the diagonal.
    pub fn apply_mask(&mut self) {
        let d = self.dim();
        let data = self.matrix.data_mut();
        for i in 0..d {
            for j in 0..d {
                if i.abs_diff(j) > 1 {
                    data[i * d + j] = T::zero();
                }
            }
        }
    }

    pub fn is_tridiagonal(&self) -> bool {
        let d = self.dim();
        let data = self.matrix.data();
        (0..d).all(|i| (0..d).all(|j| i.abs_diff(j) <= 1 || data[i * d + j] == T::zero()))
    }

    /// `K^times · e` by repeated products, with no nonlinearity in between.
    pub fn apply(&self, e: &Tensor<T>, times: usize) -> Result<Tensor<T>> {
        if e.len() != self.dim() {
            return shape_err(format!("latent length {} for operator of size {}", e.len(), self.dim()));
        }
        let mut z = Tensor::vector(e.data().to_vec());
        for _ in 0..times {
            z = self.matrix().matvec(&z)?;
        }
        Ok(z)
    }
}

impl<T: Scalar> Module<T> for TridiagonalOperator<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        vec![&self.matrix]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.matrix]
    }
}

/// Latent-space classifier with a sigmoid head.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    body: Mlp<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(latent_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Ok(Self { body: Mlp::new(&Self::widths(latent_dim, hidden), 0, "disc", rng)? })
    }

    /// All-zero body; outputs 0.5 everywhere.
    pub fn zeroed(latent_dim: usize, hidden: &[usize]) -> Result<Self> {
        Ok(Self { body: Mlp::zeros(&Self::widths(latent_dim, hidden), 0, "disc")? })
    }

    pub fn from_body(body: Mlp<T>) -> Result<Self> {
        if body.output_width() != 1 {
            return shape_err("discriminator body must have a single output");
        }
        Ok(Self { body })
    }

    fn widths(latent_dim: usize, hidden: &[usize]) -> Vec<usize> {
        std::iter::once(latent_dim).chain(hidden.iter().copied()).chain(std::iter::once(1)).collect()
    }

    pub fn latent_dim(&self) -> usize {
        self.body.input_width()
    }

    pub fn body(&self) -> &Mlp<T> {
        &self.body
    }

    pub fn body_mut(&mut self) -> &mut Mlp<T> {
        &mut self.body
    }

    /// Probability that `e` is labelled 1.
    pub fn discriminate(&self, e: &Tensor<T>) -> Result<T> {
        if e.len() != self.latent_dim() {
            return shape_err(format!("latent length {} for discriminator of width {}", e.len(), self.latent_dim()));
        }
        let logit = self.body.forward(&Tensor::vector(e.data().to_vec()))?;
        Ok(crate::nn::sigmoid(logit.data()[0]))
    }

    /// Probabilities for each row of `latents`.
    pub fn discriminate_batch(&self, latents: &Tensor<T>) -> Result<Vec<T>> {
        let logits = self.body.forward(latents)?;
        Ok(logits.data().iter().map(|&x| crate::nn::sigmoid(x)).collect())
    }

    /// Records probabilities for each row of `latents`.
    pub fn probabilities(&self, g: &mut Graph<T>, latents: Var, trainable: bool) -> Result<Var> {
        let logits =
            if trainable { self.body.forward_graph(g, latents)? } else { self.body.forward_frozen(g, latents)? };
        Ok(g.sigmoid(logits))
    }
}

impl<T: Scalar> Module<T> for Discriminator<T> {
    fn parameters(&self) -> Vec<&Parameter<T>> {
        self.body.parameters()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.body.parameters_mut()
    }
}

impl<T: Scalar> Checkpointable<T> for Discriminator<T> {
    const KIND: &'static str = "discriminator";

    fn layer_sizes(&self) -> BTreeMap<String, Vec<usize>> {
        BTreeMap::from([("body".to_string(), self.body.widths().to_vec())])
    }

    fn from_layer_sizes(sizes: &BTreeMap<String, Vec<usize>>) -> Result<Self> {
        let body = sizes.get("body").ok_or_else(|| Error::Format("missing `body` widths".into()))?;
        Self::from_body(Mlp::zeros(body, 0, "disc")?)
    }
}
