//! Operator learning with DeepONets and Koopman autoencoders, an optional
//! adversarial latent discriminator, and the numerical solvers that produce
//! their training data.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision types the experiments use.

pub mod adversarial;
pub mod datagen;
pub mod deeponet;
pub mod error;
mod framing;
pub mod harness;
pub mod koopman;
pub mod networks;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = nn::Tensor<f64>;
pub type Mlp64 = networks::Mlp<f64>;
pub type Discriminator64 = networks::Discriminator<f64>;
pub type DeepONet64 = deeponet::DeepONet<f64>;
pub type KoopmanModel64 = koopman::KoopmanModel<f64>;
pub type AdversarialCoupling64 = adversarial::AdversarialCoupling<f64>;
