use std::fmt;

use crate::error::{shape_err, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Identifier of a trainable tensor, unique within one model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub u32);

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// A named trainable tensor. Its shape is fixed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    id: ParamId,
    name: String,
    value: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(id: ParamId, name: impl Into<String>, value: Tensor<T>) -> Self {
        Self { id, name: name.into(), value }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[T] {
        self.value.data()
    }

    /// Mutable access to the entries; the shape cannot change.
    pub fn data_mut(&mut self) -> &mut [T] {
        self.value.data_mut()
    }

    pub fn assign(&mut self, value: &Tensor<T>) -> Result<()> {
        if value.shape() != self.value.shape() {
            return shape_err(format!(
                "parameter {} has shape {:?}, got {:?}",
                self.name,
                self.value.shape(),
                value.shape()
            ));
        }
        self.value.data_mut().copy_from_slice(value.data());
        Ok(())
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.value.grad()
    }

    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        self.value.set_grad(grad)
    }

    pub fn zero_grad(&mut self) {
        self.value.take_grad();
    }
}

/// Anything that owns an ordered list of parameters.
pub trait Module<T: Scalar> {
    fn parameters(&self) -> Vec<&Parameter<T>>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>>;

    fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.value().len()).sum()
    }

    /// Order-sensitive FNV-1a digest of every parameter bit pattern.
    fn checksum(&self) -> u64 {
        let mut h = crate::framing::Fnv::default();
        for p in self.parameters() {
            p.data().iter().for_each(|x| h.write_f64(x.to_f64_lossy()));
        }
        h.finish()
    }
}
