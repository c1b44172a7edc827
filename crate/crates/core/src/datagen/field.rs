use crate::datagen::{Boundary, Grid1D};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Space-time solution: one row per output time slice.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSolution<T> {
    u: Tensor<T>,
    dt_out: f64,
    grid: Grid1D,
}

impl<T: Scalar> FieldSolution<T> {
    pub fn new(u: Tensor<T>, dt_out: f64, grid: Grid1D) -> Result<Self> {
        if u.rank() != 2 || u.cols() != grid.points || u.rows() == 0 {
            return Err(Error::Shape(format!("field {:?} on a grid of {} points", u.shape(), grid.points)));
        }
        Ok(Self { u, dt_out, grid })
    }

    pub fn values(&self) -> &Tensor<T> {
        &self.u
    }

    pub fn slices(&self) -> usize {
        self.u.rows()
    }

    pub fn slice(&self, t: usize) -> &[T] {
        self.u.row(t)
    }

    pub fn initial(&self) -> Tensor<T> {
        Tensor::vector(self.slice(0).to_vec())
    }

    pub fn dt_out(&self) -> f64 {
        self.dt_out
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn boundary(&self) -> Boundary {
        self.grid.boundary
    }

    /// Normalized time of slice `t` in `[0, 1]`.
    pub fn normalized_time(&self, t: usize) -> f64 {
        if self.slices() <= 1 {
            0.0
        } else {
            t as f64 / (self.slices() - 1) as f64
        }
    }
}

/// Number of internal steps per output slice; the horizon must split evenly.
pub(crate) fn steps_per_slice(dt: f64, horizon: f64, n_out: usize) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) || n_out < 2 {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0, horizon > 0 and at least two slices (dt={dt}, horizon={horizon}, n_out={n_out})"
        )));
    }
    let total = (horizon / dt).round();
    if (total * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidArgument(format!("horizon {horizon} is not a multiple of dt {dt}")));
    }
    let total = total as usize;
    if !total.is_multiple_of(n_out - 1) {
        return Err(Error::InvalidArgument(format!("{total} steps do not divide into {} output intervals", n_out - 1)));
    }
    Ok(total / (n_out - 1))
}
