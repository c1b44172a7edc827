use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Endpoints are grid points and held at zero.
    DirichletZero,
    /// The duplicate endpoint is excluded.
    Periodic,
}

/// Uniform one-dimensional grid on `[0, length]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub length: f64,
    pub points: usize,
    pub boundary: Boundary,
}

impl Grid1D {
    pub const MIN_POINTS: usize = 8;

    pub fn new(length: f64, points: usize, boundary: Boundary) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidArgument(format!("grid length must be positive, got {length}")));
        }
        if points < Self::MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {} points, got {points}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self { length, points, boundary })
    }

    pub fn spacing(&self) -> f64 {
        match self.boundary {
            Boundary::DirichletZero => self.length / (self.points - 1) as f64,
            Boundary::Periodic => self.length / self.points as f64,
        }
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coordinate(i)).collect()
    }

    /// Coordinate scaled to `[0, 1]` (`[0, 1)` when periodic).
    pub fn normalized(&self, i: usize) -> f64 {
        self.coordinate(i) / self.length
    }
}
