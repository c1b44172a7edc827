//! Training data: RK4 trajectories of the three ODE systems, Burgers and
//! KdV space-time fields, random initial conditions and the dataset file
//! format.

mod burgers;
mod dataset;
mod field;
mod grid;
mod ic;
mod kdv;
mod ode;

pub use burgers::burgers_solve;
pub use dataset::{generate_dataset, read_dataset, write_dataset, Dataset, DatasetHeader, Samples};
pub use field::FieldSolution;
pub use grid::{Boundary, Grid1D};
pub use ic::{random_fourier_series, random_initial_condition, random_ode_state, random_sine_series, SERIES_MODES};
pub use kdv::{kdv_soliton, kdv_solve, KDV_ADVECTIVE_LIMIT, KDV_TAIL_LIMIT};
pub use ode::{attractor_rhs, integrate, lorenz_rhs, pendulum_rhs, rk4_step, OdeSystem, Trajectory};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The five benchmark problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    Burgers,
    Kdv,
    Pendulum,
    Lorenz,
    FluidAttractor,
}

/// Time discretization used to generate one equation's data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Internal integration step.
    pub dt: f64,
    /// Final time.
    pub horizon: f64,
    /// Stored states or slices, including `t = 0`.
    pub n_out: usize,
}

impl Equation {
    pub const ALL: [Equation; 5] =
        [Equation::Burgers, Equation::Kdv, Equation::Pendulum, Equation::Lorenz, Equation::FluidAttractor];

    pub fn name(self) -> &'static str {
        match self {
            Equation::Burgers => "burgers",
            Equation::Kdv => "kdv",
            Equation::Pendulum => "pendulum",
            Equation::Lorenz => "lorenz",
            Equation::FluidAttractor => "fluid_attractor",
        }
    }

    pub fn ode(self) -> Option<OdeSystem> {
        match self {
            Equation::Pendulum => Some(OdeSystem::Pendulum),
            Equation::Lorenz => Some(OdeSystem::Lorenz),
            Equation::FluidAttractor => Some(OdeSystem::FluidAttractor),
            Equation::Burgers | Equation::Kdv => None,
        }
    }

    pub fn is_pde(self) -> bool {
        self.ode().is_none()
    }

    /// Spatial grid for the PDEs.
    pub fn grid(self) -> Option<Grid1D> {
        match self {
            Equation::Burgers => Some(Grid1D { length: 1.0, points: 128, boundary: Boundary::DirichletZero }),
            Equation::Kdv => {
                Some(Grid1D { length: 2.0 * std::f64::consts::PI, points: 128, boundary: Boundary::Periodic })
            }
            _ => None,
        }
    }

    pub fn solver(self) -> SolverSettings {
        match self {
            Equation::Burgers => SolverSettings { dt: 1e-4, horizon: 1.0, n_out: 101 },
            Equation::Kdv => SolverSettings { dt: 1e-3, horizon: 0.5, n_out: 101 },
            _ => SolverSettings { dt: 0.01, horizon: 1.0, n_out: 101 },
        }
    }

    /// Training-set size of the small-data experiments.
    pub fn default_train_samples(self) -> usize {
        match self {
            Equation::Burgers => 25,
            Equation::Kdv => 50,
            Equation::Pendulum => 20,
            Equation::Lorenz => 48,
            Equation::FluidAttractor => 40,
        }
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Equation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Equation::ALL
            .into_iter()
            .find(|e| e.name() == s || (s == "fluid-attractor" && *e == Equation::FluidAttractor))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown equation `{s}`")))
    }
}
