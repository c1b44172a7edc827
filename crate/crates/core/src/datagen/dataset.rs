use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{
    burgers_solve, integrate, kdv_solve, random_initial_condition, Equation, FieldSolution, Grid1D, SolverSettings,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::framing::{self, PAYLOAD_DTYPE};
use crate::nn::Tensor;
use crate::rng::{stream, streams};
use crate::scalar::Scalar;

const MAGIC: &str = "ADVOP-DATASET";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Samples<T> {
    Trajectories(Vec<Trajectory<T>>),
    Fields(Vec<FieldSolution<T>>),
}

impl<T: Scalar> Samples<T> {
    pub fn len(&self) -> usize {
        match self {
            Samples::Trajectories(v) => v.len(),
            Samples::Fields(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self, i: usize) -> &Tensor<T> {
        match self {
            Samples::Trajectories(v) => v[i].states(),
            Samples::Fields(v) => v[i].values(),
        }
    }
}

/// Generated solutions for one equation plus the settings that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub equation: Equation,
    pub base_seed: u64,
    pub solver: SolverSettings,
    pub samples: Samples<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub equation: Equation,
    pub kind: String,
    pub samples: usize,
    /// Rows (states or time slices) and columns (state dimension or grid points).
    pub sample_shape: [usize; 2],
    /// Time between stored rows.
    pub dt_out: f64,
    pub base_seed: u64,
    pub dtype: String,
    pub solver: SolverSettings,
    pub grid: Option<Grid1D>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn trajectories(&self) -> Option<&[Trajectory<T>]> {
        match &self.samples {
            Samples::Trajectories(v) => Some(v),
            Samples::Fields(_) => None,
        }
    }

    pub fn fields(&self) -> Option<&[FieldSolution<T>]> {
        match &self.samples {
            Samples::Fields(v) => Some(v),
            Samples::Trajectories(_) => None,
        }
    }

    /// Rows and columns of every sample, from the generation settings.
    pub fn sample_shape(&self) -> [usize; 2] {
        let rows = self.solver.n_out;
        let cols = match self.equation.grid() {
            Some(g) => g.points,
            None => self.equation.ode().map(|s| s.dim()).unwrap_or(0),
        };
        [rows, cols]
    }

    pub fn dt_out(&self) -> f64 {
        self.solver.horizon / (self.solver.n_out - 1) as f64
    }

    /// Splits off the first `train` samples; the rest form the test set.
    pub fn split(&self, train: usize) -> Result<(Dataset<T>, Dataset<T>)> {
        if train > self.len() {
            return Err(Error::InvalidArgument(format!("cannot take {train} of {} samples", self.len())));
        }
        let part =
            |samples| Dataset { equation: self.equation, base_seed: self.base_seed, solver: self.solver, samples };
        Ok(match &self.samples {
            Samples::Trajectories(v) => {
                (part(Samples::Trajectories(v[..train].to_vec())), part(Samples::Trajectories(v[train..].to_vec())))
            }
            Samples::Fields(v) => {
                (part(Samples::Fields(v[..train].to_vec())), part(Samples::Fields(v[train..].to_vec())))
            }
        })
    }

    /// FNV-1a digest over the sample payload.
    pub fn checksum(&self) -> u64 {
        let mut h = framing::Fnv::default();
        for i in 0..self.len() {
            self.samples.values(i).data().iter().for_each(|x| h.write_f64(x.to_f64_lossy()));
        }
        h.finish()
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            format_version: FORMAT_VERSION,
            equation: self.equation,
            kind: if self.equation.is_pde() { "field" } else { "trajectory" }.to_string(),
            samples: self.len(),
            sample_shape: self.sample_shape(),
            dt_out: self.dt_out(),
            base_seed: self.base_seed,
            dtype: PAYLOAD_DTYPE.to_string(),
            solver: self.solver,
            grid: self.equation.grid(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let shape = self.sample_shape();
        let mut payload = Vec::with_capacity(self.len() * shape[0] * shape[1]);
        for i in 0..self.len() {
            let v = self.samples.values(i);
            if v.shape() != shape {
                return Err(Error::Shape(format!("sample {i} has shape {:?}, dataset {shape:?}", v.shape())));
            }
            payload.extend(v.data().iter().map(|x| x.to_f64_lossy()));
        }
        framing::encode(MAGIC, &self.header(), &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (DatasetHeader, _) = framing::decode(MAGIC, bytes)?;
        if h.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("dataset format version {} unsupported", h.format_version)));
        }
        framing::check_dtype(&h.dtype)?;
        let expected_kind = if h.equation.is_pde() { "field" } else { "trajectory" };
        if h.kind != expected_kind {
            return Err(Error::Format(format!(
                "{} data must be `{expected_kind}`, header says `{}`",
                h.equation, h.kind
            )));
        }
        if h.grid != h.equation.grid() {
            return Err(Error::Format(format!("grid metadata {:?} does not match {}", h.grid, h.equation)));
        }
        let [rows, cols] = h.sample_shape;
        if rows != h.solver.n_out || rows < 2 {
            return Err(Error::Format(format!("sample rows {rows} disagree with n_out {}", h.solver.n_out)));
        }
        let per = rows * cols;
        let values = framing::read_floats(payload, h.samples * per)?;
        let tensors = values
            .chunks_exact(per.max(1))
            .take(h.samples)
            .map(|c| Tensor::matrix(rows, cols, c.iter().map(|&x| T::lit(x)).collect()))
            .collect::<Result<Vec<_>>>()?;
        let samples = match h.equation.grid() {
            Some(grid) => Samples::Fields(
                tensors.into_iter().map(|t| FieldSolution::new(t, h.dt_out, grid)).collect::<Result<_>>()?,
            ),
            None => Samples::Trajectories(
                tensors.into_iter().map(|t| Trajectory::new(t, T::lit(h.dt_out))).collect::<Result<_>>()?,
            ),
        };
        Ok(Dataset { equation: h.equation, base_seed: h.base_seed, solver: h.solver, samples })
    }
}

pub fn write_dataset<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    framing::write_file(path, &ds.to_bytes()?)
}

pub fn read_dataset<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    Dataset::from_bytes(&std::fs::read(path)?)
}

/// Solves `count` random problems; sample `i` draws its initial condition
/// from the stream seeded by `base_seed + i`.
pub fn generate_dataset<T: Scalar>(equation: Equation, count: usize, base_seed: u64) -> Result<Dataset<T>> {
    let solver = equation.solver();
    let mut trajectories = Vec::new();
    let mut fields = Vec::new();
    for i in 0..count {
        let mut rng = stream(base_seed.wrapping_add(i as u64), streams::DATA);
        let ic: Vec<T> = random_initial_condition(equation, &mut rng).into_iter().map(T::lit).collect();
        let tag = |e: Error| match e {
            Error::NonFinite(d) | Error::Stability(d) => Error::NonFinite(format!("{equation} sample {i}: {d}")),
            other => other,
        };
        match (equation.ode(), equation.grid()) {
            (Some(system), _) => {
                trajectories.push(integrate(system, &ic, T::lit(solver.dt), solver.n_out - 1).map_err(tag)?);
            }
            (None, Some(grid)) => {
                let sol = match equation {
                    Equation::Burgers => burgers_solve(&ic, &grid, solver.dt, solver.horizon, solver.n_out),
                    _ => kdv_solve(&ic, &grid, solver.dt, solver.horizon, solver.n_out),
                };
                fields.push(sol.map_err(tag)?);
            }
            (None, None) => unreachable!("every equation is an ODE or has a grid"),
        }
    }
    let samples = if equation.is_pde() { Samples::Fields(fields) } else { Samples::Trajectories(trajectories) };
    Ok(Dataset { equation, base_seed, solver, samples })
}
