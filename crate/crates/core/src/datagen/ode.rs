use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// The three low-dimensional systems used for the Koopman experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OdeSystem {
    /// State `(θ, θ̇)` of `θ'' = -sin θ`.
    Pendulum,
    /// `x' = y - x`, `y' = x - xz - y`, `z' = xy - z`.
    Lorenz,
    /// `x' = x - y + xz`, `y' = x + y + yz`, `z' = x² + y² + z`.
    FluidAttractor,
}

impl OdeSystem {
    pub fn dim(self) -> usize {
        match self {
            OdeSystem::Pendulum => 2,
            OdeSystem::Lorenz | OdeSystem::FluidAttractor => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OdeSystem::Pendulum => "pendulum",
            OdeSystem::Lorenz => "lorenz",
            OdeSystem::FluidAttractor => "fluid_attractor",
        }
    }

    pub fn rhs<T: Scalar>(self, s: &[T]) -> Vec<T> {
        match self {
            OdeSystem::Pendulum => pendulum_rhs(s),
            OdeSystem::Lorenz => lorenz_rhs(s),
            OdeSystem::FluidAttractor => attractor_rhs(s),
        }
    }
}

pub fn pendulum_rhs<T: Scalar>(s: &[T]) -> Vec<T> {
    vec![s[1], -s[0].sin()]
}

pub fn lorenz_rhs<T: Scalar>(s: &[T]) -> Vec<T> {
    let (x, y, z) = (s[0], s[1], s[2]);
    vec![y - x, x - x * z - y, x * y - z]
}

pub fn attractor_rhs<T: Scalar>(s: &[T]) -> Vec<T> {
    let (x, y, z) = (s[0], s[1], s[2]);
    vec![x - y + x * z, x + y + y * z, x * x + y * y + z]
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<T: Scalar>(rhs: impl Fn(&[T]) -> Vec<T>, s: &[T], dt: T) -> Result<Vec<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!("rk4 step needs dt > 0, got {dt}")));
    }
    let two = T::lit(2.0);
    let half = dt / two;
    let shifted = |k: &[T], h: T| s.iter().zip(k).map(|(&x, &d)| x + h * d).collect::<Vec<_>>();
    let k1 = rhs(s);
    let k2 = rhs(&shifted(&k1, half));
    let k3 = rhs(&shifted(&k2, half));
    let k4 = rhs(&shifted(&k3, dt));
    let sixth = dt / T::lit(6.0);
    let out: Vec<T> = (0..s.len()).map(|i| s[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i])).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("right-hand side produced a non-finite state".into()));
    }
    Ok(out)
}

/// States `v_0 … v_n` at a uniform step, stored as an `(n+1) x dim` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    states: Tensor<T>,
    dt: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(states: Tensor<T>, dt: T) -> Result<Self> {
        if states.rank() != 2 || states.rows() == 0 {
            return Err(Error::Shape(format!("trajectory needs a non-empty matrix, got {:?}", states.shape())));
        }
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument("trajectory dt must be positive".into()));
        }
        Ok(Self { states, dt })
    }

    pub fn states(&self) -> &Tensor<T> {
        &self.states
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Number of steps `n`; there are `n + 1` states.
    pub fn steps(&self) -> usize {
        self.states.rows() - 1
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    pub fn state(&self, i: usize) -> Tensor<T> {
        Tensor::vector(self.states.row(i).to_vec())
    }

    pub fn initial(&self) -> Tensor<T> {
        self.state(0)
    }
}

/// `n` RK4 steps from `s0`, keeping every state.
pub fn integrate<T: Scalar>(system: OdeSystem, s0: &[T], dt: T, n: usize) -> Result<Trajectory<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("integrate needs at least one step".into()));
    }
    if s0.len() != system.dim() {
        return Err(Error::Shape(format!("{} state has {} entries, got {}", system.name(), system.dim(), s0.len())));
    }
    let mut data = Vec::with_capacity((n + 1) * s0.len());
    data.extend_from_slice(s0);
    let mut s = s0.to_vec();
    for step in 1..=n {
        s = rk4_step(|x| system.rhs(x), &s, dt).map_err(|e| match e {
            Error::NonFinite(_) => {
                Error::NonFinite(format!("{} state became non-finite at step {step}", system.name()))
            }
            other => other,
        })?;
        data.extend_from_slice(&s);
    }
    Trajectory::new(Tensor::matrix(n + 1, s0.len(), data)?, dt)
}
