//! Random initial data: box-uniform ODE states and boundary-respecting
//! random trigonometric series for the two PDEs.

use std::f64::consts::PI;

use rand::Rng;

use crate::datagen::{Equation, Grid1D, OdeSystem};
use crate::rng::uniform;

/// Highest mode in the random series.
pub const SERIES_MODES: usize = 6;

pub fn random_ode_state<R: Rng + ?Sized>(system: OdeSystem, rng: &mut R) -> Vec<f64> {
    match system {
        OdeSystem::Pendulum => vec![uniform(rng, -PI / 2.0, PI / 2.0), 0.0],
        OdeSystem::Lorenz => (0..3).map(|_| uniform(rng, -1.0, 1.0)).collect(),
        OdeSystem::FluidAttractor => {
            vec![uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.0)]
        }
    }
}

fn normalize(mut u: Vec<f64>) -> Vec<f64> {
    let peak = u.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if peak > 0.0 {
        u.iter_mut().for_each(|x| *x /= peak);
    }
    u
}

/// `Σ a_k sin(kπx/L)` with `a_k ~ U(-1/k, 1/k)`, scaled to unit peak.
/// Endpoints are set to exactly zero.
pub fn random_sine_series<R: Rng + ?Sized>(grid: &Grid1D, rng: &mut R) -> Vec<f64> {
    let amps: Vec<f64> = (1..=SERIES_MODES).map(|k| uniform(rng, -1.0 / k as f64, 1.0 / k as f64)).collect();
    let mut u: Vec<f64> = grid
        .coordinates()
        .iter()
        .map(|&x| amps.iter().enumerate().map(|(i, a)| a * ((i + 1) as f64 * PI * x / grid.length).sin()).sum())
        .collect();
    let last = u.len() - 1;
    u[0] = 0.0;
    u[last] = 0.0;
    normalize(u)
}

/// `Σ a_k cos(2πkx/L) + b_k sin(2πkx/L)`, coefficients `U(-1/k, 1/k)`,
/// scaled to unit peak.
pub fn random_fourier_series<R: Rng + ?Sized>(grid: &Grid1D, rng: &mut R) -> Vec<f64> {
    let coeffs: Vec<(f64, f64)> = (1..=SERIES_MODES)
        .map(|k| {
            let b = 1.0 / k as f64;
            (uniform(rng, -b, b), uniform(rng, -b, b))
        })
        .collect();
    let u = grid
        .coordinates()
        .iter()
        .map(|&x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    let w = 2.0 * PI * (i + 1) as f64 * x / grid.length;
                    a * w.cos() + b * w.sin()
                })
                .sum()
        })
        .collect();
    normalize(u)
}

/// Initial state (ODEs) or sampled initial field (PDEs) for `equation`.
pub fn random_initial_condition<R: Rng + ?Sized>(equation: Equation, rng: &mut R) -> Vec<f64> {
    match equation {
        Equation::Burgers => random_sine_series(&equation.grid().expect("PDE grid"), rng),
        Equation::Kdv => random_fourier_series(&equation.grid().expect("PDE grid"), rng),
        Equation::Pendulum => random_ode_state(OdeSystem::Pendulum, rng),
        Equation::Lorenz => random_ode_state(OdeSystem::Lorenz, rng),
        Equation::FluidAttractor => random_ode_state(OdeSystem::FluidAttractor, rng),
    }
}
