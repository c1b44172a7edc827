//! Viscous Burgers' equation `u_t = u_xx - u u_x` with zero Dirichlet data.
//!
//! Each step solves the linearized system
//! `(I - dt D2 + dt diag(uⁿ) D1) uⁿ⁺¹ = uⁿ` with centered differences and
//! the advecting velocity lagged at `uⁿ`. While the cell Péclet number
//! `|u| h / 2` stays at most 1 the matrix is an M-matrix with unit row
//! sums, so the sup norm never grows and the bound checked on `u0` holds
//! for the whole run.

use crate::datagen::field::steps_per_slice;
use crate::datagen::{Boundary, FieldSolution, Grid1D};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub fn burgers_solve<T: Scalar>(
    u0: &[T],
    grid: &Grid1D,
    dt: f64,
    horizon: f64,
    n_out: usize,
) -> Result<FieldSolution<T>> {
    if grid.boundary != Boundary::DirichletZero {
        return Err(Error::InvalidArgument("Burgers solver needs a Dirichlet grid".into()));
    }
    let m = grid.points;
    if u0.len() != m {
        return Err(Error::Shape(format!("initial field has {} points, grid {m}", u0.len())));
    }
    if u0[0] != T::zero() || u0[m - 1] != T::zero() {
        return Err(Error::InvalidArgument("initial field must vanish at both ends".into()));
    }
    let per_slice = steps_per_slice(dt, horizon, n_out)?;
    let h = grid.spacing();
    let peclet = u0.iter().fold(0.0f64, |a, x| a.max(x.to_f64_lossy().abs())) * h / 2.0;
    if !(peclet <= 1.0) {
        return Err(Error::Stability(format!("cell Péclet number {peclet:.3} exceeds 1")));
    }

    let r = T::lit(dt / (h * h));
    let c = T::lit(dt / (2.0 * h));
    let two = T::lit(2.0);
    let n_int = m - 2;
    let mut u = u0.to_vec();
    let mut out = Vec::with_capacity(n_out * m);
    out.extend_from_slice(&u);
    // Thomas algorithm scratch
    let mut cp = vec![T::zero(); n_int];
    let mut dp = vec![T::zero(); n_int];

    for slice in 1..n_out {
        for _ in 0..per_slice {
            for k in 0..n_int {
                let i = k + 1;
                let ci = c * u[i];
                let lower = -(r + ci);
                let diag = T::one() + two * r;
                let upper = -(r - ci);
                let rhs = u[i];
                if k == 0 {
                    cp[0] = upper / diag;
                    dp[0] = rhs / diag;
                } else {
                    let denom = diag - lower * cp[k - 1];
                    cp[k] = upper / denom;
                    dp[k] = (rhs - lower * dp[k - 1]) / denom;
                }
            }
            u[n_int] = dp[n_int - 1];
            for k in (0..n_int - 1).rev() {
                u[k + 1] = dp[k] - cp[k] * u[k + 2];
            }
            u[0] = T::zero();
            u[m - 1] = T::zero();
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("Burgers field became non-finite before slice {slice}")));
        }
        out.extend_from_slice(&u);
    }
    FieldSolution::new(Tensor::matrix(n_out, m, out)?, dt * per_slice as f64, *grid)
}
