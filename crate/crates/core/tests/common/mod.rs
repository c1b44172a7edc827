//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use advop::datagen::{
    burgers_solve, integrate, kdv_soliton, kdv_solve, random_fourier_series, random_sine_series, rk4_step, Boundary,
    Dataset, Equation, Grid1D, OdeSystem,
};
use advop::harness::TrainedModel;
use advop::nn::{Graph, Module, ParamId, Parameter, Tensor, Var};
use advop::rng::{stream, uniform};
use advop::training::LossHistory;
use rand::Rng;

/// Relative tolerance for gradient comparisons, with a tiny absolute floor
/// for gradients that are zero up to rounding.
pub const GRAD_RTOL: f64 = 1e-5;
pub const GRAD_ATOL: f64 = 1e-9;

pub fn grad_close(analytic: f64, numeric: f64) -> bool {
    grad_close_with(analytic, numeric, GRAD_RTOL)
}

pub fn grad_close_with(analytic: f64, numeric: f64, rtol: f64) -> bool {
    (analytic - numeric).abs() <= rtol * analytic.abs().max(numeric.abs()) + GRAD_ATOL
}

/// Random parameters and constants for one small graph that touches every
/// primitive of the tape.
pub struct RandomGraph {
    pub params: Vec<Parameter<f64>>,
    x: Tensor<f64>,
    target: Tensor<f64>,
    labels: Vec<f64>,
    acts: Vec<bool>,
    scale: f64,
}

fn rand_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, spread: f64) -> Tensor<f64> {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| uniform(rng, -spread, spread)).collect()).unwrap()
}

impl RandomGraph {
    pub fn new(seed: u64) -> Self {
        let mut rng = stream(seed, 99);
        let batch = rng.gen_range(1..=4);
        let depth = rng.gen_range(1..=3);
        let mut widths = vec![rng.gen_range(1..=8)];
        for _ in 0..depth {
            widths.push(rng.gen_range(1..=8));
        }
        let mut shapes = Vec::new();
        for w in widths.windows(2) {
            shapes.push((w[1], w[0]));
            shapes.push((1, w[1]));
        }
        let h = *widths.last().unwrap();
        let k = rng.gen_range(1..=8);
        shapes.push((h, k)); // matmul operand
        shapes.push((k, k)); // matmul_nt operand
        shapes.push((k, h)); // bias-free linear
                             // the input is a parameter so its gradient is checked too
        shapes.push((batch, widths[0]));
        let params = shapes
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| Parameter::new(ParamId(i as u32), format!("p{i}"), rand_tensor(&mut rng, r, c, 0.5)))
            .collect();
        let acts = (0..depth).map(|_| rng.gen_bool(0.5)).collect();
        let target = rand_tensor(&mut rng, 2 * batch, k, 1.0);
        let labels = (0..batch).map(|_| uniform(&mut rng, 0.0, 1.0)).collect();
        let scale = uniform(&mut rng, -1.5, 1.5);
        let x = rand_tensor(&mut rng, batch, widths[0], 1.0);
        Self { params, x, target, labels, acts, scale }
    }

    /// Records the graph; returns the scalar loss.
    pub fn record(&self, g: &mut Graph<f64>) -> Var {
        let n = self.params.len();
        let depth = self.acts.len();
        let x_param = g.param(&self.params[n - 1]);
        let x_const = g.constant(self.x.clone());
        let mut h = g.add(x_param, x_const).unwrap();
        for l in 0..depth {
            let w = g.param(&self.params[2 * l]);
            let b = g.param(&self.params[2 * l + 1]);
            h = g.linear(h, w, Some(b)).unwrap();
            h = if self.acts[l] { g.tanh(h) } else { g.sigmoid(h) };
        }
        let a = g.param(&self.params[2 * depth]);
        let c = g.param(&self.params[2 * depth + 1]);
        let w2 = g.param(&self.params[2 * depth + 2]);
        let m1 = g.matmul(h, a).unwrap();
        let m2 = g.matmul_nt(m1, c).unwrap();
        let tr = g.transpose(m2);
        let tt = g.transpose(tr);
        let lin = g.linear(h, w2, None).unwrap();
        let s = g.add(tt, lin).unwrap();
        let prod = g.mul(m2, m2).unwrap();
        let d = g.sub(s, prod).unwrap();
        let sc = g.scale(d, self.scale);
        let sq = g.square(sc);
        let t1 = g.mean(sq).unwrap();
        let rd = g.row_dot(sc, m2).unwrap();
        let p = g.sigmoid(rd);
        let t2 = g.bce(p, &self.labels).unwrap();
        let v = g.vstack(&[sc, m1]).unwrap();
        let tgt = g.constant(self.target.clone());
        let t3 = g.mse(v, tgt).unwrap();
        let t4 = g.sum(prod);
        let t12 = g.add(t1, t2).unwrap();
        let t34 = g.add(t3, t4).unwrap();
        g.add(t12, t34).unwrap()
    }

    fn loss(&self) -> f64 {
        let mut g = Graph::new();
        let l = self.record(&mut g);
        g.scalar(l)
    }

    /// Compares every parameter entry against central differences. Returns
    /// the largest relative discrepancy, or a description of the first
    /// failure.
    pub fn check(&mut self) -> Result<f64, String> {
        let mut g = Graph::new();
        let l = self.record(&mut g);
        let grads = g.backward(l).map_err(|e| e.to_string())?;
        let refs: Vec<&Parameter<f64>> = self.params.iter().collect();
        let analytic: Vec<Vec<f64>> = grads.for_params(&refs).into_iter().map(|t| t.into_data()).collect();
        let mut worst = 0.0f64;
        for pi in 0..self.params.len() {
            for k in 0..self.params[pi].value().len() {
                let x0 = self.params[pi].data()[k];
                let numeric = central_difference(
                    |v| {
                        self.params[pi].data_mut()[k] = v;
                        let f = self.loss();
                        self.params[pi].data_mut()[k] = x0;
                        f
                    },
                    x0,
                );
                let a = analytic[pi][k];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-300));
                if !grad_close(a, numeric) {
                    return Err(format!("param {pi} entry {k}: autodiff {a:e}, finite difference {numeric:e}"));
                }
            }
        }
        Ok(worst)
    }
}

/// Derivative at `x0` by Ridders' extrapolation of central differences.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x0: f64) -> f64 {
    const SHRINK: f64 = 1.4;
    const STEPS: usize = 14;
    let mut h = 1e-2 * x0.abs().max(1.0);
    let mut table = [[0.0f64; STEPS]; STEPS];
    table[0][0] = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
    let (mut best, mut best_err) = (table[0][0], f64::INFINITY);
    for i in 1..STEPS {
        h /= SHRINK;
        table[0][i] = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
        let mut fac = SHRINK * SHRINK;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK * SHRINK;
            let err = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            if err <= best_err {
                best_err = err;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * best_err {
            break;
        }
    }
    best
}

/// Finite-difference gradient of `loss(model)` for every parameter entry.
pub fn numeric_gradients<M: Module<f64> + Clone>(model: &M, loss: impl Fn(&M) -> f64) -> Vec<Vec<f64>> {
    let mut m = model.clone();
    let sizes: Vec<usize> = m.parameters().iter().map(|p| p.value().len()).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (pi, &len) in sizes.iter().enumerate() {
        let mut row = Vec::with_capacity(len);
        for k in 0..len {
            let x0 = m.parameters()[pi].data()[k];
            let d = central_difference(
                |v| {
                    m.parameters_mut()[pi].data_mut()[k] = v;
                    let f = loss(&m);
                    m.parameters_mut()[pi].data_mut()[k] = x0;
                    f
                },
                x0,
            );
            row.push(d);
        }
        out.push(row);
    }
    out
}

/// Least-squares slope of `log err` against `log h`.
pub fn convergence_order(hs: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

fn rk4_exp_error(dt: f64) -> f64 {
    let n = (1.0 / dt).round() as usize;
    let mut s = vec![1.0f64];
    for _ in 0..n {
        s = rk4_step(|v: &[f64]| v.to_vec(), &s, dt).unwrap();
    }
    (s[0] - 1f64.exp()).abs()
}

/// Observed order of RK4 on `s' = s` over `[0, 1]`.
pub fn rk4_order() -> f64 {
    let dts = [1e-1, 5e-2, 2.5e-2];
    let errs: Vec<f64> = dts.iter().map(|&dt| rk4_exp_error(dt)).collect();
    convergence_order(&dts, &errs)
}

/// Largest relative energy deviation over 10⁴ pendulum steps of 1e-3.
pub fn pendulum_energy_drift() -> f64 {
    let energy = |s: &[f64]| 0.5 * s[1] * s[1] - s[0].cos();
    let traj = integrate(OdeSystem::Pendulum, &[1.0, 0.0], 1e-3, 10_000).unwrap();
    let e0 = energy(traj.states().row(0));
    (0..=10_000).map(|i| (energy(traj.states().row(i)) - e0).abs()).fold(0.0, f64::max) / e0.abs()
}

pub fn burgers_zero_stays_zero() -> bool {
    let g = Equation::Burgers.grid().unwrap();
    let s = Equation::Burgers.solver();
    let sol = burgers_solve(&vec![0.0f64; g.points], &g, s.dt, s.horizon, s.n_out).unwrap();
    sol.values().data().iter().all(|&x| x == 0.0)
}

/// Largest rise of the sup norm between consecutive output slices over
/// `count` random sine initial conditions; never positive for a stable
/// scheme.
pub fn burgers_sup_norm_rise(count: u64) -> f64 {
    let g = Equation::Burgers.grid().unwrap();
    let s = Equation::Burgers.solver();
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..count {
        let u0 = random_sine_series(&g, &mut stream(seed, 4));
        let sol = burgers_solve(&u0, &g, s.dt, s.horizon, s.n_out).unwrap();
        let peaks: Vec<f64> =
            (0..sol.slices()).map(|t| sol.slice(t).iter().fold(0.0f64, |a, x| a.max(x.abs()))).collect();
        for w in peaks.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
    }
    worst
}

/// Largest drift of the spatial mean relative to mean |u0| over `count`
/// random KdV initial conditions.
pub fn kdv_mean_drift(count: u64) -> f64 {
    let g = Equation::Kdv.grid().unwrap();
    let s = Equation::Kdv.solver();
    let mean = |row: &[f64]| row.iter().sum::<f64>() / row.len() as f64;
    let mut worst = 0.0f64;
    for seed in 0..count {
        let u0 = random_fourier_series(&g, &mut stream(seed, 4));
        let scale = u0.iter().map(|x| x.abs()).sum::<f64>() / u0.len() as f64;
        let sol = kdv_solve(&u0, &g, s.dt, s.horizon, s.n_out).unwrap();
        let m0 = mean(sol.slice(0));
        for t in 0..sol.slices() {
            worst = worst.max((mean(sol.slice(t)) - m0).abs() / scale);
        }
    }
    worst
}

/// Checks that each epoch changed exactly one parameter set: the model on
/// even epochs and the discriminator on odd ones.
pub fn alternation_audit(h: &LossHistory, model0: u64, disc0: u64) -> Result<(), String> {
    let mut prev = (model0, disc0);
    for r in &h.records {
        let disc = r.discriminator_checksum.ok_or_else(|| format!("epoch {}: no discriminator checksum", r.epoch))?;
        let now = (r.model_checksum, disc);
        let moved = (now.0 != prev.0, now.1 != prev.1);
        let expected = if r.epoch % 2 == 0 { (true, false) } else { (false, true) };
        if moved != expected {
            return Err(format!("epoch {}: model moved {}, discriminator moved {}", r.epoch, moved.0, moved.1));
        }
        prev = now;
    }
    Ok(())
}

/// Differences between successive grid refinements at shared points.
pub fn burgers_self_convergence() -> f64 {
    let sizes = [17, 33, 65, 129];
    let sols: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&m| {
            let g = Grid1D::new(1.0, m, Boundary::DirichletZero).unwrap();
            let u0: Vec<f64> = g
                .coordinates()
                .iter()
                .map(|&x| (std::f64::consts::PI * x).sin() + 0.5 * (2.0 * std::f64::consts::PI * x).sin())
                .collect();
            let mut u0 = u0;
            u0[0] = 0.0;
            u0[m - 1] = 0.0;
            let sol = burgers_solve(&u0, &g, 1e-4, 0.1, 2).unwrap();
            sol.slice(1).to_vec()
        })
        .collect();
    let diffs: Vec<f64> = (0..sizes.len() - 1)
        .map(|k| {
            let (coarse, fine) = (&sols[k], &sols[k + 1]);
            coarse.iter().enumerate().map(|(i, c)| (c - fine[2 * i]).abs()).fold(0.0, f64::max)
        })
        .collect();
    let hs: Vec<f64> = sizes[..sizes.len() - 1].iter().map(|&m| 1.0 / (m - 1) as f64).collect();
    convergence_order(&hs, &diffs)
}

/// Largest deviation from the initial profile after one domain transit.
pub fn soliton_transit_error() -> f64 {
    let (length, m, speed) = (40.0, 256, 4.0);
    let g = Grid1D::new(length, m, Boundary::Periodic).unwrap();
    let x0 = length / 2.0;
    let u0: Vec<f64> = g.coordinates().iter().map(|&x| kdv_soliton(x, 0.0, speed, x0)).collect();
    let sol = kdv_solve(&u0, &g, 1e-3, length / speed, 2).unwrap();
    sol.slice(1).iter().zip(&u0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn datasets_bitwise_equal(a: &Dataset<f64>, b: &Dataset<f64>) -> bool {
    a.equation == b.equation
        && a.base_seed == b.base_seed
        && a.solver == b.solver
        && a.len() == b.len()
        && (0..a.len()).all(|i| {
            let (x, y) = (a.samples.values(i), b.samples.values(i));
            x.shape() == y.shape() && x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

fn model_params(m: &TrainedModel) -> Vec<&Parameter<f64>> {
    match m {
        TrainedModel::Deeponet(d) => d.parameters(),
        TrainedModel::Koopman(k) => k.parameters(),
    }
}

pub fn models_bitwise_equal(a: &TrainedModel, b: &TrainedModel) -> bool {
    let (pa, pb) = (model_params(a), model_params(b));
    a.architecture() == b.architecture()
        && pa.len() == pb.len()
        && pa.iter().zip(&pb).all(|(x, y)| {
            x.id() == y.id()
                && x.shape() == y.shape()
                && x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

/// Flips one bit of the last payload byte.
pub fn corrupt_payload_byte(bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    *out.last_mut().expect("non-empty file") ^= 0x10;
    out
}
