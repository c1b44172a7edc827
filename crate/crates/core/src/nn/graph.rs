//! Tape-based reverse-mode differentiation over small dense matrices.
//!
//! Every operation appends a node holding its forward value. Calling
//! [`Graph::backward`] on a scalar node walks the tape once in reverse and
//! accumulates adjoints; nodes that do not depend on a parameter are
//! skipped entirely. Rank-1 operands are read as single rows.

use crate::error::{shape_err, Error, Result};
use crate::nn::functions::{prob_clamp, sigmoid};
use crate::nn::{ParamId, Parameter, Tensor};
use crate::scalar::Scalar;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Linear { x: usize, w: usize, b: Option<usize> },
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Tanh(usize),
    Sigmoid(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    RowDot(usize, usize),
    VStack(Vec<usize>),
    Mse(usize, usize),
    Bce(usize, Vec<T>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

#[derive(Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(ParamId, usize)>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: usize) -> bool {
        self.nodes[v].tracked
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf whose gradient is reported under the parameter id.
    pub fn param(&mut self, p: &Parameter<T>) -> Var {
        let v = self.push(p.value().clone(), Op::Leaf, true);
        self.params.push((p.id(), v.0));
        v
    }

    /// `x · wᵀ + b` with `w` stored as `out x in` and `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (rows, inp) = (xv.rows(), xv.cols());
        let (out, inp_w) = (wv.rows(), wv.cols());
        if inp != inp_w {
            return shape_err(format!("linear: input width {inp}, weight {out}x{inp_w}"));
        }
        let mut y = vec![T::zero(); rows * out];
        if let Some(b) = b {
            let bv = &self.nodes[b.0].value;
            if bv.len() != out {
                return shape_err(format!("linear: bias length {} for width {out}", bv.len()));
            }
            for r in 0..rows {
                y[r * out..(r + 1) * out].copy_from_slice(bv.data());
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        T::gemm(rows, inp, out, T::one(), xv.data(), (inp, 1), wv.data(), (1, inp), beta, &mut y, (out, 1));
        let tracked = self.tracked(x.0) || self.tracked(w.0) || b.is_some_and(|b| self.tracked(b.0));
        let value = Tensor::matrix(rows, out, y)?;
        Ok(self.push(value, Op::Linear { x: x.0, w: w.0, b: b.map(|b| b.0) }, tracked))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        let tracked = self.tracked(a.0) || self.tracked(b.0);
        Ok(self.push(value, Op::MatMul(a.0, b.0), tracked))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (av.rows(), av.cols());
        let (n, k2) = (bv.rows(), bv.cols());
        if k != k2 {
            return shape_err(format!("matmul_nt {m}x{k} by ({n}x{k2})^T"));
        }
        let mut y = vec![T::zero(); m * n];
        T::gemm(m, k, n, T::one(), av.data(), (k, 1), bv.data(), (1, k), T::zero(), &mut y, (n, 1));
        let tracked = self.tracked(a.0) || self.tracked(b.0);
        Ok(self.push(Tensor::matrix(m, n, y)?, Op::MatMulNt(a.0, b.0), tracked))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.transpose();
        let tracked = self.tracked(a.0);
        self.push(value, Op::Transpose(a.0), tracked)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let value = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, f)?;
        let tracked = self.tracked(a.0) || self.tracked(b.0);
        Ok(self.push(value, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = self.nodes[a.0].value.scale(c);
        let tracked = self.tracked(a.0);
        self.push(value, Op::Scale(a.0, c), tracked)
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.nodes[a.0].value.map(f);
        let tracked = self.tracked(a.0);
        self.push(value, op, tracked)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.sum();
        let tracked = self.tracked(a.0);
        self.push(Tensor::scalar(s), Op::Sum(a.0), tracked)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = &self.nodes[a.0].value;
        if v.is_empty() {
            return Err(Error::InvalidArgument("mean of empty tensor".into()));
        }
        let m = v.sum() / T::lit(v.len() as f64);
        let tracked = self.tracked(a.0);
        Ok(self.push(Tensor::scalar(m), Op::Mean(a.0), tracked))
    }

    /// Dot product of corresponding rows; the result has one entry per row.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.rows() != bv.rows() || av.cols() != bv.cols() {
            return shape_err(format!("row_dot {:?} vs {:?}", av.shape(), bv.shape()));
        }
        let c = av.cols();
        let out = (0..av.rows())
            .map(|r| {
                av.data()[r * c..(r + 1) * c]
                    .iter()
                    .zip(&bv.data()[r * c..(r + 1) * c])
                    .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
            })
            .collect();
        let tracked = self.tracked(a.0) || self.tracked(b.0);
        Ok(self.push(Tensor::vector(out), Op::RowDot(a.0, b.0), tracked))
    }

    /// Concatenates rows of equally wide operands.
    pub fn vstack(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return shape_err("vstack of nothing");
        };
        let cols = self.nodes[first.0].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            if v.cols() != cols {
                return shape_err(format!("vstack width {} vs {cols}", v.cols()));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let tracked = parts.iter().any(|p| self.tracked(p.0));
        let value = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(value, Op::VStack(parts.iter().map(|p| p.0).collect()), tracked))
    }

    /// Mean squared difference, a scalar.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let m = crate::nn::mse_loss(&self.nodes[pred.0].value, &self.nodes[target.0].value)?;
        let tracked = self.tracked(pred.0) || self.tracked(target.0);
        Ok(self.push(Tensor::scalar(m), Op::Mse(pred.0, target.0), tracked))
    }

    /// Mean binary cross entropy of probabilities against fixed targets.
    pub fn bce(&mut self, prob: Var, targets: &[T]) -> Result<Var> {
        let pv = &self.nodes[prob.0].value;
        if pv.len() != targets.len() {
            return shape_err(format!("bce: {} predictions, {} targets", pv.len(), targets.len()));
        }
        if pv.is_empty() {
            return Err(Error::InvalidArgument("bce of empty batch".into()));
        }
        let mut s = T::zero();
        for (&a, &b) in pv.data().iter().zip(targets) {
            s = s + crate::nn::bce_loss(a, b)?;
        }
        let m = s / T::lit(targets.len() as f64);
        let tracked = self.tracked(prob.0);
        Ok(self.push(Tensor::scalar(m), Op::Bce(prob.0, targets.to_vec()), tracked))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut adj);
            adj[i] = Some(g);
        }

        let mut params: Vec<(ParamId, Tensor<T>)> = Vec::new();
        for &(id, node) in &self.params {
            let shape = self.nodes[node].value.shape();
            let g = adj[node].clone().unwrap_or_else(|| vec![T::zero(); self.nodes[node].value.len()]);
            let g = Tensor::new(shape, g)?;
            match params.iter_mut().find(|(pid, _)| *pid == id) {
                Some((_, acc)) => *acc = acc.add(&g)?,
                None => params.push((id, g)),
            }
        }
        Ok(Gradients { params, nodes: adj })
    }

    fn propagate(&self, op: &Op<T>, out: &Tensor<T>, g: &[T], adj: &mut [Option<Vec<T>>]) {
        let val = |k: usize| &self.nodes[k].value;
        let want = |k: usize| self.nodes[k].tracked;
        match op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (rows, inp, outw) = (xv.rows(), xv.cols(), wv.rows());
                if want(*x) {
                    let dx = slot(adj, *x, xv.len());
                    T::gemm(rows, outw, inp, T::one(), g, (outw, 1), wv.data(), (inp, 1), T::one(), dx, (inp, 1));
                }
                if want(*w) {
                    let dw = slot(adj, *w, wv.len());
                    T::gemm(outw, rows, inp, T::one(), g, (1, outw), xv.data(), (inp, 1), T::one(), dw, (inp, 1));
                }
                if let Some(b) = b {
                    if want(*b) {
                        let db = slot(adj, *b, outw);
                        for r in 0..rows {
                            for (d, &gi) in db.iter_mut().zip(&g[r * outw..(r + 1) * outw]) {
                                *d = *d + gi;
                            }
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if want(*a) {
                    let da = slot(adj, *a, av.len());
                    T::gemm(m, n, k, T::one(), g, (n, 1), bv.data(), (1, n), T::one(), da, (k, 1));
                }
                if want(*b) {
                    let db = slot(adj, *b, bv.len());
                    T::gemm(k, m, n, T::one(), av.data(), (1, k), g, (n, 1), T::one(), db, (n, 1));
                }
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                if want(*a) {
                    let da = slot(adj, *a, av.len());
                    T::gemm(m, n, k, T::one(), g, (n, 1), bv.data(), (k, 1), T::one(), da, (k, 1));
                }
                if want(*b) {
                    let db = slot(adj, *b, bv.len());
                    T::gemm(n, m, k, T::one(), g, (1, n), av.data(), (k, 1), T::one(), db, (k, 1));
                }
            }
            Op::Transpose(a) => {
                if want(*a) {
                    let (r, c) = (out.rows(), out.cols());
                    let da = slot(adj, *a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            da[j * r + i] = da[j * r + i] + g[i * c + j];
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -T::one() } else { T::one() };
                if want(*a) {
                    axpy(slot(adj, *a, g.len()), T::one(), g);
                }
                if want(*b) {
                    axpy(slot(adj, *b, g.len()), sign, g);
                }
            }
            Op::Mul(a, b) => {
                if want(*a) {
                    let bv = val(*b).data();
                    let da = slot(adj, *a, g.len());
                    for ((d, &gi), &y) in da.iter_mut().zip(g).zip(bv) {
                        *d = *d + gi * y;
                    }
                }
                if want(*b) {
                    let av = val(*a).data();
                    let db = slot(adj, *b, g.len());
                    for ((d, &gi), &x) in db.iter_mut().zip(g).zip(av) {
                        *d = *d + gi * x;
                    }
                }
            }
            Op::Scale(a, c) => {
                if want(*a) {
                    axpy(slot(adj, *a, g.len()), *c, g);
                }
            }
            Op::Tanh(a) => {
                if want(*a) {
                    let da = slot(adj, *a, g.len());
                    for ((d, &gi), &y) in da.iter_mut().zip(g).zip(out.data()) {
                        *d = *d + gi * (T::one() - y * y);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if want(*a) {
                    let da = slot(adj, *a, g.len());
                    for ((d, &gi), &y) in da.iter_mut().zip(g).zip(out.data()) {
                        *d = *d + gi * y * (T::one() - y);
                    }
                }
            }
            Op::Square(a) => {
                if want(*a) {
                    let av = val(*a).data();
                    let da = slot(adj, *a, g.len());
                    for ((d, &gi), &x) in da.iter_mut().zip(g).zip(av) {
                        *d = *d + gi * (x + x);
                    }
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                if want(*a) {
                    let n = val(*a).len();
                    let s = match op {
                        Op::Mean(_) => g[0] / T::lit(n as f64),
                        _ => g[0],
                    };
                    slot(adj, *a, n).iter_mut().for_each(|d| *d = *d + s);
                }
            }
            Op::RowDot(a, b) => {
                let c = val(*a).cols();
                for (src, dst) in [(*b, *a), (*a, *b)] {
                    if want(dst) {
                        let other = val(src).data();
                        let dd = slot(adj, dst, other.len());
                        for (r, &gr) in g.iter().enumerate() {
                            for j in r * c..(r + 1) * c {
                                dd[j] = dd[j] + gr * other[j];
                            }
                        }
                    }
                }
            }
            Op::VStack(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = val(p).len();
                    if want(p) {
                        axpy(slot(adj, p, n), T::one(), &g[off..off + n]);
                    }
                    off += n;
                }
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (val(*p).data(), val(*t).data());
                let s = (g[0] + g[0]) / T::lit(pv.len() as f64);
                if want(*p) {
                    let dp = slot(adj, *p, pv.len());
                    for ((d, &x), &y) in dp.iter_mut().zip(pv).zip(tv) {
                        *d = *d + s * (x - y);
                    }
                }
                if want(*t) {
                    let dt = slot(adj, *t, tv.len());
                    for ((d, &x), &y) in dt.iter_mut().zip(pv).zip(tv) {
                        *d = *d - s * (x - y);
                    }
                }
            }
            Op::Bce(p, targets) => {
                if want(*p) {
                    let pv = val(*p).data();
                    let eps = prob_clamp::<T>();
                    let s = g[0] / T::lit(pv.len() as f64);
                    let dp = slot(adj, *p, pv.len());
                    for ((d, &a), &b) in dp.iter_mut().zip(pv).zip(targets) {
                        if a > eps && a < T::one() - eps {
                            *d = *d + s * (-b / a + (T::one() - b) / (T::one() - a));
                        }
                    }
                }
            }
        }
    }
}

fn slot<T: Scalar>(adj: &mut [Option<Vec<T>>], k: usize, len: usize) -> &mut [T] {
    adj[k].get_or_insert_with(|| vec![T::zero(); len])
}

fn axpy<T: Scalar>(dst: &mut [T], a: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + a * s;
    }
}

/// Adjoints from one reverse sweep.
pub struct Gradients<T> {
    params: Vec<(ParamId, Tensor<T>)>,
    nodes: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a parameter id, if the parameter was on the tape.
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    /// Gradients aligned with `params`; parameters absent from the tape get zeros.
    pub fn for_params(&self, params: &[&Parameter<T>]) -> Vec<Tensor<T>> {
        params.iter().map(|p| self.param(p.id()).cloned().unwrap_or_else(|| Tensor::zeros(p.shape()))).collect()
    }

    /// Raw adjoint of any node reached by the sweep.
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(id: u32, shape: &[usize], data: Vec<f64>) -> Parameter<f64> {
        Parameter::new(ParamId(id), format!("p{id}"), Tensor::new(shape, data).unwrap())
    }

    #[test]
    fn square_derivative() {
        let x = p(0, &[1], vec![3.0]);
        let mut g = Graph::new();
        let v = g.param(&x);
        let s = g.square(v);
        let l = g.sum(s);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.param(ParamId(0)).unwrap().data(), &[6.0]);
    }

    #[test]
    fn independent_parameter_gets_zeros() {
        let a = p(0, &[2], vec![1.0, 2.0]);
        let b = p(1, &[3], vec![1.0, 2.0, 3.0]);
        let mut g = Graph::new();
        let va = g.param(&a);
        let _vb = g.param(&b);
        let l = g.sum(va);
        let grads = g.backward(l).unwrap();
        let all = grads.for_params(&[&a, &b]);
        assert_eq!(all[1].data(), &[0.0, 0.0, 0.0]);
        assert_eq!(all[0].data(), &[1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let a = p(0, &[2], vec![1.0, 2.0]);
        let mut g = Graph::new();
        let va = g.param(&a);
        let t = g.tanh(va);
        assert!(g.backward(t).is_err());
    }

    #[test]
    fn reused_parameter_accumulates() {
        // l = sum(a * a) entered through two separate leaves
        let a = p(0, &[2], vec![1.5, -2.0]);
        let mut g = Graph::new();
        let v1 = g.param(&a);
        let v2 = g.param(&a);
        let m = g.mul(v1, v2).unwrap();
        let l = g.sum(m);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.param(ParamId(0)).unwrap().data(), &[3.0, -4.0]);
    }

    #[test]
    fn shape_errors_surface() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 2]));
        assert!(g.matmul(a, b).is_err());
        assert!(g.add(a, b).is_err());
        assert!(g.linear(a, b, None).is_err());
        assert!(g.bce(a, &[0.0; 5]).is_err());
    }
}
