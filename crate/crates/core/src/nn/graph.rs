//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so every operand precedes its
//! consumers and the backward pass is a single reverse sweep. Parameters
//! live outside the tape in a [`ParamStore`]; ops that read parameters
//! write their gradients straight into the store during backward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::param::{ParamId, ParamStore};
use super::tensor::{affine, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Input,
    Affine { x: NodeId, w: ParamId, b: ParamId },
    Embed { table: ParamId, row: usize },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Mean(Vec<NodeId>),
    Sum(Vec<NodeId>),
    Scale(NodeId, T),
    Dropout { x: NodeId, mask: Vec<T> },
    Softmax(NodeId),
    Nll { p: NodeId, target: usize },
    Bce { p: NodeId, targets: Vec<T> },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Gradients of the loss with respect to every node of a tape.
#[derive(Clone, Debug)]
pub struct NodeGrads<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> NodeGrads<T> {
    pub fn get(&self, id: NodeId) -> Option<&[T]> {
        self.grads.get(id.0)?.as_deref()
    }
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    training: bool,
    dropout: f64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    /// An inference tape: dropout is the identity.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            training: false,
            dropout: 0.0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// A training tape whose dropout masks are drawn from `seed`.
    pub fn training(dropout: f64, seed: u64) -> Result<Self> {
        check_dropout(dropout)?;
        Ok(Graph {
            nodes: Vec::new(),
            training: true,
            dropout,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!("non-finite value from {op:?}")));
        }
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push(value, Op::Input)
    }

    pub fn affine(&mut self, store: &ParamStore<T>, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let y = affine(self.value(x), store.value(w), store.value(b))?;
        self.push(y, Op::Affine { x, w, b })
    }

    /// Row `row` of a `[rows, dim]` embedding parameter.
    pub fn embed(&mut self, store: &ParamStore<T>, table: ParamId, row: usize) -> Result<NodeId> {
        let t = store.value(table);
        let dim = t.cols();
        if row >= t.rows() {
            return Err(Error::Shape(format!("embedding row {row} out of {}", t.rows())));
        }
        let v = Tensor::vector(t.data()[row * dim..(row + 1) * dim].to_vec());
        self.push(v, Op::Embed { table, row })
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    fn map(&self, a: NodeId, f: impl Fn(T) -> T) -> Tensor<T> {
        let v = self.value(a);
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect()).expect("same shape")
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let v = self.zip(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let v = self.zip(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.map(a, sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.map(a, T::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        let v = self.map(a, |x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Argument("concat of nothing".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(x);
        if start + len > v.len() {
            return Err(Error::Shape(format!("slice {start}+{len} of {}", v.len())));
        }
        let out = Tensor::vector(v.data()[start..start + len].to_vec());
        self.push(out, Op::Slice { x, start })
    }

    /// Componentwise mean (average pooling) of equally shaped nodes.
    pub fn mean(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let v = self.sum_values(parts, "mean")?;
        let k = T::lit(parts.len() as f64);
        let data = v.data().iter().map(|&x| x / k).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.push(out, Op::Mean(parts.to_vec()))
    }

    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let v = self.sum_values(parts, "sum")?;
        self.push(v, Op::Sum(parts.to_vec()))
    }

    fn sum_values(&self, parts: &[NodeId], what: &str) -> Result<Tensor<T>> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Argument(format!("{what} of an empty sequence")))?;
        let mut acc = self.value(first).clone();
        for &p in &parts[1..] {
            self.same_shape(first, p, what)?;
            for (a, &b) in acc.data_mut().iter_mut().zip(self.value(p).data()) {
                *a += b;
            }
        }
        Ok(acc)
    }

    /// Dropout with the tape's configured rate; identity at inference.
    pub fn dropout(&mut self, x: NodeId) -> Result<NodeId> {
        let p = self.dropout;
        self.dropout_with(x, p)
    }

    /// Inverted dropout: zero each unit with probability `p`, scale
    /// survivors by `1/(1-p)`. Identity when not training or `p == 0`.
    pub fn dropout_with(&mut self, x: NodeId, p: f64) -> Result<NodeId> {
        check_dropout(p)?;
        if !self.training || p == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let v = self.value(x);
        let data = v.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.push(out, Op::Dropout { x, mask })
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::vector(softmax(self.value(a).data()));
        self.push(v, Op::Softmax(a))
    }

    /// `-ln max(p[target], floor)` for a probability vector `p`.
    pub fn nll(&mut self, p: NodeId, target: usize) -> Result<NodeId> {
        let v = self.value(p);
        if target >= v.len() {
            return Err(Error::Argument(format!("target {target} out of {}", v.len())));
        }
        let loss = cross_entropy(v.data(), target);
        self.push(Tensor::scalar(loss), Op::Nll { p, target })
    }

    /// Summed binary cross-entropy of probabilities `p` against 0/1 targets.
    pub fn bce(&mut self, p: NodeId, targets: &[T]) -> Result<NodeId> {
        let v = self.value(p);
        if targets.len() != v.len() {
            return Err(Error::Shape(format!("bce: {} targets for {} probabilities", targets.len(), v.len())));
        }
        let loss = binary_cross_entropy(v.data(), targets);
        self.push(Tensor::scalar(loss), Op::Bce { p, targets: targets.to_vec() })
    }

    /// Backpropagates from the scalar `loss`, accumulating parameter
    /// gradients into `store`, and returns the gradients of all nodes.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore<T>) -> Result<NodeGrads<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!("loss must be a scalar, got {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_deref() else { continue };
            let node = &self.nodes[i];
            let y = node.value.data();
            match &node.op {
                Op::Input => {}
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    let param = store.get(*w);
                    let (n_in, n_out) = (param.value.shape()[0], param.value.shape()[1]);
                    let rows = xv.rows();
                    {
                        let dx = slot(lower, *x, xv.len());
                        for r in 0..rows {
                            let gr = &g[r * n_out..(r + 1) * n_out];
                            for i in 0..n_in {
                                let wr = &param.value.data()[i * n_out..(i + 1) * n_out];
                                let mut s = T::zero();
                                for (&gj, &wj) in gr.iter().zip(wr) {
                                    s += gj * wj;
                                }
                                dx[r * n_in + i] += s;
                            }
                        }
                    }
                    let pw = store.get_mut(*w);
                    let dw = pw.grad.data_mut();
                    for r in 0..rows {
                        let gr = &g[r * n_out..(r + 1) * n_out];
                        let xr = &xv.data()[r * n_in..(r + 1) * n_in];
                        for (i, &xi) in xr.iter().enumerate() {
                            if xi == T::zero() {
                                continue;
                            }
                            for (d, &gj) in dw[i * n_out..(i + 1) * n_out].iter_mut().zip(gr) {
                                *d += xi * gj;
                            }
                        }
                    }
                    let db = store.get_mut(*b).grad.data_mut();
                    for r in 0..rows {
                        for (d, &gj) in db.iter_mut().zip(&g[r * n_out..(r + 1) * n_out]) {
                            *d += gj;
                        }
                    }
                }
                Op::Embed { table, row } => {
                    let dim = g.len();
                    let dt = store.get_mut(*table).grad.data_mut();
                    for (d, &gj) in dt[row * dim..(row + 1) * dim].iter_mut().zip(g) {
                        *d += gj;
                    }
                }
                Op::Add(a, b) => {
                    for id in [a, b] {
                        axpy(slot(lower, *id, g.len()), T::one(), g);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    let da = slot(lower, *a, g.len());
                    for ((d, &gi), &bi) in da.iter_mut().zip(g).zip(vb) {
                        *d += gi * bi;
                    }
                    let db = slot(lower, *b, g.len());
                    for ((d, &gi), &ai) in db.iter_mut().zip(g).zip(va) {
                        *d += gi * ai;
                    }
                }
                Op::Sigmoid(a) => {
                    let da = slot(lower, *a, g.len());
                    for ((d, &gi), &yi) in da.iter_mut().zip(g).zip(y) {
                        *d += gi * yi * (T::one() - yi);
                    }
                }
                Op::Tanh(a) => {
                    let da = slot(lower, *a, g.len());
                    for ((d, &gi), &yi) in da.iter_mut().zip(g).zip(y) {
                        *d += gi * (T::one() - yi * yi);
                    }
                }
                Op::Scale(a, c) => axpy(slot(lower, *a, g.len()), *c, g),
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        axpy(slot(lower, *p, n), T::one(), &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Slice { x, start } => {
                    let n = self.value(*x).len();
                    axpy(&mut slot(lower, *x, n)[*start..*start + g.len()], T::one(), g);
                }
                Op::Mean(parts) => {
                    let k = T::one() / T::lit(parts.len() as f64);
                    for p in parts {
                        axpy(slot(lower, *p, g.len()), k, g);
                    }
                }
                Op::Sum(parts) => {
                    for p in parts {
                        axpy(slot(lower, *p, g.len()), T::one(), g);
                    }
                }
                Op::Dropout { x, mask } => {
                    let dx = slot(lower, *x, g.len());
                    for ((d, &gi), &m) in dx.iter_mut().zip(g).zip(mask) {
                        *d += gi * m;
                    }
                }
                Op::Softmax(a) => {
                    let dot: T = g.iter().zip(y).map(|(&gi, &yi)| gi * yi).sum();
                    let da = slot(lower, *a, g.len());
                    for ((d, &gi), &yi) in da.iter_mut().zip(g).zip(y) {
                        *d += yi * (gi - dot);
                    }
                }
                Op::Nll { p, target } => {
                    let pv = self.value(*p).data();
                    let pt = pv[*target];
                    let dp = slot(lower, *p, pv.len());
                    if pt > T::lit(PROB_FLOOR) {
                        dp[*target] += -g[0] / pt;
                    }
                }
                Op::Bce { p, targets } => {
                    let pv = self.value(*p).data();
                    let floor = T::lit(PROB_FLOOR);
                    let dp = slot(lower, *p, pv.len());
                    for ((d, &pi), &yi) in dp.iter_mut().zip(pv).zip(targets) {
                        let mut s = T::zero();
                        if pi > floor {
                            s -= yi / pi;
                        }
                        if T::one() - pi > floor {
                            s += (T::one() - yi) / (T::one() - pi);
                        }
                        *d += g[0] * s;
                    }
                }
            }
        }
        Ok(NodeGrads { grads })
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], id: NodeId, len: usize) -> &mut [T] {
    grads[id.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Argument(format!("dropout probability must be in [0, 1), got {p}")));
    }
    Ok(())
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln max(p[target], floor)`.
pub fn cross_entropy<T: Scalar>(p: &[T], target: usize) -> T {
    -p[target].max(T::lit(PROB_FLOOR)).ln()
}

pub fn binary_cross_entropy<T: Scalar>(p: &[T], targets: &[T]) -> T {
    let floor = T::lit(PROB_FLOOR);
    let mut loss = T::zero();
    for (&pi, &yi) in p.iter().zip(targets) {
        loss -= yi * pi.max(floor).ln() + (T::one() - yi) * (T::one() - pi).max(floor).ln();
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn central<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn activation_values() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        let s = softmax(&[3.0f64, 3.0, 3.0, 3.0]);
        assert!(s.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert_relative_eq!(cross_entropy(&s, 2), 4f64.ln(), epsilon = 1e-12);
        let z = softmax(&[1.0f64, -2.0, 0.5, 10.0, -30.0]);
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sigmoid(-800.0f64) > 0.0 - 1e-300 && sigmoid(800.0f64) <= 1.0);
    }

    #[test]
    fn cross_entropy_floor() {
        assert_relative_eq!(cross_entropy(&[0.0f64, 1.0], 0), -(1e-12f64).ln());
    }

    #[test]
    fn mean_gradient_is_one_over_k() {
        let mut store = ParamStore::<f64>::new();
        let mut g = Graph::new();
        let xs: Vec<NodeId> = (0..4)
            .map(|i| g.input(Tensor::vector(vec![i as f64, 1.0])).unwrap())
            .collect();
        let m = g.mean(&xs).unwrap();
        let w = g.input(Tensor::vector(vec![1.0, 1.0])).unwrap();
        let prod = g.mul(m, w).unwrap();
        let s = g.sum(&[prod]).unwrap();
        let l = g.slice(s, 0, 1).unwrap();
        let grads = g.backward(l, &mut store).unwrap();
        for x in &xs {
            assert_eq!(grads.get(*x).unwrap(), &[0.25, 0.0]);
        }
        // finite differences on the pooled first component
        let f = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        for d in central(f, &[0.0, 1.0, 2.0, 3.0]) {
            assert_relative_eq!(d, 0.25, epsilon = 1e-8);
        }
        assert!(g.mean(&[]).is_err());
    }

    #[test]
    fn softmax_nll_gradient() {
        let x0 = [0.3, -1.2, 2.0, 0.1];
        let f = |x: &[f64]| cross_entropy(&softmax(x), 2);
        let numeric = central(f, &x0);
        let mut store = ParamStore::<f64>::new();
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(x0.to_vec())).unwrap();
        let p = g.softmax(x).unwrap();
        let l = g.nll(p, 2).unwrap();
        let grads = g.backward(l, &mut store).unwrap();
        for (a, n) in grads.get(x).unwrap().iter().zip(&numeric) {
            assert_relative_eq!(a, n, epsilon = 1e-7);
        }
    }

    #[test]
    fn sigmoid_bce_gradient() {
        let x0 = [0.3, -1.2, 2.0];
        let y = [0.0, 1.0, 0.0];
        let f = |x: &[f64]| {
            let p: Vec<f64> = x.iter().map(|&v| sigmoid(v)).collect();
            binary_cross_entropy(&p, &y)
        };
        let numeric = central(f, &x0);
        let mut store = ParamStore::<f64>::new();
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(x0.to_vec())).unwrap();
        let p = g.sigmoid(x).unwrap();
        let l = g.bce(p, &y).unwrap();
        let grads = g.backward(l, &mut store).unwrap();
        for (a, n) in grads.get(x).unwrap().iter().zip(&numeric) {
            assert_relative_eq!(a, n, epsilon = 1e-7);
        }
    }

    #[test]
    fn dropout_modes() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::vector(vec![1.0; 8])).unwrap();
        assert_eq!(g.dropout_with(x, 0.9).unwrap(), x);
        assert!(g.dropout_with(x, 1.0).is_err());
        let mut t = Graph::<f64>::training(0.5, 1).unwrap();
        let x = t.input(Tensor::vector(vec![1.0; 8])).unwrap();
        assert_eq!(t.dropout_with(x, 0.0).unwrap(), x);
        assert!(Graph::<f64>::training(1.0, 1).is_err());
    }

    #[test]
    fn dropout_rate_and_scaling() {
        let p = 0.3;
        let n = 100_000;
        let mut g = Graph::<f64>::training(p, 42).unwrap();
        let x = g.input(Tensor::vector(vec![1.0; n])).unwrap();
        let y = g.dropout(x).unwrap();
        let v = g.value(y).data();
        let dropped = v.iter().filter(|&&a| a == 0.0).count() as f64 / n as f64;
        assert!((dropped - p).abs() < 0.01, "{dropped}");
        let kept = v.iter().find(|&&a| a != 0.0).unwrap();
        assert_relative_eq!(*kept, 1.0 / (1.0 - p), epsilon = 1e-12);
    }

    #[test]
    fn non_finite_values_are_errors() {
        let mut g = Graph::<f64>::new();
        assert!(matches!(g.input(Tensor::vector(vec![f64::NAN])), Err(Error::Numeric(_))));
    }
}
