use rand::Rng;

use super::graph::{Graph, NodeId};
use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected layer `y = x W + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, input: usize, output: usize, rng: &mut R) -> Result<Self> {
        Ok(Linear {
            w: store.add_glorot(format!("{name}.w"), input, output, rng)?,
            b: store.add_zeros(format!("{name}.b"), &[output])?,
            input,
            output,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: NodeId) -> Result<NodeId> {
        g.affine(store, x, self.w, self.b)
    }
}

/// A unidirectional LSTM. Gates are stored fused as `[input + hidden, 4 * hidden]`
/// in the order input, forget, candidate, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    /// Glorot weights, zero biases except the forget gate at +1.
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let w = store.add_glorot(format!("{name}.w"), input + hidden, 4 * hidden, rng)?;
        let mut bias = vec![T::zero(); 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|v| *v = T::one());
        let b = store.add(format!("{name}.b"), Tensor::vector(bias))?;
        Ok(Lstm { w, b, input, hidden })
    }

    /// One step: returns `(h_t, c_t)`.
    pub fn cell<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: NodeId, h_prev: NodeId, c_prev: NodeId) -> Result<(NodeId, NodeId)> {
        if g.value(x).len() != self.input || g.value(h_prev).len() != self.hidden || g.value(c_prev).len() != self.hidden {
            return Err(Error::Shape(format!(
                "lstm cell expects input {} and state {}, got {} / {} / {}",
                self.input,
                self.hidden,
                g.value(x).len(),
                g.value(h_prev).len(),
                g.value(c_prev).len()
            )));
        }
        let h = self.hidden;
        let xh = g.concat(&[x, h_prev])?;
        let z = g.affine(store, xh, self.w, self.b)?;
        let i = g.slice(z, 0, h)?;
        let i = g.sigmoid(i)?;
        let f = g.slice(z, h, h)?;
        let f = g.sigmoid(f)?;
        let cand = g.slice(z, 2 * h, h)?;
        let cand = g.tanh(cand)?;
        let o = g.slice(z, 3 * h, h)?;
        let o = g.sigmoid(o)?;
        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c)?;
        let h_t = g.mul(o, tc)?;
        Ok((h_t, c))
    }

    /// Runs over `xs` from zero state; with `reverse` the sequence is read
    /// back to front but outputs stay aligned with their inputs.
    pub fn run<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, xs: &[NodeId], reverse: bool) -> Result<Vec<NodeId>> {
        let mut h = g.input(Tensor::zeros(&[self.hidden]))?;
        let mut c = g.input(Tensor::zeros(&[self.hidden]))?;
        let mut out = vec![h; xs.len()];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..xs.len()).rev())
        } else {
            Box::new(0..xs.len())
        };
        for t in order {
            let (h_t, c_t) = self.cell(g, store, xs[t], h, c)?;
            h = h_t;
            c = c_t;
            out[t] = h_t;
        }
        Ok(out)
    }
}

/// Bidirectional LSTM; each output is `forward_h ⊕ backward_h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(BiLstm {
            fwd: Lstm::new(store, &format!("{name}.fwd"), input, hidden, rng)?,
            bwd: Lstm::new(store, &format!("{name}.bwd"), input, hidden, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, xs: &[NodeId]) -> Result<Vec<NodeId>> {
        if xs.is_empty() {
            return Err(Error::Argument("bidirectional encoder needs a non-empty sequence".into()));
        }
        let f = self.fwd.run(g, store, xs, false)?;
        let b = self.bwd.run(g, store, xs, true)?;
        f.into_iter().zip(b).map(|(f, b)| g.concat(&[f, b])).collect()
    }
}
