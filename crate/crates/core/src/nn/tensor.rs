use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(v: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    /// Product of all leading axes (1 for vectors).
    pub fn rows(&self) -> usize {
        if self.shape.len() <= 1 {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `y = x W + b` for `x` of shape `[*, in]`, `W` of shape `[in, out]` and
/// `b` of shape `[out]`.
pub fn affine<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if w.shape().len() != 2 {
        return Err(Error::Shape(format!("weight must be a matrix, got {:?}", w.shape())));
    }
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    if x.cols() != n_in || b.len() != n_out {
        return Err(Error::Shape(format!(
            "affine: x {:?}, W {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let rows = x.rows();
    let mut out = Vec::with_capacity(rows * n_out);
    for r in 0..rows {
        let xr = &x.data()[r * n_in..(r + 1) * n_in];
        let mut y = b.data().to_vec();
        matvec_acc(xr, w.data(), n_out, &mut y);
        out.extend(y);
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("non-empty shape") = n_out;
    Tensor::new(shape, out)
}

/// `y += x W` for a row vector `x` and row-major `W` with `n_out` columns.
#[inline]
pub(crate) fn matvec_acc<T: Scalar>(x: &[T], w: &[T], n_out: usize, y: &mut [T]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        let row = &w[i * n_out..(i + 1) * n_out];
        for (yj, &wij) in y.iter_mut().zip(row) {
            *yj += xi * wij;
        }
    }
}
