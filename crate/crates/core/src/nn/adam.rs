use super::param::{ParamStore, Parameter};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam with bias-corrected moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
        }
    }
}

impl Adam {
    pub fn new(lr: f64, eps: f64) -> Self {
        Adam {
            lr,
            eps,
            ..Default::default()
        }
    }

    /// Updates one parameter from its accumulated gradient, then clears the gradient.
    pub fn step<T: Scalar>(&self, p: &mut Parameter<T>) -> Result<()> {
        if !p.grad.all_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in `{}`", p.name)));
        }
        p.step_count += 1;
        let t = p.step_count as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::one() - T::lit(self.beta1.powi(t));
        let c2 = T::one() - T::lit(self.beta2.powi(t));
        let lr = T::lit(self.lr);
        let eps = T::lit(self.eps);
        let grads = p.grad.data().to_vec();
        let m = p.adam_m.data_mut();
        for (mi, &g) in m.iter_mut().zip(&grads) {
            *mi = b1 * *mi + (T::one() - b1) * g;
        }
        let v = p.adam_v.data_mut();
        for (vi, &g) in v.iter_mut().zip(&grads) {
            *vi = b2 * *vi + (T::one() - b2) * g * g;
        }
        let m = p.adam_m.data().to_vec();
        let v = p.adam_v.data().to_vec();
        for ((w, mi), vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.zero_grad();
        Ok(())
    }

    /// Updates every parameter. Gradients are checked for finiteness before
    /// anything is modified.
    pub fn step_all<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        if let Some(p) = store.iter().find(|p| !p.grad.all_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in `{}`", p.name)));
        }
        for p in store.iter_mut() {
            self.step(p)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;
    use approx::assert_relative_eq;

    fn param(v: f64, g: f64) -> Parameter<f64> {
        let mut p = Parameter::new("p", Tensor::vector(vec![v]));
        p.grad = Tensor::vector(vec![g]);
        p
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut p = param(0.7, 0.0);
        Adam::default().step(&mut p).unwrap();
        assert_eq!(p.value.data(), &[0.7]);
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn first_step_magnitude() {
        let mut p = param(0.0, 1.0);
        Adam::default().step(&mut p).unwrap();
        assert_relative_eq!(p.value.data()[0], -0.001 / (1.0 + 1e-6), epsilon = 1e-15);
        assert_eq!(p.grad.data(), &[0.0]);
    }

    #[test]
    fn two_steps_match_scalar_oracle() {
        let opt = Adam::new(0.01, 1e-8);
        let mut p = param(1.0, 0.5);
        opt.step(&mut p).unwrap();
        p.grad = Tensor::vector(vec![-2.0]);
        opt.step(&mut p).unwrap();

        let (b1, b2) = (0.9f64, 0.999f64);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, g) in [(1, 0.5), (2, -2.0)] {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert_relative_eq!(p.value.data()[0], w, epsilon = 1e-14);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", Tensor::vector(vec![1.0])).unwrap();
        let b = store.add("b", Tensor::vector(vec![1.0])).unwrap();
        store.get_mut(a).grad = Tensor::vector(vec![1.0]);
        store.get_mut(b).grad = Tensor::vector(vec![f64::NAN]);
        assert!(matches!(Adam::default().step_all(&mut store), Err(Error::Numeric(_))));
        assert_eq!(store.value(a).data(), &[1.0]);
    }
}
