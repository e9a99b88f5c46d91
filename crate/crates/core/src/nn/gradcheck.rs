//! Central finite-difference verification of tape gradients.

use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use super::param::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Perturbation size for the central difference.
    pub step: f64,
    /// Bound on `|analytic - numeric| / max(1, |analytic|)`.
    pub tolerance: f64,
    /// Coordinates sampled per parameter tensor; larger tensors are subsampled.
    pub max_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            max_per_param: 24,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSummary {
    pub param: String,
    pub checked: usize,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub params: Vec<ParamSummary>,
    pub failures: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::GradientCheck(self.to_string()))
        }
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} coordinates checked, max relative error {:.3e} (tolerance {:.1e}), {} failure(s)",
            self.checked,
            self.max_error,
            self.tolerance,
            self.failures.len()
        )?;
        for p in &self.params {
            writeln!(f, "  {:<24} {:>6} checked  max error {:.3e}", p.param, p.checked, p.max_error)?;
        }
        for m in &self.failures {
            writeln!(
                f,
                "  FAIL {}[{}]: analytic {:.8e}, numeric {:.8e}, error {:.3e}",
                m.param, m.index, m.analytic, m.numeric, m.error
            )?;
        }
        Ok(())
    }
}

/// Computes analytic gradients of `loss_fn` with one backward pass and
/// compares them against central differences.
///
/// `loss_fn` builds a scalar loss on a fresh inference tape.
pub fn finite_difference_check<T, F>(store: &mut ParamStore<T>, mut loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&ParamStore<T>, &mut Graph<T>) -> Result<NodeId>,
{
    store.zero_grad();
    let mut g = Graph::new();
    let loss = loss_fn(store, &mut g)?;
    g.backward(loss, store)?;
    let analytic: Vec<Tensor<T>> = store.iter().map(|p| p.grad.clone()).collect();
    store.zero_grad();
    compare_gradients(store, &analytic, loss_fn, opts)
}

/// Compares externally supplied gradients (one tensor per parameter, in
/// store order) against central differences of `loss_fn`.
pub fn compare_gradients<T, F>(store: &mut ParamStore<T>, analytic: &[Tensor<T>], mut loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&ParamStore<T>, &mut Graph<T>) -> Result<NodeId>,
{
    if analytic.len() != store.len() {
        return Err(Error::Argument(format!(
            "{} gradient tensors for {} parameters",
            analytic.len(),
            store.len()
        )));
    }
    let mut eval = |store: &ParamStore<T>| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss_fn(store, &mut g)?;
        Ok(g.value(l).data()[0].as_f64())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let h = T::lit(opts.step);
    let ids: Vec<_> = store.ids().collect();
    let mut report = GradCheckReport {
        checked: 0,
        max_error: 0.0,
        tolerance: opts.tolerance,
        params: Vec::new(),
        failures: Vec::new(),
    };
    for (k, id) in ids.into_iter().enumerate() {
        let n = store.get(id).value.len();
        let coords: Vec<usize> = if n <= opts.max_per_param {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, opts.max_per_param).into_vec();
            c.sort_unstable();
            c
        };
        let name = store.get(id).name.clone();
        let mut summary = ParamSummary {
            param: name.clone(),
            checked: 0,
            max_error: 0.0,
        };
        for i in coords {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + h;
            let plus = eval(store);
            store.get_mut(id).value.data_mut()[i] = orig - h;
            let minus = eval(store);
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * opts.step);
            let a = analytic[k].data()[i].as_f64();
            let error = (a - numeric).abs() / a.abs().max(1.0);
            summary.checked += 1;
            summary.max_error = summary.max_error.max(error);
            if !(error < opts.tolerance) {
                report.failures.push(GradMismatch {
                    param: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    error,
                });
            }
        }
        report.checked += summary.checked;
        report.max_error = report.max_error.max(summary.max_error);
        report.params.push(summary);
    }
    Ok(report)
}
