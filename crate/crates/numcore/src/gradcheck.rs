//! Finite-difference verification of reverse-mode gradients.

use crate::error::{NumError, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Outcome of [`grad_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport<S> {
    pub max_rel_error: S,
    pub max_abs_error: S,
    pub checked: usize,
}

/// Compares reverse-mode gradients of `f` with central differences of step
/// `h`, element by element over all of `params`.
///
/// The relative error of an element is `|a − n| / max(|a|, |n|, floor)` with
/// `floor = 1e-6`, so gradients that are zero on both sides do not blow up.
/// `f` must be deterministic.
pub fn grad_check<S, F>(f: F, params: &[Tensor<S>], h: S) -> Result<GradCheckReport<S>>
where
    S: Scalar,
    F: Fn(&mut Graph<S>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor<S>]| -> Result<S> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let loss = f(&mut g, &vars)?;
        let v = g.value(loss);
        if v.len() != 1 {
            return Err(NumError::shape("grad_check", "function must return a scalar"));
        }
        Ok(v.item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let analytic = g.backward(loss)?.collect(&g, &vars);

    let floor = S::lit(1e-6);
    let mut report = GradCheckReport { max_rel_error: S::zero(), max_abs_error: S::zero(), checked: 0 };
    let mut work: Vec<Tensor<S>> = params.to_vec();
    for (pi, grad) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[pi].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[pi].data_mut()[j] = orig;
            let numeric = (up - down) / (h + h);
            let a = grad.data()[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(floor);
            if !rel.is_finite() {
                return Err(NumError::NonFinite(format!("grad_check parameter {pi} element {j}")));
            }
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
