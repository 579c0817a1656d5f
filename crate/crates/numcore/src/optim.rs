//! Adam and RAdam with decoupled weight decay.

use crate::error::{NumError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    /// Rectified Adam: falls back to bias-corrected momentum SGD while the
    /// variance of the adaptive learning rate is intractable.
    RAdam,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig<S> {
    pub kind: OptimizerKind,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    pub weight_decay: S,
}

impl<S: Scalar> OptimizerConfig<S> {
    pub fn adam(weight_decay: S) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            beta1: S::lit(0.9),
            beta2: S::lit(0.999),
            eps: S::lit(1e-8),
            weight_decay,
        }
    }

    pub fn radam(weight_decay: S) -> Self {
        Self { kind: OptimizerKind::RAdam, ..Self::adam(weight_decay) }
    }
}

/// Moment estimates for a fixed, ordered list of parameters.
#[derive(Clone, Debug)]
pub struct OptimizerState<S> {
    config: OptimizerConfig<S>,
    step_count: u64,
    first_moment: Vec<Tensor<S>>,
    second_moment: Vec<Tensor<S>>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(config: OptimizerConfig<S>, params: &[Tensor<S>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        Self { config, step_count: 0, first_moment: zeros(), second_moment: zeros() }
    }

    pub fn config(&self) -> &OptimizerConfig<S> {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Tensor<S>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Tensor<S>] {
        &self.second_moment
    }

    /// Applies one update in place. Nothing is modified when an error is
    /// returned.
    pub fn step(&mut self, params: &mut [Tensor<S>], grads: &[Tensor<S>], lr: S) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(NumError::shape(
                "optimizer_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first_moment.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(NumError::shape(
                    "optimizer_step",
                    format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
                ));
            }
            if !g.is_finite() {
                return Err(NumError::NonFinite(format!("gradient of parameter {i}")));
            }
        }

        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let one = S::one();
        let bias1 = one - c.beta1.powi(t);
        let bias2 = one - c.beta2.powi(t);

        // RAdam rectification, evaluated once per step.
        let rect = match c.kind {
            OptimizerKind::Adam => None,
            OptimizerKind::RAdam => {
                let two = S::lit(2.0);
                let four = S::lit(4.0);
                let rho_inf = two / (one - c.beta2) - one;
                let rho_t = rho_inf - two * S::lit(t as f64) * c.beta2.powi(t) / bias2;
                if rho_t > four {
                    let r = ((rho_t - four) * (rho_t - two) * rho_inf
                        / ((rho_inf - four) * (rho_inf - two) * rho_t))
                        .sqrt();
                    Some(Some(r))
                } else {
                    Some(None)
                }
            }
        };

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (j, &gj) in g.data().iter().enumerate() {
                if c.weight_decay != S::zero() {
                    pd[j] -= lr * c.weight_decay * pd[j];
                }
                md[j] = c.beta1 * md[j] + (one - c.beta1) * gj;
                vd[j] = c.beta2 * vd[j] + (one - c.beta2) * gj * gj;
                let m_hat = md[j] / bias1;
                let update = match rect {
                    None => m_hat / ((vd[j] / bias2).sqrt() + c.eps),
                    Some(Some(r)) => r * m_hat * bias2.sqrt() / (vd[j].sqrt() + c.eps),
                    Some(None) => m_hat,
                };
                pd[j] -= lr * update;
            }
        }
        Ok(())
    }
}
