use crate::error::{NumError, Result};
use crate::scalar::Scalar;

/// One-cycle learning rate with cosine warmup and cosine annealing.
///
/// The rate rises from `peak_lr / initial_div` at step 0 to `peak_lr` at step
/// `ceil(warmup_ratio · total_steps)`, then falls to `peak_lr / final_div` at
/// `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneCycleSchedule<S> {
    pub peak_lr: S,
    pub total_steps: usize,
    pub warmup_ratio: S,
    pub initial_div: S,
    pub final_div: S,
}

impl<S: Scalar> OneCycleSchedule<S> {
    pub fn new(peak_lr: S, total_steps: usize, warmup_ratio: S) -> Result<Self> {
        Self::with_divs(peak_lr, total_steps, warmup_ratio, S::lit(25.0), S::lit(1e4))
    }

    pub fn with_divs(peak_lr: S, total_steps: usize, warmup_ratio: S, initial_div: S, final_div: S) -> Result<Self> {
        if !(warmup_ratio > S::zero() && warmup_ratio < S::one()) {
            return Err(NumError::Range(format!("warmup_ratio {warmup_ratio} not in (0, 1)")));
        }
        if !(peak_lr > S::zero()) || !(initial_div >= S::one()) || !(final_div >= S::one()) {
            return Err(NumError::Range("peak_lr must be positive and divisors >= 1".into()));
        }
        let s = Self { peak_lr, total_steps, warmup_ratio, initial_div, final_div };
        if s.warmup_steps() >= total_steps {
            return Err(NumError::Range(format!(
                "total_steps {total_steps} leaves no annealing phase after {} warmup steps",
                s.warmup_steps()
            )));
        }
        Ok(s)
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_ratio * S::lit(self.total_steps as f64)).ceil().to_usize().unwrap_or(0)
    }

    pub fn lr(&self, step: usize) -> Result<S> {
        if step > self.total_steps {
            return Err(NumError::Range(format!("step {step} beyond {}", self.total_steps)));
        }
        let warm = self.warmup_steps();
        let pi = S::lit(std::f64::consts::PI);
        let half = S::lit(0.5);
        let cos_interp = |from: S, to: S, frac: S| to + (from - to) * half * (S::one() + (pi * frac).cos());
        Ok(if step <= warm {
            let start = self.peak_lr / self.initial_div;
            cos_interp(start, self.peak_lr, S::lit(step as f64) / S::lit(warm as f64))
        } else {
            let end = self.peak_lr / self.final_div;
            let frac = S::lit((step - warm) as f64) / S::lit((self.total_steps - warm) as f64);
            cos_interp(self.peak_lr, end, frac)
        })
    }
}
