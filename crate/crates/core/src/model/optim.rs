//! Adam and the staged learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64, cfg: &AdamConfig) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::SizeMismatch(format!(
                "adam state of {} for {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c = |x: f64| T::from_f64(x).unwrap();
        let (b1, b2) = (c(cfg.beta1), c(cfg.beta2));
        let (one_b1, one_b2) = (c(1.0 - cfg.beta1), c(1.0 - cfg.beta2));
        let bc1 = c(1.0 - cfg.beta1.powi(t));
        let bc2 = c(1.0 - cfg.beta2.powi(t));
        let lr = c(lr);
        let eps = c(cfg.epsilon);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Piecewise-constant schedule: `base_lr` until the first breakpoint, then
/// `base_lr * factors[i]` after breakpoint `i`. Breakpoints are fractions of
/// `total_epochs`; a breakpoint lands on the first epoch at or past
/// `fraction * total_epochs`.
pub fn staged_lr(
    epoch: usize,
    total_epochs: usize,
    base_lr: f64,
    breakpoints: &[f64],
    factors: &[f64],
) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside [0, {total_epochs})"
        )));
    }
    if breakpoints.len() != factors.len() {
        return Err(Error::InvalidArgument(
            "schedule needs one factor per breakpoint".into(),
        ));
    }
    let mut lr = base_lr;
    for (&frac, &factor) in breakpoints.iter().zip(factors) {
        let boundary = (frac * total_epochs as f64 - 1e-9).ceil();
        if epoch as f64 >= boundary {
            lr = base_lr * factor;
        }
    }
    Ok(lr)
}

/// Halve after 3/7 of training, quarter after 4/7 (300/400 of 700 epochs).
pub fn lr_schedule(epoch: usize, total_epochs: usize, base_lr: f64) -> Result<f64> {
    staged_lr(epoch, total_epochs, base_lr, &[3.0 / 7.0, 4.0 / 7.0], &[0.5, 0.25])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut state = AdamState::<f64>::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [0.3, -40.0, 1e-3];
        state.step(&mut p, &g, 0.01, &AdamConfig::default()).unwrap();
        let deltas = [p[0] - 1.0, p[1] + 2.0, p[2] - 0.5];
        for (d, g) in deltas.iter().zip(g) {
            assert!((d.abs() - 0.01).abs() < 1e-6, "{d}");
            assert_eq!(d.signum(), -g.signum());
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut state = AdamState::<f64>::new(2);
        let mut p = vec![0.25, -1.5];
        for _ in 0..50 {
            state.step(&mut p, &[0.0, 0.0], 0.1, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, vec![0.25, -1.5]);
    }

    #[test]
    fn default_schedule_values() {
        assert_eq!(lr_schedule(0, 700, 1e-5).unwrap(), 1e-5);
        assert_eq!(lr_schedule(299, 700, 1e-5).unwrap(), 1e-5);
        assert_eq!(lr_schedule(300, 700, 1e-5).unwrap(), 5e-6);
        assert_eq!(lr_schedule(350, 700, 1e-5).unwrap(), 5e-6);
        assert_eq!(lr_schedule(400, 700, 1e-5).unwrap(), 2.5e-6);
        assert_eq!(lr_schedule(699, 700, 1e-5).unwrap(), 2.5e-6);
        assert!(lr_schedule(700, 700, 1e-5).is_err());
    }

    #[test]
    fn desk_scale_breakpoint() {
        assert_eq!(lr_schedule(29, 70, 1e-3).unwrap(), 1e-3);
        assert_eq!(lr_schedule(30, 70, 1e-3).unwrap(), 5e-4);
        assert_eq!(lr_schedule(40, 70, 1e-3).unwrap(), 2.5e-4);
    }

    #[test]
    fn schedule_never_increases() {
        for total in 1..200 {
            let mut prev = f64::INFINITY;
            for e in 0..total {
                let lr = lr_schedule(e, total, 1.0).unwrap();
                assert!(lr <= prev);
                prev = lr;
            }
        }
    }
}
