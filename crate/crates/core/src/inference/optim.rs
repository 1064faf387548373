//! First-order optimization shared by the variational and trained methods.

use num_traits::Float;

use crate::scalar::Real;

/// Adaptive moment estimation with bias correction,
/// betas (0.9, 0.999) and epsilon 1e-8.
pub struct Adam<F> {
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
    beta1: F,
    beta2: F,
    eps: F,
}

impl<F: Real> Adam<F> {
    pub fn new(dim: usize) -> Self {
        Adam {
            m: vec![F::zero(); dim],
            v: vec![F::zero(); dim],
            t: 0,
            beta1: F::of(0.9),
            beta2: F::of(0.999),
            eps: F::of(1e-8),
        }
    }

    /// One descent step on `theta` along `grad` with learning rate `lr`.
    pub fn step(&mut self, theta: &mut [F], grad: &[F], lr: F) {
        debug_assert_eq!(theta.len(), self.m.len());
        debug_assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let one = F::one();
        let bc1 = one - Float::powi(self.beta1, self.t);
        let bc2 = one - Float::powi(self.beta2, self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] = theta[i] - lr * m_hat / (Float::sqrt(v_hat) + self.eps);
        }
    }
}

/// Exponentially decaying rate: `lr0` at step 0 shrinking to `lr0 / 100`
/// at the final step.
pub fn exp_decay_lr(lr0: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return lr0;
    }
    let frac = step as f64 / (total - 1) as f64;
    lr0 * 10f64.powf(-2.0 * frac)
}

/// Cyclic cosine rate: within each cycle of `cycle_len` steps the rate
/// falls from `lr0` toward exactly zero at the cycle end, then restarts.
/// `step` counts from 0; the rate at in-cycle position `t` (1-based) is
/// `lr0/2 * (1 + cos(pi * t / cycle_len))`.
pub fn cyclic_cosine_lr(lr0: f64, step: usize, cycle_len: usize) -> f64 {
    let in_cycle = (step % cycle_len) + 1;
    lr0 / 2.0 * (1.0 + (std::f64::consts::PI * in_cycle as f64 / cycle_len as f64).cos())
}
