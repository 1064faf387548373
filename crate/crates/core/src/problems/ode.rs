//! Fixed-step Runge–Kutta integration and the chaotic three-state
//! reference system used by the catalog.

use crate::scalar::Real;

use super::ProblemError;

/// A solved initial-value problem: the state at every accepted step,
/// including the initial condition.
#[derive(Clone, Debug)]
pub struct Trajectory<F> {
    pub times: Vec<F>,
    pub states: Vec<Vec<F>>,
}

impl<F: Real> Trajectory<F> {
    /// Linear interpolation of the trajectory at `t`, clamped to the
    /// solved span.
    pub fn interpolate(&self, t: F) -> Vec<F> {
        let first = self.times[0];
        let last = *self.times.last().expect("trajectories are never empty");
        if t <= first {
            return self.states[0].clone();
        }
        if t >= last {
            return self.states[self.states.len() - 1].clone();
        }
        // Uniform steps: locate the bracketing interval directly.
        let h = self.times[1] - first;
        let idx = ((t - first) / h).floor().to_f64_lossy() as usize;
        let idx = idx.min(self.times.len() - 2);
        let w = (t - self.times[idx]) / (self.times[idx + 1] - self.times[idx]);
        self.states[idx]
            .iter()
            .zip(&self.states[idx + 1])
            .map(|(&a, &b)| a + (b - a) * w)
            .collect()
    }
}

/// Classic fourth-order Runge–Kutta with a fixed step. The nominal `dt` is
/// adjusted to the nearest value that divides the span into whole steps, so
/// the final state lands exactly on `t_span.1`.
pub fn rk4_solve<F: Real>(
    rhs: impl Fn(F, &[F]) -> Vec<F>,
    y0: &[F],
    t_span: (F, F),
    dt: F,
) -> Result<Trajectory<F>, ProblemError> {
    let (t0, t1) = t_span;
    if !(dt > F::zero() && dt.is_finite()) || !(t1 > t0) {
        return Err(ProblemError::InvalidSpan);
    }
    let span = t1 - t0;
    let n_steps = (span / dt).to_f64_lossy().round().max(1.0) as usize;
    let h = span / F::of(n_steps as f64);
    let half = F::of(0.5);
    let sixth = F::of(1.0 / 6.0);
    let two = F::of(2.0);

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut y = y0.to_vec();
    times.push(t0);
    states.push(y.clone());
    for step in 0..n_steps {
        let t = t0 + h * F::of(step as f64);
        let k1 = rhs(t, &y);
        let y2: Vec<F> = y.iter().zip(&k1).map(|(&yi, &k)| yi + half * h * k).collect();
        let k2 = rhs(t + half * h, &y2);
        let y3: Vec<F> = y.iter().zip(&k2).map(|(&yi, &k)| yi + half * h * k).collect();
        let k3 = rhs(t + half * h, &y3);
        let y4: Vec<F> = y.iter().zip(&k3).map(|(&yi, &k)| yi + h * k).collect();
        let k4 = rhs(t + h, &y4);
        for i in 0..y.len() {
            y[i] = y[i] + h * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFiniteState { step });
        }
        // Pin the final node to the exact span end rather than the
        // accumulated product, which can be off by an ulp.
        let t_next = if step + 1 == n_steps {
            t1
        } else {
            t0 + h * F::of((step + 1) as f64)
        };
        times.push(t_next);
        states.push(y.clone());
    }
    Ok(Trajectory { times, states })
}

/// Right-hand side of the three-state quadratic system
/// `x1' = a x2 x3`, `x2' = b x1 x3`, `x3' = -(a+b) x1 x2`.
pub fn ko_rhs<F: Real>(a: F, b: F) -> impl Fn(F, &[F]) -> Vec<F> {
    move |_t, y| {
        vec![
            a * y[1] * y[2],
            b * y[0] * y[2],
            -(a + b) * y[0] * y[1],
        ]
    }
}

/// Reference trajectory of the three-state system at the catalog's fixed
/// resolution `dt = 1e-3`.
pub fn ko_reference<F: Real>(
    a: F,
    b: F,
    y0: [F; 3],
    t_span: (F, F),
) -> Result<Trajectory<F>, ProblemError> {
    rk4_solve(ko_rhs(a, b), &y0, t_span, F::of(1e-3))
}
