//! Differential-equation residuals for the catalog problems, written
//! against the generic jet-request interface so they evaluate identically
//! on plain values and tape variables.

use crate::likelihoods::{JetRequest, JetView, ResidualRule};
use crate::scalar::{Real, Scalar};

/// Where a residual's reaction-rate coefficient comes from.
#[derive(Clone, Debug)]
pub enum ReactionRate {
    /// A known constant.
    Fixed(f64),
    /// The output of the named constant process (inferred).
    FromProcess(String),
}

/// Steady diffusion-reaction residual `D u'' - k u³`, compared against
/// source measurements.
#[derive(Clone, Debug)]
pub struct DiffusionReactionResidual {
    pub diffusion: f64,
    pub reaction: ReactionRate,
}

impl<F: Real> ResidualRule<F> for DiffusionReactionResidual {
    fn requests(&self) -> Vec<JetRequest> {
        let mut reqs = vec![JetRequest::new("u", 0, 2)];
        if let ReactionRate::FromProcess(key) = &self.reaction {
            reqs.push(JetRequest::value(key.clone()));
        }
        reqs
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn eval<S: Scalar<R = F>>(&self, _x: &[F], jets: &JetView<'_, S>) -> Vec<S> {
        let u = jets.value(0, 0);
        let uxx = jets.d(0, 0, 2);
        let cubic = u.sq() * u;
        let reaction = match &self.reaction {
            ReactionRate::Fixed(k) => cubic * F::of(*k),
            ReactionRate::FromProcess(_) => jets.value(1, 0) * cubic,
        };
        vec![uxx * F::of(self.diffusion) - reaction]
    }
}

/// Residual of the quadratically coupled three-state system
/// `x1' = a x2 x3`, `x2' = b x1 x3`, `x3' = -(a+b) x1 x2`, with the state
/// surrogate under key `u` and the unknown coefficients under `a` and `b`.
#[derive(Clone, Copy, Debug)]
pub struct KoSystemResidual;

impl<F: Real> ResidualRule<F> for KoSystemResidual {
    fn requests(&self) -> Vec<JetRequest> {
        vec![
            JetRequest::new("u", 0, 1),
            JetRequest::value("a"),
            JetRequest::value("b"),
        ]
    }

    fn output_dim(&self) -> usize {
        3
    }

    fn eval<S: Scalar<R = F>>(&self, _x: &[F], jets: &JetView<'_, S>) -> Vec<S> {
        let (x1, x2, x3) = (jets.value(0, 0), jets.value(0, 1), jets.value(0, 2));
        let (d1, d2, d3) = (jets.d(0, 0, 1), jets.d(0, 1, 1), jets.d(0, 2, 1));
        let a = jets.value(1, 0);
        let b = jets.value(2, 0);
        vec![
            d1 - a * x2 * x3,
            d2 - b * x1 * x3,
            d3 + a * x1 * x2 + b * x1 * x2,
        ]
    }
}

/// Korteweg–de Vries residual `u_t - λ1 u u_x - λ2 u_xxx` over inputs
/// `(x, t)`, with the wave-speed coefficients under `lambda_1`/`lambda_2`.
#[derive(Clone, Copy, Debug)]
pub struct KdvResidual;

impl<F: Real> ResidualRule<F> for KdvResidual {
    fn requests(&self) -> Vec<JetRequest> {
        vec![
            JetRequest::new("u", 0, 3),
            JetRequest::new("u", 1, 1),
            JetRequest::value("lambda_1"),
            JetRequest::value("lambda_2"),
        ]
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn eval<S: Scalar<R = F>>(&self, _x: &[F], jets: &JetView<'_, S>) -> Vec<S> {
        let u = jets.value(0, 0);
        let u_x = jets.d(0, 0, 1);
        let u_xxx = jets.d(0, 0, 3);
        let u_t = jets.d(1, 0, 1);
        let l1 = jets.value(2, 0);
        let l2 = jets.value(3, 0);
        vec![u_t - l1 * u * u_x - l2 * u_xxx]
    }
}
