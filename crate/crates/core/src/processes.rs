//! Parameter treatments and process bindings.
//!
//! A [`Process`] pairs a surrogate with a [`VariableSpec`] describing how its
//! parameters are treated during inference: drawn from a prior and sampled
//! ([`VariableSpec::Samplable`]), fitted with a diagonal-Gaussian variational
//! family ([`VariableSpec::Variational`]), or point-estimated by an optimizer
//! ([`VariableSpec::Trainable`]).
//!
//! Priors expose both an exact log density (with an explicit `-inf` sentinel
//! outside their support) and a smooth in-support form that can be evaluated
//! over any [`Scalar`] to participate in gradient computations.

use num_traits::Float;
use rand::Rng;
use thiserror::Error;

use crate::scalar::{Real, Scalar};
use crate::surrogates::Surrogate;

/// Errors raised by parameter-treatment operations.
#[derive(Debug, Error)]
pub enum ProcessError {
    /// An operation was called on a treatment family that does not support
    /// it (for example, a prior density of a trainable variable).
    #[error("operation `{operation}` is not defined for the {family} family")]
    FamilyMismatch {
        operation: &'static str,
        family: &'static str,
    },
    /// A parameter vector length is incompatible with its surrogate or
    /// treatment.
    #[error("{context}: expected length {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// A distribution or treatment descriptor is itself invalid.
    #[error("invalid variable spec: {0}")]
    InvalidSpec(String),
}

/// Independent per-parameter prior distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prior {
    /// Normal with the given mean and standard deviation.
    Normal { mean: f64, std: f64 },
    /// Half-normal on `[0, ∞)` with the given scale.
    HalfNormal { std: f64 },
    /// Log-normal on `(0, ∞)`: `ln θ` is normal with the given mean and
    /// standard deviation.
    LogNormal { mean: f64, std: f64 },
}

/// Standard normal density constant `ln(2π)/2`.
fn half_ln_two_pi() -> f64 {
    0.5 * (2.0 * std::f64::consts::PI).ln()
}

impl Prior {
    /// Standard normal prior, the default treatment for sampled parameters.
    pub fn standard_normal() -> Self {
        Prior::Normal {
            mean: 0.0,
            std: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        let std = match *self {
            Prior::Normal { std, .. } | Prior::HalfNormal { std } | Prior::LogNormal { std, .. } => {
                std
            }
        };
        if !(std > 0.0 && std.is_finite()) {
            return Err(ProcessError::InvalidSpec(format!(
                "prior standard deviation must be positive and finite, got {std}"
            )));
        }
        Ok(())
    }

    /// Whether a value lies in the distribution's support.
    pub fn in_support<F: Real>(&self, theta: F) -> bool {
        match self {
            Prior::Normal { .. } => true,
            Prior::HalfNormal { .. } => theta >= F::zero(),
            Prior::LogNormal { .. } => theta > F::zero(),
        }
    }

    /// Exact log density of one component, `-inf` outside the support.
    pub fn log_density_one<F: Real>(&self, theta: F) -> F {
        if !self.in_support(theta) {
            return F::neg_infinity();
        }
        match *self {
            Prior::Normal { mean, std } => {
                let z = (theta - F::of(mean)) / F::of(std);
                F::of(-half_ln_two_pi() - std.ln()) - z * z * F::of(0.5)
            }
            Prior::HalfNormal { std } => {
                let z = theta / F::of(std);
                F::of(std::f64::consts::LN_2 - half_ln_two_pi() - std.ln()) - z * z * F::of(0.5)
            }
            Prior::LogNormal { mean, std } => {
                let lt = theta.ln();
                let z = (lt - F::of(mean)) / F::of(std);
                F::of(-half_ln_two_pi() - std.ln()) - lt - z * z * F::of(0.5)
            }
        }
    }

    /// Exact joint log density of an independent vector, `-inf` if any
    /// component leaves the support.
    pub fn log_density<F: Real>(&self, theta: &[F]) -> F {
        let mut acc = F::zero();
        for &t in theta {
            if !self.in_support(t) {
                return F::neg_infinity();
            }
            acc = acc + self.log_density_one(t);
        }
        acc
    }

    /// Smooth in-support log density of one component, evaluated over any
    /// scalar so it can be recorded on a tape. The caller must have checked
    /// the support; outside it the result is meaningless (or non-finite).
    pub fn log_density_smooth<S: Scalar>(&self, theta: S) -> S {
        match *self {
            Prior::Normal { mean, std } => {
                let z = (theta - S::R::of(mean)) / S::R::of(std);
                z.sq().rsub(S::R::of(-2.0 * (half_ln_two_pi() + std.ln()))) * S::R::of(0.5)
            }
            Prior::HalfNormal { std } => {
                let z = theta / S::R::of(std);
                let c = 2.0 * (std::f64::consts::LN_2 - half_ln_two_pi() - std.ln());
                z.sq().rsub(S::R::of(c)) * S::R::of(0.5)
            }
            Prior::LogNormal { mean, std } => {
                let lt = theta.ln();
                let z = (lt - S::R::of(mean)) / S::R::of(std);
                (z.sq() * S::R::of(0.5) + lt).rsub(S::R::of(-half_ln_two_pi() - std.ln()))
            }
        }
    }

    /// Smooth in-support joint log density of an independent vector.
    pub fn log_density_smooth_vec<S: Scalar>(&self, theta: &[S]) -> S {
        let mut acc = self.log_density_smooth(theta[0]);
        for &t in &theta[1..] {
            acc = acc + self.log_density_smooth(t);
        }
        acc
    }

    /// Draw one value.
    pub fn sample<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> F {
        match *self {
            Prior::Normal { mean, std } => F::of(mean) + F::std_normal(rng) * F::of(std),
            Prior::HalfNormal { std } => F::std_normal(rng).abs() * F::of(std),
            Prior::LogNormal { mean, std } => {
                (F::of(mean) + F::std_normal(rng) * F::of(std)).exp()
            }
        }
    }
}

/// Diagonal-Gaussian variational state: mean `m` and raw scales `ρ`, with
/// the standard deviation recovered as `softplus(ρ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalParams {
    pub mean: Vec<f64>,
    pub rho: Vec<f64>,
}

impl VariationalParams {
    /// Initialize at the given mean with every standard deviation equal to
    /// `std` (stored through the inverse softplus).
    pub fn new(mean: Vec<f64>, std: f64) -> Result<Self, ProcessError> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(ProcessError::InvalidSpec(format!(
                "variational standard deviation must be positive and finite, got {std}"
            )));
        }
        // softplus(ρ) = std  ⇒  ρ = ln(e^std − 1)
        let rho = std.exp_m1().ln();
        let n = mean.len();
        Ok(VariationalParams {
            mean,
            rho: vec![rho; n],
        })
    }

    pub fn from_raw(mean: Vec<f64>, rho: Vec<f64>) -> Result<Self, ProcessError> {
        if mean.len() != rho.len() {
            return Err(ProcessError::DimensionMismatch {
                context: "variational raw scales",
                expected: mean.len(),
                got: rho.len(),
            });
        }
        Ok(VariationalParams { mean, rho })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Per-component standard deviations `softplus(ρ)`.
    pub fn stds(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| f64::softplus_stable(r)).collect()
    }

    /// Reparameterized draw `m + softplus(ρ) ⊙ noise`.
    pub fn sample(&self, noise: &[f64]) -> Result<Vec<f64>, ProcessError> {
        if noise.len() != self.len() {
            return Err(ProcessError::DimensionMismatch {
                context: "variational noise vector",
                expected: self.len(),
                got: noise.len(),
            });
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.rho)
            .zip(noise)
            .map(|((&m, &r), &n)| m + f64::softplus_stable(r) * n)
            .collect())
    }

    /// Exact log density of the diagonal Gaussian `N(m, softplus(ρ)²)`.
    pub fn log_density(&self, theta: &[f64]) -> Result<f64, ProcessError> {
        if theta.len() != self.len() {
            return Err(ProcessError::DimensionMismatch {
                context: "variational density argument",
                expected: self.len(),
                got: theta.len(),
            });
        }
        let mut acc = 0.0;
        for ((&m, &r), &t) in self.mean.iter().zip(&self.rho).zip(theta) {
            let std = f64::softplus_stable(r);
            let z = (t - m) / std;
            acc += -half_ln_two_pi() - std.ln() - 0.5 * z * z;
        }
        Ok(acc)
    }
}

/// Reparameterized draw `m + softplus(ρ) ⊙ noise` over any scalar, so the
/// draw stays differentiable in `m` and `ρ` on a tape.
pub fn reparameterize<S: Scalar>(mean: &[S], rho: &[S], noise: &[S::R]) -> Vec<S> {
    mean.iter()
        .zip(rho)
        .zip(noise)
        .map(|((&m, &r), &n)| m + r.softplus() * n)
        .collect()
}

/// Analytic KL divergence from the diagonal Gaussian `N(m, softplus(ρ)²)` to
/// the independent per-component prior `N(prior_mean, prior_std²)`, over any
/// scalar so it can join a tape-recorded objective.
pub fn gaussian_kl<S: Scalar>(mean: &[S], rho: &[S], prior_mean: S::R, prior_std: S::R) -> S {
    let ln_sp = Float::ln(prior_std);
    let inv_two_var = S::R::of(0.5) / (prior_std * prior_std);
    let mut acc: Option<S> = None;
    for (&m, &r) in mean.iter().zip(rho) {
        let sq = r.softplus();
        let dm = m - prior_mean;
        let term = (sq.ln().rsub(ln_sp)) + (sq.sq() + dm.sq()) * inv_two_var - S::R::of(0.5);
        acc = Some(match acc {
            None => term,
            Some(a) => a + term,
        });
    }
    acc.expect("KL of an empty parameter vector")
}

/// How a surrogate's parameters are treated during inference.
#[derive(Clone, Debug, PartialEq)]
pub enum VariableSpec {
    /// Parameters carry a prior and are drawn by a sampler.
    Samplable { prior: Prior },
    /// Parameters carry a prior and a trained diagonal-Gaussian posterior
    /// approximation.
    Variational {
        prior: Prior,
        params: VariationalParams,
    },
    /// Parameters are point-estimated by an optimizer, with an optional L2
    /// penalty of weight `l2_weight` added to the loss.
    Trainable { l2_weight: f64 },
}

impl VariableSpec {
    /// Samplable with the default standard normal prior.
    pub fn samplable_standard() -> Self {
        VariableSpec::Samplable {
            prior: Prior::standard_normal(),
        }
    }

    /// Trainable with no regularization.
    pub fn trainable() -> Self {
        VariableSpec::Trainable { l2_weight: 0.0 }
    }

    pub fn family(&self) -> &'static str {
        match self {
            VariableSpec::Samplable { .. } => "samplable",
            VariableSpec::Variational { .. } => "variational",
            VariableSpec::Trainable { .. } => "trainable",
        }
    }

    pub fn validate(&self, param_count: usize) -> Result<(), ProcessError> {
        match self {
            VariableSpec::Samplable { prior } => prior.validate(),
            VariableSpec::Variational { prior, params } => {
                prior.validate()?;
                if params.len() != param_count {
                    return Err(ProcessError::DimensionMismatch {
                        context: "variational parameter vectors",
                        expected: param_count,
                        got: params.len(),
                    });
                }
                Ok(())
            }
            VariableSpec::Trainable { l2_weight } => {
                if !(*l2_weight >= 0.0 && l2_weight.is_finite()) {
                    return Err(ProcessError::InvalidSpec(format!(
                        "L2 weight must be non-negative and finite, got {l2_weight}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn prior(&self) -> Option<&Prior> {
        match self {
            VariableSpec::Samplable { prior } | VariableSpec::Variational { prior, .. } => {
                Some(prior)
            }
            VariableSpec::Trainable { .. } => None,
        }
    }

    /// Exact joint log prior density; `-inf` outside the support.
    pub fn log_prior<F: Real>(&self, theta: &[F]) -> Result<F, ProcessError> {
        match self.prior() {
            Some(prior) => Ok(prior.log_density(theta)),
            None => Err(ProcessError::FamilyMismatch {
                operation: "log_prior",
                family: self.family(),
            }),
        }
    }

    /// Reparameterized draw from the variational family.
    pub fn variational_sample(&self, noise: &[f64]) -> Result<Vec<f64>, ProcessError> {
        match self {
            VariableSpec::Variational { params, .. } => params.sample(noise),
            other => Err(ProcessError::FamilyMismatch {
                operation: "variational_sample",
                family: other.family(),
            }),
        }
    }

    /// Analytic KL from the variational family to its prior; defined only
    /// when both are diagonal Gaussian.
    pub fn kl_to_prior(&self) -> Result<f64, ProcessError> {
        match self {
            VariableSpec::Variational {
                prior: Prior::Normal { mean, std },
                params,
            } => Ok(gaussian_kl(&params.mean, &params.rho, *mean, *std)),
            VariableSpec::Variational { .. } => Err(ProcessError::FamilyMismatch {
                operation: "kl_to_prior (non-Gaussian prior)",
                family: self.family(),
            }),
            other => Err(ProcessError::FamilyMismatch {
                operation: "kl_to_prior",
                family: other.family(),
            }),
        }
    }
}

/// A named surrogate bound to a parameter treatment.
#[derive(Clone, Debug)]
pub struct Process {
    key: String,
    surrogate: Surrogate,
    variable: VariableSpec,
}

impl Process {
    pub fn new(
        key: impl Into<String>,
        surrogate: Surrogate,
        variable: VariableSpec,
    ) -> Result<Self, ProcessError> {
        let key = key.into();
        if key.is_empty() {
            return Err(ProcessError::InvalidSpec(
                "process key must be non-empty".to_string(),
            ));
        }
        variable.validate(surrogate.param_count())?;
        Ok(Process {
            key,
            surrogate,
            variable,
        })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn surrogate(&self) -> &Surrogate {
        &self.surrogate
    }

    pub fn variable(&self) -> &VariableSpec {
        &self.variable
    }

    pub fn param_count(&self) -> usize {
        self.surrogate.param_count()
    }
}
