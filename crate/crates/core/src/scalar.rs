//! Scalar abstractions shared by every numeric kernel in the crate.
//!
//! Two traits live here:
//!
//! * [`Real`] is the floating-point dtype every computation is generic over
//!   (`f32` or `f64`).
//! * [`Scalar`] is the algebra of values that flow through model evaluation.
//!   It is implemented by plain reals, by reverse-mode tape variables, and by
//!   truncated Taylor jets of either, so a surrogate or residual written once
//!   against `Scalar` can be evaluated, differentiated in parameters, and
//!   differentiated in its inputs without separate code paths.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point dtype (`f32` or `f64`) used throughout the engine.
pub trait Real: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Draw from the standard normal distribution.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw from the uniform distribution on `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// `ln(1 + e^x)` computed without overflow for large `|x|`.
    fn softplus_stable(self) -> Self;

    /// Logistic sigmoid computed without overflow for large `|x|`.
    fn sigmoid_stable(self) -> Self;

    /// Convert an `f64` literal; panics only if the dtype cannot represent
    /// any finite value of it, which never happens for `f32`/`f64`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal converts to Real")
    }

    /// Lossy widening to `f64` for reporting and serialization.
    fn to_f64_lossy(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.gen::<$t>()
            }

            fn softplus_stable(self) -> Self {
                if self > 30.0 {
                    // ln(1 + e^x) = x + ln(1 + e^-x); the correction underflows
                    // to a tiny, well-behaved number instead of e^x overflowing.
                    self + (-self).exp().ln_1p()
                } else {
                    self.exp().ln_1p()
                }
            }

            fn sigmoid_stable(self) -> Self {
                if self >= 0.0 {
                    1.0 / (1.0 + (-self).exp())
                } else {
                    let e = self.exp();
                    e / (1.0 + e)
                }
            }

            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// A value flowing through model evaluation: a plain real, a reverse-mode
/// tape variable, or a truncated Taylor jet of either.
///
/// The right-hand-side [`Scalar::R`] operator bounds let generic code mix
/// constants in without materializing them in the differentiated structure
/// (a constant has no adjoint and no derivative coefficients).
pub trait Scalar:
    Copy
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Add<<Self as Scalar>::R, Output = Self>
    + Sub<<Self as Scalar>::R, Output = Self>
    + Mul<<Self as Scalar>::R, Output = Self>
    + Div<<Self as Scalar>::R, Output = Self>
{
    /// Underlying floating-point dtype.
    type R: Real;

    /// Primal (undifferentiated) value.
    fn value(&self) -> Self::R;

    /// A constant with value `c` in the same evaluation context as `self`
    /// (for tape variables this records a constant node on the same tape).
    fn lift(&self, c: Self::R) -> Self;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn softplus(self) -> Self;
    /// `max(self, 0)`, with derivative taken as 0 at the kink.
    fn relu(self) -> Self;

    /// `c - self` without a standalone constant.
    fn rsub(self, c: Self::R) -> Self {
        -(self - c)
    }

    /// Square, spelled out for readability in derivative formulas.
    fn sq(self) -> Self {
        self * self
    }
}

impl<F: Real> Scalar for F {
    type R = F;

    fn value(&self) -> F {
        *self
    }

    fn lift(&self, c: F) -> F {
        c
    }

    fn sin(self) -> F {
        Float::sin(self)
    }

    fn cos(self) -> F {
        Float::cos(self)
    }

    fn tanh(self) -> F {
        Float::tanh(self)
    }

    fn exp(self) -> F {
        Float::exp(self)
    }

    fn ln(self) -> F {
        Float::ln(self)
    }

    fn sqrt(self) -> F {
        Float::sqrt(self)
    }

    fn powi(self, n: i32) -> F {
        Float::powi(self, n)
    }

    fn softplus(self) -> F {
        self.softplus_stable()
    }

    fn relu(self) -> F {
        if self > F::zero() {
            self
        } else {
            F::zero()
        }
    }
}
