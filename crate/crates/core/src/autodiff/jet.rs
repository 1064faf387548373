//! Truncated Taylor jets: forward propagation of input derivatives.
//!
//! A [`Jet`] carries the raw derivatives `[f, f', f'', f''']` of a quantity
//! with respect to one scalar direction, truncated to `K - 1 <= 3` orders.
//! Coefficients are plain derivatives, not Taylor-scaled `f^(k)/k!`, so
//! clients read `coeffs[k]` as the k-th derivative directly.
//!
//! The coefficient type is any [`Scalar`]: jets of plain reals give input
//! derivatives of a function, while jets of tape variables unroll the whole
//! propagation onto the reverse-mode tape, which is how parameter gradients
//! of derivative-using losses (PDE residuals) are obtained — reverse mode
//! over the forward jet computation.

use num_traits::{One, Zero};

use super::AdError;
use crate::scalar::{Real, Scalar};

/// Binomial coefficients C(k, j) for k <= 3, used by the Leibniz rules.
const BINOM: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0],
    [1.0, 3.0, 3.0, 1.0],
];

/// Raw-derivative jet of length `K` (derivative order `K - 1`).
#[derive(Clone, Copy, Debug)]
pub struct Jet<S, const K: usize> {
    /// `c[k]` is the k-th raw derivative along the seeded direction.
    pub c: [S; K],
}

impl<S: Scalar, const K: usize> Jet<S, K> {
    /// A quantity with no dependence on the seeded direction.
    pub fn constant(s: S) -> Self {
        const { assert!(K >= 1 && K <= 4) };
        let zero = s.lift(S::R::zero());
        let mut c = [zero; K];
        c[0] = s;
        Jet { c }
    }

    /// The seeded direction itself: value `s`, first derivative `slope`.
    pub fn variable(s: S, slope: S::R) -> Self {
        const { assert!(K >= 1 && K <= 4) };
        let zero = s.lift(S::R::zero());
        let mut c = [zero; K];
        c[0] = s;
        if K > 1 {
            c[1] = s.lift(slope);
        }
        Jet { c }
    }
}

fn scaled<S: Scalar>(term: S, coef: f64) -> S {
    if coef == 1.0 {
        term
    } else {
        term * S::R::of(coef)
    }
}

/// Chain rule for a univariate primitive: `d[j]` holds the j-th derivative of
/// the primitive evaluated at the jet's value. Raw-derivative Faa di Bruno
/// up to order 3.
fn compose<S: Scalar, const K: usize>(u: &Jet<S, K>, d: &[S]) -> Jet<S, K> {
    let uc: &[S] = &u.c;
    let mut out = u.c;
    out[0] = d[0];
    for k in 1..K {
        out[k] = match k {
            1 => d[1] * uc[1],
            2 => d[1] * uc[2] + d[2] * uc[1].sq(),
            3 => {
                d[1] * uc[3]
                    + scaled(d[2] * uc[1] * uc[2], 3.0)
                    + d[3] * uc[1] * uc[1] * uc[1]
            }
            _ => unreachable!("jet order above 3 is rejected at construction"),
        };
    }
    Jet { c: out }
}

/// Derivative table for a primitive, truncated to the jet's length.
fn table<S: Scalar, const K: usize>(f: impl Fn(usize) -> S) -> [S; K] {
    std::array::from_fn(f)
}

impl<S: Scalar, const K: usize> std::ops::Add for Jet<S, K> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut c = self.c;
        for k in 0..K {
            c[k] = self.c[k] + rhs.c[k];
        }
        Jet { c }
    }
}

impl<S: Scalar, const K: usize> std::ops::Sub for Jet<S, K> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut c = self.c;
        for k in 0..K {
            c[k] = self.c[k] - rhs.c[k];
        }
        Jet { c }
    }
}

impl<S: Scalar, const K: usize> std::ops::Neg for Jet<S, K> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut c = self.c;
        for k in 0..K {
            c[k] = -self.c[k];
        }
        Jet { c }
    }
}

impl<S: Scalar, const K: usize> std::ops::Mul for Jet<S, K> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        // Leibniz: (fg)^(k) = sum_j C(k,j) f^(j) g^(k-j).
        let mut c = self.c;
        for k in 0..K {
            let mut acc = self.c[0] * rhs.c[k];
            for j in 1..=k {
                acc = acc + scaled(self.c[j] * rhs.c[k - j], BINOM[k][j]);
            }
            c[k] = acc;
        }
        Jet { c }
    }
}

impl<S: Scalar, const K: usize> std::ops::Div for Jet<S, K> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        // Solve y * rhs = self coefficient by coefficient:
        // y_k = (a_k - sum_{j<k} C(k,j) y_j b_{k-j}) / b_0.
        let mut y = self.c;
        y[0] = self.c[0] / rhs.c[0];
        for k in 1..K {
            let mut acc = self.c[k];
            for j in 0..k {
                acc = acc - scaled(y[j] * rhs.c[k - j], BINOM[k][j]);
            }
            y[k] = acc / rhs.c[0];
        }
        Jet { c: y }
    }
}

impl<F: Real, S: Scalar<R = F>, const K: usize> std::ops::Add<F> for Jet<S, K> {
    type Output = Self;
    fn add(self, c: F) -> Self {
        let mut out = self.c;
        out[0] = self.c[0] + c;
        Jet { c: out }
    }
}

impl<F: Real, S: Scalar<R = F>, const K: usize> std::ops::Sub<F> for Jet<S, K> {
    type Output = Self;
    fn sub(self, c: F) -> Self {
        let mut out = self.c;
        out[0] = self.c[0] - c;
        Jet { c: out }
    }
}

impl<F: Real, S: Scalar<R = F>, const K: usize> std::ops::Mul<F> for Jet<S, K> {
    type Output = Self;
    fn mul(self, c: F) -> Self {
        let mut out = self.c;
        for k in 0..K {
            out[k] = self.c[k] * c;
        }
        Jet { c: out }
    }
}

impl<F: Real, S: Scalar<R = F>, const K: usize> std::ops::Div<F> for Jet<S, K> {
    type Output = Self;
    fn div(self, c: F) -> Self {
        let mut out = self.c;
        for k in 0..K {
            out[k] = self.c[k] / c;
        }
        Jet { c: out }
    }
}

impl<S: Scalar, const K: usize> Scalar for Jet<S, K> {
    type R = S::R;

    fn value(&self) -> S::R {
        self.c[0].value()
    }

    fn lift(&self, c: S::R) -> Self {
        Jet::constant(self.c[0].lift(c))
    }

    fn sin(self) -> Self {
        let s = self.c[0].sin();
        let co = self.c[0].cos();
        let d = table::<S, K>(|k| match k {
            0 => s,
            1 => co,
            2 => -s,
            _ => -co,
        });
        compose(&self, &d)
    }

    fn cos(self) -> Self {
        let s = self.c[0].sin();
        let co = self.c[0].cos();
        let d = table::<S, K>(|k| match k {
            0 => co,
            1 => -s,
            2 => -co,
            _ => s,
        });
        compose(&self, &d)
    }

    fn tanh(self) -> Self {
        let t = self.c[0].tanh();
        let one_m_t2 = t.sq().rsub(S::R::one());
        let d = table::<S, K>(|k| match k {
            0 => t,
            1 => one_m_t2,
            2 => one_m_t2 * t * S::R::of(-2.0),
            // -2 (1 - t^2)(1 - 3 t^2)
            _ => one_m_t2 * (t.sq() * S::R::of(3.0)).rsub(S::R::one()) * S::R::of(-2.0),
        });
        compose(&self, &d)
    }

    fn exp(self) -> Self {
        let e = self.c[0].exp();
        let d = table::<S, K>(|_| e);
        compose(&self, &d)
    }

    fn ln(self) -> Self {
        let d = table::<S, K>(|k| match k {
            0 => self.c[0].ln(),
            1 => self.c[0].powi(-1),
            2 => -self.c[0].powi(-2),
            _ => self.c[0].powi(-3) * S::R::of(2.0),
        });
        compose(&self, &d)
    }

    fn sqrt(self) -> Self {
        let s = self.c[0].sqrt();
        let d = table::<S, K>(|k| match k {
            0 => s,
            1 => (s * S::R::of(2.0)).powi(-1),
            2 => -(s.powi(3) * S::R::of(4.0)).powi(-1),
            _ => (s.powi(5) * S::R::of(8.0)).powi(-1) * S::R::of(3.0),
        });
        compose(&self, &d)
    }

    fn powi(self, n: i32) -> Self {
        let zero = self.c[0].lift(S::R::zero());
        let d = table::<S, K>(|k| {
            // Falling factorial n (n-1) ... (n-k+1); once it hits zero the
            // derivative is identically zero and u^(n-k) must not be touched
            // (it could be a negative power of zero).
            let mut fall = 1i64;
            for j in 0..k {
                fall *= i64::from(n) - j as i64;
            }
            if fall == 0 {
                zero
            } else {
                scaled(self.c[0].powi(n - k as i32), fall as f64)
            }
        });
        compose(&self, &d)
    }

    fn softplus(self) -> Self {
        // Sigma via tanh keeps every intermediate bounded.
        let sig = (self.c[0] * S::R::of(0.5)).tanh() * S::R::of(0.5) + S::R::of(0.5);
        let d = table::<S, K>(|k| match k {
            0 => self.c[0].softplus(),
            1 => sig,
            2 => sig * sig.rsub(S::R::one()),
            _ => sig * sig.rsub(S::R::one()) * (sig * S::R::of(2.0)).rsub(S::R::one()),
        });
        compose(&self, &d)
    }

    fn relu(self) -> Self {
        let gate = if self.c[0].value() > S::R::zero() {
            S::R::one()
        } else {
            S::R::zero()
        };
        self * gate
    }
}

/// Derivatives of a scalar function of one variable at `at`, up to `order`.
///
/// Returns `[f, f', .., f^(order)]` as raw derivatives. `order` must be at
/// most 3.
pub fn jet_eval<F, G>(at: F, order: usize, f: G) -> Result<Vec<F>, AdError>
where
    F: Real,
    G: Fn(Jet<F, 4>) -> Jet<F, 4>,
{
    if order > 3 {
        return Err(AdError::OrderTooHigh { order });
    }
    let out = f(Jet::variable(at, F::one()));
    let coeffs: Vec<F> = out.c[..=order].to_vec();
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(AdError::NonFiniteValue);
    }
    Ok(coeffs)
}
