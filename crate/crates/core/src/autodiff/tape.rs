//! Append-only scalar tape for reverse-mode differentiation.
//!
//! Recording is implicit: arithmetic on [`Var`] handles pushes one node per
//! operation, caching the local partial derivatives at record time. A single
//! backward sweep in reverse topological order (which is just reverse push
//! order) then accumulates adjoints. Tapes are rebuilt per evaluation; there
//! is no graph caching.

use std::cell::RefCell;

use num_traits::Float;

use super::AdError;
use crate::scalar::{Real, Scalar};

/// Sentinel operand index marking an unused parent slot.
const NONE: u32 = u32::MAX;

/// Primitive operations the tape records.
///
/// The numeric discriminants form the stable opcode byte used by the raw node
/// interface; [`Op::from_opcode`] rejects bytes outside the registered set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Op {
    Input = 0,
    Const = 1,
    Add = 2,
    Sub = 3,
    Mul = 4,
    Div = 5,
    Neg = 6,
    Pow = 7,
    Sin = 8,
    Cos = 9,
    Tanh = 10,
    Exp = 11,
    Ln = 12,
    Sqrt = 13,
    Softplus = 14,
    Relu = 15,
}

impl Op {
    /// Decode an opcode byte, failing on anything outside the registered set.
    pub fn from_opcode(code: u8) -> Result<Op, AdError> {
        Ok(match code {
            0 => Op::Input,
            1 => Op::Const,
            2 => Op::Add,
            3 => Op::Sub,
            4 => Op::Mul,
            5 => Op::Div,
            6 => Op::Neg,
            7 => Op::Pow,
            8 => Op::Sin,
            9 => Op::Cos,
            10 => Op::Tanh,
            11 => Op::Exp,
            12 => Op::Ln,
            13 => Op::Sqrt,
            14 => Op::Softplus,
            15 => Op::Relu,
            _ => return Err(AdError::UnregisteredOp { opcode: code }),
        })
    }
}

#[derive(Clone, Copy)]
struct Node<F> {
    op: Op,
    args: [u32; 2],
    partials: [F; 2],
}

struct TapeInner<F> {
    vals: Vec<F>,
    nodes: Vec<Node<F>>,
}

/// Evaluation-local recording of a scalar computation.
pub struct Tape<F: Real> {
    inner: RefCell<TapeInner<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(TapeInner {
                vals: Vec::new(),
                nodes: Vec::new(),
            }),
        }
    }

    /// Number of recorded nodes (inputs and constants included).
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    /// Opcode of each recorded node, in push order.
    pub fn ops(&self) -> Vec<Op> {
        self.inner.borrow().nodes.iter().map(|n| n.op).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register the independent variables; their adjoints become the gradient.
    pub fn inputs<'t>(&'t self, at: &[F]) -> Vec<Var<'t, F>> {
        at.iter()
            .map(|&v| Var {
                tape: self,
                idx: self.push(Op::Input, [NONE, NONE], [F::zero(); 2], v),
                val: v,
            })
            .collect()
    }

    /// A constant leaf (zero partials, never part of the gradient).
    pub fn constant(&self, c: F) -> Var<'_, F> {
        Var {
            tape: self,
            idx: self.push(Op::Const, [NONE, NONE], [F::zero(); 2], c),
            val: c,
        }
    }

    /// Raw node interface: append a node from its opcode byte. This is the
    /// escape hatch for externally described computations and fault-injection
    /// fixtures; normal use goes through `Var` arithmetic.
    pub fn push_raw_node(
        &self,
        opcode: u8,
        args: [u32; 2],
        partials: [F; 2],
        value: F,
    ) -> Result<Var<'_, F>, AdError> {
        let op = Op::from_opcode(opcode)?;
        Ok(Var {
            tape: self,
            idx: self.push(op, args, partials, value),
            val: value,
        })
    }

    fn push(&self, op: Op, args: [u32; 2], partials: [F; 2], val: F) -> u32 {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len() as u32;
        inner.nodes.push(Node { op, args, partials });
        inner.vals.push(val);
        idx
    }

    /// Backward sweep from `out`, returning (value, adjoints of the first
    /// `n_inputs` nodes). Fails if any recorded value or partial is non-finite.
    fn backward(&self, out: u32, n_inputs: usize) -> Result<(F, Vec<F>), AdError> {
        let inner = self.inner.borrow();
        for &v in &inner.vals {
            if !v.is_finite() {
                return Err(AdError::NonFiniteValue);
            }
        }
        let n = inner.nodes.len();
        let mut adj = vec![F::zero(); n];
        adj[out as usize] = F::one();
        for i in (0..n).rev() {
            let a = adj[i];
            if a == F::zero() {
                continue;
            }
            let node = &inner.nodes[i];
            for k in 0..2 {
                if node.args[k] != NONE {
                    if !node.partials[k].is_finite() {
                        return Err(AdError::NonFiniteValue);
                    }
                    adj[node.args[k] as usize] = adj[node.args[k] as usize] + node.partials[k] * a;
                }
            }
        }
        let grad: Vec<F> = adj[..n_inputs].to_vec();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(AdError::NonFiniteValue);
        }
        Ok((inner.vals[out as usize], grad))
    }
}

/// Handle to one tape node; arithmetic on handles records new nodes.
#[derive(Clone, Copy)]
pub struct Var<'t, F: Real> {
    tape: &'t Tape<F>,
    idx: u32,
    val: F,
}

impl<'t, F: Real> std::fmt::Debug for Var<'t, F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("idx", &self.idx)
            .field("val", &self.val)
            .finish()
    }
}


impl<'t, F: Real> Var<'t, F> {
    fn unary(self, op: Op, val: F, partial: F) -> Self {
        Var {
            tape: self.tape,
            idx: self.tape.push(op, [self.idx, NONE], [partial, F::zero()], val),
            val,
        }
    }

    fn binary(self, rhs: Self, op: Op, val: F, pl: F, pr: F) -> Self {
        debug_assert!(
            std::ptr::eq(self.tape, rhs.tape),
            "variables from different tapes combined"
        );
        Var {
            tape: self.tape,
            idx: self.tape.push(op, [self.idx, rhs.idx], [pl, pr], val),
            val,
        }
    }
}

impl<'t, F: Real> std::ops::Add for Var<'t, F> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Add, self.val + rhs.val, F::one(), F::one())
    }
}

impl<'t, F: Real> std::ops::Sub for Var<'t, F> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Sub, self.val - rhs.val, F::one(), -F::one())
    }
}

impl<'t, F: Real> std::ops::Mul for Var<'t, F> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Mul, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t, F: Real> std::ops::Div for Var<'t, F> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = F::one() / rhs.val;
        self.binary(
            rhs,
            Op::Div,
            self.val * inv,
            inv,
            -self.val * inv * inv,
        )
    }
}

impl<'t, F: Real> std::ops::Neg for Var<'t, F> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(Op::Neg, -self.val, -F::one())
    }
}

impl<'t, F: Real> std::ops::Add<F> for Var<'t, F> {
    type Output = Self;
    fn add(self, c: F) -> Self {
        self.unary(Op::Add, self.val + c, F::one())
    }
}

impl<'t, F: Real> std::ops::Sub<F> for Var<'t, F> {
    type Output = Self;
    fn sub(self, c: F) -> Self {
        self.unary(Op::Sub, self.val - c, F::one())
    }
}

impl<'t, F: Real> std::ops::Mul<F> for Var<'t, F> {
    type Output = Self;
    fn mul(self, c: F) -> Self {
        self.unary(Op::Mul, self.val * c, c)
    }
}

impl<'t, F: Real> std::ops::Div<F> for Var<'t, F> {
    type Output = Self;
    fn div(self, c: F) -> Self {
        let inv = F::one() / c;
        self.unary(Op::Div, self.val * inv, inv)
    }
}

impl<'t, F: Real> Scalar for Var<'t, F> {
    type R = F;

    fn value(&self) -> F {
        self.val
    }

    fn lift(&self, c: F) -> Self {
        self.tape.constant(c)
    }

    fn sin(self) -> Self {
        self.unary(Op::Sin, Float::sin(self.val), Float::cos(self.val))
    }

    fn cos(self) -> Self {
        self.unary(Op::Cos, Float::cos(self.val), -Float::sin(self.val))
    }

    fn tanh(self) -> Self {
        let t = Float::tanh(self.val);
        self.unary(Op::Tanh, t, F::one() - t * t)
    }

    fn exp(self) -> Self {
        let e = Float::exp(self.val);
        self.unary(Op::Exp, e, e)
    }

    fn ln(self) -> Self {
        self.unary(Op::Ln, Float::ln(self.val), F::one() / self.val)
    }

    fn sqrt(self) -> Self {
        let s = Float::sqrt(self.val);
        self.unary(Op::Sqrt, s, F::of(0.5) / s)
    }

    fn powi(self, n: i32) -> Self {
        let val = Float::powi(self.val, n);
        let partial = F::from_i32(n).expect("i32 exponent converts") * Float::powi(self.val, n - 1);
        self.unary(Op::Pow, val, partial)
    }

    fn softplus(self) -> Self {
        self.unary(
            Op::Softplus,
            self.val.softplus_stable(),
            self.val.sigmoid_stable(),
        )
    }

    fn relu(self) -> Self {
        let on = self.val > F::zero();
        self.unary(
            Op::Relu,
            if on { self.val } else { F::zero() },
            if on { F::one() } else { F::zero() },
        )
    }
}

/// Identity helper that pins a closure to the higher-ranked tape-function
/// signature so it can be stored in a variable and reused across
/// [`grad`] / [`eval_value`] / [`grad_check`] calls.
pub fn tape_fn<F, G>(g: G) -> G
where
    F: Real,
    G: for<'t> Fn(&'t Tape<F>, &[Var<'t, F>]) -> Var<'t, F>,
{
    g
}

/// Value and reverse-mode gradient of `f` at `at`.
///
/// The closure may propagate Taylor jets of tape variables internally (jet
/// arithmetic unrolls onto the same tape), so gradients of jet-using losses
/// such as PDE residuals come out of the same backward sweep.
pub fn grad<F, G>(at: &[F], f: G) -> Result<(F, Vec<F>), AdError>
where
    F: Real,
    G: for<'t> FnOnce(&'t Tape<F>, &[Var<'t, F>]) -> Var<'t, F>,
{
    let tape = Tape::new();
    let vars = tape.inputs(at);
    let out = f(&tape, &vars);
    tape.backward(out.idx, at.len())
}

/// Forward value of a tape closure without differentiation.
pub fn eval_value<F, G>(at: &[F], f: G) -> Result<F, AdError>
where
    F: Real,
    G: for<'t> FnOnce(&'t Tape<F>, &[Var<'t, F>]) -> Var<'t, F>,
{
    let tape = Tape::new();
    let vars = tape.inputs(at);
    let out = f(&tape, &vars);
    let inner = tape.inner.borrow();
    for &v in &inner.vals {
        if !v.is_finite() {
            return Err(AdError::NonFiniteValue);
        }
    }
    Ok(inner.vals[out.idx as usize])
}

/// Maximum relative disagreement between the reverse-mode gradient and a
/// central finite difference with step `eps`, over all coordinates. The
/// relative error is `|ad - fd| / max(1, |fd|)`.
pub fn grad_check<F, G>(at: &[F], eps: F, f: G) -> Result<F, AdError>
where
    F: Real,
    G: for<'t> Fn(&'t Tape<F>, &[Var<'t, F>]) -> Var<'t, F>,
{
    let (_, g) = grad(at, &f)?;
    let mut worst = F::zero();
    let mut shifted = at.to_vec();
    for i in 0..at.len() {
        shifted[i] = at[i] + eps;
        let fp = eval_value(&shifted, &f)?;
        shifted[i] = at[i] - eps;
        let fm = eval_value(&shifted, &f)?;
        shifted[i] = at[i];
        let fd = (fp - fm) / (eps + eps);
        let rel = (g[i] - fd).abs() / F::one().max(fd.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}
