//! Parameterized function families: fully-connected networks, unknown
//! constants, branch–trunk operator networks, and fixed-weight generators.
//!
//! Every family evaluates through a single generic forward pass over any
//! [`Scalar`](crate::scalar::Scalar) type, so the same code path produces
//! plain values, tape-recorded values for parameter gradients, and jets for
//! input derivatives up to third order.
//!
//! Parameter vectors use a fixed flat layout; for networks it is, layer by
//! layer, the weight matrix in row-major order followed by the bias vector.

use std::path::Path;
use std::str::FromStr;

use num_traits::Zero;
use rand::Rng;
use thiserror::Error;

use crate::autodiff::Jet;
use crate::scalar::{Real, Scalar};

/// Errors raised by surrogate construction, evaluation, and weight loading.
#[derive(Debug, Error)]
pub enum SurrogateError {
    /// A parameter vector or input point has the wrong length.
    #[error("{context}: expected length {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// The architecture description itself is invalid.
    #[error("invalid surrogate spec: {0}")]
    InvalidSpec(String),
    /// A derivative order beyond the supported maximum of 3 was requested.
    #[error("derivative order {order} exceeds the supported maximum of 3")]
    OrderTooHigh { order: usize },
    /// The weights file could not be opened or read.
    #[error("weights file {path}: {source}")]
    WeightsFileMissing {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// The weights file exists but its contents could not be parsed.
    #[error("weights file {path}: {reason}")]
    WeightsFileMalformed { path: String, reason: String },
    /// The weights file holds a different parameter count than its header
    /// architecture implies.
    #[error("weights file {path}: architecture needs {expected} parameters, file holds {got}")]
    ShapeMismatch {
        path: String,
        expected: usize,
        got: usize,
    },
}

/// Hidden-layer activation function of a fully-connected network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sin,
    Softplus,
}

impl Activation {
    fn apply<S: Scalar>(self, v: S) -> S {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Sin => v.sin(),
            Activation::Softplus => v.softplus(),
        }
    }

    /// Canonical lower-case name used in files and configuration.
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sin => "sin",
            Activation::Softplus => "softplus",
        }
    }
}

impl FromStr for Activation {
    type Err = SurrogateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sin" => Ok(Activation::Sin),
            "softplus" => Ok(Activation::Softplus),
            other => Err(SurrogateError::InvalidSpec(format!(
                "unknown activation `{other}` (expected tanh, sin, or softplus)"
            ))),
        }
    }
}

/// Location of one layer's weights and bias inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub n_in: usize,
    pub n_out: usize,
    /// Start of the row-major `n_out × n_in` weight block.
    pub w_start: usize,
    /// Start of the length-`n_out` bias block.
    pub b_start: usize,
}

/// Fully-connected network: affine layers with an activation on every layer
/// except the last, plus an optional fixed affine rescaling of the inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct FnnSpec {
    widths: Vec<usize>,
    activation: Activation,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
}

impl FnnSpec {
    /// A network with the given layer widths (input first, output last).
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self, SurrogateError> {
        if widths.len() < 2 {
            return Err(SurrogateError::InvalidSpec(format!(
                "a network needs at least an input and an output layer, got {} widths",
                widths.len()
            )));
        }
        if let Some(&w) = widths.iter().find(|&&w| w == 0) {
            return Err(SurrogateError::InvalidSpec(format!(
                "layer widths must be positive, got {w}"
            )));
        }
        let d = widths[0];
        Ok(FnnSpec {
            widths,
            activation,
            input_shift: vec![0.0; d],
            input_scale: vec![1.0; d],
        })
    }

    /// Fix an input rescaling: inputs are mapped to `(x - shift) / scale`
    /// before the first layer. Derivatives reported by [`Self::eval_jets`]
    /// remain with respect to the raw, unscaled inputs.
    pub fn with_input_affine(
        mut self,
        shift: Vec<f64>,
        scale: Vec<f64>,
    ) -> Result<Self, SurrogateError> {
        let d = self.input_dim();
        if shift.len() != d || scale.len() != d {
            return Err(SurrogateError::InvalidSpec(format!(
                "input rescaling needs {d} shifts and scales, got {} and {}",
                shift.len(),
                scale.len()
            )));
        }
        if scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
            return Err(SurrogateError::InvalidSpec(
                "input scales must be finite and non-zero".to_string(),
            ));
        }
        self.input_shift = shift;
        self.input_scale = scale;
        Ok(self)
    }

    /// Per-axis input shift; empty when inputs are used as-is.
    pub fn input_shift(&self) -> &[f64] {
        &self.input_shift
    }

    /// Per-axis input scale; empty when inputs are used as-is.
    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated: at least two layers")
    }

    /// Total number of weights and biases.
    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Flat-vector layout of every layer, in evaluation order.
    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut out = Vec::with_capacity(self.widths.len() - 1);
        let mut off = 0;
        for w in self.widths.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            out.push(LayerLayout {
                n_in,
                n_out,
                w_start: off,
                b_start: off + n_in * n_out,
            });
            off += n_in * n_out + n_out;
        }
        out
    }

    /// Split a flat parameter vector into per-layer `(weights, bias)` pairs.
    pub fn unpack<F: Copy>(&self, params: &[F]) -> Result<Vec<(Vec<F>, Vec<F>)>, SurrogateError> {
        if params.len() != self.param_count() {
            return Err(SurrogateError::DimensionMismatch {
                context: "network parameter vector",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        Ok(self
            .layers()
            .into_iter()
            .map(|l| {
                (
                    params[l.w_start..l.b_start].to_vec(),
                    params[l.b_start..l.b_start + l.n_out].to_vec(),
                )
            })
            .collect())
    }

    /// Inverse of [`Self::unpack`]; rebuilds the flat vector bit-for-bit.
    pub fn pack<F: Copy>(&self, layers: &[(Vec<F>, Vec<F>)]) -> Result<Vec<F>, SurrogateError> {
        let layouts = self.layers();
        if layers.len() != layouts.len() {
            return Err(SurrogateError::DimensionMismatch {
                context: "layer list",
                expected: layouts.len(),
                got: layers.len(),
            });
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (l, (w, b)) in layouts.iter().zip(layers) {
            if w.len() != l.n_in * l.n_out || b.len() != l.n_out {
                return Err(SurrogateError::DimensionMismatch {
                    context: "layer parameter block",
                    expected: l.n_in * l.n_out + l.n_out,
                    got: w.len() + b.len(),
                });
            }
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        Ok(flat)
    }

    /// Seeded default initialization: Glorot-uniform weights for tanh
    /// networks, fan-in-scaled normal weights otherwise, zero biases.
    pub fn init_params<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<F> {
        let mut p = Vec::with_capacity(self.param_count());
        for w in self.widths.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            match self.activation {
                Activation::Tanh => {
                    let a = F::of((6.0 / (n_in + n_out) as f64).sqrt());
                    for _ in 0..n_in * n_out {
                        let u = F::unit_uniform(rng);
                        p.push((u + u - F::one()) * a);
                    }
                }
                _ => {
                    let std = F::of((1.0 / n_in as f64).sqrt());
                    for _ in 0..n_in * n_out {
                        p.push(F::std_normal(rng) * std);
                    }
                }
            }
            for _ in 0..n_out {
                p.push(F::zero());
            }
        }
        p
    }

    fn check_args(&self, n_params: usize, n_x: usize) -> Result<(), SurrogateError> {
        if n_params != self.param_count() {
            return Err(SurrogateError::DimensionMismatch {
                context: "network parameter vector",
                expected: self.param_count(),
                got: n_params,
            });
        }
        if n_x != self.input_dim() {
            return Err(SurrogateError::DimensionMismatch {
                context: "network input point",
                expected: self.input_dim(),
                got: n_x,
            });
        }
        Ok(())
    }

    /// Forward pass over already-lifted inputs. `params` must hold exactly
    /// `param_count` entries.
    fn forward<T: Scalar>(&self, params: &[T], mut h: Vec<T>) -> Vec<T> {
        let n_layers = self.widths.len() - 1;
        let mut off = 0;
        for (l, w) in self.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let biases = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let mut next = Vec::with_capacity(n_out);
            for r in 0..n_out {
                let mut acc = biases[r];
                for (c, &hc) in h.iter().enumerate() {
                    acc = acc + weights[r * n_in + c] * hc;
                }
                if l + 1 < n_layers {
                    acc = self.activation.apply(acc);
                }
                next.push(acc);
            }
            h = next;
        }
        h
    }

    /// Rescaled, lifted copies of the inputs for a plain forward pass.
    fn lift_inputs<S: Scalar>(&self, witness: S, x: &[S::R]) -> Vec<S> {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                let shift = S::R::of(self.input_shift[i]);
                let scale = S::R::of(self.input_scale[i]);
                witness.lift((xi - shift) / scale)
            })
            .collect()
    }

    /// Jet-valued inputs seeded along `direction`, with the input rescaling
    /// folded into value and slope.
    fn jet_inputs<S: Scalar, const K: usize>(
        &self,
        witness: S,
        x: &[S::R],
        direction: &[S::R],
    ) -> Vec<Jet<S, K>> {
        x.iter()
            .zip(direction)
            .enumerate()
            .map(|(i, (&xi, &di))| {
                let shift = S::R::of(self.input_shift[i]);
                let scale = S::R::of(self.input_scale[i]);
                Jet::variable(witness.lift((xi - shift) / scale), di / scale)
            })
            .collect()
    }

    /// Evaluate the network output at `x`.
    pub fn eval<S: Scalar>(&self, params: &[S], x: &[S::R]) -> Result<Vec<S>, SurrogateError> {
        self.check_args(params.len(), x.len())?;
        let h0 = self.lift_inputs(params[0], x);
        Ok(self.forward(params, h0))
    }

    /// Evaluate output jets along `direction`: element `[i][k]` is the k-th
    /// derivative of output component `i` along the direction, `k ≤ order`.
    pub fn eval_jets<S: Scalar>(
        &self,
        params: &[S],
        x: &[S::R],
        direction: &[S::R],
        order: usize,
    ) -> Result<Vec<Vec<S>>, SurrogateError> {
        self.check_args(params.len(), x.len())?;
        check_direction(direction.len(), x.len())?;
        match order {
            0 => Ok(self.jets_fixed::<S, 1>(params, x, direction)),
            1 => Ok(self.jets_fixed::<S, 2>(params, x, direction)),
            2 => Ok(self.jets_fixed::<S, 3>(params, x, direction)),
            3 => Ok(self.jets_fixed::<S, 4>(params, x, direction)),
            _ => Err(SurrogateError::OrderTooHigh { order }),
        }
    }

    fn jets_fixed<S: Scalar, const K: usize>(
        &self,
        params: &[S],
        x: &[S::R],
        direction: &[S::R],
    ) -> Vec<Vec<S>> {
        let pj = lift_params_to_jets::<S, K>(params);
        let h0 = self.jet_inputs::<S, K>(params[0], x, direction);
        self.forward(&pj, h0)
            .into_iter()
            .map(|j| j.c.to_vec())
            .collect()
    }
}

/// Wrap each parameter as a derivative-free jet, sharing one lifted zero.
fn lift_params_to_jets<S: Scalar, const K: usize>(params: &[S]) -> Vec<Jet<S, K>> {
    let zero = params[0].lift(S::R::zero());
    params
        .iter()
        .map(|&p| {
            let mut c = [zero; K];
            c[0] = p;
            Jet { c }
        })
        .collect()
}

fn check_direction(got: usize, expected: usize) -> Result<(), SurrogateError> {
    if got != expected {
        return Err(SurrogateError::DimensionMismatch {
            context: "derivative direction",
            expected,
            got,
        });
    }
    Ok(())
}

/// Output transformation of an [`IdentitySpec`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    /// Output the parameters unchanged.
    Identity,
    /// Output `exp(θ)` component-wise, so a normal treatment of θ models a
    /// strictly positive quantity through its logarithm.
    Exp,
}

/// Surrogate for unknown constants: the output is the parameter vector
/// itself (optionally through a link), independent of the input point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentitySpec {
    dim: usize,
    link: Link,
}

impl IdentitySpec {
    pub fn new(dim: usize) -> Result<Self, SurrogateError> {
        if dim == 0 {
            return Err(SurrogateError::InvalidSpec(
                "a constant surrogate needs at least one component".to_string(),
            ));
        }
        Ok(IdentitySpec {
            dim,
            link: Link::Identity,
        })
    }

    pub fn with_link(mut self, link: Link) -> Self {
        self.link = link;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn param_count(&self) -> usize {
        self.dim
    }

    /// Seeded default initialization: centered normal with spread 0.5.
    pub fn init_params<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<F> {
        let half = F::of(0.5);
        (0..self.dim).map(|_| F::std_normal(rng) * half).collect()
    }

    fn check_params(&self, n_params: usize) -> Result<(), SurrogateError> {
        if n_params != self.dim {
            return Err(SurrogateError::DimensionMismatch {
                context: "constant parameter vector",
                expected: self.dim,
                got: n_params,
            });
        }
        Ok(())
    }

    /// Evaluate; the input point is ignored and may have any dimension.
    pub fn eval<S: Scalar>(&self, params: &[S], _x: &[S::R]) -> Result<Vec<S>, SurrogateError> {
        self.check_params(params.len())?;
        Ok(match self.link {
            Link::Identity => params.to_vec(),
            Link::Exp => params.iter().map(|p| p.exp()).collect(),
        })
    }

    /// Output jets: constants have zero derivative along any direction.
    pub fn eval_jets<S: Scalar>(
        &self,
        params: &[S],
        x: &[S::R],
        _direction: &[S::R],
        order: usize,
    ) -> Result<Vec<Vec<S>>, SurrogateError> {
        if order > 3 {
            return Err(SurrogateError::OrderTooHigh { order });
        }
        let out = self.eval(params, x)?;
        let zero = params[0].lift(S::R::zero());
        Ok(out
            .into_iter()
            .map(|v| {
                let mut c = vec![zero; order + 1];
                c[0] = v;
                c
            })
            .collect())
    }
}

/// Branch–trunk operator network: a branch network reads the input-function
/// samples at fixed sensors, a trunk network reads the evaluation point, and
/// the output is the inner product of their equal-width final layers. There
/// is no output bias.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepOnetSpec {
    branch: FnnSpec,
    trunk: FnnSpec,
}

impl DeepOnetSpec {
    pub fn new(branch: FnnSpec, trunk: FnnSpec) -> Result<Self, SurrogateError> {
        if branch.output_dim() != trunk.output_dim() {
            return Err(SurrogateError::InvalidSpec(format!(
                "branch and trunk must share their final width, got {} and {}",
                branch.output_dim(),
                trunk.output_dim()
            )));
        }
        Ok(DeepOnetSpec { branch, trunk })
    }

    pub fn branch(&self) -> &FnnSpec {
        &self.branch
    }

    pub fn trunk(&self) -> &FnnSpec {
        &self.trunk
    }

    /// Number of input-function sensors the branch reads.
    pub fn sensor_count(&self) -> usize {
        self.branch.input_dim()
    }

    /// Dimension of the trunk's evaluation point.
    pub fn point_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    /// Combined input dimension: sensors first, then the evaluation point.
    pub fn input_dim(&self) -> usize {
        self.sensor_count() + self.point_dim()
    }

    pub fn param_count(&self) -> usize {
        self.branch.param_count() + self.trunk.param_count()
    }

    /// Split a flat parameter vector into `(branch, trunk)` halves.
    pub fn split_params<'a, T>(&self, params: &'a [T]) -> (&'a [T], &'a [T]) {
        params.split_at(self.branch.param_count())
    }

    /// Seeded default initialization: branch then trunk, each per the
    /// network rule.
    pub fn init_params<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<F> {
        let mut p = self.branch.init_params::<F, R>(rng);
        p.extend(self.trunk.init_params::<F, R>(rng));
        p
    }

    fn check_params(&self, n_params: usize) -> Result<(), SurrogateError> {
        if n_params != self.param_count() {
            return Err(SurrogateError::DimensionMismatch {
                context: "operator-network parameter vector",
                expected: self.param_count(),
                got: n_params,
            });
        }
        Ok(())
    }

    /// Inner product of branch output at `sensors` and trunk output at
    /// `point`.
    pub fn eval_at<S: Scalar>(
        &self,
        params: &[S],
        sensors: &[S::R],
        point: &[S::R],
    ) -> Result<S, SurrogateError> {
        self.check_params(params.len())?;
        let (bp, tp) = self.split_params(params);
        let b = self.branch.eval(bp, sensors)?;
        let t = self.trunk.eval(tp, point)?;
        Ok(dot(&b, &t))
    }

    /// Evaluate with sensors and evaluation point packed into one input
    /// vector, sensors first.
    pub fn eval<S: Scalar>(&self, params: &[S], x: &[S::R]) -> Result<Vec<S>, SurrogateError> {
        if x.len() != self.input_dim() {
            return Err(SurrogateError::DimensionMismatch {
                context: "operator-network input point",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let (sensors, point) = x.split_at(self.sensor_count());
        Ok(vec![self.eval_at(params, sensors, point)?])
    }

    /// Output jets along a direction over the packed input vector.
    pub fn eval_jets<S: Scalar>(
        &self,
        params: &[S],
        x: &[S::R],
        direction: &[S::R],
        order: usize,
    ) -> Result<Vec<Vec<S>>, SurrogateError> {
        self.check_params(params.len())?;
        if x.len() != self.input_dim() {
            return Err(SurrogateError::DimensionMismatch {
                context: "operator-network input point",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        check_direction(direction.len(), x.len())?;
        match order {
            0 => Ok(self.jets_fixed::<S, 1>(params, x, direction)),
            1 => Ok(self.jets_fixed::<S, 2>(params, x, direction)),
            2 => Ok(self.jets_fixed::<S, 3>(params, x, direction)),
            3 => Ok(self.jets_fixed::<S, 4>(params, x, direction)),
            _ => Err(SurrogateError::OrderTooHigh { order }),
        }
    }

    fn jets_fixed<S: Scalar, const K: usize>(
        &self,
        params: &[S],
        x: &[S::R],
        direction: &[S::R],
    ) -> Vec<Vec<S>> {
        let (bp, tp) = self.split_params(params);
        let (sx, px) = x.split_at(self.sensor_count());
        let (sd, pd) = direction.split_at(self.sensor_count());
        let witness = params[0];
        let bj = self
            .branch
            .forward(&lift_params_to_jets::<S, K>(bp), self.branch.jet_inputs(witness, sx, sd));
        let tj = self
            .trunk
            .forward(&lift_params_to_jets::<S, K>(tp), self.trunk.jet_inputs(witness, px, pd));
        vec![dot(&bj, &tj).c.to_vec()]
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = a[0] * b[0];
    for (&ak, &bk) in a.iter().zip(b).skip(1) {
        acc = acc + ak * bk;
    }
    acc
}

/// Fixed-weight generator: a frozen feature network maps the input point to
/// a feature vector, and the output is the latent vector's inner product
/// with those features. Only the latent vector is a free parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    feature_net: FnnSpec,
    frozen_weights: Vec<f64>,
}

impl GeneratorSpec {
    /// Build from an explicit feature network and its frozen weights.
    pub fn new(feature_net: FnnSpec, frozen_weights: Vec<f64>) -> Result<Self, SurrogateError> {
        if frozen_weights.len() != feature_net.param_count() {
            return Err(SurrogateError::DimensionMismatch {
                context: "frozen feature-network weights",
                expected: feature_net.param_count(),
                got: frozen_weights.len(),
            });
        }
        if frozen_weights.iter().any(|w| !w.is_finite()) {
            return Err(SurrogateError::InvalidSpec(
                "frozen weights must be finite".to_string(),
            ));
        }
        Ok(GeneratorSpec {
            feature_net,
            frozen_weights,
        })
    }

    /// Load a feature network and its weights from a CSV file whose first
    /// line is `# fnn <comma-separated widths> <activation>` followed by one
    /// parameter per line.
    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        let shown = path.display().to_string();
        let text =
            std::fs::read_to_string(path).map_err(|source| SurrogateError::WeightsFileMissing {
                path: shown.clone(),
                source,
            })?;
        let malformed = |reason: String| SurrogateError::WeightsFileMalformed {
            path: shown.clone(),
            reason,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| malformed("empty file".to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "#" || fields[1] != "fnn" {
            return Err(malformed(format!(
                "expected header `# fnn <widths> <activation>`, got `{header}`"
            )));
        }
        let widths = fields[2]
            .split(',')
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| malformed(format!("bad width `{t}` in header")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let activation = Activation::from_str(fields[3])
            .map_err(|_| malformed(format!("bad activation `{}` in header", fields[3])))?;
        let feature_net = FnnSpec::new(widths, activation)
            .map_err(|e| malformed(format!("bad architecture in header: {e}")))?;
        let weights = lines
            .map(|l| {
                let t = l.trim();
                t.parse::<f64>()
                    .map_err(|_| malformed(format!("bad parameter line `{t}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if weights.len() != feature_net.param_count() {
            return Err(SurrogateError::ShapeMismatch {
                path: shown,
                expected: feature_net.param_count(),
                got: weights.len(),
            });
        }
        GeneratorSpec::new(feature_net, weights)
    }

    /// Write the feature network and weights in the format [`Self::load`]
    /// reads, with full round-trip precision.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        use std::fmt::Write as _;
        let widths: Vec<String> = self.feature_net.widths().iter().map(|w| w.to_string()).collect();
        let mut text = format!(
            "# fnn {} {}\n",
            widths.join(","),
            self.feature_net.activation().name()
        );
        for w in &self.frozen_weights {
            writeln!(text, "{w:.16e}").expect("string write cannot fail");
        }
        std::fs::write(path, text)
    }

    pub fn feature_net(&self) -> &FnnSpec {
        &self.feature_net
    }

    pub fn frozen_weights(&self) -> &[f64] {
        &self.frozen_weights
    }

    /// Dimension of the free latent vector (the feature width).
    pub fn latent_dim(&self) -> usize {
        self.feature_net.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.latent_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.feature_net.input_dim()
    }

    /// Seeded default initialization: centered normal with spread 0.5.
    pub fn init_params<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<F> {
        let half = F::of(0.5);
        (0..self.latent_dim())
            .map(|_| F::std_normal(rng) * half)
            .collect()
    }

    fn check_latent(&self, n: usize) -> Result<(), SurrogateError> {
        if n != self.latent_dim() {
            return Err(SurrogateError::DimensionMismatch {
                context: "generator latent vector",
                expected: self.latent_dim(),
                got: n,
            });
        }
        Ok(())
    }

    fn frozen_as<F: Real>(&self) -> Vec<F> {
        self.frozen_weights.iter().map(|&w| F::of(w)).collect()
    }

    /// Evaluate the generator output; the frozen features are computed in
    /// plain arithmetic and only the latent combination carries derivatives.
    pub fn eval<S: Scalar>(&self, latent: &[S], x: &[S::R]) -> Result<Vec<S>, SurrogateError> {
        self.check_latent(latent.len())?;
        let phi = self.feature_net.eval::<S::R>(&self.frozen_as(), x)?;
        let mut acc = latent[0] * phi[0];
        for (&zk, &pk) in latent.iter().zip(&phi).skip(1) {
            acc = acc + zk * pk;
        }
        Ok(vec![acc])
    }

    /// Output jets along `direction`; derivatives of the frozen features are
    /// combined linearly with the latent vector.
    pub fn eval_jets<S: Scalar>(
        &self,
        latent: &[S],
        x: &[S::R],
        direction: &[S::R],
        order: usize,
    ) -> Result<Vec<Vec<S>>, SurrogateError> {
        self.check_latent(latent.len())?;
        let phi_jets =
            self.feature_net
                .eval_jets::<S::R>(&self.frozen_as(), x, direction, order)?;
        let coeffs = (0..=order)
            .map(|k| {
                let mut acc = latent[0] * phi_jets[0][k];
                for (&z, pj) in latent.iter().zip(&phi_jets).skip(1) {
                    acc = acc + z * pj[k];
                }
                acc
            })
            .collect();
        Ok(vec![coeffs])
    }
}

/// Any supported surrogate family, with a uniform evaluation interface.
#[derive(Clone, Debug, PartialEq)]
pub enum Surrogate {
    Fnn(FnnSpec),
    Identity(IdentitySpec),
    DeepOnet(DeepOnetSpec),
    Generator(GeneratorSpec),
}

impl From<FnnSpec> for Surrogate {
    fn from(s: FnnSpec) -> Self {
        Surrogate::Fnn(s)
    }
}

impl From<IdentitySpec> for Surrogate {
    fn from(s: IdentitySpec) -> Self {
        Surrogate::Identity(s)
    }
}

impl From<DeepOnetSpec> for Surrogate {
    fn from(s: DeepOnetSpec) -> Self {
        Surrogate::DeepOnet(s)
    }
}

impl From<GeneratorSpec> for Surrogate {
    fn from(s: GeneratorSpec) -> Self {
        Surrogate::Generator(s)
    }
}

impl Surrogate {
    pub fn param_count(&self) -> usize {
        match self {
            Surrogate::Fnn(s) => s.param_count(),
            Surrogate::Identity(s) => s.param_count(),
            Surrogate::DeepOnet(s) => s.param_count(),
            Surrogate::Generator(s) => s.param_count(),
        }
    }

    /// Expected input dimension; constants accept inputs of any dimension
    /// and report 0.
    pub fn input_dim(&self) -> usize {
        match self {
            Surrogate::Fnn(s) => s.input_dim(),
            Surrogate::Identity(_) => 0,
            Surrogate::DeepOnet(s) => s.input_dim(),
            Surrogate::Generator(s) => s.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Surrogate::Fnn(s) => s.output_dim(),
            Surrogate::Identity(s) => s.dim(),
            Surrogate::DeepOnet(_) => 1,
            Surrogate::Generator(_) => 1,
        }
    }

    pub fn as_fnn(&self) -> Option<&FnnSpec> {
        match self {
            Surrogate::Fnn(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_deeponet(&self) -> Option<&DeepOnetSpec> {
        match self {
            Surrogate::DeepOnet(s) => Some(s),
            _ => None,
        }
    }

    pub fn eval<S: Scalar>(&self, params: &[S], x: &[S::R]) -> Result<Vec<S>, SurrogateError> {
        match self {
            Surrogate::Fnn(s) => s.eval(params, x),
            Surrogate::Identity(s) => s.eval(params, x),
            Surrogate::DeepOnet(s) => s.eval(params, x),
            Surrogate::Generator(s) => s.eval(params, x),
        }
    }

    pub fn eval_jets<S: Scalar>(
        &self,
        params: &[S],
        x: &[S::R],
        direction: &[S::R],
        order: usize,
    ) -> Result<Vec<Vec<S>>, SurrogateError> {
        match self {
            Surrogate::Fnn(s) => s.eval_jets(params, x, direction, order),
            Surrogate::Identity(s) => s.eval_jets(params, x, direction, order),
            Surrogate::DeepOnet(s) => s.eval_jets(params, x, direction, order),
            Surrogate::Generator(s) => s.eval_jets(params, x, direction, order),
        }
    }

    pub fn init_params<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<F> {
        match self {
            Surrogate::Fnn(s) => s.init_params(rng),
            Surrogate::Identity(s) => s.init_params(rng),
            Surrogate::DeepOnet(s) => s.init_params(rng),
            Surrogate::Generator(s) => s.init_params(rng),
        }
    }
}
