//! Datasets, physics residuals, and the joint densities and losses that tie
//! processes to observations.
//!
//! A [`UqModel`] owns a set of keyed processes and a list of likelihood
//! terms. Each term pairs a [`Dataset`] with an [`Observable`]: either the
//! direct output of one process, or a [`ResidualFn`] that combines jet
//! derivatives of several processes into differential-equation residuals.
//! The model exposes the unnormalized log posterior (for sampled parameter
//! families), weighted mean-squared losses (for trained families), and
//! gradients of both through the reverse-mode tape.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use num_traits::{Float, Zero};
use rand::Rng;
use thiserror::Error;

use crate::autodiff::{grad, AdError, Var};
use crate::processes::{Process, ProcessError, VariableSpec};
use crate::scalar::{Real, Scalar};
use crate::surrogates::{Surrogate, SurrogateError};

/// Errors raised during model assembly and evaluation.
#[derive(Debug, Error)]
pub enum LikelihoodError {
    #[error("{context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("no process with key `{0}`")]
    UnknownProcessKey(String),
    #[error("duplicate process key `{0}`")]
    DuplicateProcessKey(String),
    #[error("model mixes parameter families `{first}` and `{second}`")]
    MixedFamilies {
        first: &'static str,
        second: &'static str,
    },
    #[error("operation `{operation}` requires the {required} family, model is {actual}")]
    FamilyMismatch {
        operation: &'static str,
        required: &'static str,
        actual: &'static str,
    },
    #[error("dataset with tag `{tag}` is empty but carries non-zero loss weight")]
    EmptyDataset { tag: &'static str },
    #[error("operator dataset rows disagree on sensor or point counts")]
    RaggedSensors,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("dataset file {path}: {reason}")]
    MalformedData { path: String, reason: String },
    #[error("dataset file {path}: {source}")]
    DataIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Ad(#[from] AdError),
}

/// Role of a dataset inside the joint objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataTag {
    /// Solution measurements.
    U,
    /// Forcing / residual measurements.
    F,
    /// Boundary or initial conditions.
    B,
    /// Measurements of an unknown coefficient or operator input.
    Lambda,
}

impl DataTag {
    pub fn name(self) -> &'static str {
        match self {
            DataTag::U => "u",
            DataTag::F => "f",
            DataTag::B => "b",
            DataTag::Lambda => "lambda",
        }
    }
}

/// A set of observations: input points, targets, and the known per-component
/// aleatoric noise scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<F> {
    inputs: Vec<Vec<F>>,
    targets: Vec<Vec<F>>,
    noise_std: Vec<F>,
    tag: DataTag,
}

impl<F: Real> Dataset<F> {
    pub fn new(
        inputs: Vec<Vec<F>>,
        targets: Vec<Vec<F>>,
        noise_std: Vec<F>,
        tag: DataTag,
    ) -> Result<Self, LikelihoodError> {
        if inputs.len() != targets.len() {
            return Err(LikelihoodError::ShapeMismatch {
                context: "dataset rows",
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if let Some(first) = inputs.first() {
            let d = first.len();
            if inputs.iter().any(|r| r.len() != d) {
                return Err(LikelihoodError::InvalidModel(
                    "dataset input rows have inconsistent dimensions".to_string(),
                ));
            }
        }
        let du = noise_std.len();
        if targets.iter().any(|r| r.len() != du) {
            return Err(LikelihoodError::InvalidModel(
                "dataset target rows disagree with the noise vector length".to_string(),
            ));
        }
        if noise_std.iter().any(|s| !(*s > F::zero() && s.is_finite())) {
            return Err(LikelihoodError::InvalidModel(
                "noise standard deviations must be positive and finite".to_string(),
            ));
        }
        Ok(Dataset {
            inputs,
            targets,
            noise_std,
            tag,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |r| r.len())
    }

    pub fn output_dim(&self) -> usize {
        self.noise_std.len()
    }

    pub fn inputs(&self) -> &[Vec<F>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<F>] {
        &self.targets
    }

    pub fn noise_std(&self) -> &[F] {
        &self.noise_std
    }

    pub fn tag(&self) -> DataTag {
        self.tag
    }

    /// Exact Gaussian log likelihood of predictions against the targets,
    /// with the dataset's known noise scales.
    pub fn normal_loglik(&self, predictions: &[Vec<F>]) -> Result<F, LikelihoodError> {
        if predictions.len() != self.len() {
            return Err(LikelihoodError::ShapeMismatch {
                context: "prediction rows",
                expected: self.len(),
                got: predictions.len(),
            });
        }
        if predictions.iter().any(|r| r.len() != self.output_dim()) {
            return Err(LikelihoodError::ShapeMismatch {
                context: "prediction columns",
                expected: self.output_dim(),
                got: predictions.iter().map(|r| r.len()).find(|&l| l != self.output_dim()).unwrap_or(0),
            });
        }
        Ok(gaussian_loglik(
            F::one(),
            &self.targets,
            &self.noise_std,
            predictions,
        ))
    }

    /// Write the observations as CSV with header `x_0,…,y_0,…`; the noise
    /// scale is configuration, not data, and is not stored.
    pub fn write_csv(&self, path: &Path) -> Result<(), LikelihoodError> {
        use std::fmt::Write as _;
        let dx = self.input_dim();
        let du = self.output_dim();
        let mut text = String::new();
        let header: Vec<String> = (0..dx)
            .map(|i| format!("x_{i}"))
            .chain((0..du).map(|i| format!("y_{i}")))
            .collect();
        writeln!(text, "{}", header.join(",")).expect("string write cannot fail");
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let row: Vec<String> = x
                .iter()
                .chain(y.iter())
                .map(|v| format!("{:.16e}", v.to_f64_lossy()))
                .collect();
            writeln!(text, "{}", row.join(",")).expect("string write cannot fail");
        }
        std::fs::write(path, text).map_err(|source| LikelihoodError::DataIo {
            path: path.display().to_string(),
            source,
        })
    }

    /// Read observations written by [`Self::write_csv`]. The caller supplies
    /// the noise scales and tag, which the file does not carry.
    pub fn read_csv(path: &Path, noise_std: Vec<F>, tag: DataTag) -> Result<Self, LikelihoodError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| LikelihoodError::DataIo {
            path: shown.clone(),
            source,
        })?;
        let malformed = |reason: String| LikelihoodError::MalformedData {
            path: shown.clone(),
            reason,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| malformed("empty file".to_string()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let dx = cols.iter().take_while(|c| c.starts_with("x_")).count();
        let du = cols.len() - dx;
        if dx == 0 || du == 0 || !cols[dx..].iter().all(|c| c.starts_with("y_")) {
            return Err(malformed(format!("unrecognized header `{header}`")));
        }
        if du != noise_std.len() {
            return Err(LikelihoodError::ShapeMismatch {
                context: "noise vector for CSV targets",
                expected: du,
                got: noise_std.len(),
            });
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for line in lines {
            let vals = line
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map(F::of)
                        .map_err(|_| malformed(format!("bad number `{t}`")))
                })
                .collect::<Result<Vec<F>, _>>()?;
            if vals.len() != dx + du {
                return Err(malformed(format!(
                    "row has {} fields, header has {}",
                    vals.len(),
                    dx + du
                )));
            }
            inputs.push(vals[..dx].to_vec());
            targets.push(vals[dx..].to_vec());
        }
        Dataset::new(inputs, targets, noise_std, tag)
    }
}

/// One derivative table a residual needs: jets of process `key` along input
/// axis `axis` up to derivative `order`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JetRequest {
    pub key: String,
    pub axis: usize,
    pub order: usize,
}

impl JetRequest {
    pub fn new(key: impl Into<String>, axis: usize, order: usize) -> Self {
        JetRequest {
            key: key.into(),
            axis,
            order,
        }
    }

    /// Plain process values (order-0 jets along the first axis).
    pub fn value(key: impl Into<String>) -> Self {
        JetRequest::new(key, 0, 0)
    }
}

/// Fulfilled jet requests at one point, indexed by request position.
pub struct JetView<'a, S> {
    per_request: &'a [Vec<Vec<S>>],
}

impl<'a, S: Scalar> JetView<'a, S> {
    /// Jet table of the i-th declared request: `[component][derivative]`.
    pub fn req(&self, i: usize) -> &[Vec<S>] {
        &self.per_request[i]
    }

    /// Value (0-th derivative) of one output component of request `i`.
    pub fn value(&self, i: usize, component: usize) -> S {
        self.per_request[i][component][0]
    }

    /// `k`-th derivative of one output component of request `i`.
    pub fn d(&self, i: usize, component: usize, k: usize) -> S {
        self.per_request[i][component][k]
    }
}

/// Differential-operator residual: declares which jets it reads and maps
/// them to residual components at a point. Object-safe; implement the
/// generic [`ResidualRule`] and wrap it in [`Rule`] instead of implementing
/// this trait directly.
pub trait ResidualFn<F: Real>: Send + Sync {
    fn requests(&self) -> Vec<JetRequest>;
    fn output_dim(&self) -> usize;
    fn eval_plain(&self, x: &[F], jets: &JetView<'_, F>) -> Vec<F>;
    fn eval_tape<'t>(&self, x: &[F], jets: &JetView<'_, Var<'t, F>>) -> Vec<Var<'t, F>>;
}

/// Scalar-generic residual definition: one `eval` body serves both plain
/// evaluation and tape recording.
pub trait ResidualRule<F: Real>: Send + Sync {
    fn requests(&self) -> Vec<JetRequest>;
    fn output_dim(&self) -> usize;
    fn eval<S: Scalar<R = F>>(&self, x: &[F], jets: &JetView<'_, S>) -> Vec<S>;
}

/// Adapter turning a [`ResidualRule`] into an object-safe [`ResidualFn`].
pub struct Rule<T>(pub T);

impl<F: Real, T: ResidualRule<F>> ResidualFn<F> for Rule<T> {
    fn requests(&self) -> Vec<JetRequest> {
        self.0.requests()
    }

    fn output_dim(&self) -> usize {
        self.0.output_dim()
    }

    fn eval_plain(&self, x: &[F], jets: &JetView<'_, F>) -> Vec<F> {
        self.0.eval::<F>(x, jets)
    }

    fn eval_tape<'t>(&self, x: &[F], jets: &JetView<'_, Var<'t, F>>) -> Vec<Var<'t, F>> {
        self.0.eval::<Var<'t, F>>(x, jets)
    }
}

/// Scalars a model objective can be assembled over: plain reals (values)
/// and tape variables (gradients). Dispatches the object-safe residual call
/// for its concrete type.
pub trait ResidualScalar<F: Real>: Scalar<R = F> {
    #[doc(hidden)]
    fn eval_residual(
        rf: &dyn ResidualFn<F>,
        x: &[F],
        jets: &JetView<'_, Self>,
    ) -> Vec<Self>
    where
        Self: Sized;
}

impl<F: Real> ResidualScalar<F> for F {
    fn eval_residual(rf: &dyn ResidualFn<F>, x: &[F], jets: &JetView<'_, F>) -> Vec<F> {
        rf.eval_plain(x, jets)
    }
}

impl<'t, F: Real> ResidualScalar<F> for Var<'t, F> {
    fn eval_residual(
        rf: &dyn ResidualFn<F>,
        x: &[F],
        jets: &JetView<'_, Var<'t, F>>,
    ) -> Vec<Var<'t, F>> {
        rf.eval_tape(x, jets)
    }
}

/// What a likelihood term observes.
#[derive(Clone)]
pub enum Observable<F: Real> {
    /// Direct surrogate output of one process; `components` selects output
    /// indices (empty means all, in order).
    Process { key: String, components: Vec<usize> },
    /// A differential residual combining jets of several processes.
    Residual(Arc<dyn ResidualFn<F>>),
}

impl<F: Real> Observable<F> {
    pub fn process(key: impl Into<String>) -> Self {
        Observable::Process {
            key: key.into(),
            components: Vec::new(),
        }
    }

    pub fn process_component(key: impl Into<String>, component: usize) -> Self {
        Observable::Process {
            key: key.into(),
            components: vec![component],
        }
    }

    pub fn residual(rf: impl ResidualFn<F> + 'static) -> Self {
        Observable::Residual(Arc::new(rf))
    }
}

impl<F: Real> std::fmt::Debug for Observable<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Observable::Process { key, components } => f
                .debug_struct("Process")
                .field("key", key)
                .field("components", components)
                .finish(),
            Observable::Residual(rf) => f
                .debug_struct("Residual")
                .field("output_dim", &rf.output_dim())
                .finish(),
        }
    }
}

/// One likelihood term: a dataset compared against an observable.
#[derive(Clone, Debug)]
pub struct LikelihoodTerm<F: Real> {
    pub dataset: Dataset<F>,
    pub observable: Observable<F>,
}

/// Per-tag weights of the deterministic composite loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub u: f64,
    pub f: f64,
    pub b: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            u: 1.0,
            f: 1.0,
            b: 1.0,
            lambda: 1.0,
        }
    }
}

impl LossWeights {
    fn for_tag(&self, tag: DataTag) -> f64 {
        match tag {
            DataTag::U => self.u,
            DataTag::F => self.f,
            DataTag::B => self.b,
            DataTag::Lambda => self.lambda,
        }
    }
}

/// Paired input-function / output-function observations for operator
/// learning: `N` events share sensor locations and evaluation points.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorDataset<F> {
    /// Input-function values at the shared sensors, one row per event.
    pub sensor_values: Vec<Vec<F>>,
    /// Shared evaluation points, one row per point.
    pub points: Vec<Vec<F>>,
    /// Output-function values: `targets[event][point]`.
    pub targets: Vec<Vec<F>>,
    /// Known aleatoric noise scale of the outputs.
    pub noise_std: F,
}

impl<F: Real> OperatorDataset<F> {
    pub fn validate(&self) -> Result<(), LikelihoodError> {
        let n_sensors = self.sensor_values.first().map_or(0, |r| r.len());
        if self.sensor_values.iter().any(|r| r.len() != n_sensors) {
            return Err(LikelihoodError::RaggedSensors);
        }
        if self.targets.len() != self.sensor_values.len()
            || self.targets.iter().any(|r| r.len() != self.points.len())
        {
            return Err(LikelihoodError::RaggedSensors);
        }
        if !(self.noise_std > F::zero() && self.noise_std.is_finite()) {
            return Err(LikelihoodError::InvalidModel(
                "operator dataset noise scale must be positive and finite".to_string(),
            ));
        }
        Ok(())
    }

    pub fn n_events(&self) -> usize {
        self.sensor_values.len()
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }
}

/// An operator-learning term: the keyed branch–trunk process fitted to an
/// operator dataset.
#[derive(Clone, Debug)]
pub struct OperatorTerm<F> {
    pub key: String,
    pub dataset: OperatorDataset<F>,
}

/// A complete model: keyed processes plus likelihood and operator terms.
pub struct UqModel<F: Real> {
    processes: Vec<Process>,
    terms: Vec<LikelihoodTerm<F>>,
    operator_terms: Vec<OperatorTerm<F>>,
    weights: LossWeights,
    offsets: Vec<usize>,
    by_key: HashMap<String, usize>,
    family: &'static str,
}

impl<F: Real> UqModel<F> {
    pub fn new(
        processes: Vec<Process>,
        terms: Vec<LikelihoodTerm<F>>,
    ) -> Result<Self, LikelihoodError> {
        if processes.is_empty() {
            return Err(LikelihoodError::InvalidModel(
                "a model needs at least one process".to_string(),
            ));
        }
        let mut by_key = HashMap::new();
        let mut offsets = Vec::with_capacity(processes.len() + 1);
        let mut off = 0;
        for (i, p) in processes.iter().enumerate() {
            if by_key.insert(p.key().to_string(), i).is_some() {
                return Err(LikelihoodError::DuplicateProcessKey(p.key().to_string()));
            }
            offsets.push(off);
            off += p.param_count();
        }
        offsets.push(off);
        let family = processes[0].variable().family();
        for p in &processes[1..] {
            if p.variable().family() != family {
                return Err(LikelihoodError::MixedFamilies {
                    first: family,
                    second: p.variable().family(),
                });
            }
        }
        let model = UqModel {
            processes,
            terms,
            operator_terms: Vec::new(),
            weights: LossWeights::default(),
            offsets,
            by_key,
            family,
        };
        model.validate_terms()?;
        Ok(model)
    }

    pub fn with_weights(mut self, weights: LossWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_operator_term(
        mut self,
        key: impl Into<String>,
        dataset: OperatorDataset<F>,
    ) -> Result<Self, LikelihoodError> {
        let key = key.into();
        dataset.validate()?;
        let idx = *self
            .by_key
            .get(&key)
            .ok_or_else(|| LikelihoodError::UnknownProcessKey(key.clone()))?;
        let spec = self.processes[idx]
            .surrogate()
            .as_deeponet()
            .ok_or_else(|| {
                LikelihoodError::InvalidModel(format!(
                    "operator term `{key}` must reference a branch–trunk surrogate"
                ))
            })?;
        if dataset.sensor_values.first().map_or(0, |r| r.len()) != spec.sensor_count() {
            return Err(LikelihoodError::ShapeMismatch {
                context: "operator dataset sensors",
                expected: spec.sensor_count(),
                got: dataset.sensor_values.first().map_or(0, |r| r.len()),
            });
        }
        if dataset.points.iter().any(|p| p.len() != spec.point_dim()) {
            return Err(LikelihoodError::InvalidModel(
                "operator dataset points disagree with the trunk input dimension".to_string(),
            ));
        }
        self.operator_terms.push(OperatorTerm { key, dataset });
        Ok(self)
    }

    fn validate_terms(&self) -> Result<(), LikelihoodError> {
        for term in &self.terms {
            match &term.observable {
                Observable::Process { key, components } => {
                    let idx = self.index_of(key)?;
                    let out = self.processes[idx].surrogate().output_dim();
                    if let Some(&c) = components.iter().find(|&&c| c >= out) {
                        return Err(LikelihoodError::InvalidModel(format!(
                            "component {c} out of range for process `{key}` with {out} outputs"
                        )));
                    }
                    let selected = if components.is_empty() {
                        out
                    } else {
                        components.len()
                    };
                    if selected != term.dataset.output_dim() {
                        return Err(LikelihoodError::ShapeMismatch {
                            context: "dataset columns vs observed components",
                            expected: selected,
                            got: term.dataset.output_dim(),
                        });
                    }
                }
                Observable::Residual(rf) => {
                    for req in rf.requests() {
                        self.index_of(&req.key)?;
                        if req.order > 3 {
                            return Err(LikelihoodError::InvalidModel(format!(
                                "residual requests derivative order {} of `{}`",
                                req.order, req.key
                            )));
                        }
                    }
                    if rf.output_dim() != term.dataset.output_dim() {
                        return Err(LikelihoodError::ShapeMismatch {
                            context: "dataset columns vs residual outputs",
                            expected: rf.output_dim(),
                            got: term.dataset.output_dim(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn index_of(&self, key: &str) -> Result<usize, LikelihoodError> {
        self.by_key
            .get(key)
            .copied()
            .ok_or_else(|| LikelihoodError::UnknownProcessKey(key.to_string()))
    }

    pub fn processes(&self) -> &[Process] {
        &self.processes
    }

    pub fn process(&self, key: &str) -> Option<&Process> {
        self.by_key.get(key).map(|&i| &self.processes[i])
    }

    pub fn terms(&self) -> &[LikelihoodTerm<F>] {
        &self.terms
    }

    pub fn operator_terms(&self) -> &[OperatorTerm<F>] {
        &self.operator_terms
    }

    pub fn weights(&self) -> LossWeights {
        self.weights
    }

    /// The single parameter family of every process in this model.
    pub fn family(&self) -> &'static str {
        self.family
    }

    pub fn param_count(&self) -> usize {
        *self.offsets.last().expect("offsets cover all processes")
    }

    /// Slice of the concatenated parameter vector owned by process `key`.
    pub fn param_range(&self, key: &str) -> Result<Range<usize>, LikelihoodError> {
        let i = self.index_of(key)?;
        Ok(self.offsets[i]..self.offsets[i + 1])
    }

    fn slice<'a, T>(&self, idx: usize, all: &'a [T]) -> &'a [T] {
        &all[self.offsets[idx]..self.offsets[idx + 1]]
    }

    /// Starting parameter vector: surrogate defaults for networks, prior
    /// draws for constants with a prior (so chains start inside the prior's
    /// support).
    pub fn init_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<F> {
        let mut point = Vec::with_capacity(self.param_count());
        for p in &self.processes {
            match (p.surrogate(), p.variable().prior()) {
                (Surrogate::Identity(spec), Some(prior)) => {
                    point.extend((0..spec.param_count()).map(|_| prior.sample::<F, R>(rng)));
                }
                (s, _) => point.extend(s.init_params::<F, R>(rng)),
            }
        }
        point
    }

    fn check_theta(&self, theta: &[impl Copy]) -> Result<(), LikelihoodError> {
        if theta.len() != self.param_count() {
            return Err(LikelihoodError::ShapeMismatch {
                context: "model parameter vector",
                expected: self.param_count(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    fn require_family(
        &self,
        operation: &'static str,
        required: &'static str,
    ) -> Result<(), LikelihoodError> {
        if self.family != required {
            return Err(LikelihoodError::FamilyMismatch {
                operation,
                required,
                actual: self.family,
            });
        }
        Ok(())
    }

    /// Posterior operations need priors, so the trainable family is out.
    fn require_bayesian(&self, operation: &'static str) -> Result<(), LikelihoodError> {
        if self.family == "trainable" {
            return Err(LikelihoodError::FamilyMismatch {
                operation,
                required: "samplable",
                actual: self.family,
            });
        }
        Ok(())
    }

    /// Whether every component lies inside its prior's support.
    pub fn in_support(&self, theta: &[F]) -> bool {
        self.processes.iter().enumerate().all(|(i, p)| {
            p.variable().prior().is_none_or(|prior| {
                self.slice(i, theta).iter().all(|&t| prior.in_support(t))
            })
        })
    }

    /// Exact joint log prior; `-inf` outside any prior's support.
    pub fn log_prior(&self, theta: &[F]) -> Result<F, LikelihoodError> {
        self.check_theta(theta)?;
        let mut acc = F::zero();
        for (i, p) in self.processes.iter().enumerate() {
            acc = acc + p.variable().log_prior(self.slice(i, theta))?;
        }
        Ok(acc)
    }

    /// Smooth in-support log prior over any scalar (for gradient assembly).
    pub fn log_prior_smooth<S: Scalar<R = F>>(&self, theta: &[S]) -> Result<S, LikelihoodError> {
        self.check_theta(theta)?;
        let mut acc: Option<S> = None;
        for (i, p) in self.processes.iter().enumerate() {
            let prior = p.variable().prior().ok_or(ProcessError::FamilyMismatch {
                operation: "log_prior",
                family: p.variable().family(),
            })?;
            let term = prior.log_density_smooth_vec(self.slice(i, theta));
            acc = Some(match acc {
                None => term,
                Some(a) => a + term,
            });
        }
        Ok(acc.expect("model has at least one process"))
    }

    fn jet_tables<S: Scalar<R = F>>(
        &self,
        requests: &[JetRequest],
        theta: &[S],
        x: &[F],
    ) -> Result<Vec<Vec<Vec<S>>>, LikelihoodError> {
        requests
            .iter()
            .map(|req| {
                let idx = self.index_of(&req.key)?;
                let params = self.slice(idx, theta);
                let surrogate = self.processes[idx].surrogate();
                let mut direction = vec![F::zero(); x.len()];
                if let Some(d) = direction.get_mut(req.axis) {
                    *d = F::one();
                } else if !matches!(surrogate, Surrogate::Identity(_)) {
                    return Err(LikelihoodError::InvalidModel(format!(
                        "residual requests axis {} of `{}` at a {}-dimensional point",
                        req.axis,
                        req.key,
                        x.len()
                    )));
                }
                Ok(surrogate.eval_jets(params, x, &direction, req.order)?)
            })
            .collect()
    }

    /// Residual values at each point, in the given point order.
    pub fn residual_values(
        &self,
        rf: &dyn ResidualFn<F>,
        theta: &[F],
        points: &[Vec<F>],
    ) -> Result<Vec<Vec<F>>, LikelihoodError> {
        self.check_theta(theta)?;
        let requests = rf.requests();
        points
            .iter()
            .map(|x| {
                let tables = self.jet_tables(&requests, theta, x)?;
                let view = JetView {
                    per_request: &tables,
                };
                Ok(F::eval_residual(rf, x, &view))
            })
            .collect()
    }

    pub(crate) fn observable_predictions<S: ResidualScalar<F>>(
        &self,
        observable: &Observable<F>,
        theta: &[S],
        inputs: &[Vec<F>],
    ) -> Result<Vec<Vec<S>>, LikelihoodError> {
        match observable {
            Observable::Process { key, components } => {
                let idx = self.index_of(key)?;
                let params = self.slice(idx, theta);
                let surrogate = self.processes[idx].surrogate();
                inputs
                    .iter()
                    .map(|x| {
                        let out = surrogate.eval(params, x)?;
                        Ok(if components.is_empty() {
                            out
                        } else {
                            components.iter().map(|&c| out[c]).collect()
                        })
                    })
                    .collect()
            }
            Observable::Residual(rf) => {
                let requests = rf.requests();
                inputs
                    .iter()
                    .map(|x| {
                        let tables = self.jet_tables(&requests, theta, x)?;
                        let view = JetView {
                            per_request: &tables,
                        };
                        Ok(S::eval_residual(rf.as_ref(), x, &view))
                    })
                    .collect()
            }
        }
    }

    /// Joint Gaussian log likelihood of every term, over plain values or
    /// tape variables.
    pub fn log_likelihood<S: ResidualScalar<F>>(&self, theta: &[S]) -> Result<S, LikelihoodError> {
        self.check_theta(theta)?;
        let witness = theta[0];
        let mut acc = witness.lift(F::zero());
        for term in &self.terms {
            if term.dataset.is_empty() {
                continue;
            }
            let preds = self.observable_predictions(&term.observable, theta, term.dataset.inputs())?;
            acc = acc
                + gaussian_loglik(
                    witness,
                    term.dataset.targets(),
                    term.dataset.noise_std(),
                    &preds,
                );
        }
        Ok(acc)
    }

    /// Exact unnormalized log posterior: `-inf` outside the prior support,
    /// otherwise log prior plus log likelihood.
    pub fn log_posterior(&self, theta: &[F]) -> Result<F, LikelihoodError> {
        self.require_bayesian("log_posterior")?;
        self.check_theta(theta)?;
        if !self.in_support(theta) {
            return Ok(F::neg_infinity());
        }
        Ok(self.log_prior(theta)? + self.log_likelihood(theta)?)
    }

    /// Value and gradient of the log posterior. Outside the prior support
    /// the value is `-inf` and the gradient is zero (the smooth part is
    /// undefined there); a sampler sees such states as always-rejected.
    pub fn log_posterior_grad(&self, theta: &[F]) -> Result<(F, Vec<F>), LikelihoodError> {
        self.require_bayesian("log_posterior")?;
        self.check_theta(theta)?;
        if !self.in_support(theta) {
            return Ok((F::neg_infinity(), vec![F::zero(); theta.len()]));
        }
        let (value, gradient) = grad(theta, |_tape, vars| {
            let prior = self
                .log_prior_smooth(vars)
                .expect("validated: sampled family with priors");
            let lik = self
                .log_likelihood(vars)
                .expect("validated: shapes checked before recording");
            prior + lik
        })?;
        Ok((value, gradient))
    }

    fn l2_penalty<S: Scalar<R = F>>(&self, theta: &[S]) -> Option<S> {
        let mut acc: Option<S> = None;
        for (i, p) in self.processes.iter().enumerate() {
            if let VariableSpec::Trainable { l2_weight } = p.variable() {
                if *l2_weight == 0.0 {
                    continue;
                }
                let w = F::of(*l2_weight);
                for &t in self.slice(i, theta) {
                    let term = t.sq() * w;
                    acc = Some(match acc {
                        None => term,
                        Some(a) => a + term,
                    });
                }
            }
        }
        acc
    }

    /// Weighted composite mean-squared loss over all terms (plus L2
    /// penalties and operator terms), over plain values or tape variables.
    pub fn mse_loss_generic<S: ResidualScalar<F>>(&self, theta: &[S]) -> Result<S, LikelihoodError> {
        self.require_family("mse_loss", "trainable")?;
        self.check_theta(theta)?;
        let witness = theta[0];
        let mut acc = witness.lift(F::zero());
        for term in &self.terms {
            let w = self.weights.for_tag(term.dataset.tag());
            if w == 0.0 {
                continue;
            }
            if term.dataset.is_empty() {
                return Err(LikelihoodError::EmptyDataset {
                    tag: term.dataset.tag().name(),
                });
            }
            let preds = self.observable_predictions(&term.observable, theta, term.dataset.inputs())?;
            let scale = F::of(w / term.dataset.len() as f64);
            acc = acc + sum_squared_error(witness, term.dataset.targets(), &preds) * scale;
        }
        for op in &self.operator_terms {
            acc = acc + self.operator_mse_generic(op, theta)?;
        }
        if let Some(l2) = self.l2_penalty(theta) {
            acc = acc + l2;
        }
        Ok(acc)
    }

    /// Composite loss value.
    pub fn mse_loss(&self, theta: &[F]) -> Result<F, LikelihoodError> {
        self.mse_loss_generic(theta)
    }

    /// Value and gradient of the composite loss.
    pub fn mse_loss_grad(&self, theta: &[F]) -> Result<(F, Vec<F>), LikelihoodError> {
        self.require_family("mse_loss", "trainable")?;
        self.check_theta(theta)?;
        let (value, gradient) = grad(theta, |_tape, vars| {
            self.mse_loss_generic(vars)
                .expect("validated: shapes checked before recording")
        })?;
        Ok((value, gradient))
    }

    fn operator_mse_generic<S: Scalar<R = F>>(
        &self,
        term: &OperatorTerm<F>,
        theta: &[S],
    ) -> Result<S, LikelihoodError> {
        let idx = self.index_of(&term.key)?;
        let spec = self.processes[idx]
            .surrogate()
            .as_deeponet()
            .expect("validated: operator terms reference branch–trunk processes");
        let params = self.slice(idx, theta);
        let (bp, tp) = spec.split_params(params);
        let ds = &term.dataset;
        // Branch runs once per event and trunk once per point; the pairwise
        // inner products then reuse both tables.
        let branch_out: Vec<Vec<S>> = ds
            .sensor_values
            .iter()
            .map(|s| spec.branch().eval(bp, s))
            .collect::<Result<_, _>>()?;
        let trunk_out: Vec<Vec<S>> = ds
            .points
            .iter()
            .map(|p| spec.trunk().eval(tp, p))
            .collect::<Result<_, _>>()?;
        let witness = theta[0];
        let mut acc = witness.lift(F::zero());
        for (b, targets) in branch_out.iter().zip(&ds.targets) {
            for (t, &target) in trunk_out.iter().zip(targets) {
                let mut pred = b[0] * t[0];
                for (&bk, &tk) in b.iter().zip(t).skip(1) {
                    pred = pred + bk * tk;
                }
                acc = acc + (pred - target).sq();
            }
        }
        let scale = F::of(1.0 / (ds.n_events() * ds.n_points()) as f64);
        Ok(acc * scale)
    }

    /// Mean-squared operator-learning loss of one term, averaged over
    /// events and points.
    pub fn operator_mse(&self, term: &OperatorTerm<F>, theta: &[F]) -> Result<F, LikelihoodError> {
        self.check_theta(theta)?;
        self.operator_mse_generic(term, theta)
    }

    /// Direct output of one process at each point (prediction grids).
    pub fn predict(
        &self,
        key: &str,
        theta: &[F],
        points: &[Vec<F>],
    ) -> Result<Vec<Vec<F>>, LikelihoodError> {
        self.check_theta(theta)?;
        let idx = self.index_of(key)?;
        let params = self.slice(idx, theta);
        points
            .iter()
            .map(|x| Ok(self.processes[idx].surrogate().eval(params, x)?))
            .collect()
    }

    /// Operator prediction `G(λ)(x)` for one event's sensor values over a
    /// set of points.
    pub fn predict_operator(
        &self,
        key: &str,
        theta: &[F],
        sensors: &[F],
        points: &[Vec<F>],
    ) -> Result<Vec<F>, LikelihoodError> {
        self.check_theta(theta)?;
        let idx = self.index_of(key)?;
        let spec = self.processes[idx]
            .surrogate()
            .as_deeponet()
            .ok_or_else(|| {
                LikelihoodError::InvalidModel(format!(
                    "process `{key}` is not a branch–trunk surrogate"
                ))
            })?;
        let params = self.slice(idx, theta);
        points
            .iter()
            .map(|x| Ok(spec.eval_at(params, sensors, x)?))
            .collect()
    }
}

/// Gaussian log likelihood of predictions against targets with known
/// per-component noise, generic over the prediction scalar.
fn gaussian_loglik<S: Scalar>(
    witness: S,
    targets: &[Vec<S::R>],
    noise_std: &[S::R],
    preds: &[Vec<S>],
) -> S {
    let half = S::R::of(0.5);
    let mut const_part = S::R::zero();
    for &std in noise_std {
        let ln_two_pi = S::R::of((2.0 * std::f64::consts::PI).ln());
        const_part = const_part - half * (ln_two_pi + Float::ln(std * std));
    }
    const_part = const_part * S::R::of(targets.len() as f64);
    let mut weighted_sq: Option<S> = None;
    for (target_row, pred_row) in targets.iter().zip(preds) {
        for ((&t, &std), &p) in target_row.iter().zip(noise_std).zip(pred_row) {
            let inv_two_var = half / (std * std);
            let term = (p - t).sq() * inv_two_var;
            weighted_sq = Some(match weighted_sq {
                None => term,
                Some(a) => a + term,
            });
        }
    }
    match weighted_sq {
        None => witness.lift(const_part),
        Some(w) => w.rsub(const_part),
    }
}

/// Sum of squared errors over all rows and components.
fn sum_squared_error<S: Scalar>(witness: S, targets: &[Vec<S::R>], preds: &[Vec<S>]) -> S {
    let mut acc: Option<S> = None;
    for (target_row, pred_row) in targets.iter().zip(preds) {
        for (&t, &p) in target_row.iter().zip(pred_row) {
            let term = (p - t).sq();
            acc = Some(match acc {
                None => term,
                Some(a) => a + term,
            });
        }
    }
    acc.unwrap_or_else(|| witness.lift(S::R::zero()))
}
