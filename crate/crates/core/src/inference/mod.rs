//! Posterior inference: gradient-guided samplers, variational fits,
//! dropout and ensemble heuristics, and a Gaussian curvature approximation,
//! all producing the same [`PosteriorSamples`] container.
//!
//! Samplers operate on anything implementing [`LogDensity`]; a [`UqModel`]
//! plugs in through [`ModelDensity`]. Training-based methods work on the
//! model directly because they need its loss, layout, and layer structure.

mod fit;
mod optim;
mod samplers;

use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::AdError;
use crate::likelihoods::{LikelihoodError, UqModel};
use crate::scalar::Real;

pub use fit::{dens_run, la_run, mcd_run, mfvi_run, sens_run, LaFit, MfviFit};
pub use optim::{cyclic_cosine_lr, exp_decay_lr, Adam};
pub use samplers::{hmc_run, ld_run, leapfrog, mala_run, LeapfrogResult};

/// Errors raised by inference runs.
#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("acceptance rate {rate:.4} after burn-in is below 1%; reduce the step size")]
    ZeroAcceptance { rate: f64 },
    #[error("objective became non-finite at iteration {iteration}")]
    DivergedElbo { iteration: usize },
    #[error("non-finite state encountered during integration")]
    NonFiniteValue,
    #[error("curvature estimate was non-finite")]
    NonPositiveCurvature,
    #[error("ensemble member {member} diverged and no member finished")]
    MemberDiverged { member: usize },
    #[error("invalid inference configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] LikelihoodError),
    #[error("samples file {path}: {source}")]
    SamplesIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("samples file {path}: {reason}")]
    SamplesMalformed { path: String, reason: String },
}

/// The eight inference methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Hmc,
    Mala,
    Ld,
    Mfvi,
    Mcd,
    DeepEnsemble,
    SnapshotEnsemble,
    Laplace,
}

impl Method {
    pub fn id(self) -> &'static str {
        match self {
            Method::Hmc => "hmc",
            Method::Mala => "mala",
            Method::Ld => "ld",
            Method::Mfvi => "mfvi",
            Method::Mcd => "mcd",
            Method::DeepEnsemble => "dens",
            Method::SnapshotEnsemble => "sens",
            Method::Laplace => "la",
        }
    }

    pub fn all() -> [Method; 8] {
        [
            Method::Hmc,
            Method::Mala,
            Method::Ld,
            Method::Mfvi,
            Method::Mcd,
            Method::DeepEnsemble,
            Method::SnapshotEnsemble,
            Method::Laplace,
        ]
    }

    /// Parameter family this method expects of every process.
    pub fn family(self) -> &'static str {
        match self {
            Method::Hmc | Method::Mala | Method::Ld | Method::Laplace => "samplable",
            Method::Mfvi => "variational",
            Method::Mcd | Method::DeepEnsemble | Method::SnapshotEnsemble => "trainable",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::all()
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| format!("unknown inference method `{s}`"))
    }
}

/// Knobs shared by all inference methods; each method reads the subset it
/// documents and ignores the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceConfig {
    pub method: Method,
    /// Posterior draws to keep (or dropout mask draws for MCD).
    pub n_samples: usize,
    /// Discarded warm-up iterations; `None` means a quarter of `n_samples`,
    /// i.e. 20% of the total chain length at the default thinning.
    pub burn_in: Option<usize>,
    /// Keep every `thin`-th post-warm-up draw.
    pub thin: usize,
    /// Integrator / proposal step size.
    pub step_size: f64,
    /// Leapfrog steps per proposal (HMC).
    pub leapfrog_steps: usize,
    /// Base learning rate for optimizer-driven methods.
    pub learning_rate: f64,
    /// Optimizer iterations (total budget for snapshot ensembles).
    pub iterations: usize,
    /// Independent members for deep ensembles.
    pub ensemble_size: usize,
    /// Dropout probability for MCD.
    pub dropout_rate: f64,
    /// Snapshot cycles for snapshot ensembles.
    pub cycles: usize,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            method: Method::Hmc,
            n_samples: 1000,
            burn_in: None,
            thin: 1,
            step_size: 0.01,
            leapfrog_steps: 20,
            learning_rate: 1e-2,
            iterations: 2000,
            ensemble_size: 5,
            dropout_rate: 0.05,
            cycles: 5,
            seed: 0,
        }
    }
}

impl InferenceConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_samples / 4)
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.n_samples == 0 {
            return Err(InferenceError::InvalidConfig(
                "n_samples must be at least 1".to_string(),
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(InferenceError::InvalidConfig(
                "step_size must be positive and finite".to_string(),
            ));
        }
        if self.leapfrog_steps == 0 {
            return Err(InferenceError::InvalidConfig(
                "leapfrog_steps must be at least 1".to_string(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(InferenceError::InvalidConfig(
                "learning_rate must be positive and finite".to_string(),
            ));
        }
        if self.iterations == 0 {
            return Err(InferenceError::InvalidConfig(
                "iterations must be at least 1".to_string(),
            ));
        }
        if self.thin == 0 {
            return Err(InferenceError::InvalidConfig(
                "thin must be at least 1".to_string(),
            ));
        }
        if self.ensemble_size == 0 {
            return Err(InferenceError::InvalidConfig(
                "ensemble_size must be at least 1".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(InferenceError::InvalidConfig(
                "dropout_rate must lie in [0, 1)".to_string(),
            ));
        }
        if self.cycles == 0 {
            return Err(InferenceError::InvalidConfig(
                "cycles must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Parameter draws from one inference run, with run metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSamples<F> {
    pub method: &'static str,
    pub seed: u64,
    /// `M x P` draws, one row per sample.
    pub samples: Vec<Vec<F>>,
    /// Post-warm-up acceptance rate for Metropolis-style samplers.
    pub acceptance_rate: Option<f64>,
    /// Objective trace (log posterior, ELBO, or loss depending on method).
    pub trace: Vec<f64>,
    /// Human-readable incidents (divergent members, clamped curvature).
    pub notes: Vec<String>,
}

impl<F: Real> PosteriorSamples<F> {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |r| r.len())
    }

    pub(crate) fn check_finite(&self) -> Result<(), InferenceError> {
        for row in &self.samples {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(InferenceError::NonFiniteValue);
            }
        }
        Ok(())
    }

    /// Write the draws as CSV; the comment line keeps the run metadata.
    pub fn write_csv(&self, path: &Path) -> Result<(), InferenceError> {
        use std::fmt::Write as _;
        let mut text = String::new();
        let acc = match self.acceptance_rate {
            Some(a) => format!("{a:.16e}"),
            None => "na".to_string(),
        };
        writeln!(
            text,
            "# method={} seed={} acceptance={acc}",
            self.method, self.seed
        )
        .expect("string write cannot fail");
        let header: Vec<String> = (0..self.dim()).map(|i| format!("theta_{i}")).collect();
        writeln!(text, "{}", header.join(",")).expect("string write cannot fail");
        for row in &self.samples {
            let cells: Vec<String> = row
                .iter()
                .map(|v| format!("{:.16e}", v.to_f64_lossy()))
                .collect();
            writeln!(text, "{}", cells.join(",")).expect("string write cannot fail");
        }
        std::fs::write(path, text).map_err(|source| InferenceError::SamplesIo {
            path: path.display().to_string(),
            source,
        })
    }

    /// Read draws written by [`Self::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self, InferenceError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| InferenceError::SamplesIo {
            path: shown.clone(),
            source,
        })?;
        let malformed = |reason: String| InferenceError::SamplesMalformed {
            path: shown.clone(),
            reason,
        };
        let mut lines = text.lines();
        let meta = lines
            .next()
            .ok_or_else(|| malformed("empty file".to_string()))?;
        let mut method = "unknown";
        let mut seed = 0u64;
        let mut acceptance_rate = None;
        for tok in meta.trim_start_matches('#').split_whitespace() {
            if let Some(m) = tok.strip_prefix("method=") {
                method = Method::from_str(m).map(Method::id).unwrap_or("unknown");
            } else if let Some(s) = tok.strip_prefix("seed=") {
                seed = s
                    .parse()
                    .map_err(|_| malformed(format!("bad seed `{s}`")))?;
            } else if let Some(a) = tok.strip_prefix("acceptance=") {
                if a != "na" {
                    acceptance_rate = Some(
                        a.parse()
                            .map_err(|_| malformed(format!("bad acceptance `{a}`")))?,
                    );
                }
            }
        }
        let header = lines
            .next()
            .ok_or_else(|| malformed("missing header".to_string()))?;
        let dim = header.split(',').count();
        let mut samples = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map(F::of)
                        .map_err(|_| malformed(format!("bad number `{t}`")))
                })
                .collect::<Result<Vec<F>, _>>()?;
            if row.len() != dim {
                return Err(malformed(format!(
                    "row has {} fields, header has {dim}",
                    row.len()
                )));
            }
            samples.push(row);
        }
        Ok(PosteriorSamples {
            method,
            seed,
            samples,
            acceptance_rate,
            trace: Vec::new(),
            notes: Vec::new(),
        })
    }
}

/// A differentiable unnormalized log density over a fixed-dimension state.
pub trait LogDensity<F: Real> {
    fn dim(&self) -> usize;

    /// Log density; `-inf` marks zero-probability states.
    fn value(&self, theta: &[F]) -> Result<F, InferenceError>;

    /// Log density and gradient; zero-probability states report a zero
    /// gradient alongside `-inf`.
    fn value_and_grad(&self, theta: &[F]) -> Result<(F, Vec<F>), InferenceError>;
}

/// A model's log posterior as a sampling target. Numeric overflow inside
/// the tape (from extreme proposals) is reported as a zero-probability
/// state rather than an error, so chains reject and move on.
pub struct ModelDensity<'m, F: Real> {
    model: &'m UqModel<F>,
}

impl<'m, F: Real> ModelDensity<'m, F> {
    pub fn new(model: &'m UqModel<F>) -> Self {
        ModelDensity { model }
    }
}

impl<F: Real> LogDensity<F> for ModelDensity<'_, F> {
    fn dim(&self) -> usize {
        self.model.param_count()
    }

    fn value(&self, theta: &[F]) -> Result<F, InferenceError> {
        let v = self.model.log_posterior(theta)?;
        Ok(if v.is_nan() { F::neg_infinity() } else { v })
    }

    fn value_and_grad(&self, theta: &[F]) -> Result<(F, Vec<F>), InferenceError> {
        match self.model.log_posterior_grad(theta) {
            Ok((v, g)) if v.is_nan() => Ok((F::neg_infinity(), vec![F::zero(); g.len()])),
            Ok(pair) => Ok(pair),
            Err(LikelihoodError::Ad(AdError::NonFiniteValue)) => {
                Ok((F::neg_infinity(), vec![F::zero(); theta.len()]))
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Seed stream for sampler starting points, kept distinct from the seed the
/// samplers use for their own draws so the two sequences never overlap.
const INIT_STREAM: u64 = 0x494E_4954;

/// Dispatch the configured method on a compiled model. Chain samplers start
/// from a seeded draw of the model's initialization distribution; the other
/// methods own their initialization internally.
pub fn run_model<F: Real>(
    model: &UqModel<F>,
    cfg: &InferenceConfig,
) -> Result<PosteriorSamples<F>, InferenceError> {
    match cfg.method {
        Method::Hmc | Method::Mala | Method::Ld => {
            let density = ModelDensity::new(model);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ INIT_STREAM);
            let init = model.init_point(&mut rng);
            match cfg.method {
                Method::Hmc => hmc_run(&density, &init, cfg),
                Method::Mala => mala_run(&density, &init, cfg),
                _ => ld_run(&density, &init, cfg),
            }
        }
        Method::Mfvi => Ok(mfvi_run(model, cfg)?.samples),
        Method::Mcd => mcd_run(model, cfg),
        Method::DeepEnsemble => dens_run(model, cfg),
        Method::SnapshotEnsemble => sens_run(model, cfg),
        Method::Laplace => Ok(la_run(model, cfg)?.samples),
    }
}
