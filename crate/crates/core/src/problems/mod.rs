//! Benchmark catalog: each problem bundles a seeded noisy-data recipe, a
//! reference solution, residual definitions, and ready-to-run model
//! assembly for every inference family.

mod ode;
mod residuals;

pub use ode::{ko_reference, ko_rhs, rk4_solve, Trajectory};
pub use residuals::{DiffusionReactionResidual, KdvResidual, KoSystemResidual, ReactionRate};

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::inference::{InferenceConfig, Method};
use crate::likelihoods::{
    DataTag, Dataset, LikelihoodError, LikelihoodTerm, Observable, OperatorDataset, Rule, UqModel,
};
use crate::processes::{Prior, Process, ProcessError, VariableSpec, VariationalParams};
use crate::scalar::Real;
use crate::surrogates::{
    Activation, DeepOnetSpec, FnnSpec, IdentitySpec, Link, Surrogate, SurrogateError,
};

/// Failure modes of catalog lookup, data generation, and model assembly.
#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem id `{0}`")]
    UnknownProblem(String),
    /// Generated data is missing a dataset the model assembly expects.
    #[error("generated data has no dataset named `{0}`")]
    MissingDataset(String),
    /// An integration span or step size is empty, reversed, or non-finite.
    #[error("integration span must be forward and the step positive")]
    InvalidSpan,
    /// The integrated state left the finite range.
    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },
    /// The problem cannot be posed for the requested parameter treatment.
    #[error("problem `{id}` does not support the {family} family")]
    UnsupportedFamily {
        id: &'static str,
        family: &'static str,
    },
    /// A surrogate override names an unknown process or changes the
    /// network's interface dimensions.
    #[error("invalid surrogate override: {0}")]
    InvalidOverride(String),
    #[error(transparent)]
    Model(#[from] LikelihoodError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

/// The three parameter treatments a model can be assembled for, keyed by
/// the inference method that will consume it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Samplable,
    Variational,
    Trainable,
}

impl Family {
    pub fn for_method(method: Method) -> Family {
        match method {
            Method::Hmc | Method::Mala | Method::Ld | Method::Laplace => Family::Samplable,
            Method::Mfvi => Family::Variational,
            Method::Mcd | Method::DeepEnsemble | Method::SnapshotEnsemble => Family::Trainable,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Family::Samplable => "samplable",
            Family::Variational => "variational",
            Family::Trainable => "trainable",
        }
    }
}

/// Prior choice for the inferred reaction rate of the inverse
/// diffusion-reaction problem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KrPrior {
    /// `k_r ~ N(0, 1)` directly on the rate.
    #[default]
    Normal,
    /// `k_r ~ HalfNormal(1)`, restricting the rate to be non-negative.
    HalfNormal,
    /// `ln k_r ~ N(0, 1)`: the process parameter lives in log space and the
    /// rate is exposed through an exponential link.
    LogNormal,
}

impl KrPrior {
    pub fn id(self) -> &'static str {
        match self {
            KrPrior::Normal => "normal",
            KrPrior::HalfNormal => "half_normal",
            KrPrior::LogNormal => "log_normal",
        }
    }

    pub fn from_id(s: &str) -> Option<KrPrior> {
        match s {
            "normal" => Some(KrPrior::Normal),
            "half_normal" => Some(KrPrior::HalfNormal),
            "log_normal" => Some(KrPrior::LogNormal),
            _ => None,
        }
    }
}

/// Replacement architecture for one of a problem's network surrogates. The
/// input and output widths must match the problem's interface; the input
/// normalization is inherited from the default unless both affine parts
/// are given.
#[derive(Clone, Debug, PartialEq)]
pub struct NetOverride {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub input_shift: Option<Vec<f64>>,
    pub input_scale: Option<Vec<f64>>,
}

/// A dataset labeled with the name it is dumped under.
#[derive(Clone, Debug)]
pub struct NamedDataset<F> {
    pub name: &'static str,
    pub dataset: Dataset<F>,
}

/// Everything a problem's seeded recipe produces.
#[derive(Clone, Debug)]
pub struct GeneratedData<F> {
    pub datasets: Vec<NamedDataset<F>>,
    pub operator: Option<OperatorDataset<F>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ProblemId {
    AntiderivativeOperator,
    DiffusionReactionForward,
    DiffusionReactionInverse,
    KdvInverse,
    KraichnanOrszag,
    SineRegression,
}

/// One catalog entry: identity plus any problem-level options.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Problem {
    id: ProblemId,
    kr_prior: KrPrior,
}

const DR_DIFFUSION: f64 = 0.01;
const DR_REACTION: f64 = 0.2;
const KO_SPAN: (f64, f64) = (0.0, 10.0);
const ANTIDER_SENSORS: usize = 21;
const ANTIDER_OUTPUTS: usize = 11;
const ANTIDER_FUNCTIONS: usize = 500;

impl Problem {
    /// Look up a problem by its stable id.
    pub fn from_id(id: &str) -> Result<Problem, ProblemError> {
        let inner = match id {
            "antiderivative_operator" => ProblemId::AntiderivativeOperator,
            "diffusion_reaction_forward" => ProblemId::DiffusionReactionForward,
            "diffusion_reaction_inverse" => ProblemId::DiffusionReactionInverse,
            "kdv_inverse" => ProblemId::KdvInverse,
            "kraichnan_orszag" => ProblemId::KraichnanOrszag,
            "sine_regression" => ProblemId::SineRegression,
            other => return Err(ProblemError::UnknownProblem(other.to_string())),
        };
        Ok(Problem {
            id: inner,
            kr_prior: KrPrior::default(),
        })
    }

    /// Every catalog entry, sorted by id.
    pub fn all_ids() -> &'static [&'static str] {
        &[
            "antiderivative_operator",
            "diffusion_reaction_forward",
            "diffusion_reaction_inverse",
            "kdv_inverse",
            "kraichnan_orszag",
            "sine_regression",
        ]
    }

    pub fn id(&self) -> &'static str {
        match self.id {
            ProblemId::AntiderivativeOperator => "antiderivative_operator",
            ProblemId::DiffusionReactionForward => "diffusion_reaction_forward",
            ProblemId::DiffusionReactionInverse => "diffusion_reaction_inverse",
            ProblemId::KdvInverse => "kdv_inverse",
            ProblemId::KraichnanOrszag => "kraichnan_orszag",
            ProblemId::SineRegression => "sine_regression",
        }
    }

    /// Select the reaction-rate prior (inverse diffusion-reaction only;
    /// ignored elsewhere).
    pub fn with_kr_prior(mut self, prior: KrPrior) -> Problem {
        self.kr_prior = prior;
        self
    }

    pub fn kr_prior(&self) -> KrPrior {
        self.kr_prior
    }

    /// The process key whose output is the problem's predicted function.
    pub fn observed_process(&self) -> &'static str {
        "u"
    }

    /// The known observation-noise level feeding the aleatoric variance.
    pub fn noise_std(&self) -> f64 {
        match self.id {
            ProblemId::SineRegression | ProblemId::KraichnanOrszag | ProblemId::KdvInverse => 0.05,
            ProblemId::DiffusionReactionForward
            | ProblemId::DiffusionReactionInverse
            | ProblemId::AntiderivativeOperator => 0.01,
        }
    }

    /// An `n`-point equidistant grid over the problem's natural domain.
    pub fn test_grid<F: Real>(&self, n: usize) -> Vec<Vec<F>> {
        match self.id {
            ProblemId::SineRegression
            | ProblemId::DiffusionReactionForward
            | ProblemId::DiffusionReactionInverse => {
                equidistant::<F>(n, -1.0, 1.0).into_iter().map(|x| vec![x]).collect()
            }
            ProblemId::KraichnanOrszag => equidistant::<F>(n, KO_SPAN.0, KO_SPAN.1)
                .into_iter()
                .map(|t| vec![t])
                .collect(),
            ProblemId::AntiderivativeOperator => {
                equidistant::<F>(n, 0.0, 1.0).into_iter().map(|x| vec![x]).collect()
            }
            // The space-time slice at t = 0.
            ProblemId::KdvInverse => equidistant::<F>(n, -5.0, 5.0)
                .into_iter()
                .map(|x| vec![x, F::zero()])
                .collect(),
        }
    }

    /// The clean reference solution at the given input points.
    pub fn reference_on<F: Real>(&self, inputs: &[Vec<F>]) -> Result<Vec<Vec<F>>, ProblemError> {
        match self.id {
            ProblemId::SineRegression => Ok(inputs
                .iter()
                .map(|x| vec![F::of(sine_truth(x[0].to_f64_lossy()))])
                .collect()),
            ProblemId::DiffusionReactionForward | ProblemId::DiffusionReactionInverse => Ok(inputs
                .iter()
                .map(|x| vec![F::of(dr_u_star(x[0].to_f64_lossy()))])
                .collect()),
            ProblemId::KraichnanOrszag => {
                let traj = self.ko_trajectory::<F>()?;
                Ok(inputs.iter().map(|t| traj.interpolate(t[0])).collect())
            }
            ProblemId::AntiderivativeOperator => Ok(inputs
                .iter()
                .map(|x| vec![F::of(antider_u_star(x[0].to_f64_lossy()))])
                .collect()),
            ProblemId::KdvInverse => Ok(inputs
                .iter()
                .map(|x| {
                    vec![F::of(kdv_soliton(
                        x[0].to_f64_lossy(),
                        x[1].to_f64_lossy(),
                    ))]
                })
                .collect()),
        }
    }

    /// For operator problems, the canonical held-out input function
    /// (`sin(πx)` at the sensors) whose image [`Self::reference_on`]
    /// describes.
    pub fn canonical_operator_input<F: Real>(&self) -> Option<Vec<F>> {
        match self.id {
            ProblemId::AntiderivativeOperator => Some(
                equidistant::<F>(ANTIDER_SENSORS, 0.0, 1.0)
                    .into_iter()
                    .map(|x| F::of((std::f64::consts::PI * x.to_f64_lossy()).sin()))
                    .collect(),
            ),
            _ => None,
        }
    }

    fn ko_trajectory<F: Real>(&self) -> Result<Trajectory<F>, ProblemError> {
        ko_reference(
            F::one(),
            F::one(),
            [F::one(), F::one(), F::of(0.5)],
            (F::of(KO_SPAN.0), F::of(KO_SPAN.1)),
        )
    }

    /// Generate the problem's noisy datasets from a seed. Identical seeds
    /// produce bit-identical data.
    pub fn make_data<F: Real>(&self, seed: u64) -> Result<GeneratedData<F>, ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = F::of(self.noise_std());
        match self.id {
            ProblemId::SineRegression => {
                let xs = vec![F::of(-0.7), F::of(-0.5), F::of(-0.3)];
                let ds = noisy_dataset(
                    xs.into_iter().map(|x| vec![x]).collect(),
                    |x| vec![sine_truth(x[0])],
                    noise,
                    DataTag::U,
                    &mut rng,
                )?;
                Ok(GeneratedData {
                    datasets: vec![NamedDataset { name: "u", dataset: ds }],
                    operator: None,
                })
            }
            ProblemId::DiffusionReactionForward => {
                let f_inputs: Vec<Vec<F>> = (0..10)
                    .map(|_| vec![F::of(-1.0) + F::unit_uniform(&mut rng) * F::of(2.0)])
                    .collect();
                let f_ds = noisy_dataset(
                    f_inputs,
                    |x| vec![dr_f_star(x[0])],
                    noise,
                    DataTag::F,
                    &mut rng,
                )?;
                let b_ds = Dataset::new(
                    vec![vec![F::of(-1.0)], vec![F::of(1.0)]],
                    vec![vec![F::zero()], vec![F::zero()]],
                    vec![noise],
                    DataTag::B,
                )?;
                Ok(GeneratedData {
                    datasets: vec![
                        NamedDataset { name: "f", dataset: f_ds },
                        NamedDataset { name: "b", dataset: b_ds },
                    ],
                    operator: None,
                })
            }
            ProblemId::DiffusionReactionInverse => {
                let u_inputs: Vec<Vec<F>> = (0..5)
                    .map(|_| vec![F::of(-1.0) + F::unit_uniform(&mut rng) * F::of(2.0)])
                    .collect();
                let u_ds = noisy_dataset(
                    u_inputs,
                    |x| vec![dr_u_star(x[0])],
                    noise,
                    DataTag::U,
                    &mut rng,
                )?;
                let f_inputs: Vec<Vec<F>> =
                    equidistant::<F>(17, -1.0, 1.0).into_iter().map(|x| vec![x]).collect();
                let f_ds = noisy_dataset(
                    f_inputs,
                    |x| vec![dr_f_star(x[0])],
                    noise,
                    DataTag::F,
                    &mut rng,
                )?;
                Ok(GeneratedData {
                    datasets: vec![
                        NamedDataset { name: "u", dataset: u_ds },
                        NamedDataset { name: "f", dataset: f_ds },
                    ],
                    operator: None,
                })
            }
            ProblemId::KraichnanOrszag => {
                let traj = self.ko_trajectory::<F>()?;
                let mut datasets = Vec::new();
                for (name, component, count) in
                    [("x1", 0usize, 11usize), ("x2", 1, 7), ("x3", 2, 11)]
                {
                    let times = equidistant::<F>(count, KO_SPAN.0, KO_SPAN.1);
                    let inputs: Vec<Vec<F>> = times.iter().map(|&t| vec![t]).collect();
                    let targets: Vec<Vec<F>> = times
                        .iter()
                        .map(|&t| {
                            vec![traj.interpolate(t)[component] + F::std_normal(&mut rng) * noise]
                        })
                        .collect();
                    datasets.push(NamedDataset {
                        name,
                        dataset: Dataset::new(inputs, targets, vec![noise], DataTag::U)?,
                    });
                }
                let colloc: Vec<Vec<F>> = equidistant::<F>(50, KO_SPAN.0, KO_SPAN.1)
                    .into_iter()
                    .map(|t| vec![t])
                    .collect();
                let n_colloc = colloc.len();
                datasets.push(NamedDataset {
                    name: "f",
                    dataset: Dataset::new(
                        colloc,
                        vec![vec![F::zero(); 3]; n_colloc],
                        vec![noise; 3],
                        DataTag::F,
                    )?,
                });
                Ok(GeneratedData { datasets, operator: None })
            }
            ProblemId::AntiderivativeOperator => Ok(GeneratedData {
                datasets: Vec::new(),
                operator: Some(antiderivative_data(
                    ANTIDER_FUNCTIONS,
                    ANTIDER_SENSORS,
                    ANTIDER_OUTPUTS,
                    seed,
                )),
            }),
            ProblemId::KdvInverse => {
                let u_inputs: Vec<Vec<F>> = (0..40).map(|_| kdv_point(&mut rng)).collect();
                let u_ds = noisy_dataset(
                    u_inputs,
                    |x| vec![kdv_soliton(x[0], x[1])],
                    noise,
                    DataTag::U,
                    &mut rng,
                )?;
                let colloc: Vec<Vec<F>> = (0..60).map(|_| kdv_point(&mut rng)).collect();
                let n_colloc = colloc.len();
                let f_ds = Dataset::new(
                    colloc,
                    vec![vec![F::zero()]; n_colloc],
                    vec![noise],
                    DataTag::F,
                )?;
                Ok(GeneratedData {
                    datasets: vec![
                        NamedDataset { name: "u", dataset: u_ds },
                        NamedDataset { name: "f", dataset: f_ds },
                    ],
                    operator: None,
                })
            }
        }
    }

    /// Assemble the problem's model for one parameter treatment; `seed`
    /// fixes surrogate and variational initializations.
    pub fn build_model<F: Real>(
        &self,
        data: &GeneratedData<F>,
        family: Family,
        seed: u64,
    ) -> Result<UqModel<F>, ProblemError> {
        self.build_model_custom(data, family, seed, &HashMap::new())
    }

    /// [`Self::build_model`] with replacement architectures for selected
    /// network surrogates, keyed by process.
    pub fn build_model_custom<F: Real>(
        &self,
        data: &GeneratedData<F>,
        family: Family,
        seed: u64,
        overrides: &HashMap<String, NetOverride>,
    ) -> Result<UqModel<F>, ProblemError> {
        let overridable: &[&str] = match self.id {
            ProblemId::AntiderivativeOperator => &[],
            _ => &["u"],
        };
        for key in overrides.keys() {
            if !overridable.contains(&key.as_str()) {
                return Err(ProblemError::InvalidOverride(format!(
                    "process `{key}` of `{}` cannot be overridden",
                    self.id()
                )));
            }
        }
        match self.id {
            ProblemId::SineRegression => {
                let net = resolve_net(
                    "u",
                    FnnSpec::new(vec![1, 16, 16, 1], Activation::Tanh)?,
                    overrides,
                )?;
                let u = Process::new("u", net.clone().into(), net_variable(&net, family, seed))?;
                let terms = vec![LikelihoodTerm {
                    dataset: named(data, "u")?.clone(),
                    observable: Observable::process("u"),
                }];
                Ok(UqModel::new(vec![u], terms)?)
            }
            ProblemId::DiffusionReactionForward => {
                let net = resolve_net(
                    "u",
                    FnnSpec::new(vec![1, 16, 16, 1], Activation::Tanh)?,
                    overrides,
                )?;
                let u = Process::new("u", net.clone().into(), net_variable(&net, family, seed))?;
                let residual = DiffusionReactionResidual {
                    diffusion: DR_DIFFUSION,
                    reaction: ReactionRate::Fixed(DR_REACTION),
                };
                let terms = vec![
                    LikelihoodTerm {
                        dataset: named(data, "f")?.clone(),
                        observable: Observable::residual(Rule(residual)),
                    },
                    LikelihoodTerm {
                        dataset: named(data, "b")?.clone(),
                        observable: Observable::process("u"),
                    },
                ];
                Ok(UqModel::new(vec![u], terms)?)
            }
            ProblemId::DiffusionReactionInverse => {
                let net = resolve_net(
                    "u",
                    FnnSpec::new(vec![1, 16, 16, 1], Activation::Tanh)?,
                    overrides,
                )?;
                let u = Process::new("u", net.clone().into(), net_variable(&net, family, seed))?;
                let (kr_surrogate, kr_prior) = match self.kr_prior {
                    KrPrior::Normal => (
                        Surrogate::from(IdentitySpec::new(1)?),
                        Prior::standard_normal(),
                    ),
                    KrPrior::HalfNormal => (
                        Surrogate::from(IdentitySpec::new(1)?),
                        Prior::HalfNormal { std: 1.0 },
                    ),
                    KrPrior::LogNormal => (
                        Surrogate::from(IdentitySpec::new(1)?.with_link(Link::Exp)),
                        Prior::standard_normal(),
                    ),
                };
                let kr = Process::new(
                    "k_r",
                    kr_surrogate,
                    const_variable(kr_prior, 1, family),
                )?;
                let residual = DiffusionReactionResidual {
                    diffusion: DR_DIFFUSION,
                    reaction: ReactionRate::FromProcess("k_r".to_string()),
                };
                let terms = vec![
                    LikelihoodTerm {
                        dataset: named(data, "u")?.clone(),
                        observable: Observable::process("u"),
                    },
                    LikelihoodTerm {
                        dataset: named(data, "f")?.clone(),
                        observable: Observable::residual(Rule(residual)),
                    },
                ];
                Ok(UqModel::new(vec![u, kr], terms)?)
            }
            ProblemId::KraichnanOrszag => {
                let net = resolve_net(
                    "u",
                    FnnSpec::new(vec![1, 20, 20, 3], Activation::Tanh)?
                        .with_input_affine(vec![5.0], vec![5.0])?,
                    overrides,
                )?;
                let u = Process::new("u", net.clone().into(), net_variable(&net, family, seed))?;
                let a = Process::new(
                    "a",
                    IdentitySpec::new(1)?.into(),
                    const_variable(Prior::standard_normal(), 1, family),
                )?;
                let b = Process::new(
                    "b",
                    IdentitySpec::new(1)?.into(),
                    const_variable(Prior::standard_normal(), 1, family),
                )?;
                let mut terms = Vec::new();
                for (name, component) in [("x1", 0usize), ("x2", 1), ("x3", 2)] {
                    terms.push(LikelihoodTerm {
                        dataset: named(data, name)?.clone(),
                        observable: Observable::process_component("u", component),
                    });
                }
                terms.push(LikelihoodTerm {
                    dataset: named(data, "f")?.clone(),
                    observable: Observable::residual(Rule(KoSystemResidual)),
                });
                Ok(UqModel::new(vec![u, a, b], terms)?)
            }
            ProblemId::AntiderivativeOperator => {
                if family != Family::Trainable {
                    return Err(ProblemError::UnsupportedFamily {
                        id: self.id(),
                        family: family.id(),
                    });
                }
                let branch = FnnSpec::new(vec![ANTIDER_SENSORS, 24, 16], Activation::Tanh)?;
                let trunk = FnnSpec::new(vec![1, 24, 16], Activation::Tanh)?;
                let onet = DeepOnetSpec::new(branch, trunk)?;
                let u = Process::new("u", onet.into(), VariableSpec::trainable())?;
                let operator = data
                    .operator
                    .clone()
                    .ok_or_else(|| ProblemError::MissingDataset("operator".to_string()))?;
                let model = UqModel::new(vec![u], vec![])?;
                Ok(model.with_operator_term("u", operator)?)
            }
            ProblemId::KdvInverse => {
                let net = resolve_net(
                    "u",
                    FnnSpec::new(vec![2, 16, 16, 1], Activation::Tanh)?
                        .with_input_affine(vec![0.0, 0.0], vec![5.0, 1.0])?,
                    overrides,
                )?;
                let u = Process::new("u", net.clone().into(), net_variable(&net, family, seed))?;
                let l1 = Process::new(
                    "lambda_1",
                    IdentitySpec::new(1)?.into(),
                    const_variable(Prior::standard_normal(), 1, family),
                )?;
                let l2 = Process::new(
                    "lambda_2",
                    IdentitySpec::new(1)?.into(),
                    const_variable(Prior::standard_normal(), 1, family),
                )?;
                let terms = vec![
                    LikelihoodTerm {
                        dataset: named(data, "u")?.clone(),
                        observable: Observable::process("u"),
                    },
                    LikelihoodTerm {
                        dataset: named(data, "f")?.clone(),
                        observable: Observable::residual(Rule(KdvResidual)),
                    },
                ];
                Ok(UqModel::new(vec![u, l1, l2], terms)?)
            }
        }
    }

    /// A tuned starting configuration for running `method` on this problem
    /// at desk scale.
    pub fn default_config(&self, method: Method) -> InferenceConfig {
        let mut cfg = InferenceConfig {
            method,
            seed: 0,
            ..InferenceConfig::default()
        };
        match method {
            Method::Hmc => {
                cfg.n_samples = 500;
                cfg.burn_in = Some(200);
                cfg.leapfrog_steps = 30;
                cfg.step_size = match self.id {
                    ProblemId::SineRegression => 0.004,
                    ProblemId::KraichnanOrszag => 0.002,
                    ProblemId::KdvInverse => 0.001,
                    _ => 0.002,
                };
            }
            Method::Mala => {
                cfg.n_samples = 4000;
                cfg.burn_in = Some(1000);
                cfg.step_size = 0.002;
            }
            Method::Ld => {
                cfg.n_samples = 4000;
                cfg.burn_in = Some(1000);
                cfg.step_size = 0.002;
            }
            Method::Mfvi => {
                cfg.iterations = 5000;
                cfg.learning_rate = 0.02;
                cfg.n_samples = 300;
            }
            Method::Mcd => {
                cfg.iterations = 2500;
                cfg.learning_rate = 0.01;
                cfg.dropout_rate = 0.05;
                cfg.n_samples = 100;
            }
            Method::DeepEnsemble => {
                cfg.iterations = 2500;
                cfg.learning_rate = 0.02;
                cfg.ensemble_size = 5;
            }
            Method::SnapshotEnsemble => {
                cfg.iterations = 3000;
                cfg.cycles = 5;
                cfg.learning_rate = 0.02;
            }
            Method::Laplace => {
                cfg.iterations = 2500;
                cfg.learning_rate = 0.005;
                cfg.n_samples = 1000;
            }
        }
        cfg
    }
}

/// Synthetic operator-learning data for the antiderivative map: input
/// functions `λ(x) = Σₖ cₖ sin(kπx)` with `cₖ ~ N(0, 1/k²)` read at
/// equidistant sensors on `[0, 1]`, and exact antiderivatives
/// `u(x) = Σₖ cₖ (1 - cos(kπx)) / (kπ)` at equidistant output points.
pub fn antiderivative_data<F: Real>(
    n_functions: usize,
    n_sensors: usize,
    n_outputs: usize,
    seed: u64,
) -> OperatorDataset<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sensor_xs = equidistant::<F>(n_sensors, 0.0, 1.0);
    let output_xs = equidistant::<F>(n_outputs, 0.0, 1.0);
    let pi = std::f64::consts::PI;
    let mut sensor_values = Vec::with_capacity(n_functions);
    let mut targets = Vec::with_capacity(n_functions);
    for _ in 0..n_functions {
        let coeffs: Vec<f64> = (1..=3)
            .map(|k| f64::std_normal(&mut rng) / k as f64)
            .collect();
        let lambda = |x: f64| -> f64 {
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * ((i + 1) as f64 * pi * x).sin())
                .sum()
        };
        let u = |x: f64| -> f64 {
            coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let k = (i + 1) as f64;
                    c * (1.0 - (k * pi * x).cos()) / (k * pi)
                })
                .sum()
        };
        sensor_values.push(
            sensor_xs
                .iter()
                .map(|x| F::of(lambda(x.to_f64_lossy())))
                .collect(),
        );
        targets.push(
            output_xs
                .iter()
                .map(|x| F::of(u(x.to_f64_lossy())))
                .collect(),
        );
    }
    OperatorDataset {
        sensor_values,
        points: output_xs.into_iter().map(|x| vec![x]).collect(),
        targets,
        noise_std: F::of(0.01),
    }
}

/// The clean target of the sine benchmark, `1.5 sin(11x)`.
pub fn sine_truth(x: f64) -> f64 {
    1.5 * (11.0 * x).sin()
}

/// Manufactured diffusion-reaction solution `u*(x) = 0.3 sin(πx)`.
pub fn dr_u_star(x: f64) -> f64 {
    0.3 * (std::f64::consts::PI * x).sin()
}

/// The source `f* = D u*'' - k_r u*³` induced by the manufactured
/// solution.
pub fn dr_f_star(x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let u = dr_u_star(x);
    DR_DIFFUSION * (-0.3 * pi * pi * (pi * x).sin()) - DR_REACTION * u * u * u
}

/// Single-soliton solution `2 sech²(x + t)` of the catalog's
/// Korteweg–de Vries form (speed -1, amplitude 2).
pub fn kdv_soliton(x: f64, t: f64) -> f64 {
    let sech = 1.0 / (x + t).cosh();
    2.0 * sech * sech
}

/// The canonical held-out operator input/output pair: the antiderivative
/// of `sin(πx)`, namely `(1 - cos(πx)) / π`.
pub fn antider_u_star(x: f64) -> f64 {
    let pi = std::f64::consts::PI;
    (1.0 - (pi * x).cos()) / pi
}

fn kdv_point<F: Real>(rng: &mut ChaCha8Rng) -> Vec<F> {
    let x = F::of(-5.0) + F::unit_uniform(rng) * F::of(10.0);
    let t = F::of(-1.0) + F::unit_uniform(rng) * F::of(2.0);
    vec![x, t]
}

fn equidistant<F: Real>(n: usize, a: f64, b: f64) -> Vec<F> {
    if n == 1 {
        return vec![F::of(a)];
    }
    (0..n)
        .map(|i| F::of(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Evaluate a clean scalar recipe on the inputs and add seeded Gaussian
/// noise.
fn noisy_dataset<F: Real>(
    inputs: Vec<Vec<F>>,
    clean: impl Fn(&[f64]) -> Vec<f64>,
    noise: F,
    tag: DataTag,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset<F>, ProblemError> {
    let targets: Vec<Vec<F>> = inputs
        .iter()
        .map(|x| {
            let raw: Vec<f64> = x.iter().map(|v| v.to_f64_lossy()).collect();
            clean(&raw)
                .into_iter()
                .map(|v| F::of(v) + F::std_normal(rng) * noise)
                .collect()
        })
        .collect();
    let d_out = targets[0].len();
    Ok(Dataset::new(inputs, targets, vec![noise; d_out], tag)?)
}

fn named<'d, F>(data: &'d GeneratedData<F>, name: &str) -> Result<&'d Dataset<F>, ProblemError> {
    data.datasets
        .iter()
        .find(|d| d.name == name)
        .map(|d| &d.dataset)
        .ok_or_else(|| ProblemError::MissingDataset(name.to_string()))
}

fn resolve_net(
    key: &str,
    default: FnnSpec,
    overrides: &HashMap<String, NetOverride>,
) -> Result<FnnSpec, ProblemError> {
    let Some(o) = overrides.get(key) else {
        return Ok(default);
    };
    if o.widths.first() != default.widths().first() || o.widths.last() != default.widths().last() {
        return Err(ProblemError::InvalidOverride(format!(
            "override for `{key}` must keep input width {} and output width {}",
            default.widths()[0],
            default.widths()[default.widths().len() - 1],
        )));
    }
    let spec = FnnSpec::new(o.widths.clone(), o.activation)?;
    match (&o.input_shift, &o.input_scale) {
        (Some(shift), Some(scale)) => Ok(spec.with_input_affine(shift.clone(), scale.clone())?),
        (None, None) => {
            if default.input_shift().is_empty() {
                Ok(spec)
            } else {
                Ok(spec.with_input_affine(
                    default.input_shift().to_vec(),
                    default.input_scale().to_vec(),
                )?)
            }
        }
        _ => Err(ProblemError::InvalidOverride(
            "input shift and scale must be given together".to_string(),
        )),
    }
}

fn net_variable(spec: &FnnSpec, family: Family, seed: u64) -> VariableSpec {
    match family {
        Family::Samplable => VariableSpec::samplable_standard(),
        Family::Variational => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5641_5249);
            let mean: Vec<f64> = spec.init_params(&mut rng);
            VariableSpec::Variational {
                prior: Prior::standard_normal(),
                params: VariationalParams::new(mean, 0.1)
                    .expect("positive fixed std is always valid"),
            }
        }
        Family::Trainable => VariableSpec::trainable(),
    }
}

fn const_variable(prior: Prior, dim: usize, family: Family) -> VariableSpec {
    match family {
        Family::Samplable => VariableSpec::Samplable { prior },
        Family::Variational => VariableSpec::Variational {
            prior,
            params: VariationalParams::new(vec![0.0; dim], 0.1)
                .expect("positive fixed std is always valid"),
        },
        Family::Trainable => VariableSpec::trainable(),
    }
}
