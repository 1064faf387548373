//! TOML run configuration: a partial, human-written file is resolved
//! against the problem's tuned defaults into a fully-specified plan whose
//! serialized echo reproduces the run exactly.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use uq_core::inference::{InferenceConfig, Method};
use uq_core::problems::{KrPrior, NetOverride, Problem};
use uq_core::surrogates::Activation;

use crate::error::CliError;

/// On-disk run configuration. Unknown keys anywhere are hard errors so a
/// typoed knob cannot silently fall back to a default.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<BTreeMap<String, NetSection>>,
    pub inference: InferenceSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub id: String,
    /// Prior on the inferred reaction rate (inverse diffusion-reaction
    /// only): `normal`, `half_normal`, or `log_normal`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kr_prior: Option<String>,
    /// Seed for data generation; defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
}

/// Replacement architecture for one network surrogate.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub widths: Vec<usize>,
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_shift: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_scale: Option<Vec<f64>>,
}

/// Method choice plus optional knob overrides; anything left out inherits
/// the problem's tuned default for that method.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leapfrog_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    #[serde(default)]
    pub enabled: bool,
    /// Fraction of the reference grid held out (from the end) for the
    /// variance recalibration factor.
    #[serde(default)]
    pub split_fraction: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            enabled: false,
            split_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Evaluation points on the problem's reference grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
}

const DEFAULT_GRID_SIZE: usize = 101;

/// A fully-resolved plan: every knob concrete, every id validated.
#[derive(Debug)]
pub struct Resolved {
    pub problem: Problem,
    pub data_seed: u64,
    pub overrides: HashMap<String, NetOverride>,
    pub inference: InferenceConfig,
    pub calibration_split: Option<f64>,
    pub out_dir: PathBuf,
    pub grid_size: usize,
    /// The configuration echo written as `config_resolved.toml`;
    /// re-feeding it reproduces this plan exactly.
    pub echo: RunConfig,
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(CliError::config)
}

/// Validate ids, overlay command-line flags and method defaults, and
/// produce both the executable plan and its round-trippable echo.
pub fn resolve(
    mut cfg: RunConfig,
    out_flag: Option<PathBuf>,
    seed_flag: Option<u64>,
) -> Result<Resolved, CliError> {
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    }
    if let Some(dir) = out_flag {
        cfg.output.dir = dir;
    }

    let mut problem = Problem::from_id(&cfg.problem.id).map_err(CliError::config)?;
    if let Some(name) = &cfg.problem.kr_prior {
        let prior = KrPrior::from_id(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown reaction-rate prior `{name}` (expected normal, half_normal, or log_normal)"
            ))
        })?;
        problem = problem.with_kr_prior(prior);
    }
    let method = Method::from_str(&cfg.inference.method).map_err(CliError::Config)?;

    let mut inference = problem.default_config(method);
    inference.seed = cfg.seed;
    let s = &cfg.inference;
    if let Some(v) = s.n_samples {
        inference.n_samples = v;
    }
    if let Some(v) = s.burn_in {
        inference.burn_in = Some(v);
    }
    if let Some(v) = s.thin {
        inference.thin = v;
    }
    if let Some(v) = s.step_size {
        inference.step_size = v;
    }
    if let Some(v) = s.leapfrog_steps {
        inference.leapfrog_steps = v;
    }
    if let Some(v) = s.learning_rate {
        inference.learning_rate = v;
    }
    if let Some(v) = s.iterations {
        inference.iterations = v;
    }
    if let Some(v) = s.ensemble_size {
        inference.ensemble_size = v;
    }
    if let Some(v) = s.dropout_rate {
        inference.dropout_rate = v;
    }
    if let Some(v) = s.cycles {
        inference.cycles = v;
    }
    inference.validate().map_err(CliError::config)?;

    let grid_size = cfg.output.grid_size.unwrap_or(DEFAULT_GRID_SIZE);
    if grid_size == 0 {
        return Err(CliError::Config(
            "output.grid_size must be at least 1".to_string(),
        ));
    }

    let split = cfg.calibration.split_fraction;
    let calibration_split = if cfg.calibration.enabled {
        if !(split > 0.0 && split < 1.0) {
            return Err(CliError::Config(format!(
                "calibration.split_fraction must lie in (0, 1) when enabled, got {split}"
            )));
        }
        let held_out = (split * grid_size as f64).round() as usize;
        if held_out == 0 || held_out >= grid_size {
            return Err(CliError::Config(format!(
                "calibration split {split} leaves no usable split of a {grid_size}-point grid"
            )));
        }
        Some(split)
    } else {
        None
    };

    let mut overrides = HashMap::new();
    if let Some(sections) = &cfg.surrogate {
        for (key, net) in sections {
            let activation = Activation::from_str(&net.activation)
                .map_err(|_| CliError::Config(format!("unknown activation `{}`", net.activation)))?;
            overrides.insert(
                key.clone(),
                NetOverride {
                    widths: net.widths.clone(),
                    activation,
                    input_shift: net.input_shift.clone(),
                    input_scale: net.input_scale.clone(),
                },
            );
        }
    }

    let data_seed = cfg.problem.data_seed.unwrap_or(cfg.seed);

    let echo = RunConfig {
        seed: cfg.seed,
        problem: ProblemSection {
            id: problem.id().to_string(),
            kr_prior: cfg.problem.kr_prior.clone(),
            data_seed: Some(data_seed),
        },
        surrogate: cfg.surrogate.clone(),
        inference: InferenceSection {
            method: method.id().to_string(),
            n_samples: Some(inference.n_samples),
            burn_in: Some(inference.burn_in()),
            thin: Some(inference.thin),
            step_size: Some(inference.step_size),
            leapfrog_steps: Some(inference.leapfrog_steps),
            learning_rate: Some(inference.learning_rate),
            iterations: Some(inference.iterations),
            ensemble_size: Some(inference.ensemble_size),
            dropout_rate: Some(inference.dropout_rate),
            cycles: Some(inference.cycles),
        },
        calibration: cfg.calibration.clone(),
        output: OutputSection {
            dir: cfg.output.dir.clone(),
            grid_size: Some(grid_size),
        },
    };
    // The echo records the effective warm-up length explicitly.
    inference.burn_in = Some(inference.burn_in());

    Ok(Resolved {
        problem,
        data_seed,
        overrides,
        inference,
        calibration_split,
        out_dir: cfg.output.dir,
        grid_size,
        echo,
    })
}
