//! Optimization-based uncertainty methods: variational fits, dropout mask
//! sampling, deep and snapshot ensembles, and the diagonal Gaussian
//! curvature approximation around a trained optimum.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::grad;
use crate::likelihoods::{LikelihoodError, UqModel};
use crate::processes::{gaussian_kl, reparameterize, Prior, VariableSpec};
use crate::scalar::Real;
use crate::surrogates::Surrogate;

use super::optim::{cyclic_cosine_lr, exp_decay_lr, Adam};
use super::{InferenceConfig, InferenceError, LogDensity, Method, ModelDensity, PosteriorSamples};

fn require_family<F: Real>(
    model: &UqModel<F>,
    operation: &'static str,
    required: &'static str,
) -> Result<(), InferenceError> {
    if model.family() != required {
        return Err(InferenceError::Model(LikelihoodError::FamilyMismatch {
            operation,
            required,
            actual: model.family(),
        }));
    }
    Ok(())
}

/// Result of a mean-field variational fit: per-component Gaussian
/// parameters (mean and pre-softplus scale) plus draws from the trained
/// distribution.
#[derive(Clone, Debug)]
pub struct MfviFit<F> {
    pub mean: Vec<F>,
    pub rho: Vec<F>,
    pub samples: PosteriorSamples<F>,
}

/// Mean-field variational inference: maximize the single-sample
/// reparameterized evidence lower bound (expected log likelihood minus the
/// analytic Gaussian-to-Gaussian divergence) with an adaptive optimizer,
/// then draw from the trained factorized Gaussian.
pub fn mfvi_run<F: Real>(
    model: &UqModel<F>,
    cfg: &InferenceConfig,
) -> Result<MfviFit<F>, InferenceError> {
    cfg.validate()?;
    require_family(model, "mfvi", "variational")?;
    let p_total = model.param_count();
    let mut mean = Vec::with_capacity(p_total);
    let mut rho = Vec::with_capacity(p_total);
    let mut priors: Vec<(usize, F, F)> = Vec::new();
    for process in model.processes() {
        match process.variable() {
            VariableSpec::Variational {
                prior: Prior::Normal { mean: pm, std: ps },
                params,
            } => {
                mean.extend(params.mean.iter().map(|&m| F::of(m)));
                rho.extend(params.rho.iter().map(|&r| F::of(r)));
                priors.push((params.len(), F::of(*pm), F::of(*ps)));
            }
            _ => {
                return Err(InferenceError::InvalidConfig(format!(
                    "process `{}` needs a Gaussian prior for a variational fit",
                    process.key()
                )))
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state: Vec<F> = mean.iter().chain(rho.iter()).copied().collect();
    let mut adam = Adam::new(2 * p_total);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let noise: Vec<F> = (0..p_total).map(|_| F::std_normal(&mut rng)).collect();
        let step = grad(&state, |_tape, vars| {
            let (m_vars, r_vars) = vars.split_at(p_total);
            let mut theta = Vec::with_capacity(p_total);
            let mut kl: Option<_> = None;
            let mut off = 0;
            for &(len, pm, ps) in &priors {
                let m_slice = &m_vars[off..off + len];
                let r_slice = &r_vars[off..off + len];
                theta.extend(reparameterize(m_slice, r_slice, &noise[off..off + len]));
                let term = gaussian_kl(m_slice, r_slice, pm, ps);
                kl = Some(match kl {
                    None => term,
                    Some(acc) => acc + term,
                });
                off += len;
            }
            let lik = model
                .log_likelihood(&theta)
                .expect("validated: shapes fixed by construction");
            kl.expect("model has at least one process") - lik
        });
        let (neg_elbo, g) = match step {
            Ok(pair) => pair,
            Err(_) => return Err(InferenceError::DivergedElbo { iteration }),
        };
        let elbo = -neg_elbo.to_f64_lossy();
        if !elbo.is_finite() {
            return Err(InferenceError::DivergedElbo { iteration });
        }
        trace.push(elbo);
        let lr = F::of(exp_decay_lr(cfg.learning_rate, iteration, cfg.iterations));
        adam.step(&mut state, &g, lr);
    }

    let (mean, rho) = {
        let (m, r) = state.split_at(p_total);
        (m.to_vec(), r.to_vec())
    };
    let mut samples = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let row: Vec<F> = mean
            .iter()
            .zip(&rho)
            .map(|(&m, &r)| m + r.softplus_stable() * F::std_normal(&mut rng))
            .collect();
        samples.push(row);
    }
    let samples = PosteriorSamples {
        method: Method::Mfvi.id(),
        seed: cfg.seed,
        samples,
        acceptance_rate: None,
        trace,
        notes: Vec::new(),
    };
    samples.check_finite()?;
    Ok(MfviFit { mean, rho, samples })
}

/// Multiplicative parameter scales realizing inverted dropout: each hidden
/// unit of every feedforward surrogate is dropped with probability `rate`
/// by zeroing its outgoing weights, and kept units are scaled by
/// `1/(1-rate)` so the expected pre-activations are unchanged.
fn dropout_scales<F: Real, R: Rng + ?Sized>(
    model: &UqModel<F>,
    rate: f64,
    rng: &mut R,
) -> Vec<F> {
    let mut scales = vec![F::one(); model.param_count()];
    if rate == 0.0 {
        return scales;
    }
    let keep_scale = F::of(1.0 / (1.0 - rate));
    for process in model.processes() {
        let Some(fnn) = process.surrogate().as_fnn() else {
            continue;
        };
        let range = model
            .param_range(process.key())
            .expect("processes index their own ranges");
        let layouts = fnn.layers();
        for l in 0..layouts.len() - 1 {
            let next = &layouts[l + 1];
            for unit in 0..layouts[l].n_out {
                let keep = rng.gen::<f64>() >= rate;
                let scale = if keep { keep_scale } else { F::zero() };
                for row in 0..next.n_out {
                    scales[range.start + next.w_start + row * next.n_in + unit] = scale;
                }
            }
        }
    }
    scales
}

/// Dropout-as-approximate-inference: train the loss with fresh inverted
/// dropout masks each step, then return mask-scaled copies of the trained
/// parameters; stochastic forward passes downstream are plain evaluations
/// of those rows.
///
/// The L2 penalty (when configured) applies to the masked parameters,
/// which matches it in expectation up to the constant `1/(1-rate)`.
pub fn mcd_run<F: Real>(
    model: &UqModel<F>,
    cfg: &InferenceConfig,
) -> Result<PosteriorSamples<F>, InferenceError> {
    cfg.validate()?;
    require_family(model, "mcd", "trainable")?;
    for process in model.processes() {
        if matches!(
            process.surrogate(),
            Surrogate::DeepOnet(_) | Surrogate::Generator(_)
        ) {
            return Err(InferenceError::InvalidConfig(format!(
                "dropout masks need feedforward surrogates; `{}` is not one",
                process.key()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = model.init_point(&mut rng);
    let mut adam = Adam::new(theta.len());
    let mut trace = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let scales = dropout_scales(model, cfg.dropout_rate, &mut rng);
        let step = grad(&theta, |_tape, vars| {
            let masked: Vec<_> = vars
                .iter()
                .zip(&scales)
                .map(|(&v, &s)| v * s)
                .collect();
            model
                .mse_loss_generic(&masked)
                .expect("validated: shapes fixed by construction")
        });
        let (loss, g) = match step {
            Ok(pair) => pair,
            Err(_) => return Err(InferenceError::DivergedElbo { iteration }),
        };
        let loss = loss.to_f64_lossy();
        if !loss.is_finite() {
            return Err(InferenceError::DivergedElbo { iteration });
        }
        trace.push(loss);
        let lr = F::of(exp_decay_lr(cfg.learning_rate, iteration, cfg.iterations));
        adam.step(&mut theta, &g, lr);
    }
    let mut samples = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let scales = dropout_scales(model, cfg.dropout_rate, &mut rng);
        samples.push(
            theta
                .iter()
                .zip(&scales)
                .map(|(&t, &s)| t * s)
                .collect::<Vec<F>>(),
        );
    }
    let samples = PosteriorSamples {
        method: Method::Mcd.id(),
        seed: cfg.seed,
        samples,
        acceptance_rate: None,
        trace,
        notes: Vec::new(),
    };
    samples.check_finite()?;
    Ok(samples)
}

fn train_to_minimum<F: Real>(
    model: &UqModel<F>,
    mut theta: Vec<F>,
    cfg: &InferenceConfig,
) -> Result<(Vec<F>, f64), InferenceError> {
    let mut adam = Adam::new(theta.len());
    let mut last = f64::NAN;
    for iteration in 0..cfg.iterations {
        let (loss, g) = model.mse_loss_grad(&theta).map_err(|e| match e {
            LikelihoodError::Ad(_) => InferenceError::DivergedElbo { iteration },
            other => InferenceError::Model(other),
        })?;
        last = loss.to_f64_lossy();
        if !last.is_finite() {
            return Err(InferenceError::DivergedElbo { iteration });
        }
        let lr = F::of(exp_decay_lr(cfg.learning_rate, iteration, cfg.iterations));
        adam.step(&mut theta, &g, lr);
    }
    Ok((theta, last))
}

/// Deep ensemble: independent trainings from per-member seeds `seed + i`,
/// run concurrently; the draws are the final parameters of each member, in
/// member order. Divergent members are dropped and noted; the run only
/// fails if no member finishes.
pub fn dens_run<F: Real>(
    model: &UqModel<F>,
    cfg: &InferenceConfig,
) -> Result<PosteriorSamples<F>, InferenceError> {
    cfg.validate()?;
    require_family(model, "dens", "trainable")?;
    let results: Vec<Result<(Vec<F>, f64), InferenceError>> = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|member| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(member as u64));
            let init = model.init_point(&mut rng);
            train_to_minimum(model, init, cfg)
        })
        .collect();

    let mut samples = Vec::new();
    let mut trace = Vec::new();
    let mut notes = Vec::new();
    let mut first_diverged = None;
    for (member, result) in results.into_iter().enumerate() {
        match result {
            Ok((theta, loss)) => {
                samples.push(theta);
                trace.push(loss);
            }
            Err(e) => {
                notes.push(format!("member {member} diverged: {e}"));
                first_diverged.get_or_insert(member);
            }
        }
    }
    if samples.is_empty() {
        return Err(InferenceError::MemberDiverged {
            member: first_diverged.unwrap_or(0),
        });
    }
    let samples = PosteriorSamples {
        method: Method::DeepEnsemble.id(),
        seed: cfg.seed,
        samples,
        acceptance_rate: None,
        trace,
        notes,
    };
    samples.check_finite()?;
    Ok(samples)
}

/// Snapshot ensemble: one training run under a cyclic cosine learning-rate
/// schedule; the parameters at each cycle end (where the rate reaches
/// zero) become the draws. `iterations` is the total budget, split into
/// `cycles` equal cycles.
pub fn sens_run<F: Real>(
    model: &UqModel<F>,
    cfg: &InferenceConfig,
) -> Result<PosteriorSamples<F>, InferenceError> {
    cfg.validate()?;
    require_family(model, "sens", "trainable")?;
    let cycle_len = cfg.iterations / cfg.cycles;
    if cycle_len == 0 {
        return Err(InferenceError::InvalidConfig(
            "iterations must be at least the number of cycles".to_string(),
        ));
    }
    let total = cycle_len * cfg.cycles;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = model.init_point(&mut rng);
    let mut adam = Adam::new(theta.len());
    let mut trace = Vec::with_capacity(total);
    let mut snapshots = Vec::with_capacity(cfg.cycles);
    for step in 0..total {
        let (loss, g) = model.mse_loss_grad(&theta).map_err(|e| match e {
            LikelihoodError::Ad(_) => InferenceError::DivergedElbo { iteration: step },
            other => InferenceError::Model(other),
        })?;
        let loss = loss.to_f64_lossy();
        if !loss.is_finite() {
            return Err(InferenceError::DivergedElbo { iteration: step });
        }
        trace.push(loss);
        let lr = F::of(cyclic_cosine_lr(cfg.learning_rate, step, cycle_len));
        adam.step(&mut theta, &g, lr);
        if step % cycle_len == cycle_len - 1 {
            snapshots.push(theta.clone());
        }
    }
    let samples = PosteriorSamples {
        method: Method::SnapshotEnsemble.id(),
        seed: cfg.seed,
        samples: snapshots,
        acceptance_rate: None,
        trace,
        notes: Vec::new(),
    };
    samples.check_finite()?;
    Ok(samples)
}

/// Result of the Gaussian curvature approximation: the located mode, the
/// per-component standard deviations implied by the diagonal curvature,
/// and draws from that factorized Gaussian.
#[derive(Clone, Debug)]
pub struct LaFit<F> {
    pub map: Vec<F>,
    pub std: Vec<F>,
    pub samples: PosteriorSamples<F>,
}

/// Gaussian approximation at the posterior mode: adaptive-optimizer ascent
/// of the log posterior, then a diagonal generalized Gauss-Newton
/// curvature (squared prediction gradients over noise variances, plus unit
/// prior precision), then draws from the resulting factorized Gaussian.
pub fn la_run<F: Real>(
    model: &UqModel<F>,
    cfg: &InferenceConfig,
) -> Result<LaFit<F>, InferenceError> {
    cfg.validate()?;
    require_family(model, "la", "samplable")?;
    if !model.operator_terms().is_empty() {
        return Err(InferenceError::InvalidConfig(
            "curvature fitting does not cover operator terms".to_string(),
        ));
    }
    let density = ModelDensity::new(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = model.init_point(&mut rng);
    let mut adam = Adam::new(theta.len());
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut notes = Vec::new();
    let (mut value, mut g) = density.value_and_grad(&theta)?;
    let mut prev = theta.clone();
    for iteration in 0..cfg.iterations {
        trace.push(value.to_f64_lossy());
        let neg_g: Vec<F> = g.iter().map(|&x| -x).collect();
        let lr = F::of(exp_decay_lr(cfg.learning_rate, iteration, cfg.iterations));
        adam.step(&mut theta, &neg_g, lr);
        let (v_new, g_new) = density.value_and_grad(&theta)?;
        if v_new.is_infinite() && v_new < F::zero() {
            // The step left the prior support; roll it back and continue
            // from the previous point.
            theta = prev.clone();
            continue;
        }
        prev = theta.clone();
        value = v_new;
        g = g_new;
    }

    // Diagonal curvature: unit prior precision plus squared prediction
    // gradients weighted by the known noise precision of each term.
    let p_total = model.param_count();
    let mut curvature = vec![F::one(); p_total];
    for term in model.terms() {
        let out_dim = term.dataset.output_dim();
        let observable = &term.observable;
        for point in term.dataset.inputs() {
            for component in 0..out_dim {
                let (_, pg) = grad(&theta, |_tape, vars| {
                    let rows = model
                        .observable_predictions(observable, vars, std::slice::from_ref(point))
                        .expect("validated: shapes fixed by construction");
                    rows[0][component]
                })
                .map_err(|_| InferenceError::NonPositiveCurvature)?;
                let std = term.dataset.noise_std()[component];
                let inv_var = F::one() / (std * std);
                for (h, gi) in curvature.iter_mut().zip(&pg) {
                    *h = *h + *gi * *gi * inv_var;
                }
            }
        }
    }
    let mut clamped = 0usize;
    for h in curvature.iter_mut() {
        if !(h.is_finite() && *h > F::zero()) {
            *h = F::one();
            clamped += 1;
        }
    }
    if clamped > 0 {
        notes.push(format!(
            "{clamped} curvature entries were not positive finite and were clamped to the prior precision"
        ));
    }

    let stds: Vec<F> = curvature.iter().map(|&h| F::one() / Float::sqrt(h)).collect();
    let mut samples = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let row: Vec<F> = theta
            .iter()
            .zip(&stds)
            .map(|(&m, &s)| m + s * F::std_normal(&mut rng))
            .collect();
        samples.push(row);
    }
    let samples = PosteriorSamples {
        method: Method::Laplace.id(),
        seed: cfg.seed,
        samples,
        acceptance_rate: None,
        trace,
        notes,
    };
    samples.check_finite()?;
    Ok(LaFit {
        map: theta,
        std: stds,
        samples,
    })
}
