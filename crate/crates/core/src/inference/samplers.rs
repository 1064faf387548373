//! Gradient-guided Markov chain samplers over a [`LogDensity`] target.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

use super::{InferenceConfig, InferenceError, LogDensity, Method, PosteriorSamples};

/// End state of a leapfrog trajectory, with the target's value and
/// gradient at the final position so callers can chain without recomputing.
#[derive(Clone, Debug)]
pub struct LeapfrogResult<F> {
    pub theta: Vec<F>,
    pub momentum: Vec<F>,
    pub log_density: F,
    pub grad: Vec<F>,
}

/// Volume-preserving half-kick / drift / half-kick integration of
/// Hamiltonian dynamics with identity mass, `steps` times.
///
/// `start_grad` may pass the already-known gradient at `theta` to save one
/// target evaluation; `None` recomputes it.
pub fn leapfrog<F: Real, D: LogDensity<F> + ?Sized>(
    target: &D,
    theta: &[F],
    momentum: &[F],
    step_size: F,
    steps: usize,
    start_grad: Option<&[F]>,
) -> Result<LeapfrogResult<F>, InferenceError> {
    if steps == 0 {
        return Err(InferenceError::InvalidConfig(
            "leapfrog needs at least one step".to_string(),
        ));
    }
    let mut q = theta.to_vec();
    let mut p = momentum.to_vec();
    let half = step_size * F::of(0.5);
    let mut g = match start_grad {
        Some(g) => g.to_vec(),
        None => target.value_and_grad(&q)?.1,
    };
    for (pi, gi) in p.iter_mut().zip(&g) {
        *pi = *pi + half * *gi;
    }
    let mut value = F::zero();
    for step in 0..steps {
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi = *qi + step_size * *pi;
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(InferenceError::NonFiniteValue);
        }
        let (v, grad) = target.value_and_grad(&q)?;
        value = v;
        g = grad;
        let kick = if step + 1 == steps { half } else { step_size };
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi = *pi + kick * *gi;
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(InferenceError::NonFiniteValue);
        }
    }
    Ok(LeapfrogResult {
        theta: q,
        momentum: p,
        log_density: value,
        grad: g,
    })
}

fn kinetic<F: Real>(p: &[F]) -> F {
    let mut acc = F::zero();
    for &pi in p {
        acc = acc + pi * pi;
    }
    acc * F::of(0.5)
}

fn draw_momentum<F: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<F> {
    (0..dim).map(|_| F::std_normal(rng)).collect()
}

struct ChainState<F> {
    kept: Vec<Vec<F>>,
    trace: Vec<f64>,
    accepted_total: usize,
    accepted_post: usize,
}

impl<F: Real> ChainState<F> {
    fn new(n_samples: usize) -> Self {
        ChainState {
            kept: Vec::with_capacity(n_samples),
            trace: Vec::new(),
            accepted_total: 0,
            accepted_post: 0,
        }
    }

    fn record(&mut self, iter: usize, cfg: &InferenceConfig, theta: &[F], logp: F, accepted: bool) {
        let burn = cfg.burn_in();
        if accepted {
            self.accepted_total += 1;
            if iter >= burn {
                self.accepted_post += 1;
            }
        }
        self.trace.push(logp.to_f64_lossy());
        if iter >= burn && (iter - burn) % cfg.thin == 0 && self.kept.len() < cfg.n_samples {
            self.kept.push(theta.to_vec());
        }
    }
}

fn finish<F: Real>(
    state: ChainState<F>,
    method: Method,
    cfg: &InferenceConfig,
    total: usize,
    with_acceptance: bool,
) -> Result<PosteriorSamples<F>, InferenceError> {
    let post_iters = total - cfg.burn_in();
    let rate = state.accepted_post as f64 / post_iters as f64;
    if with_acceptance && rate < 0.01 {
        return Err(InferenceError::ZeroAcceptance { rate });
    }
    let samples = PosteriorSamples {
        method: method.id(),
        seed: cfg.seed,
        samples: state.kept,
        acceptance_rate: with_acceptance.then_some(rate),
        trace: state.trace,
        notes: Vec::new(),
    };
    samples.check_finite()?;
    Ok(samples)
}

/// Hamiltonian Monte Carlo: leapfrog trajectories with fresh momentum and
/// a Metropolis accept/reject on the Hamiltonian error.
pub fn hmc_run<F: Real, D: LogDensity<F> + ?Sized>(
    target: &D,
    init: &[F],
    cfg: &InferenceConfig,
) -> Result<PosteriorSamples<F>, InferenceError> {
    cfg.validate()?;
    let dim = target.dim();
    check_init(init, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eps = F::of(cfg.step_size);
    let total = cfg.burn_in() + cfg.n_samples * cfg.thin;
    let mut state = ChainState::new(cfg.n_samples);
    let mut theta = init.to_vec();
    let (mut logp, mut grad) = target.value_and_grad(&theta)?;
    for iter in 0..total {
        let p = draw_momentum::<F, _>(&mut rng, dim);
        let u: F = F::unit_uniform(&mut rng);
        let h_old = kinetic(&p) - logp;
        let mut accepted = false;
        if let Ok(traj) = leapfrog(target, &theta, &p, eps, cfg.leapfrog_steps, Some(&grad)) {
            let h_new = kinetic(&traj.momentum) - traj.log_density;
            // Accept with probability min(1, exp(H_old - H_new)).
            if Float::ln(u) < h_old - h_new {
                theta = traj.theta;
                logp = traj.log_density;
                grad = traj.grad;
                accepted = true;
            }
        }
        state.record(iter, cfg, &theta, logp, accepted);
    }
    finish(state, Method::Hmc, cfg, total, true)
}

/// Langevin proposals with the asymmetric Metropolis-Hastings correction.
pub fn mala_run<F: Real, D: LogDensity<F> + ?Sized>(
    target: &D,
    init: &[F],
    cfg: &InferenceConfig,
) -> Result<PosteriorSamples<F>, InferenceError> {
    cfg.validate()?;
    let dim = target.dim();
    check_init(init, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eps = F::of(cfg.step_size);
    let half_eps2 = eps * eps * F::of(0.5);
    let total = cfg.burn_in() + cfg.n_samples * cfg.thin;
    let mut state = ChainState::new(cfg.n_samples);
    let mut theta = init.to_vec();
    let (mut logp, mut grad) = target.value_and_grad(&theta)?;
    // log q(a | b) up to a constant shared by both directions.
    let log_q = |a: &[F], b: &[F], grad_b: &[F]| {
        let mut acc = F::zero();
        for i in 0..a.len() {
            let diff = a[i] - b[i] - half_eps2 * grad_b[i];
            acc = acc + diff * diff;
        }
        -acc / (eps * eps * F::of(2.0))
    };
    for iter in 0..total {
        let mut proposal = vec![F::zero(); dim];
        for i in 0..dim {
            let z = F::std_normal(&mut rng);
            proposal[i] = theta[i] + half_eps2 * grad[i] + eps * z;
        }
        let u: F = F::unit_uniform(&mut rng);
        let mut accepted = false;
        if proposal.iter().all(|v| v.is_finite()) {
            let (logp_new, grad_new) = target.value_and_grad(&proposal)?;
            let log_alpha =
                logp_new - logp + log_q(&theta, &proposal, &grad_new) - log_q(&proposal, &theta, &grad);
            if Float::ln(u) < log_alpha {
                theta = proposal;
                logp = logp_new;
                grad = grad_new;
                accepted = true;
            }
        }
        state.record(iter, cfg, &theta, logp, accepted);
    }
    finish(state, Method::Mala, cfg, total, true)
}

/// Unadjusted Langevin dynamics: one leapfrog step per iteration with
/// fresh momentum and no accept/reject, so draws carry a finite-step bias.
pub fn ld_run<F: Real, D: LogDensity<F> + ?Sized>(
    target: &D,
    init: &[F],
    cfg: &InferenceConfig,
) -> Result<PosteriorSamples<F>, InferenceError> {
    cfg.validate()?;
    let dim = target.dim();
    check_init(init, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eps = F::of(cfg.step_size);
    let total = cfg.burn_in() + cfg.n_samples * cfg.thin;
    let mut state = ChainState::new(cfg.n_samples);
    let mut theta = init.to_vec();
    let (_, mut grad) = target.value_and_grad(&theta)?;
    for iter in 0..total {
        let p = draw_momentum::<F, _>(&mut rng, dim);
        let traj = leapfrog(target, &theta, &p, eps, 1, Some(&grad))?;
        theta = traj.theta;
        grad = traj.grad;
        state.record(iter, cfg, &theta, traj.log_density, true);
    }
    finish(state, Method::Ld, cfg, total, false)
}

fn check_init<F: Real>(init: &[F], dim: usize) -> Result<(), InferenceError> {
    if init.len() != dim {
        return Err(InferenceError::InvalidConfig(format!(
            "initial point has {} components, target has {dim}",
            init.len()
        )));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(InferenceError::InvalidConfig(
            "initial point must be finite".to_string(),
        ));
    }
    Ok(())
}
