mod common;

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, LogNormal as StatrsLogNormal, Normal as StatrsNormal};
use uq_core::autodiff::grad;
use uq_core::processes::{
    gaussian_kl, reparameterize, Prior, Process, ProcessError, VariableSpec, VariationalParams,
};
use uq_core::surrogates::{Activation, FnnSpec, IdentitySpec, Surrogate};

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

fn softplus_inverse(std: f64) -> f64 {
    std.exp_m1().ln()
}

#[test]
fn standard_normal_log_density_at_zero() {
    let prior = Prior::standard_normal();
    assert_relative_eq!(prior.log_density(&[0.0]), -HALF_LN_TWO_PI, max_relative = 1e-15);
    assert_relative_eq!(
        prior.log_density(&[0.0, 0.0, 0.0]),
        -3.0 * HALF_LN_TWO_PI,
        max_relative = 1e-15
    );
}

#[test]
fn standard_normal_log_density_at_one() {
    let prior = Prior::standard_normal();
    assert_relative_eq!(
        prior.log_density(&[1.0]),
        -0.5 - HALF_LN_TWO_PI,
        max_relative = 1e-15
    );
}

#[test]
fn normal_log_density_matches_reference_implementation() {
    let prior = Prior::Normal {
        mean: 0.7,
        std: 2.3,
    };
    let oracle = StatrsNormal::new(0.7, 2.3).unwrap();
    for &t in &[-3.0, -0.2, 0.7, 5.1] {
        assert_relative_eq!(
            prior.log_density_one(t),
            oracle.ln_pdf(t),
            max_relative = 1e-13
        );
    }
}

#[test]
fn half_normal_support_boundary_and_density() {
    let prior = Prior::HalfNormal { std: 1.0 };
    let at_minus: f64 = prior.log_density(&[-0.1]);
    assert!(at_minus.is_infinite() && at_minus < 0.0);
    // Density at the origin is 2/(σ√(2π)).
    assert_relative_eq!(
        prior.log_density(&[0.0]),
        std::f64::consts::LN_2 - HALF_LN_TWO_PI,
        max_relative = 1e-15
    );
    // One bad component poisons the whole vector.
    let mixed: f64 = prior.log_density(&[0.5, -0.5]);
    assert!(mixed.is_infinite() && mixed < 0.0);
}

#[test]
fn log_normal_density_matches_shifted_normal_identity() {
    let (mu, sigma) = (0.4, 1.3);
    let prior = Prior::LogNormal {
        mean: mu,
        std: sigma,
    };
    let normal = StatrsNormal::new(mu, sigma).unwrap();
    let oracle = StatrsLogNormal::new(mu, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let t: f64 = rng.gen_range(0.01..6.0);
        let direct = prior.log_density_one(t);
        assert_relative_eq!(direct, normal.ln_pdf(t.ln()) - t.ln(), max_relative = 1e-12);
        assert_relative_eq!(direct, oracle.ln_pdf(t), max_relative = 1e-12);
    }
    let outside: f64 = prior.log_density(&[0.0]);
    assert!(outside.is_infinite() && outside < 0.0);
}

#[test]
fn smooth_form_agrees_with_exact_form_inside_support() {
    let priors = [
        Prior::Normal {
            mean: -0.3,
            std: 0.9,
        },
        Prior::HalfNormal { std: 1.7 },
        Prior::LogNormal {
            mean: 0.1,
            std: 0.8,
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for prior in &priors {
        for _ in 0..30 {
            let t: f64 = rng.gen_range(0.05..4.0);
            assert_relative_eq!(
                prior.log_density_smooth(t),
                prior.log_density_one(t),
                max_relative = 1e-12
            );
        }
    }
}

#[test]
fn normal_log_density_is_concave_along_lines() {
    let prior = Prior::Normal {
        mean: 0.5,
        std: 1.4,
    };
    let f = |t: f64| prior.log_density_one(t);
    let h = 0.1;
    for i in -30..30 {
        let t = i as f64 * 0.2;
        let second_diff = f(t + h) - 2.0 * f(t) + f(t - h);
        assert!(second_diff <= 1e-12, "second difference {second_diff} at {t}");
    }
}

#[test]
fn prior_sampling_respects_support_and_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;

    let half = Prior::HalfNormal { std: 2.0 };
    let draws: Vec<f64> = (0..n).map(|_| half.sample(&mut rng)).collect();
    assert!(draws.iter().all(|&d| d >= 0.0));
    let expected_mean = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    let mean = common::mean(&draws);
    // Half-normal std is σ√(1−2/π); allow 5 standard errors.
    let se = (2.0f64.powi(2) * (1.0 - 2.0 / std::f64::consts::PI) / n as f64).sqrt();
    assert!((mean - expected_mean).abs() < 5.0 * se, "mean {mean}");

    let log_normal = Prior::LogNormal {
        mean: 0.2,
        std: 0.5,
    };
    let draws: Vec<f64> = (0..n).map(|_| log_normal.sample(&mut rng)).collect();
    assert!(draws.iter().all(|&d| d > 0.0));
    let log_mean = common::mean(&draws.iter().map(|d| d.ln()).collect::<Vec<_>>());
    assert!((log_mean - 0.2).abs() < 5.0 * 0.5 / (n as f64).sqrt());
}

#[test]
fn variational_sample_is_mean_plus_scaled_noise() {
    let params = VariationalParams::from_raw(vec![0.0], vec![softplus_inverse(1.0)]).unwrap();
    let drawn = params.sample(&[0.5]).unwrap();
    assert_relative_eq!(drawn[0], 0.5, max_relative = 1e-12);

    // Collapsed scales reproduce the mean exactly for any noise.
    let tight = VariationalParams::from_raw(vec![1.0, 2.0], vec![-40.0, -40.0]).unwrap();
    assert_eq!(tight.sample(&[3.3, -2.8]).unwrap(), vec![1.0, 2.0]);
}

#[test]
fn variational_log_density_matches_diagonal_gaussian_formula() {
    let params = VariationalParams::from_raw(
        vec![0.3, -1.2, 2.0],
        vec![softplus_inverse(0.7), 0.4, -0.9],
    )
    .unwrap();
    let stds = params.stds();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        let noise: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let theta = params.sample(&noise).unwrap();
        let direct = params.log_density(&theta).unwrap();
        let oracle: f64 = theta
            .iter()
            .zip(params.mean.iter().zip(&stds))
            .map(|(&t, (&m, &s))| StatrsNormal::new(m, s).unwrap().ln_pdf(t))
            .sum();
        assert_relative_eq!(direct, oracle, max_relative = 1e-10);
    }
}

#[test]
fn mean_of_variational_draws_approaches_the_mean_parameter() {
    let params =
        VariationalParams::from_raw(vec![1.5, -0.7], vec![softplus_inverse(0.9); 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mut sums = [0.0f64; 2];
    for _ in 0..n {
        let noise = [rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)];
        let draw = params.sample(&noise).unwrap();
        sums[0] += draw[0];
        sums[1] += draw[1];
    }
    let bound = 4.0 * 0.9 / (n as f64).sqrt();
    assert!((sums[0] / n as f64 - 1.5).abs() < bound);
    assert!((sums[1] / n as f64 + 0.7).abs() < bound);
}

#[test]
fn kl_of_family_to_itself_is_zero() {
    let spec = VariableSpec::Variational {
        prior: Prior::standard_normal(),
        params: VariationalParams::from_raw(vec![0.0, 0.0], vec![softplus_inverse(1.0); 2])
            .unwrap(),
    };
    let kl = spec.kl_to_prior().unwrap();
    assert!(kl.abs() < 1e-12, "KL(q||q) = {kl}");
}

#[test]
fn unit_mean_shift_gives_half_nat() {
    let spec = VariableSpec::Variational {
        prior: Prior::standard_normal(),
        params: VariationalParams::from_raw(vec![1.0], vec![softplus_inverse(1.0)]).unwrap(),
    };
    assert_relative_eq!(spec.kl_to_prior().unwrap(), 0.5, max_relative = 1e-12);
}

#[test]
fn kl_matches_monte_carlo_estimate() {
    let prior = Prior::Normal {
        mean: 0.3,
        std: 1.8,
    };
    let params = VariationalParams::from_raw(
        vec![-0.4, 1.1, 0.6],
        vec![softplus_inverse(0.5), softplus_inverse(1.2), 0.1],
    )
    .unwrap();
    let spec = VariableSpec::Variational {
        prior,
        params: params.clone(),
    };
    let analytic = spec.kl_to_prior().unwrap();
    assert!(analytic >= 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 1_000_000usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let noise: Vec<f64> = (0..3).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let theta = params.sample(&noise).unwrap();
        let term = params.log_density(&theta).unwrap() - prior.log_density(&theta);
        sum += term;
        sum_sq += term * term;
    }
    let mc = sum / n as f64;
    let se = ((sum_sq / n as f64 - mc * mc) / n as f64).sqrt();
    assert!(
        (analytic - mc).abs() <= 3.0 * se,
        "analytic {analytic} vs MC {mc} ± {se}"
    );
}

#[test]
fn kl_and_reparameterization_are_differentiable_on_tape() {
    let prior_mean = 0.2;
    let prior_std = 1.5;
    let m0 = [0.7, -0.3];
    let r0 = [0.1, -0.6];
    let at = [m0[0], m0[1], r0[0], r0[1]];
    let f = |theta: &[f64]| -> f64 {
        gaussian_kl(&theta[..2], &theta[2..], prior_mean, prior_std)
    };
    let (val, g) = grad(&at, |_t, theta| {
        gaussian_kl(&theta[..2], &theta[2..], prior_mean, prior_std)
    })
    .unwrap();
    assert_relative_eq!(val, f(&at), max_relative = 1e-14);
    let fd = common::fd_grad(f, &at, 1e-6);
    for (a, b) in g.iter().zip(&fd) {
        assert!(common::rel_err(*a, *b) <= 1e-8);
    }

    // Reparameterized draws: d sample / d m = 1, d sample / d ρ = sigmoid(ρ)·noise.
    let noise = [0.85];
    let (_, g) = grad(&[0.4, 0.3], |_t, theta| {
        reparameterize(&theta[..1], &theta[1..], &noise)[0]
    })
    .unwrap();
    assert_relative_eq!(g[0], 1.0, max_relative = 1e-12);
    let sigmoid = 1.0 / (1.0 + (-0.3f64).exp());
    assert_relative_eq!(g[1], sigmoid * 0.85, max_relative = 1e-10);
}

#[test]
fn trainable_variables_have_no_prior() {
    let spec = VariableSpec::trainable();
    assert!(matches!(
        spec.log_prior(&[0.0]),
        Err(ProcessError::FamilyMismatch { .. })
    ));
    assert!(matches!(
        spec.variational_sample(&[0.0]),
        Err(ProcessError::FamilyMismatch { .. })
    ));
    assert!(matches!(
        spec.kl_to_prior(),
        Err(ProcessError::FamilyMismatch { .. })
    ));
}

#[test]
fn kl_requires_a_gaussian_prior() {
    let spec = VariableSpec::Variational {
        prior: Prior::HalfNormal { std: 1.0 },
        params: VariationalParams::from_raw(vec![0.1], vec![0.1]).unwrap(),
    };
    assert!(matches!(
        spec.kl_to_prior(),
        Err(ProcessError::FamilyMismatch { .. })
    ));
}

#[test]
fn process_construction_validates_lengths_and_specs() {
    let surrogate = Surrogate::from(IdentitySpec::new(2).unwrap());
    let good = Process::new("k", surrogate.clone(), VariableSpec::samplable_standard());
    assert!(good.is_ok());
    assert_eq!(good.unwrap().param_count(), 2);

    let mismatched = Process::new(
        "k",
        surrogate.clone(),
        VariableSpec::Variational {
            prior: Prior::standard_normal(),
            params: VariationalParams::from_raw(vec![0.0; 3], vec![0.0; 3]).unwrap(),
        },
    );
    assert!(matches!(
        mismatched,
        Err(ProcessError::DimensionMismatch { .. })
    ));

    assert!(Process::new("", surrogate.clone(), VariableSpec::trainable()).is_err());
    assert!(Process::new(
        "k",
        surrogate,
        VariableSpec::Samplable {
            prior: Prior::Normal {
                mean: 0.0,
                std: -1.0
            }
        }
    )
    .is_err());

    let net = Surrogate::from(FnnSpec::new(vec![1, 3, 1], Activation::Tanh).unwrap());
    let bad_l2 = Process::new("u", net, VariableSpec::Trainable { l2_weight: -0.5 });
    assert!(bad_l2.is_err());
}

#[test]
fn variational_params_constructor_inverts_softplus() {
    let params = VariationalParams::new(vec![0.0; 4], 0.8).unwrap();
    for s in params.stds() {
        assert_relative_eq!(s, 0.8, max_relative = 1e-12);
    }
    assert!(VariationalParams::new(vec![0.0], 0.0).is_err());
}
