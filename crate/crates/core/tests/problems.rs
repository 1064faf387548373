//! Catalog tests: integrator accuracy, reference-solution consistency,
//! residual definitions against finite differences, seeded data recipes,
//! and model assembly for every parameter treatment.

use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uq_core::likelihoods::{DataTag, UqModel};
use uq_core::problems::{
    antider_u_star, antiderivative_data, dr_f_star, dr_u_star, kdv_soliton, ko_reference, ko_rhs,
    rk4_solve, sine_truth, DiffusionReactionResidual, Family, GeneratedData, KdvResidual,
    KoSystemResidual, KrPrior, Problem, ProblemError, ReactionRate, Trajectory,
};
use uq_core::processes::{Process, VariableSpec};
use uq_core::surrogates::{Activation, FnnSpec, GeneratorSpec, IdentitySpec, Link};
use uq_core::likelihoods::Rule;
use uq_core::inference::Method;

const PI: f64 = std::f64::consts::PI;

// ---------------------------------------------------------------- integrator

#[test]
fn rk4_is_exact_for_a_constant_state() {
    let traj = rk4_solve(|_, _| vec![0.0, 0.0], &[1.25, -3.0], (0.0, 2.0), 0.5).unwrap();
    assert_eq!(traj.times.len(), 5);
    for s in &traj.states {
        assert_eq!(s, &vec![1.25, -3.0]);
    }
}

#[test]
fn rk4_tracks_exponential_decay_closely() {
    let traj = rk4_solve(|_, y| vec![-y[0]], &[1.0], (0.0, 1.0), 0.1).unwrap();
    let end = traj.states.last().unwrap()[0];
    assert!(
        (end - (-1.0f64).exp()).abs() <= 1e-5,
        "end state {end} too far from 1/e"
    );
}

#[test]
fn rk4_error_shrinks_at_fourth_order() {
    let err = |dt: f64| {
        let traj = rk4_solve(|_, y| vec![-y[0]], &[1.0], (0.0, 1.0), dt).unwrap();
        (traj.states.last().unwrap()[0] - (-1.0f64).exp()).abs()
    };
    let ratio = err(0.1) / err(0.05);
    assert!(
        (12.0..=20.0).contains(&ratio),
        "halving the step changed the error by {ratio:.2}x, expected ~16x"
    );
}

#[test]
fn rk4_lands_exactly_on_the_span_end() {
    // A step that does not divide the span: the nominal 0.3 is adjusted.
    let traj = rk4_solve(|_, y| vec![-y[0]], &[1.0], (0.0, 1.0), 0.3).unwrap();
    assert_eq!(traj.times.len(), 4);
    assert_eq!(*traj.times.last().unwrap(), 1.0);
}

#[test]
fn rk4_rejects_degenerate_spans() {
    let rhs = |_: f64, y: &[f64]| vec![-y[0]];
    for (span, dt) in [
        ((0.0, 1.0), 0.0),
        ((0.0, 1.0), -0.1),
        ((0.0, 1.0), f64::NAN),
        ((1.0, 1.0), 0.1),
        ((2.0, 1.0), 0.1),
    ] {
        assert!(matches!(
            rk4_solve(rhs, &[1.0], span, dt),
            Err(ProblemError::InvalidSpan)
        ));
    }
}

#[test]
fn rk4_reports_the_step_where_blowup_happens() {
    // y' = y^2 from y(0)=1 blows up at t = 1; past it the iteration
    // overflows to infinity.
    let res = rk4_solve(|_, y| vec![y[0] * y[0]], &[1.0], (0.0, 2.0), 0.01);
    match res {
        Err(ProblemError::NonFiniteState { step }) => assert!(step > 50),
        other => panic!("expected a non-finite state, got {other:?}"),
    }
}

#[test]
fn trajectory_interpolation_is_piecewise_linear_and_clamped() {
    let traj = Trajectory {
        times: vec![0.0, 1.0, 2.0],
        states: vec![vec![0.0], vec![2.0], vec![6.0]],
    };
    assert_eq!(traj.interpolate(0.5), vec![1.0]);
    assert_eq!(traj.interpolate(1.25), vec![3.0]);
    assert_eq!(traj.interpolate(-3.0), vec![0.0]);
    assert_eq!(traj.interpolate(7.0), vec![6.0]);
    assert_eq!(traj.interpolate(1.0), vec![2.0]);
}

// ---------------------------------------------------- three-state reference

#[test]
fn ko_reference_starts_at_the_initial_condition() {
    let traj = ko_reference(1.0, 1.0, [1.0, 1.0, 0.5], (0.0, 10.0)).unwrap();
    assert_eq!(traj.states[0], vec![1.0, 1.0, 0.5]);
    assert_eq!(traj.times[0], 0.0);
    assert_eq!(*traj.times.last().unwrap(), 10.0);
}

#[test]
fn ko_reference_conserves_the_quadratic_invariant() {
    // d/dt (a x2^2 - b x1^2) = 0 along exact solutions; the integrator
    // should hold it to tight tolerance over the whole span.
    let (a, b) = (1.0, 0.7);
    let traj = ko_reference(a, b, [1.0, 1.0, 0.5], (0.0, 10.0)).unwrap();
    let initial = a * 1.0f64.powi(2) - b * 1.0f64.powi(2);
    let mut worst = 0.0f64;
    for s in traj.states.iter().step_by(100) {
        let inv = a * s[1] * s[1] - b * s[0] * s[0];
        worst = worst.max((inv - initial).abs());
    }
    assert!(worst <= 1e-6, "invariant drifted by {worst:.3e}");
}

#[test]
fn ko_reference_is_converged_in_the_step_size() {
    let coarse = ko_reference(1.0, 1.0, [1.0, 1.0, 0.5], (0.0, 10.0)).unwrap();
    let fine = rk4_solve(ko_rhs(1.0, 1.0), &[1.0, 1.0, 0.5], (0.0, 10.0), 5e-4).unwrap();
    let mut worst = 0.0f64;
    for i in 0..=20 {
        let t = 10.0 * i as f64 / 20.0;
        let (c, f) = (coarse.interpolate(t), fine.interpolate(t));
        for k in 0..3 {
            worst = worst.max((c[k] - f[k]).abs());
        }
    }
    assert!(worst <= 1e-8, "halving dt moved the trajectory by {worst:.3e}");
}

#[test]
fn ko_reference_satisfies_the_system_by_finite_differences() {
    let (a, b) = (1.0f64, 1.0f64);
    let traj = ko_reference(a, b, [1.0, 1.0, 0.5], (0.0, 10.0)).unwrap();
    let rhs = ko_rhs(a, b);
    let mut worst = 0.0f64;
    for k in (500..traj.times.len() - 1).step_by(500) {
        let h2 = traj.times[k + 1] - traj.times[k - 1];
        let expected = rhs(traj.times[k], &traj.states[k]);
        for c in 0..3 {
            let slope = (traj.states[k + 1][c] - traj.states[k - 1][c]) / h2;
            worst = worst.max((slope - expected[c]).abs());
        }
    }
    assert!(worst <= 1e-4, "trajectory slope mismatch {worst:.3e}");
}

// ------------------------------------------------------------ residual rules

/// A surrogate that evaluates `theta[0] * sin(pi x)` exactly, derivatives
/// included: a frozen one-feature network with a sine activation.
fn sine_generator() -> GeneratorSpec {
    let feature = FnnSpec::new(vec![1, 1, 1], Activation::Sin).unwrap();
    GeneratorSpec::new(feature, vec![PI, 0.0, 1.0, 0.0]).unwrap()
}

#[test]
fn dr_residual_reproduces_the_manufactured_source() {
    let u = Process::new("u", sine_generator().into(), VariableSpec::trainable()).unwrap();
    let model = UqModel::<f64>::new(vec![u], vec![]).unwrap();
    let rule = Rule(DiffusionReactionResidual {
        diffusion: 0.01,
        reaction: ReactionRate::Fixed(0.2),
    });
    let points: Vec<Vec<f64>> = (0..9).map(|i| vec![-1.0 + 0.25 * i as f64]).collect();
    let values = model.residual_values(&rule, &[0.3], &points).unwrap();
    for (x, v) in points.iter().zip(&values) {
        assert_relative_eq!(v[0], dr_f_star(x[0]), epsilon = 1e-12, max_relative = 1e-12);
    }
}

#[test]
fn dr_residual_reads_the_rate_from_a_process() {
    for link in [Link::Identity, Link::Exp] {
        let u = Process::new("u", sine_generator().into(), VariableSpec::trainable()).unwrap();
        let kr = Process::new(
            "k_r",
            IdentitySpec::new(1).unwrap().with_link(link).into(),
            VariableSpec::trainable(),
        )
        .unwrap();
        let model = UqModel::<f64>::new(vec![u, kr], vec![]).unwrap();
        let rule = Rule(DiffusionReactionResidual {
            diffusion: 0.01,
            reaction: ReactionRate::FromProcess("k_r".to_string()),
        });
        let raw_rate = match link {
            Link::Identity => 0.2,
            Link::Exp => 0.2f64.ln(),
        };
        let theta = vec![0.3, raw_rate];
        let points = vec![vec![-0.4], vec![0.1], vec![0.8]];
        let values = model.residual_values(&rule, &theta, &points).unwrap();
        for (x, v) in points.iter().zip(&values) {
            assert_relative_eq!(v[0], dr_f_star(x[0]), epsilon = 1e-12, max_relative = 1e-10);
        }
    }
}

#[test]
fn ko_rule_matches_finite_differences_of_the_surrogate() {
    let net = FnnSpec::new(vec![1, 8, 3], Activation::Tanh).unwrap();
    let u = Process::new("u", net.into(), VariableSpec::trainable()).unwrap();
    let a = Process::new(
        "a",
        IdentitySpec::new(1).unwrap().into(),
        VariableSpec::trainable(),
    )
    .unwrap();
    let b = Process::new(
        "b",
        IdentitySpec::new(1).unwrap().into(),
        VariableSpec::trainable(),
    )
    .unwrap();
    let model = UqModel::<f64>::new(vec![u, a, b], vec![]).unwrap();
    let mut theta = model.init_point(&mut ChaCha8Rng::seed_from_u64(5));
    theta[model.param_range("a").unwrap()][0] = 1.3;
    theta[model.param_range("b").unwrap()][0] = 0.7;

    let points: Vec<Vec<f64>> = vec![vec![0.3], vec![2.1], vec![4.9], vec![7.4], vec![9.6]];
    let values = model
        .residual_values(&Rule(KoSystemResidual), &theta, &points)
        .unwrap();

    let h = 1e-4;
    for (p, r) in points.iter().zip(&values) {
        let t = p[0];
        let at = |tt: f64| model.predict("u", &theta, &[vec![tt]]).unwrap()[0].clone();
        let (plus, minus, mid) = (at(t + h), at(t - h), at(t));
        let d: Vec<f64> = (0..3).map(|c| (plus[c] - minus[c]) / (2.0 * h)).collect();
        let expected = [
            d[0] - 1.3 * mid[1] * mid[2],
            d[1] - 0.7 * mid[0] * mid[2],
            d[2] + (1.3 + 0.7) * mid[0] * mid[1],
        ];
        for c in 0..3 {
            assert_relative_eq!(r[c], expected[c], epsilon = 1e-6, max_relative = 1e-6);
        }
    }
}

#[test]
fn kdv_rule_matches_finite_differences_of_the_surrogate() {
    let net = FnnSpec::new(vec![2, 6, 1], Activation::Tanh).unwrap();
    let u = Process::new("u", net.into(), VariableSpec::trainable()).unwrap();
    let l1 = Process::new(
        "lambda_1",
        IdentitySpec::new(1).unwrap().into(),
        VariableSpec::trainable(),
    )
    .unwrap();
    let l2 = Process::new(
        "lambda_2",
        IdentitySpec::new(1).unwrap().into(),
        VariableSpec::trainable(),
    )
    .unwrap();
    let model = UqModel::<f64>::new(vec![u, l1, l2], vec![]).unwrap();
    let mut theta = model.init_point(&mut ChaCha8Rng::seed_from_u64(6));
    theta[model.param_range("lambda_1").unwrap()][0] = 1.5;
    theta[model.param_range("lambda_2").unwrap()][0] = 0.25;

    let points = vec![vec![-0.8, 0.2], vec![0.4, -0.6], vec![1.1, 0.9]];
    let values = model
        .residual_values(&Rule(KdvResidual), &theta, &points)
        .unwrap();

    let at = |x: f64, t: f64| model.predict("u", &theta, &[vec![x, t]]).unwrap()[0][0];
    for (p, r) in points.iter().zip(&values) {
        let (x, t) = (p[0], p[1]);
        let h1 = 1e-4;
        let u_t = (at(x, t + h1) - at(x, t - h1)) / (2.0 * h1);
        let u_x = (at(x + h1, t) - at(x - h1, t)) / (2.0 * h1);
        let h3 = 5e-3;
        let u_xxx = (-at(x - 2.0 * h3, t) + 2.0 * at(x - h3, t) - 2.0 * at(x + h3, t)
            + at(x + 2.0 * h3, t))
            / (2.0 * h3 * h3 * h3);
        let expected = u_t - 1.5 * at(x, t) * u_x - 0.25 * u_xxx;
        assert!(
            (r[0] - expected).abs() <= 1e-3,
            "rule {} vs finite differences {expected}",
            r[0]
        );
    }
}

#[test]
fn kdv_soliton_satisfies_the_equation_by_finite_differences() {
    let h1 = 1e-4;
    let h3 = 5e-3;
    let mut worst = 0.0f64;
    for i in 0..9 {
        for j in 0..5 {
            let x = -4.0 + i as f64;
            let t = -1.0 + 0.5 * j as f64;
            let u_t = (kdv_soliton(x, t + h1) - kdv_soliton(x, t - h1)) / (2.0 * h1);
            let u_x = (kdv_soliton(x + h1, t) - kdv_soliton(x - h1, t)) / (2.0 * h1);
            let u_xxx = (-kdv_soliton(x - 2.0 * h3, t) + 2.0 * kdv_soliton(x - h3, t)
                - 2.0 * kdv_soliton(x + h3, t)
                + kdv_soliton(x + 2.0 * h3, t))
                / (2.0 * h3 * h3 * h3);
            let r = u_t - 1.5 * kdv_soliton(x, t) * u_x - 0.25 * u_xxx;
            worst = worst.max(r.abs());
        }
    }
    assert!(worst <= 2e-3, "soliton residual {worst:.3e}");
}

// ----------------------------------------------------------------- catalog

fn data_bits(data: &GeneratedData<f64>) -> Vec<u64> {
    let mut bits = Vec::new();
    for nd in &data.datasets {
        for row in nd.dataset.inputs().iter().chain(nd.dataset.targets()) {
            bits.extend(row.iter().map(|v| v.to_bits()));
        }
        bits.extend(nd.dataset.noise_std().iter().map(|v| v.to_bits()));
    }
    if let Some(op) = &data.operator {
        for row in op
            .sensor_values
            .iter()
            .chain(op.targets.iter())
            .chain(op.points.iter())
        {
            bits.extend(row.iter().map(|v| v.to_bits()));
        }
        bits.push(op.noise_std.to_bits());
    }
    bits
}

#[test]
fn every_problem_generates_bit_deterministic_data() {
    for id in Problem::all_ids() {
        let problem = Problem::from_id(id).unwrap();
        let a: GeneratedData<f64> = problem.make_data(7).unwrap();
        let b: GeneratedData<f64> = problem.make_data(7).unwrap();
        let c: GeneratedData<f64> = problem.make_data(8).unwrap();
        assert_eq!(data_bits(&a), data_bits(&b), "{id} not reproducible");
        assert_ne!(data_bits(&a), data_bits(&c), "{id} ignores the seed");
    }
}

#[test]
fn unknown_problem_ids_are_rejected() {
    match Problem::from_id("burgers") {
        Err(ProblemError::UnknownProblem(name)) => assert_eq!(name, "burgers"),
        other => panic!("expected an unknown-problem error, got {other:?}"),
    }
}

#[test]
fn sine_data_uses_the_three_pinned_inputs() {
    let problem = Problem::from_id("sine_regression").unwrap();
    let data: GeneratedData<f64> = problem.make_data(0).unwrap();
    assert_eq!(data.datasets.len(), 1);
    let ds = &data.datasets[0].dataset;
    assert_eq!(data.datasets[0].name, "u");
    assert_eq!(ds.inputs(), &[vec![-0.7], vec![-0.5], vec![-0.3]]);
    assert_eq!(ds.tag(), DataTag::U);
    assert_eq!(ds.noise_std(), &[0.05]);
}

#[test]
fn sine_noise_averages_out_across_seeds() {
    let problem = Problem::from_id("sine_regression").unwrap();
    let clean = sine_truth(-0.7);
    let n = 10_000;
    let mut sum = 0.0;
    for seed in 0..n {
        let data: GeneratedData<f64> = problem.make_data(seed).unwrap();
        sum += data.datasets[0].dataset.targets()[0][0];
    }
    let mean = sum / n as f64;
    // The seed-averaged observation is clean to within 4 standard errors.
    let tol = 4.0 * 0.05 / (n as f64).sqrt();
    assert!(
        (mean - clean).abs() <= tol,
        "seed-averaged value {mean} vs clean {clean} (tol {tol:.2e})"
    );
}

#[test]
fn ko_datasets_have_the_published_shapes() {
    let problem = Problem::from_id("kraichnan_orszag").unwrap();
    let data: GeneratedData<f64> = problem.make_data(3).unwrap();
    let names: Vec<&str> = data.datasets.iter().map(|d| d.name).collect();
    assert_eq!(names, ["x1", "x2", "x3", "f"]);
    let lens: Vec<usize> = data.datasets.iter().map(|d| d.dataset.len()).collect();
    assert_eq!(lens, [11, 7, 11, 50]);
    for nd in &data.datasets[..3] {
        assert_eq!(nd.dataset.tag(), DataTag::U);
        assert_eq!(nd.dataset.output_dim(), 1);
    }
    let colloc = &data.datasets[3].dataset;
    assert_eq!(colloc.tag(), DataTag::F);
    assert_eq!(colloc.output_dim(), 3);
    assert!(colloc.targets().iter().all(|row| row.iter().all(|&v| v == 0.0)));
    // The sparse middle-component grid sits on multiples of 10/6.
    assert_relative_eq!(data.datasets[1].dataset.inputs()[3][0], 5.0, epsilon = 1e-12);
}

#[test]
fn ko_observations_center_on_the_reference_trajectory() {
    let problem = Problem::from_id("kraichnan_orszag").unwrap();
    let data: GeneratedData<f64> = problem.make_data(11).unwrap();
    let reference = ko_reference(1.0, 1.0, [1.0, 1.0, 0.5], (0.0, 10.0)).unwrap();
    for (nd, component) in data.datasets[..3].iter().zip([0usize, 1, 2]) {
        for (x, y) in nd.dataset.inputs().iter().zip(nd.dataset.targets()) {
            let truth = reference.interpolate(x[0])[component];
            assert!(
                (y[0] - truth).abs() <= 5.0 * 0.05,
                "observation {y:?} at t={} is implausibly far from {truth}",
                x[0]
            );
        }
    }
}

#[test]
fn dr_inverse_datasets_follow_the_recipe() {
    let problem = Problem::from_id("diffusion_reaction_inverse").unwrap();
    let data: GeneratedData<f64> = problem.make_data(1).unwrap();
    let names: Vec<&str> = data.datasets.iter().map(|d| d.name).collect();
    assert_eq!(names, ["u", "f"]);
    let u = &data.datasets[0].dataset;
    let f = &data.datasets[1].dataset;
    assert_eq!(u.len(), 5);
    assert_eq!(u.tag(), DataTag::U);
    assert!(u.inputs().iter().all(|x| (-1.0..=1.0).contains(&x[0])));
    assert_eq!(f.len(), 17);
    assert_eq!(f.tag(), DataTag::F);
    for (i, x) in f.inputs().iter().enumerate() {
        assert_eq!(x[0], -1.0 + 2.0 * i as f64 / 16.0);
    }
    // Clean values sit within 5 noise standard deviations of the targets.
    for (x, y) in u.inputs().iter().zip(u.targets()) {
        assert!((y[0] - dr_u_star(x[0])).abs() <= 5.0 * 0.01);
    }
    for (x, y) in f.inputs().iter().zip(f.targets()) {
        assert!((y[0] - dr_f_star(x[0])).abs() <= 5.0 * 0.01);
    }
}

#[test]
fn dr_forward_datasets_follow_the_recipe() {
    let problem = Problem::from_id("diffusion_reaction_forward").unwrap();
    let data: GeneratedData<f64> = problem.make_data(1).unwrap();
    let names: Vec<&str> = data.datasets.iter().map(|d| d.name).collect();
    assert_eq!(names, ["f", "b"]);
    let f = &data.datasets[0].dataset;
    assert_eq!(f.len(), 10);
    assert_eq!(f.tag(), DataTag::F);
    let b = &data.datasets[1].dataset;
    assert_eq!(b.tag(), DataTag::B);
    assert_eq!(b.inputs(), &[vec![-1.0], vec![1.0]]);
    assert_eq!(b.targets(), &[vec![0.0], vec![0.0]]);
}

#[test]
fn kdv_datasets_follow_the_recipe() {
    let problem = Problem::from_id("kdv_inverse").unwrap();
    let data: GeneratedData<f64> = problem.make_data(1).unwrap();
    let u = &data.datasets[0].dataset;
    let f = &data.datasets[1].dataset;
    assert_eq!(u.len(), 40);
    assert_eq!(f.len(), 60);
    assert_eq!(u.input_dim(), 2);
    for x in u.inputs().iter().chain(f.inputs()) {
        assert!((-5.0..=5.0).contains(&x[0]) && (-1.0..=1.0).contains(&x[1]));
    }
    for (x, y) in u.inputs().iter().zip(u.targets()) {
        assert!((y[0] - kdv_soliton(x[0], x[1])).abs() <= 5.0 * 0.05);
    }
}

#[test]
fn antiderivative_data_has_the_published_shapes() {
    let problem = Problem::from_id("antiderivative_operator").unwrap();
    let data: GeneratedData<f64> = problem.make_data(2).unwrap();
    assert!(data.datasets.is_empty());
    let op = data.operator.as_ref().unwrap();
    assert_eq!(op.sensor_values.len(), 500);
    assert_eq!(op.targets.len(), 500);
    assert!(op.sensor_values.iter().all(|s| s.len() == 21));
    assert!(op.targets.iter().all(|t| t.len() == 11));
    assert_eq!(op.points.len(), 11);
    assert!(op.points.iter().all(|p| p.len() == 1));
    assert_eq!(op.noise_std, 0.01);
}

#[test]
fn antiderivative_functions_vanish_at_the_origin() {
    let op = antiderivative_data::<f64>(50, 21, 11, 9);
    for (s, t) in op.sensor_values.iter().zip(&op.targets) {
        assert_eq!(s[0], 0.0);
        assert_eq!(t[0], 0.0);
    }
}

#[test]
fn antiderivative_targets_agree_with_quadrature_of_the_sensors() {
    // Output point j sits on sensor index 2j, so composite Simpson over
    // the sensor grid reaches each output exactly.
    let op = antiderivative_data::<f64>(50, 21, 11, 4);
    let h = 1.0 / 20.0;
    let mut worst = 0.0f64;
    for (sensors, targets) in op.sensor_values.iter().zip(&op.targets) {
        for j in 1..11 {
            let n = 2 * j;
            let mut acc = sensors[0] + sensors[n];
            for i in 1..n {
                acc += sensors[i] * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = acc * h / 3.0;
            worst = worst.max((targets[j] - integral).abs());
        }
    }
    assert!(worst <= 1e-3, "quadrature mismatch {worst:.3e}");
}

// ------------------------------------------------------- references & grids

#[test]
fn references_match_their_closed_forms() {
    let sine = Problem::from_id("sine_regression").unwrap();
    let r = sine.reference_on(&[vec![0.1f64]]).unwrap();
    assert_relative_eq!(r[0][0], 1.5 * (1.1f64).sin(), epsilon = 1e-15);

    let dr = Problem::from_id("diffusion_reaction_forward").unwrap();
    let r = dr.reference_on(&[vec![0.25f64]]).unwrap();
    assert_relative_eq!(r[0][0], 0.3 * (PI * 0.25).sin(), epsilon = 1e-15);

    let ko = Problem::from_id("kraichnan_orszag").unwrap();
    let r = ko.reference_on(&[vec![0.0f64]]).unwrap();
    assert_eq!(r[0], vec![1.0, 1.0, 0.5]);

    let anti = Problem::from_id("antiderivative_operator").unwrap();
    let r = anti.reference_on(&[vec![1.0f64]]).unwrap();
    assert_relative_eq!(r[0][0], 2.0 / PI, epsilon = 1e-15);
    assert_relative_eq!(antider_u_star(0.5), 1.0 / PI, epsilon = 1e-15);

    let kdv = Problem::from_id("kdv_inverse").unwrap();
    let r = kdv.reference_on(&[vec![0.3f64, -0.2]]).unwrap();
    let sech = 1.0 / (0.1f64).cosh();
    assert_relative_eq!(r[0][0], 2.0 * sech * sech, epsilon = 1e-15);
}

#[test]
fn test_grids_span_each_domain() {
    let cases = [
        ("sine_regression", -1.0, 1.0, 1),
        ("diffusion_reaction_inverse", -1.0, 1.0, 1),
        ("kraichnan_orszag", 0.0, 10.0, 1),
        ("antiderivative_operator", 0.0, 1.0, 1),
        ("kdv_inverse", -5.0, 5.0, 2),
    ];
    for (id, lo, hi, width) in cases {
        let grid: Vec<Vec<f64>> = Problem::from_id(id).unwrap().test_grid(33);
        assert_eq!(grid.len(), 33);
        assert!(grid.iter().all(|p| p.len() == width), "{id} grid width");
        assert_eq!(grid[0][0], lo, "{id} grid start");
        assert_eq!(grid[32][0], hi, "{id} grid end");
    }
}

#[test]
fn canonical_operator_input_is_a_sine_arch() {
    let anti = Problem::from_id("antiderivative_operator").unwrap();
    let sensors: Vec<f64> = anti.canonical_operator_input().unwrap();
    assert_eq!(sensors.len(), 21);
    assert_relative_eq!(sensors[10], 1.0, epsilon = 1e-15);
    assert_eq!(sensors[0], 0.0);
    let none: Option<Vec<f64>> = Problem::from_id("sine_regression")
        .unwrap()
        .canonical_operator_input();
    assert!(none.is_none());
}

// ----------------------------------------------------------- model assembly

#[test]
fn every_problem_builds_models_for_its_supported_families() {
    for id in Problem::all_ids() {
        let problem = Problem::from_id(id).unwrap();
        let data: GeneratedData<f64> = problem.make_data(0).unwrap();
        for family in [Family::Samplable, Family::Variational, Family::Trainable] {
            let built = problem.build_model(&data, family, 0);
            if *id == "antiderivative_operator" && family != Family::Trainable {
                assert!(
                    matches!(built, Err(ProblemError::UnsupportedFamily { .. })),
                    "{id} should reject the {} family",
                    family.id()
                );
            } else {
                let model = built.unwrap_or_else(|e| panic!("{id}/{}: {e}", family.id()));
                assert!(model.param_count() > 0);
            }
        }
    }
}

#[test]
fn dr_inverse_supports_all_three_rate_priors() {
    let base = Problem::from_id("diffusion_reaction_inverse").unwrap();
    let data: GeneratedData<f64> = base.make_data(0).unwrap();
    for prior in [KrPrior::Normal, KrPrior::HalfNormal, KrPrior::LogNormal] {
        let problem = base.with_kr_prior(prior);
        let model = problem.build_model(&data, Family::Samplable, 0).unwrap();
        let range = model.param_range("k_r").unwrap();
        assert_eq!(range.len(), 1);
        // With the log-space prior the exposed rate is exp(theta).
        let mut theta = vec![0.0; model.param_count()];
        theta[range.clone()][0] = match prior {
            KrPrior::LogNormal => 0.2f64.ln(),
            _ => 0.2,
        };
        let rate = model.predict("k_r", &theta, &[vec![0.0]]).unwrap()[0][0];
        assert_relative_eq!(rate, 0.2, epsilon = 1e-14);
    }
}

#[test]
fn kr_prior_ids_round_trip() {
    for prior in [KrPrior::Normal, KrPrior::HalfNormal, KrPrior::LogNormal] {
        assert_eq!(KrPrior::from_id(prior.id()), Some(prior));
    }
    assert_eq!(KrPrior::from_id("cauchy"), None);
}

#[test]
fn ko_model_has_a_finite_posterior_and_gradient_at_init() {
    let problem = Problem::from_id("kraichnan_orszag").unwrap();
    let data: GeneratedData<f64> = problem.make_data(0).unwrap();
    let model = problem.build_model(&data, Family::Samplable, 0).unwrap();
    let theta = model.init_point(&mut ChaCha8Rng::seed_from_u64(3));
    let (value, grad) = model.log_posterior_grad(&theta).unwrap();
    assert!(value.is_finite());
    assert!(grad.iter().all(|g| g.is_finite()));
    assert!(grad.iter().any(|&g| g.abs() > 1e-12));
}

#[test]
fn family_mapping_covers_every_method() {
    use Method::*;
    for method in [Hmc, Mala, Ld, Laplace] {
        assert_eq!(Family::for_method(method), Family::Samplable);
    }
    assert_eq!(Family::for_method(Mfvi), Family::Variational);
    for method in [Mcd, DeepEnsemble, SnapshotEnsemble] {
        assert_eq!(Family::for_method(method), Family::Trainable);
    }
}

#[test]
fn default_configs_fill_the_knobs_each_method_reads() {
    let problem = Problem::from_id("kraichnan_orszag").unwrap();
    for method in [
        Method::Hmc,
        Method::Mala,
        Method::Ld,
        Method::Mfvi,
        Method::Mcd,
        Method::DeepEnsemble,
        Method::SnapshotEnsemble,
        Method::Laplace,
    ] {
        let cfg = problem.default_config(method);
        assert_eq!(cfg.method, method);
        assert!(cfg.n_samples > 0);
        assert!(cfg.step_size > 0.0);
        assert!(cfg.learning_rate > 0.0);
        assert!(cfg.iterations > 0);
        assert!(cfg.ensemble_size >= 2);
        assert!(cfg.cycles >= 2);
        assert!((0.0..1.0).contains(&cfg.dropout_rate));
        assert!(cfg.leapfrog_steps > 0);
    }
}

#[test]
fn observed_process_and_noise_levels_are_published() {
    for id in Problem::all_ids() {
        let problem = Problem::from_id(id).unwrap();
        assert_eq!(problem.observed_process(), "u");
        assert!(problem.noise_std() > 0.0);
    }
}

// -------------------------------------------------------------- overrides

use std::collections::HashMap;
use uq_core::problems::NetOverride;

#[test]
fn network_overrides_replace_the_architecture() {
    let problem = Problem::from_id("sine_regression").unwrap();
    let data: GeneratedData<f64> = problem.make_data(0).unwrap();
    let mut overrides = HashMap::new();
    overrides.insert(
        "u".to_string(),
        NetOverride {
            widths: vec![1, 4, 1],
            activation: Activation::Tanh,
            input_shift: None,
            input_scale: None,
        },
    );
    let model = problem
        .build_model_custom(&data, Family::Trainable, 0, &overrides)
        .unwrap();
    // (1*4 + 4) weights+biases into the hidden layer, (4*1 + 1) out.
    assert_eq!(model.param_count(), 13);
}

#[test]
fn network_overrides_inherit_the_input_normalization() {
    let problem = Problem::from_id("kraichnan_orszag").unwrap();
    let data: GeneratedData<f64> = problem.make_data(0).unwrap();
    let mut overrides = HashMap::new();
    overrides.insert(
        "u".to_string(),
        NetOverride {
            widths: vec![1, 20, 20, 3],
            activation: Activation::Tanh,
            input_shift: None,
            input_scale: None,
        },
    );
    let plain = problem.build_model(&data, Family::Trainable, 0).unwrap();
    let custom = problem
        .build_model_custom(&data, Family::Trainable, 0, &overrides)
        .unwrap();
    assert_eq!(plain.param_count(), custom.param_count());
    // Identical architecture + inherited normalization means identical
    // predictions at identical parameters.
    let theta = vec![0.3; plain.param_count()];
    let a = plain.predict("u", &theta, &[vec![7.0]]).unwrap();
    let b = custom.predict("u", &theta, &[vec![7.0]]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bad_network_overrides_are_rejected() {
    let problem = Problem::from_id("sine_regression").unwrap();
    let data: GeneratedData<f64> = problem.make_data(0).unwrap();
    let build = |o: NetOverride, key: &str| {
        let mut overrides = HashMap::new();
        overrides.insert(key.to_string(), o);
        problem.build_model_custom(&data, Family::Trainable, 0, &overrides)
    };
    // Changed output width.
    assert!(matches!(
        build(
            NetOverride {
                widths: vec![1, 4, 2],
                activation: Activation::Tanh,
                input_shift: None,
                input_scale: None,
            },
            "u"
        ),
        Err(ProblemError::InvalidOverride(_))
    ));
    // Unknown process key.
    assert!(matches!(
        build(
            NetOverride {
                widths: vec![1, 4, 1],
                activation: Activation::Tanh,
                input_shift: None,
                input_scale: None,
            },
            "v"
        ),
        Err(ProblemError::InvalidOverride(_))
    ));
    // Shift without scale.
    assert!(matches!(
        build(
            NetOverride {
                widths: vec![1, 4, 1],
                activation: Activation::Tanh,
                input_shift: Some(vec![0.0]),
                input_scale: None,
            },
            "u"
        ),
        Err(ProblemError::InvalidOverride(_))
    ));
    // The operator problem has no overridable networks.
    let anti = Problem::from_id("antiderivative_operator").unwrap();
    let anti_data: GeneratedData<f64> = anti.make_data(0).unwrap();
    let mut overrides = HashMap::new();
    overrides.insert(
        "u".to_string(),
        NetOverride {
            widths: vec![21, 8, 16],
            activation: Activation::Tanh,
            input_shift: None,
            input_scale: None,
        },
    );
    assert!(matches!(
        anti.build_model_custom(&anti_data, Family::Trainable, 0, &overrides),
        Err(ProblemError::InvalidOverride(_))
    ));
}
