//! The four subcommands: end-to-end runs with artifact output, catalog
//! listing, gradient verification, and dataset export.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use uq_core::inference::{run_model, Method, PosteriorSamples};
use uq_core::likelihoods::{DataTag, Dataset, UqModel};
use uq_core::problems::{Family, GeneratedData, Problem};
use uq_core::scalar::Real;
use uq_core::uq_stats::{mse, rl2e, FunctionSamples, PredictiveSummary};

use crate::config::{parse_config, resolve, Resolved};
use crate::error::CliError;

/// Seed stream for calibration noise, distinct from the sampler streams.
const CAL_STREAM: u64 = 0x4341_4C49;
/// Seed stream for the gradient-check evaluation point.
const GRAD_STREAM: u64 = 0x4752_4144;

pub fn cmd_run(
    config_path: &Path,
    out_flag: Option<PathBuf>,
    seed_flag: Option<u64>,
) -> Result<(), CliError> {
    let start = Instant::now();
    let resolved = load_config(config_path, out_flag, seed_flag)?;
    let problem = resolved.problem;

    let data: GeneratedData<f64> = problem
        .make_data(resolved.data_seed)
        .map_err(CliError::config)?;
    let family = Family::for_method(resolved.inference.method);
    let model = problem
        .build_model_custom(&data, family, resolved.inference.seed, &resolved.overrides)
        .map_err(CliError::config)?;

    let samples = run_model(&model, &resolved.inference).map_err(CliError::inference)?;

    // Split the reference grid: the tail feeds the variance calibration,
    // the head feeds predictions and metrics.
    let grid: Vec<Vec<f64>> = problem.test_grid(resolved.grid_size);
    let n_cal = resolved
        .calibration_split
        .map_or(0, |s| (s * resolved.grid_size as f64).round() as usize);
    let n_main = resolved.grid_size - n_cal;
    let main_grid = grid[..n_main].to_vec();
    let noise = problem.noise_std();

    let summary = summarize(&model, &problem, &samples, main_grid.clone(), noise)?;
    let (calibration_scale, summary) = if n_cal > 0 {
        let cal_grid = grid[n_main..].to_vec();
        let cal_summary = summarize(&model, &problem, &samples, cal_grid.clone(), noise)?;
        let reference = problem.reference_on(&cal_grid).map_err(CliError::inference)?;
        let mut rng = ChaCha8Rng::seed_from_u64(resolved.inference.seed ^ CAL_STREAM);
        let targets: Vec<Vec<f64>> = reference
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| v + f64::std_normal(&mut rng) * noise)
                    .collect()
            })
            .collect();
        let d_out = targets[0].len();
        let held_out = Dataset::new(cal_grid, targets, vec![noise; d_out], DataTag::U)
            .map_err(CliError::inference)?;
        let (scale, _) = cal_summary
            .calibrate_variance(&held_out)
            .map_err(CliError::inference)?;
        let rescaled = summary
            .with_variance_scale(scale)
            .map_err(CliError::inference)?;
        (scale, rescaled)
    } else {
        (1.0, summary)
    };

    let reference = problem.reference_on(&main_grid).map_err(CliError::inference)?;
    let d_out = reference[0].len();
    let flat_pred: Vec<f64> = (0..d_out)
        .flat_map(|c| summary.mean()[c].iter().copied())
        .collect();
    let flat_ref: Vec<f64> = (0..d_out)
        .flat_map(|c| reference.iter().map(move |row| row[c]))
        .collect();
    let rl2e_v = rl2e(&flat_pred, &flat_ref).map_err(CliError::inference)?;
    let mse_v = mse(&flat_pred, &flat_ref).map_err(CliError::inference)?;
    let reference_set = Dataset::new(
        main_grid,
        reference,
        vec![noise; d_out],
        DataTag::U,
    )
    .map_err(CliError::inference)?;
    let nll_v = summary.nll(&reference_set).map_err(CliError::inference)?;

    let metrics = Metrics {
        rl2e: rl2e_v,
        mse: mse_v,
        nll: nll_v,
        n_samples: samples.n_samples(),
        acceptance_rate: samples.acceptance_rate,
        calibration_scale,
        wall_time_s: start.elapsed().as_secs_f64(),
    };

    let dir = &resolved.out_dir;
    fs::create_dir_all(dir).map_err(|e| dir_error(dir, e))?;
    write_samples_atomic(dir, &samples)?;
    write_atomic(dir, "predictions.csv", &render_predictions(&summary))?;
    write_atomic(dir, "metrics.json", &render_metrics(&metrics)?)?;
    let echo = toml::to_string(&resolved.echo).map_err(CliError::io)?;
    write_atomic(dir, "config_resolved.toml", &echo)?;
    Ok(())
}

pub fn cmd_catalog() {
    println!("problems:");
    for id in Problem::all_ids() {
        println!("  {id}");
    }
    println!("methods:");
    let mut ids: Vec<&str> = Method::all().iter().map(|m| m.id()).collect();
    ids.sort_unstable();
    for id in ids {
        println!("  {id}");
    }
}

pub fn cmd_gradcheck(config_path: &Path) -> Result<(), CliError> {
    let resolved = load_config(config_path, None, None)?;
    let problem = resolved.problem;
    let data: GeneratedData<f64> = problem
        .make_data(resolved.data_seed)
        .map_err(CliError::config)?;
    let family = Family::for_method(resolved.inference.method);
    let model = problem
        .build_model_custom(&data, family, resolved.inference.seed, &resolved.overrides)
        .map_err(CliError::config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(resolved.inference.seed ^ GRAD_STREAM);
    let theta = model.init_point(&mut rng);
    let use_loss = family == Family::Trainable;
    let objective = |t: &[f64]| -> Result<f64, CliError> {
        if use_loss {
            model.mse_loss(t).map_err(CliError::inference)
        } else {
            model.log_posterior(t).map_err(CliError::inference)
        }
    };
    let (_, mut ad) = if use_loss {
        model.mse_loss_grad(&theta)
    } else {
        model.log_posterior_grad(&theta)
    }
    .map_err(CliError::inference)?;

    // Test fixture: corrupt one gradient component to force a failure.
    if let Ok(fault) = std::env::var("UQ_GRADCHECK_FAULT") {
        ad[0] += fault.parse::<f64>().unwrap_or(1.0);
    }

    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let h = 1e-6 * (1.0 + theta[i].abs());
        let mut plus = theta.clone();
        plus[i] += h;
        let mut minus = theta.clone();
        minus[i] -= h;
        let fd = (objective(&plus)? - objective(&minus)?) / (2.0 * h);
        let rel = (ad[i] - fd).abs() / (1.0 + ad[i].abs().max(fd.abs()));
        worst = worst.max(rel);
    }
    println!("max relative gradient error: {worst:.3e}");
    if worst <= 1e-4 {
        Ok(())
    } else {
        Err(CliError::GradCheck(format!(
            "gradient check failed: max relative error {worst:.3e} exceeds 1.0e-4"
        )))
    }
}

pub fn cmd_data(problem_id: &str, seed: u64, out: &Path) -> Result<(), CliError> {
    let problem = Problem::from_id(problem_id).map_err(CliError::config)?;
    let data: GeneratedData<f64> = problem.make_data(seed).map_err(CliError::config)?;
    fs::create_dir_all(out).map_err(|e| dir_error(out, e))?;
    for nd in &data.datasets {
        let tmp = out.join(format!(".{}.csv.tmp", nd.name));
        nd.dataset.write_csv(&tmp).map_err(CliError::io)?;
        fs::rename(&tmp, out.join(format!("{}.csv", nd.name))).map_err(CliError::io)?;
    }
    if let Some(op) = &data.operator {
        write_atomic(out, "operator_sensors.csv", &matrix_csv(&op.sensor_values))?;
        write_atomic(out, "operator_targets.csv", &matrix_csv(&op.targets))?;
        write_atomic(out, "operator_points.csv", &matrix_csv(&op.points))?;
    }
    Ok(())
}

fn load_config(
    path: &Path,
    out_flag: Option<PathBuf>,
    seed_flag: Option<u64>,
) -> Result<Resolved, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    resolve(parse_config(&text)?, out_flag, seed_flag)
}

/// Function samples of the observed process over a grid: the operator
/// problem evaluates its canonical held-out input function, everything
/// else evaluates the process directly.
fn summarize(
    model: &UqModel<f64>,
    problem: &Problem,
    samples: &PosteriorSamples<f64>,
    grid: Vec<Vec<f64>>,
    noise: f64,
) -> Result<PredictiveSummary<f64>, CliError> {
    let key = problem.observed_process();
    let function_samples = match problem.canonical_operator_input::<f64>() {
        Some(sensors) => {
            let mut rows = Vec::with_capacity(samples.samples.len());
            for draw in &samples.samples {
                rows.push(
                    model
                        .predict_operator(key, draw, &sensors, &grid)
                        .map_err(CliError::inference)?,
                );
            }
            FunctionSamples::new(grid, vec![rows]).map_err(CliError::inference)?
        }
        None => FunctionSamples::from_draws(model, key, &samples.samples, grid)
            .map_err(CliError::inference)?,
    };
    function_samples
        .predictive_summary(noise)
        .map_err(CliError::inference)
}

#[derive(Serialize)]
struct Metrics {
    rl2e: f64,
    mse: f64,
    nll: f64,
    n_samples: usize,
    acceptance_rate: Option<f64>,
    calibration_scale: f64,
    wall_time_s: f64,
}

/// JSON float formatting with 17 significant digits for exact round-trip.
struct SciFloats;

impl serde_json::ser::Formatter for SciFloats {
    fn write_f64<W: ?Sized + std::io::Write>(
        &mut self,
        writer: &mut W,
        value: f64,
    ) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

fn render_metrics(metrics: &Metrics) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFloats);
    metrics.serialize(&mut ser).map_err(CliError::io)?;
    let mut text = String::from_utf8(buf).expect("serialized json is utf-8");
    text.push('\n');
    Ok(text)
}

/// One block of rows per output component over the grid, in grid order.
fn render_predictions(summary: &PredictiveSummary<f64>) -> String {
    use std::fmt::Write as _;
    let dx = summary.grid()[0].len();
    let mut text = String::new();
    let header: Vec<String> = (0..dx)
        .map(|i| format!("x_{i}"))
        .chain(
            ["mean", "std_aleatoric", "std_epistemic", "std_total"]
                .iter()
                .map(|s| s.to_string()),
        )
        .collect();
    writeln!(text, "{}", header.join(",")).expect("string write cannot fail");
    let aleatoric = summary.aleatoric_var().sqrt();
    for c in 0..summary.n_components() {
        for (i, x) in summary.grid().iter().enumerate() {
            let row: Vec<String> = x
                .iter()
                .copied()
                .chain([
                    summary.mean()[c][i],
                    aleatoric,
                    summary.epistemic_var()[c][i].sqrt(),
                    summary.total_var()[c][i].sqrt(),
                ])
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(text, "{}", row.join(",")).expect("string write cannot fail");
        }
    }
    text
}

fn matrix_csv(rows: &[Vec<f64>]) -> String {
    use std::fmt::Write as _;
    let mut text = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(text, "{}", cells.join(",")).expect("string write cannot fail");
    }
    text
}

fn write_atomic(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, dir.join(name))
        .map_err(|e| CliError::Io(format!("cannot finalize {name}: {e}")))?;
    Ok(())
}

fn write_samples_atomic(dir: &Path, samples: &PosteriorSamples<f64>) -> Result<(), CliError> {
    let tmp = dir.join(".samples.csv.tmp");
    samples.write_csv(&tmp).map_err(CliError::io)?;
    fs::rename(&tmp, dir.join("samples.csv"))
        .map_err(|e| CliError::Io(format!("cannot finalize samples.csv: {e}")))?;
    Ok(())
}

fn dir_error(dir: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("cannot create output directory {}: {e}", dir.display()))
}
