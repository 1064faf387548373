//! Predictive statistics on parameter draws: function samples on a grid,
//! mean/variance summaries with the aleatoric/epistemic split, scalar
//! accuracy and likelihood metrics, and post-hoc variance calibration.

use num_traits::Float;
use thiserror::Error;

use crate::likelihoods::{Dataset, LikelihoodError, UqModel};
use crate::scalar::Real;

/// Failure modes of the summary and metric computations.
#[derive(Debug, Error)]
pub enum StatsError {
    /// A sample matrix with no draws cannot be summarized.
    #[error("no function samples to summarize")]
    EmptySamples,
    /// The reference vector of a relative error has zero norm.
    #[error("relative error against a zero reference vector")]
    ZeroReference,
    /// A likelihood or standardized residual needs strictly positive
    /// variance at every point.
    #[error("predictive variance must be positive at every point")]
    ZeroVariance,
    /// Calibration needs at least one held-out observation.
    #[error("calibration requires a non-empty dataset")]
    EmptyCalibrationSet,
    /// Two containers that must agree in shape do not.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// A dataset's inputs do not coincide with the summary grid.
    #[error("dataset inputs do not match the evaluation grid at row {row}")]
    GridMismatch { row: usize },
    /// A non-finite value entered a summary or metric.
    #[error("non-finite value in function samples or summary")]
    NonFinite,
    /// The aleatoric noise level must not be negative.
    #[error("aleatoric noise level must be non-negative and finite")]
    InvalidNoise,
    /// Forwarded model error while evaluating draws on the grid.
    #[error(transparent)]
    Model(#[from] LikelihoodError),
}

/// Surrogate outputs for every parameter draw on a fixed evaluation grid:
/// one `M x N` matrix per output component, for `M` draws and `N` points.
#[derive(Clone, Debug)]
pub struct FunctionSamples<F> {
    grid: Vec<Vec<F>>,
    /// Indexed `[component][draw][point]`.
    values: Vec<Vec<Vec<F>>>,
}

impl<F: Real> FunctionSamples<F> {
    /// Wraps precomputed prediction matrices after validating shapes and
    /// finiteness.
    pub fn new(grid: Vec<Vec<F>>, values: Vec<Vec<Vec<F>>>) -> Result<Self, StatsError> {
        if values.is_empty() || values[0].is_empty() {
            return Err(StatsError::EmptySamples);
        }
        let n_points = grid.len();
        if n_points == 0 {
            return Err(StatsError::ShapeMismatch {
                context: "evaluation grid",
                expected: 1,
                got: 0,
            });
        }
        let dx = grid[0].len();
        for point in &grid {
            if point.len() != dx {
                return Err(StatsError::ShapeMismatch {
                    context: "grid point width",
                    expected: dx,
                    got: point.len(),
                });
            }
            if point.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite);
            }
        }
        let m = values[0].len();
        for matrix in &values {
            if matrix.len() != m {
                return Err(StatsError::ShapeMismatch {
                    context: "draw count per component",
                    expected: m,
                    got: matrix.len(),
                });
            }
            for row in matrix {
                if row.len() != n_points {
                    return Err(StatsError::ShapeMismatch {
                        context: "points per draw",
                        expected: n_points,
                        got: row.len(),
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(StatsError::NonFinite);
                }
            }
        }
        Ok(FunctionSamples { grid, values })
    }

    /// Evaluates one process of the model at every draw over the grid.
    pub fn from_draws(
        model: &UqModel<F>,
        key: &str,
        draws: &[Vec<F>],
        grid: Vec<Vec<F>>,
    ) -> Result<Self, StatsError> {
        if draws.is_empty() {
            return Err(StatsError::EmptySamples);
        }
        let mut values: Vec<Vec<Vec<F>>> = Vec::new();
        for row in draws {
            let preds = model.predict(key, row, &grid)?;
            let d_out = preds[0].len();
            if values.is_empty() {
                values = vec![Vec::with_capacity(draws.len()); d_out];
            }
            for (component, matrix) in values.iter_mut().enumerate() {
                matrix.push(preds.iter().map(|p| p[component]).collect());
            }
        }
        FunctionSamples::new(grid, values)
    }

    pub fn grid(&self) -> &[Vec<F>] {
        &self.grid
    }

    /// Prediction matrices indexed `[component][draw][point]`.
    pub fn values(&self) -> &[Vec<Vec<F>>] {
        &self.values
    }

    pub fn n_components(&self) -> usize {
        self.values.len()
    }

    pub fn n_draws(&self) -> usize {
        self.values[0].len()
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    /// Gaussian fit to the draws at every grid point: the predictive mean,
    /// the fixed aleatoric variance `noise_std²`, the population variance
    /// of the draws as the epistemic part, and their exact sum.
    pub fn predictive_summary(&self, noise_std: F) -> Result<PredictiveSummary<F>, StatsError> {
        if !(noise_std.is_finite() && noise_std >= F::zero()) {
            return Err(StatsError::InvalidNoise);
        }
        let m = F::of(self.n_draws() as f64);
        let aleatoric = noise_std * noise_std;
        let mut mean = Vec::with_capacity(self.n_components());
        let mut epistemic = Vec::with_capacity(self.n_components());
        let mut total = Vec::with_capacity(self.n_components());
        for matrix in &self.values {
            let mut mu = vec![F::zero(); self.n_points()];
            for row in matrix {
                for (acc, v) in mu.iter_mut().zip(row) {
                    *acc = *acc + *v;
                }
            }
            for acc in mu.iter_mut() {
                *acc = *acc / m;
            }
            let mut var = vec![F::zero(); self.n_points()];
            for row in matrix {
                for ((acc, v), mu_i) in var.iter_mut().zip(row).zip(&mu) {
                    let d = *v - *mu_i;
                    *acc = *acc + d * d;
                }
            }
            for acc in var.iter_mut() {
                *acc = *acc / m;
            }
            total.push(var.iter().map(|&e| aleatoric + e).collect());
            mean.push(mu);
            epistemic.push(var);
        }
        Ok(PredictiveSummary {
            grid: self.grid.clone(),
            mean,
            aleatoric_var: aleatoric,
            epistemic_var: epistemic,
            total_var: total,
        })
    }
}

/// Pointwise Gaussian predictive distribution: mean and the
/// aleatoric/epistemic variance split, with the stored total equal to
/// their sum by construction.
#[derive(Clone, Debug)]
pub struct PredictiveSummary<F> {
    grid: Vec<Vec<F>>,
    mean: Vec<Vec<F>>,
    aleatoric_var: F,
    epistemic_var: Vec<Vec<F>>,
    total_var: Vec<Vec<F>>,
}

impl<F: Real> PredictiveSummary<F> {
    pub fn grid(&self) -> &[Vec<F>] {
        &self.grid
    }

    /// Predictive means indexed `[component][point]`.
    pub fn mean(&self) -> &[Vec<F>] {
        &self.mean
    }

    /// The shared aleatoric variance (the squared known noise level).
    pub fn aleatoric_var(&self) -> F {
        self.aleatoric_var
    }

    /// Draw variances indexed `[component][point]`.
    pub fn epistemic_var(&self) -> &[Vec<F>] {
        &self.epistemic_var
    }

    /// Total variances indexed `[component][point]`.
    pub fn total_var(&self) -> &[Vec<F>] {
        &self.total_var
    }

    pub fn n_components(&self) -> usize {
        self.mean.len()
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    /// Mean over all test observations of the Gaussian negative log
    /// density under the predictive mean and total variance.
    pub fn nll(&self, test: &Dataset<F>) -> Result<F, StatsError> {
        self.check_alignment(test)?;
        if test.is_empty() {
            return Err(StatsError::ShapeMismatch {
                context: "test points",
                expected: self.n_points(),
                got: 0,
            });
        }
        let two_pi = F::of(2.0 * std::f64::consts::PI);
        let half = F::of(0.5);
        let mut acc = F::zero();
        for (i, target) in test.targets().iter().enumerate() {
            for (component, u) in target.iter().enumerate() {
                let var = self.total_var[component][i];
                if !(var > F::zero()) {
                    return Err(StatsError::ZeroVariance);
                }
                let d = *u - self.mean[component][i];
                acc = acc + half * (Float::ln(two_pi * var) + d * d / var);
            }
        }
        let count = F::of((test.len() * test.output_dim()) as f64);
        Ok(acc / count)
    }

    /// Single-factor variance recalibration: the scale is the root mean
    /// standardized squared residual on the held-out set, and both
    /// variance parts are multiplied by its square so the split survives.
    pub fn calibrate_variance(
        &self,
        calib: &Dataset<F>,
    ) -> Result<(F, PredictiveSummary<F>), StatsError> {
        if calib.is_empty() {
            return Err(StatsError::EmptyCalibrationSet);
        }
        self.check_alignment(calib)?;
        let mut acc = F::zero();
        for (i, target) in calib.targets().iter().enumerate() {
            for (component, u) in target.iter().enumerate() {
                let var = self.total_var[component][i];
                if !(var > F::zero()) {
                    return Err(StatsError::ZeroVariance);
                }
                let d = *u - self.mean[component][i];
                acc = acc + d * d / var;
            }
        }
        let count = F::of((calib.len() * calib.output_dim()) as f64);
        let scale = Float::sqrt(acc / count);
        let s2 = scale * scale;
        let aleatoric = self.aleatoric_var * s2;
        let epistemic: Vec<Vec<F>> = self
            .epistemic_var
            .iter()
            .map(|comp| comp.iter().map(|&e| e * s2).collect())
            .collect();
        let total: Vec<Vec<F>> = epistemic
            .iter()
            .map(|comp| comp.iter().map(|&e| aleatoric + e).collect())
            .collect();
        Ok((
            scale,
            PredictiveSummary {
                grid: self.grid.clone(),
                mean: self.mean.clone(),
                aleatoric_var: aleatoric,
                epistemic_var: epistemic,
                total_var: total,
            },
        ))
    }

    /// A copy with both variance parts multiplied by `scale²`, so a factor
    /// estimated on one grid can be applied to a summary over another.
    /// The aleatoric/epistemic split of the total survives exactly.
    pub fn with_variance_scale(&self, scale: F) -> Result<PredictiveSummary<F>, StatsError> {
        if !(scale.is_finite() && scale > F::zero()) {
            return Err(StatsError::InvalidNoise);
        }
        let s2 = scale * scale;
        let aleatoric = self.aleatoric_var * s2;
        let epistemic: Vec<Vec<F>> = self
            .epistemic_var
            .iter()
            .map(|comp| comp.iter().map(|&e| e * s2).collect())
            .collect();
        let total: Vec<Vec<F>> = epistemic
            .iter()
            .map(|comp| comp.iter().map(|&e| aleatoric + e).collect())
            .collect();
        Ok(PredictiveSummary {
            grid: self.grid.clone(),
            mean: self.mean.clone(),
            aleatoric_var: aleatoric,
            epistemic_var: epistemic,
            total_var: total,
        })
    }

    fn check_alignment(&self, data: &Dataset<F>) -> Result<(), StatsError> {
        if data.output_dim() != self.n_components() && !data.is_empty() {
            return Err(StatsError::ShapeMismatch {
                context: "output components",
                expected: self.n_components(),
                got: data.output_dim(),
            });
        }
        if data.len() != self.n_points() {
            return Err(StatsError::ShapeMismatch {
                context: "test points",
                expected: self.n_points(),
                got: data.len(),
            });
        }
        for (row, input) in data.inputs().iter().enumerate() {
            if input != &self.grid[row] {
                return Err(StatsError::GridMismatch { row });
            }
        }
        Ok(())
    }
}

/// Relative L2 error `||a - reference|| / ||reference||`.
pub fn rl2e<F: Real>(a: &[F], reference: &[F]) -> Result<F, StatsError> {
    if a.len() != reference.len() {
        return Err(StatsError::ShapeMismatch {
            context: "relative error vectors",
            expected: reference.len(),
            got: a.len(),
        });
    }
    let mut num = F::zero();
    let mut den = F::zero();
    for (x, r) in a.iter().zip(reference) {
        let d = *x - *r;
        num = num + d * d;
        den = den + *r * *r;
    }
    if !(den > F::zero()) {
        return Err(StatsError::ZeroReference);
    }
    Ok(Float::sqrt(num / den))
}

/// Mean squared error between two equally long vectors.
pub fn mse<F: Real>(a: &[F], b: &[F]) -> Result<F, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::ShapeMismatch {
            context: "mean squared error vectors",
            expected: b.len(),
            got: a.len(),
        });
    }
    if a.is_empty() {
        return Err(StatsError::EmptySamples);
    }
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        acc = acc + d * d;
    }
    Ok(acc / F::of(a.len() as f64))
}
