//! Regularised training objective over a minibatch of network outputs:
//!
//! ```text
//! loss = - sum_t FCCov(f_t | Y) + lambda * || Var f - I_d ||_F^2
//! ```
//!
//! The variance penalty has two estimators. [`penalty_ustat`] averages the
//! fourth-order kernel [`h2_kernel`] over all distinct 4-tuples in closed
//! form; [`penalty_plugin`] uses the empirical covariance and is what
//! training uses by default.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fccov::{fccov_fast, fccov_grad, AnchorOrderIndex, CenteredScores, MIN_SAMPLES};

/// Network outputs for one batch, raw and column-centered.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutputs {
    raw: Array2<f64>,
    centered: Array2<f64>,
}

impl BatchOutputs {
    pub fn new(f: Array2<f64>) -> Result<Self> {
        let (b, d) = f.dim();
        if d == 0 {
            return Err(Error::Shape("outputs have zero columns".into()));
        }
        if b < MIN_SAMPLES {
            return Err(Error::TooFewSamples { n: b, min: MIN_SAMPLES });
        }
        let mean = f.mean_axis(Axis(0)).expect("non-empty");
        let centered = &f - &mean;
        Ok(Self { raw: f, centered })
    }

    pub fn batch(&self) -> usize {
        self.raw.nrows()
    }

    pub fn dim(&self) -> usize {
        self.raw.ncols()
    }

    pub fn raw(&self) -> ArrayView2<'_, f64> {
        self.raw.view()
    }

    pub fn centered(&self) -> ArrayView2<'_, f64> {
        self.centered.view()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyEstimator {
    UStatistic,
    #[default]
    PlugIn,
}

/// Penalty weight used when none is given.
pub const DEFAULT_LAMBDA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub estimator: PenaltyEstimator,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            estimator: PenaltyEstimator::PlugIn,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// The symmetric 4-point kernel whose U-statistic is unbiased for
/// `||Var f - I_d||_F^2` when `E f = 0`.
pub fn h2_kernel(rows: [ArrayView1<f64>; 4]) -> Result<f64> {
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("kernel rows differ in width".into()));
    }
    let mut value = d as f64;
    for t in 0..d {
        let mut pairs = 0.0;
        let mut singles = 0.0;
        for i in 0..4 {
            let fi = rows[i][t] * rows[i][t];
            singles += fi;
            for j in 0..4 {
                if i != j {
                    pairs += fi * rows[j][t] * rows[j][t];
                }
            }
        }
        value += pairs / 12.0 - singles / 2.0;
    }
    for s in 0..d {
        for t in (s + 1)..d {
            let mut cross = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        cross += rows[i][s] * rows[j][s] * rows[i][t] * rows[j][t];
                    }
                }
            }
            value += cross / 6.0;
        }
    }
    Ok(value)
}

/// Average of [`h2_kernel`] over all distinct 4-tuples of `rows`, taken as
/// already having mean zero. `O(B d^2)`.
///
/// With `G = sum_i f_i f_i^T`, the average reduces to
/// `(||G||_F^2 - sum_i ||f_i||^4) / (B(B-1)) - (2/B) tr G + d`.
pub fn ustat_penalty_rows(rows: ArrayView2<f64>) -> Result<f64> {
    let (b, d) = rows.dim();
    if b < MIN_SAMPLES {
        return Err(Error::TooFewSamples { n: b, min: MIN_SAMPLES });
    }
    let g = rows.t().dot(&rows);
    let quartic: f64 = rows
        .outer_iter()
        .map(|r| {
            let s = r.dot(&r);
            s * s
        })
        .sum();
    let frob2: f64 = g.iter().map(|v| v * v).sum();
    let trace: f64 = g.diag().sum();
    let bf = b as f64;
    Ok((frob2 - quartic) / (bf * (bf - 1.0)) - 2.0 * trace / bf + d as f64)
}

/// Gradient of [`ustat_penalty_rows`] with respect to each row.
fn ustat_penalty_rows_grad(rows: ArrayView2<f64>) -> Array2<f64> {
    let b = rows.nrows() as f64;
    let g = rows.t().dot(&rows);
    let mut grad = rows.dot(&g) * (4.0 / (b * (b - 1.0)));
    for (mut out, r) in grad.outer_iter_mut().zip(rows.outer_iter()) {
        let s = r.dot(&r);
        out.scaled_add(-4.0 * s / (b * (b - 1.0)) - 4.0 / b, &r);
    }
    grad
}

/// U-statistic variance penalty on the batch-centered outputs.
pub fn penalty_ustat(outputs: &BatchOutputs) -> Result<f64> {
    ustat_penalty_rows(outputs.centered())
}

/// Plug-in penalty `||S - I_d||_F^2` with `S = C^T C / B` and its gradient
/// with respect to the raw outputs.
pub fn penalty_plugin(outputs: &BatchOutputs) -> (f64, Array2<f64>) {
    let c = outputs.centered();
    let b = c.nrows() as f64;
    let mut resid = c.t().dot(&c) / b;
    for i in 0..resid.nrows() {
        resid[[i, i]] -= 1.0;
    }
    let value = resid.iter().map(|v| v * v).sum();
    let grad = project_centering(c.dot(&resid) * (4.0 / b));
    (value, grad)
}

/// Applies the centering Jacobian `I - (1/B) 1 1^T` to every column.
fn project_centering(mut g: Array2<f64>) -> Array2<f64> {
    let mean = g.mean_axis(Axis(0)).expect("non-empty");
    g -= &mean;
    g
}

/// Loss value, its gradient with respect to the raw outputs, and the
/// per-column FCCov estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub value: f64,
    pub grad: Array2<f64>,
    pub fccov: Vec<f64>,
    pub penalty: f64,
}

/// `-sum_t FCCov(f_t | Y) + lambda * penalty` for a batch whose responses
/// produced `idx`.
pub fn batch_loss(
    outputs: &BatchOutputs,
    idx: &AnchorOrderIndex,
    cfg: &PenaltyConfig,
) -> Result<BatchLoss> {
    cfg.validate()?;
    if idx.len() != outputs.batch() {
        return Err(Error::Shape(format!(
            "batch of {} outputs but anchor index over {} responses",
            outputs.batch(),
            idx.len()
        )));
    }
    let c = outputs.centered();
    let (b, d) = c.dim();
    let mut grad = Array2::<f64>::zeros((b, d));
    let mut fccov = Vec::with_capacity(d);
    for t in 0..d {
        let u = CenteredScores(c.column(t).to_vec());
        fccov.push(fccov_fast(&u, idx)?);
        let g = Array1::from(fccov_grad(&u, idx)?);
        grad.column_mut(t).scaled_add(-1.0, &g);
    }
    let grad = project_centering(grad);
    let (penalty, pgrad) = match cfg.estimator {
        PenaltyEstimator::PlugIn => penalty_plugin(outputs),
        PenaltyEstimator::UStatistic => (
            penalty_ustat(outputs)?,
            project_centering(ustat_penalty_rows_grad(c)),
        ),
    };
    let value = -fccov.iter().sum::<f64>() + cfg.lambda * penalty;
    Ok(BatchLoss {
        value,
        grad: grad + pgrad * cfg.lambda,
        fccov,
        penalty,
    })
}
