//! Minibatch training of the FCCov objective and structural-dimension
//! selection.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::standardize;
use crate::fccov::{fccov_fast, fccov_grad, permutation_test_indexed, AnchorOrderIndex, CenteredScores};
use crate::metrics::linalg::{inv_sqrt, sym_eig};
use crate::metrics::{pairwise_distances, subset_distances, DistanceMatrix, ResponseSet};
use crate::networks::{Adam, Architecture, FnnSpec, InitScheme, Model, OutputMode};
use crate::objective::{batch_loss, BatchOutputs, PenaltyConfig, PenaltyEstimator, DEFAULT_LAMBDA};

/// Largest sample for which the full response distance matrix is cached.
pub const DEFAULT_CACHE_LIMIT: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub d: usize,
    pub lambda: f64,
    pub batch: usize,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Network architecture; [`default_architecture`] when absent.
    pub architecture: Option<Architecture>,
    pub mode: OutputMode,
    pub init: InitScheme,
    pub penalty: PenaltyEstimator,
    /// Samples up to which response distances are computed once up front.
    pub cache_limit: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 1,
            lambda: DEFAULT_LAMBDA,
            batch: 100,
            epochs: 100,
            iters_per_epoch: 100,
            lr: 1e-3,
            seed: 0,
            architecture: None,
            mode: OutputMode::Shared,
            init: InitScheme::default(),
            penalty: PenaltyEstimator::default(),
            cache_limit: DEFAULT_CACHE_LIMIT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if self.batch < crate::fccov::MIN_SAMPLES {
            return Err(Error::Config(format!("batch must be at least 5, got {}", self.batch)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 || self.iters_per_epoch == 0 {
            return Err(Error::Config("epochs and iterations per epoch must be positive".into()));
        }
        PenaltyConfig { lambda: self.lambda, estimator: self.penalty }.validate()?;
        if let Some(arch) = &self.architecture {
            arch.validate()?;
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.epochs * self.iters_per_epoch
    }

    pub fn architecture_for(&self, p: usize) -> Architecture {
        self.architecture
            .clone()
            .unwrap_or_else(|| Architecture::Fnn(default_architecture(p, self.d)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub loss: Vec<f64>,
    /// Per-iteration batch estimates, one entry per output component.
    pub fccov: Vec<Vec<f64>>,
    pub final_penalty: f64,
    pub wall_clock_secs: f64,
    /// Per-component estimates over the whole training sample with the
    /// final parameters, when the full distance matrix was cached.
    pub final_fccov: Option<Vec<f64>>,
    pub architecture: String,
    #[serde(skip)]
    pub model: Model,
}

/// `p, 2^{k+1}, 2^{k+2}, 2^{k+1}, ..., 16, d` with `k = floor(log2 p)`;
/// the descent halves while the width is at least 16.
pub fn default_architecture(p: usize, d: usize) -> FnnSpec {
    let k = usize::BITS - 1 - p.max(1).leading_zeros();
    let mut widths = vec![p, 1 << (k + 1), 1 << (k + 2)];
    let mut w = 1usize << (k + 1);
    while w >= 16 {
        widths.push(w);
        w /= 2;
    }
    widths.push(d);
    FnnSpec { widths }
}

enum Distances<'a> {
    Cached(DistanceMatrix),
    OnDemand(&'a ResponseSet),
}

impl Distances<'_> {
    fn batch(&self, idx: &[usize]) -> Result<DistanceMatrix> {
        match self {
            Distances::Cached(d) => Ok(d.submatrix(idx)),
            Distances::OnDemand(r) => subset_distances(r, idx),
        }
    }
}

/// Cycles through shuffled partitions of `0..n` in chunks of `batch`.
struct BatchSampler {
    perm: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, batch: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        Self { perm, pos: 0, batch, rng }
    }

    fn next(&mut self) -> &[usize] {
        if self.pos + self.batch > self.perm.len() {
            self.perm.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let out = &self.perm[self.pos..self.pos + self.batch];
        self.pos += self.batch;
        out
    }
}

fn norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn train(x: ArrayView2<f64>, responses: &ResponseSet, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let (n, p) = x.dim();
    if responses.len() != n {
        return Err(Error::Shape(format!("{n} predictor rows but {} responses", responses.len())));
    }
    if n < cfg.batch {
        return Err(Error::Config(format!("sample size {n} is below the batch size {}", cfg.batch)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("predictors contain non-finite values".into()));
    }
    let start = Instant::now();
    let arch = cfg.architecture_for(p);
    if arch.input_dim() != p {
        return Err(Error::Shape(format!("architecture expects {} inputs, data has {p}", arch.input_dim())));
    }
    let mut model = Model::init_with(&arch, cfg.d, cfg.mode, cfg.seed, cfg.init)?;
    let mut optimizers: Vec<Adam> = model.nets.iter().map(|net| Adam::new(net.values.len())).collect();
    let distances = if n <= cfg.cache_limit {
        Distances::Cached(pairwise_distances(responses)?)
    } else {
        Distances::OnDemand(responses)
    };
    let penalty = PenaltyConfig { lambda: cfg.lambda, estimator: cfg.penalty };
    let mut sampler = BatchSampler::new(n, cfg.batch, cfg.seed);
    let total = cfg.iterations();
    let mut loss_trace = Vec::with_capacity(total);
    let mut fccov_trace = Vec::with_capacity(total);
    let mut final_penalty = f64::NAN;
    for iteration in 0..total {
        let idx = sampler.next().to_vec();
        let xb = x.select(Axis(0), &idx);
        let anchors = AnchorOrderIndex::build(&distances.batch(&idx)?);
        let tape = model.tape(xb.view())?;
        let outputs = BatchOutputs::new(tape.output().clone())?;
        let loss = batch_loss(&outputs, &anchors, &penalty)?;
        let grads = model.backward_tape(&tape, loss.grad.view())?;
        let param_norm = norm(grads.iter().flatten().copied());
        if !loss.value.is_finite() || !param_norm.is_finite() {
            return Err(Error::Diverged {
                iteration,
                loss: loss.value,
                output_grad_norm: norm(loss.grad.iter().copied()),
                param_grad_norm: param_norm,
            });
        }
        for ((net, opt), g) in model.nets.iter_mut().zip(&mut optimizers).zip(&grads) {
            opt.step(&mut net.values, g, cfg.lr)?;
        }
        loss_trace.push(loss.value);
        fccov_trace.push(loss.fccov);
        final_penalty = loss.penalty;
    }
    let final_fccov = match &distances {
        Distances::Cached(d) => Some(component_fccov(model.forward(x)?.view(), &AnchorOrderIndex::build(d))?),
        Distances::OnDemand(_) => None,
    };
    Ok(TrainReport {
        loss: loss_trace,
        fccov: fccov_trace,
        final_penalty,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        final_fccov,
        architecture: arch.with_outputs(model.output_dim()).describe(),
        model,
    })
}

/// Estimate for each output column, after centering it.
pub fn component_fccov(f: ArrayView2<f64>, idx: &AnchorOrderIndex) -> Result<Vec<f64>> {
    f.columns()
        .into_iter()
        .map(|c| fccov_fast(&CenteredScores::new(&c.to_vec()), idx))
        .collect()
}

/// Ratio-gap threshold and noise handling of [`estimate_dimension`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DimensionConfig {
    pub d_max: usize,
    pub holdout: f64,
    pub eps: f64,
    pub permutations: usize,
    pub alpha: f64,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        Self {
            d_max: 5,
            holdout: 0.2,
            eps: 1e-8,
            permutations: 199,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionEstimate {
    pub d: usize,
    /// Held-out estimates along the training-sample principal directions,
    /// sorted in decreasing order, negatives clamped to zero and
    /// non-significant components set to zero.
    pub held_out: Vec<f64>,
    pub p_values: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Set when no component is significant; `d` is then 0.
    pub null: bool,
}

/// The symmetric matrix `A` with `FCCov(C a) = a^T A a` for the columns `C`.
fn fccov_cross(c: ArrayView2<f64>, idx: &AnchorOrderIndex) -> Result<Array2<f64>> {
    let d = c.ncols();
    let mut a = Array2::zeros((d, d));
    let grads = c
        .columns()
        .into_iter()
        .map(|col| fccov_grad(&CenteredScores(col.to_vec()), idx))
        .collect::<Result<Vec<_>>>()?;
    for s in 0..d {
        for t in 0..d {
            let v: f64 = c.column(s).iter().zip(&grads[t]).map(|(x, g)| x * g).sum();
            a[[s, t]] = 0.5 * v;
        }
    }
    let sym = (&a + &a.t()) * 0.5;
    Ok(sym)
}

/// Eigengap selection of the structural dimension.
///
/// Trains once with `d_max` outputs on a random 80% of the data, whitens
/// the outputs on that part and finds the directions maximising the
/// estimator there. Along those directions the estimator is recomputed on
/// the held-out 20% and each value is checked with a permutation test at
/// level `alpha / d_max`. Non-significant values count as zero; the
/// estimate is the `j` maximising `l_j / (l_{j+1} + eps)`.
pub fn estimate_dimension(
    x: ArrayView2<f64>,
    responses: &ResponseSet,
    dim: &DimensionConfig,
    cfg: &TrainConfig,
) -> Result<DimensionEstimate> {
    if dim.d_max == 0 {
        return Err(Error::Config("d_max must be at least 1".into()));
    }
    if !(dim.holdout > 0.0 && dim.holdout < 1.0) {
        return Err(Error::Config(format!("holdout fraction must lie in (0, 1), got {}", dim.holdout)));
    }
    let n = x.nrows();
    if responses.len() != n {
        return Err(Error::Shape(format!("{n} predictor rows but {} responses", responses.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let n_test = ((n as f64) * dim.holdout).round() as usize;
    let mut test_idx = sample(&mut rng, n, n_test).into_vec();
    test_idx.sort_unstable();
    let mut in_test = vec![false; n];
    test_idx.iter().for_each(|&i| in_test[i] = true);
    let train_idx: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();

    let train_cfg = TrainConfig { d: dim.d_max, ..cfg.clone() };
    let x_train = x.select(Axis(0), &train_idx);
    let y_train = responses.select(&train_idx)?;
    let report = train(x_train.view(), &y_train, &train_cfg)?;

    let f_train = report.model.forward(x_train.view())?;
    let f_test = report.model.forward(x.select(Axis(0), &test_idx).view())?;
    let mean = f_train.mean_axis(Axis(0)).expect("non-empty");
    let centered = &f_train - &mean;
    let cov = centered.t().dot(&centered) / train_idx.len() as f64;
    let whiten = inv_sqrt(cov.view())?;
    let c_train = centered.dot(&whiten);
    let c_test = (&f_test - &mean).dot(&whiten);

    let idx_train = AnchorOrderIndex::build(&pairwise_distances(&y_train)?);
    let a = fccov_cross(c_train.view(), &idx_train)?;
    let (_, vecs) = sym_eig(a.view())?;
    let idx_test = AnchorOrderIndex::build(&subset_distances(responses, &test_idx)?);
    let projected = c_test.dot(&vecs);

    let level = dim.alpha / dim.d_max as f64;
    let mut comps: Vec<(f64, f64)> = Vec::with_capacity(dim.d_max);
    for (k, col) in projected.columns().into_iter().enumerate() {
        let u = CenteredScores::new(&col.to_vec());
        let test = permutation_test_indexed(&u, &idx_test, dim.permutations, cfg.seed.wrapping_add(k as u64))?;
        let value = if test.p_value <= level { test.statistic.max(0.0) } else { 0.0 };
        comps.push((value, test.p_value));
    }
    comps.sort_by(|a, b| b.0.total_cmp(&a.0));
    let held_out: Vec<f64> = comps.iter().map(|c| c.0).collect();
    let p_values: Vec<f64> = comps.iter().map(|c| c.1).collect();
    if held_out[0] == 0.0 {
        return Ok(DimensionEstimate { d: 0, held_out, p_values, ratios: Vec::new(), null: true });
    }
    let mut ratios: Vec<f64> = held_out.windows(2).map(|w| w[0] / (w[1] + dim.eps)).collect();
    if ratios.is_empty() {
        ratios.push(f64::INFINITY);
    }
    let d = ratios
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (j, &r)| if r > best.1 { (j, r) } else { best })
        .0
        + 1;
    Ok(DimensionEstimate { d, held_out, p_values, ratios, null: false })
}

/// Outputs whitened to identity sample covariance.
pub fn predict_standardized(model: &Model, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    standardize(model.forward(x)?.view())
}
