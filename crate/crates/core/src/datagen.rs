//! Seeded simulation designs: Euclidean Models I and II under three
//! predictor scenarios (with optional outliers), Gaussian distribution
//! responses on a quantile grid, and SPD matrix responses.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::metrics::linalg::{cholesky, matrix_exp};
use crate::metrics::{midpoint_grid, Metric, ResponseSet, Responses, SpdMatrix};

/// Offset applied to the seed when drawing the independent test set.
pub const TEST_SEED_OFFSET: u64 = 0x5eed_7e57;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "model-I", alias = "model-i")]
    ModelI,
    #[serde(rename = "model-II", alias = "model-ii")]
    ModelII,
    #[serde(rename = "setting-I-1", alias = "setting-i-1")]
    SettingI1,
    #[serde(rename = "setting-I-2", alias = "setting-i-2")]
    SettingI2,
    #[serde(rename = "setting-II-1", alias = "setting-ii-1")]
    SettingII1,
    #[serde(rename = "setting-II-2", alias = "setting-ii-2")]
    SettingII2,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::ModelI => "model-I",
            Model::ModelII => "model-II",
            Model::SettingI1 => "setting-I-1",
            Model::SettingI2 => "setting-I-2",
            Model::SettingII1 => "setting-II-1",
            Model::SettingII2 => "setting-II-2",
        }
    }

    /// True structural dimension.
    pub fn true_dim(self) -> usize {
        match self {
            Model::ModelI | Model::SettingI1 | Model::SettingII1 => 1,
            Model::ModelII | Model::SettingI2 | Model::SettingII2 => 2,
        }
    }

    pub fn min_p(self) -> usize {
        match self {
            Model::ModelI | Model::SettingI1 | Model::SettingII1 => 2,
            Model::ModelII | Model::SettingII2 => 4,
            Model::SettingI2 => 5,
        }
    }

    pub fn default_metric(self) -> Metric {
        match self {
            Model::ModelI | Model::ModelII => Metric::Euclidean,
            Model::SettingI1 | Model::SettingI2 => Metric::Wasserstein2,
            Model::SettingII1 | Model::SettingII2 => Metric::LogCholesky,
        }
    }

    fn is_euclidean(self) -> bool {
        matches!(self, Model::ModelI | Model::ModelII)
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown model `{s}`")))
    }
}

/// Predictor distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// `N(0, I_p)`
    A,
    /// `N(0, Sigma)` with `Sigma_ij = 0.5^|i-j|`
    B,
    /// `U([-2, 2]^p)`
    C,
    /// `U([0, 1]^p)`
    #[serde(rename = "uniform01")]
    Uniform01,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            "C" | "c" => Ok(Scenario::C),
            "uniform01" => Ok(Scenario::Uniform01),
            _ => Err(Error::Config(format!("unknown scenario `{s}`"))),
        }
    }
}

/// Contamination of Euclidean designs. Case 1 replaces a fraction of the
/// `x_1` draws with `2 t(1)`; case 2 uses error scale 0.25 and replaces the
/// whole error vector of a fraction of observations with `U(-50, 50)` draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outliers {
    pub case: u8,
    pub rate: f64,
}

fn default_grid_len() -> usize {
    21
}

fn default_noise_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub model: Model,
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub outliers: Option<Outliers>,
    pub seed: u64,
    /// Response metric; the model's default when absent.
    #[serde(default)]
    pub metric: Option<Metric>,
    /// Quantile grid length for distribution settings.
    #[serde(default = "default_grid_len")]
    pub grid_len: usize,
    /// Multiplier on every noise term; 0 gives the noise-free model.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

impl SimulationSpec {
    pub fn new(model: Model, scenario: Scenario, n: usize, p: usize, seed: u64) -> Self {
        Self {
            model,
            scenario,
            n,
            p,
            outliers: None,
            seed,
            metric: None,
            grid_len: default_grid_len(),
            noise_scale: default_noise_scale(),
        }
    }

    pub fn metric(&self) -> Metric {
        self.metric.unwrap_or(self.model.default_metric())
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.model;
        if self.p < m.min_p() {
            return Err(Error::Config(format!("{} needs p >= {}, got {}", m.name(), m.min_p(), self.p)));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        let scenario_ok = if m.is_euclidean() {
            self.scenario != Scenario::Uniform01
        } else {
            self.scenario == Scenario::Uniform01
        };
        if !scenario_ok {
            return Err(Error::Config(format!("scenario {:?} does not apply to {}", self.scenario, m.name())));
        }
        if let Some(o) = self.outliers {
            if !m.is_euclidean() {
                return Err(Error::Config("outliers apply to Euclidean models only".into()));
            }
            if o.case != 1 && o.case != 2 {
                return Err(Error::Config(format!("outlier case must be 1 or 2, got {}", o.case)));
            }
            if !(0.0..1.0).contains(&o.rate) {
                return Err(Error::Config(format!("outlier rate must lie in [0, 1), got {}", o.rate)));
            }
        }
        let metric_ok = match m {
            Model::ModelI | Model::ModelII => self.metric() == Metric::Euclidean,
            Model::SettingI1 | Model::SettingI2 => self.metric() == Metric::Wasserstein2,
            Model::SettingII1 | Model::SettingII2 => {
                matches!(self.metric(), Metric::LogCholesky | Metric::AffineInvariant)
            }
        };
        if !metric_ok {
            return Err(Error::Config(format!("metric {} does not apply to {}", self.metric(), m.name())));
        }
        if self.grid_len < 2 {
            return Err(Error::Config("quantile grid needs at least 2 points".into()));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(Error::Config(format!("noise scale must be >= 0, got {}", self.noise_scale)));
        }
        Ok(())
    }

    /// The matching independent test design: a fifth of the sample size
    /// (at least 5) drawn with an offset seed and without contamination, so
    /// accuracy is judged on the clean design the outliers corrupt.
    pub fn test_spec(&self) -> Self {
        Self {
            n: (self.n / 5).max(5),
            seed: self.seed.wrapping_add(TEST_SEED_OFFSET),
            outliers: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub x: Array2<f64>,
    pub responses: ResponseSet,
    /// True sufficient predictors, one column per structural direction.
    pub truth: Array2<f64>,
    pub d0: usize,
}

pub fn generate(spec: &SimulationSpec) -> Result<SimulatedDataset> {
    match spec.model {
        Model::ModelI | Model::ModelII => gen_euclidean(spec),
        Model::SettingI1 | Model::SettingI2 => gen_distribution(spec),
        Model::SettingII1 | Model::SettingII2 => gen_spd(spec),
    }
}

fn rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let main = ChaCha8Rng::seed_from_u64(seed);
    let mut outlier = ChaCha8Rng::seed_from_u64(seed);
    outlier.set_stream(1);
    (main, outlier)
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, p), || rng.sample(StandardNormal))
}

pub fn draw_predictors(scenario: Scenario, n: usize, p: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    Ok(match scenario {
        Scenario::A => normal_matrix(rng, n, p),
        Scenario::B => {
            let sigma = Array2::from_shape_fn((p, p), |(i, j)| 0.5f64.powi(i.abs_diff(j) as i32));
            let l = cholesky(sigma.view())?;
            normal_matrix(rng, n, p).dot(&l.t())
        }
        Scenario::C => Array2::from_shape_simple_fn((n, p), || rng.random_range(-2.0..2.0)),
        Scenario::Uniform01 => Array2::from_shape_simple_fn((n, p), || rng.random::<f64>()),
    })
}

/// Standard Cauchy draw as a normal over an independent `|N(0, 1)|`.
fn t1(rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let w: f64 = rng.sample(StandardNormal);
    z / w.abs()
}

pub fn model_i_predictor(x1: f64, x2: f64) -> f64 {
    x1 * x1 / (1.0 + (0.1 + 0.5 * x2).powi(2))
}

pub fn model_ii_predictors(x1: f64, x3: f64, x4: f64) -> [f64; 2] {
    [x3 / (x4 + 2.0), x1 * x1]
}

fn outlier_rows(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = (rate * n as f64).round() as usize;
    let mut rows = sample(rng, n, k.min(n)).into_vec();
    rows.sort_unstable();
    rows
}

pub fn gen_euclidean(spec: &SimulationSpec) -> Result<SimulatedDataset> {
    spec.validate()?;
    if !spec.model.is_euclidean() {
        return Err(Error::Config(format!("{} is not a Euclidean model", spec.model.name())));
    }
    let (mut rng, mut orng) = rngs(spec.seed);
    let n = spec.n;
    let mut x = draw_predictors(spec.scenario, n, spec.p, &mut rng)?;
    let (q, base_scale) = match spec.model {
        Model::ModelI => (3, 0.25),
        _ => (2, 0.1),
    };
    let case = spec.outliers.filter(|o| o.rate > 0.0 || o.case == 2);
    let scale = match case {
        Some(o) if o.case == 2 => 0.25,
        _ => base_scale,
    } * spec.noise_scale;
    let mut eps = normal_matrix(&mut rng, n, q) * scale;
    if let Some(o) = case {
        let rows = outlier_rows(n, o.rate, &mut orng);
        for i in rows {
            if o.case == 1 {
                x[[i, 0]] = 2.0 * t1(&mut orng);
            } else {
                for v in eps.row_mut(i) {
                    *v = orng.random_range(-50.0..50.0);
                }
            }
        }
    }
    let d0 = spec.model.true_dim();
    let mut truth = Array2::zeros((n, d0));
    let mut y = eps;
    for i in 0..n {
        let r = x.row(i);
        if spec.model == Model::ModelI {
            let f = model_i_predictor(r[0], r[1]);
            truth[[i, 0]] = f;
            y[[i, 0]] += f;
        } else {
            let f = model_ii_predictors(r[0], r[2], r[3]);
            for t in 0..2 {
                truth[[i, t]] = f[t];
                y[[i, t]] += f[t];
            }
        }
    }
    Ok(SimulatedDataset {
        x,
        responses: ResponseSet::euclidean(y)?,
        truth,
        d0,
    })
}

fn dot_prefix(beta: &[f64], x: ndarray::ArrayView1<f64>) -> f64 {
    beta.iter().zip(x.iter()).map(|(b, v)| b * v).sum()
}

pub fn setting_i1_mean(x: ndarray::ArrayView1<f64>) -> f64 {
    let a = dot_prefix(&[0.75, 0.25], x);
    let b = dot_prefix(&[0.25, 0.75], x);
    (4.0 * PI * a * (2.0 * b - 1.0)).sin()
}

/// `(D_1(x), D_2(x))` of Setting I-2; the response's standard deviation is
/// `|D_2(x)|`.
pub fn setting_i2_functions(x: ndarray::ArrayView1<f64>) -> [f64; 2] {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    [r * r.ln(), (0.1 * PI * (x[3] + x[4])).sin() + x[3] * x[3]]
}

pub fn gen_distribution(spec: &SimulationSpec) -> Result<SimulatedDataset> {
    spec.validate()?;
    if !matches!(spec.model, Model::SettingI1 | Model::SettingI2) {
        return Err(Error::Config(format!("{} is not a distribution setting", spec.model.name())));
    }
    let (mut rng, _) = rngs(spec.seed);
    let n = spec.n;
    let x = draw_predictors(spec.scenario, n, spec.p, &mut rng)?;
    let grid = midpoint_grid(spec.grid_len);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let z: Vec<f64> = grid.iter().map(|&t| std_normal.inverse_cdf(t)).collect();
    let d0 = spec.model.true_dim();
    let mut truth = Array2::zeros((n, d0));
    let mut quantiles = Array2::zeros((n, grid.len()));
    for i in 0..n {
        let r = x.row(i);
        let (centre, sd) = if spec.model == Model::SettingI1 {
            let d = setting_i1_mean(r);
            truth[[i, 0]] = d;
            (d, 1.0)
        } else {
            let [d1, d2] = setting_i2_functions(r);
            truth[[i, 0]] = d1;
            truth[[i, 1]] = d2.abs();
            (d1, d2.abs())
        };
        let noise: f64 = rng.sample(StandardNormal);
        let mu = centre + 0.1 * spec.noise_scale * noise;
        for (q, zj) in quantiles.row_mut(i).iter_mut().zip(&z) {
            *q = mu + sd * zj;
        }
    }
    Ok(SimulatedDataset {
        x,
        responses: ResponseSet::new(Responses::QuantileGrids(quantiles), spec.metric())?,
        truth,
        d0,
    })
}

/// Symmetric `m x m` matrix with `N(0, 1)` diagonal and `N(0, 1/2)`
/// off-diagonal entries.
pub fn symmetric_normal(m: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut z = Array2::zeros((m, m));
    for i in 0..m {
        z[[i, i]] = rng.sample::<f64, _>(StandardNormal);
        for j in 0..i {
            let v = rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2;
            z[[i, j]] = v;
            z[[j, i]] = v;
        }
    }
    z
}

pub fn setting_ii1_zeta(x: ndarray::ArrayView1<f64>) -> f64 {
    let b = dot_prefix(&[0.5, 0.5], x);
    (4.0 * PI * b * (2.0 * b - 1.0)).sin()
}

pub fn setting_ii2_zetas(x: ndarray::ArrayView1<f64>) -> [f64; 2] {
    [
        x[0] / (1.0 + x[1].abs().sqrt()),
        (x[2] * x[2]).sin() + (x[3] * x[3]).exp(),
    ]
}

/// `log D(x)` for the SPD settings.
pub fn spd_log_mean(model: Model, x: ndarray::ArrayView1<f64>) -> Result<Array2<f64>> {
    match model {
        Model::SettingII1 => {
            let z = setting_ii1_zeta(x);
            Ok(ndarray::array![[1.0, z], [z, 1.0]])
        }
        Model::SettingII2 => {
            let [z1, z2] = setting_ii2_zetas(x);
            Ok(ndarray::array![[1.0, z1, z2], [z1, 1.0, z1], [z2, z1, 1.0]])
        }
        other => Err(Error::Config(format!("{} is not an SPD setting", other.name()))),
    }
}

pub fn gen_spd(spec: &SimulationSpec) -> Result<SimulatedDataset> {
    spec.validate()?;
    if !matches!(spec.model, Model::SettingII1 | Model::SettingII2) {
        return Err(Error::Config(format!("{} is not an SPD setting", spec.model.name())));
    }
    let (mut rng, _) = rngs(spec.seed);
    let n = spec.n;
    let x = draw_predictors(spec.scenario, n, spec.p, &mut rng)?;
    let d0 = spec.model.true_dim();
    let mut truth = Array2::zeros((n, d0));
    let mut mats = Vec::with_capacity(n);
    for i in 0..n {
        let r = x.row(i);
        let log_mean = spd_log_mean(spec.model, r)?;
        if spec.model == Model::SettingII1 {
            truth[[i, 0]] = setting_ii1_zeta(r);
        } else {
            let z = setting_ii2_zetas(r);
            truth[[i, 0]] = z[0];
            truth[[i, 1]] = z[1];
        }
        let m = log_mean.nrows();
        let noise = symmetric_normal(m, &mut rng);
        let mut y = matrix_exp((&log_mean + &(noise * (0.2 * spec.noise_scale))).view())?;
        let yt = y.t().to_owned();
        y = (&y + &yt) * 0.5;
        mats.push(SpdMatrix::new(y).map_err(|e| match e {
            Error::NotPositiveDefinite { reason, .. } => Error::NotPositiveDefinite { index: i, reason },
            other => other,
        })?);
    }
    Ok(SimulatedDataset {
        x,
        responses: ResponseSet::new(Responses::SpdMatrices(mats), spec.metric())?,
        truth,
        d0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{log_cholesky, wasserstein2};
    use ndarray::array;

    fn spec(model: Model, scenario: Scenario, n: usize, p: usize) -> SimulationSpec {
        SimulationSpec::new(model, scenario, n, p, 17)
    }

    fn euclid(ds: &SimulatedDataset) -> &Array2<f64> {
        match ds.responses.responses() {
            Responses::EuclideanVectors(y) => y,
            _ => unreachable!(),
        }
    }

    #[test]
    fn model_i_noise_free_point() {
        assert_eq!(model_i_predictor(1.0, 0.0), 1.0 / 1.01);
        let mut s = spec(Model::ModelI, Scenario::A, 50, 4);
        s.noise_scale = 0.0;
        let ds = gen_euclidean(&s).unwrap();
        let y = euclid(&ds);
        for i in 0..50 {
            let r = ds.x.row(i);
            assert_eq!(y[[i, 0]], model_i_predictor(r[0], r[1]));
            assert_eq!(y[[i, 1]], 0.0);
            assert_eq!(y[[i, 2]], 0.0);
        }
    }

    #[test]
    fn truth_matches_scalar_formulas() {
        let ds = gen_euclidean(&spec(Model::ModelII, Scenario::C, 100, 5)).unwrap();
        for i in 0..100 {
            let x = ds.x.row(i);
            assert_eq!(ds.truth[[i, 0]], x[2] / (x[3] + 2.0));
            assert_eq!(ds.truth[[i, 1]], x[0] * x[0]);
        }
        let ds = gen_euclidean(&spec(Model::ModelI, Scenario::B, 100, 5)).unwrap();
        for i in 0..100 {
            let x = ds.x.row(i);
            assert_eq!(ds.truth[[i, 0]], x[0].powi(2) / (1.0 + (0.1 + 0.5 * x[1]).powi(2)));
        }
    }

    #[test]
    fn scenario_b_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = draw_predictors(Scenario::B, 100_000, 3, &mut rng).unwrap();
        let c01 = x.column(0).dot(&x.column(1)) / 1e5;
        let c02 = x.column(0).dot(&x.column(2)) / 1e5;
        assert!((c01 - 0.5).abs() < 0.02, "{c01}");
        assert!((c02 - 0.25).abs() < 0.02, "{c02}");
    }

    #[test]
    fn scenario_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = draw_predictors(Scenario::C, 1000, 3, &mut rng).unwrap();
        assert!(c.iter().all(|v| (-2.0..2.0).contains(v)));
        let u = draw_predictors(Scenario::Uniform01, 1000, 3, &mut rng).unwrap();
        assert!(u.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn zero_outlier_rate_matches_clean() {
        let clean = spec(Model::ModelI, Scenario::B, 200, 6);
        let mut dirty = clean.clone();
        dirty.outliers = Some(Outliers { case: 1, rate: 0.0 });
        assert_eq!(gen_euclidean(&clean).unwrap(), gen_euclidean(&dirty).unwrap());
        dirty.outliers = Some(Outliers { case: 2, rate: 0.0 });
        assert_eq!(gen_euclidean(&clean).unwrap(), gen_euclidean(&dirty).unwrap());
    }

    #[test]
    fn case_one_replaces_exact_fraction_of_x1() {
        let clean = spec(Model::ModelI, Scenario::B, 200, 6);
        let mut dirty = clean.clone();
        dirty.outliers = Some(Outliers { case: 1, rate: 0.3 });
        let a = gen_euclidean(&clean).unwrap();
        let b = gen_euclidean(&dirty).unwrap();
        let changed = (0..200).filter(|&i| a.x[[i, 0]] != b.x[[i, 0]]).count();
        assert_eq!(changed, 60);
        assert_eq!(a.x.column(1), b.x.column(1));
        for i in 0..200 {
            assert_eq!(b.truth[[i, 0]], model_i_predictor(b.x[[i, 0]], b.x[[i, 1]]));
        }
    }

    #[test]
    fn case_two_replaces_error_rows() {
        let mut s = spec(Model::ModelII, Scenario::B, 300, 5);
        s.outliers = Some(Outliers { case: 2, rate: 0.1 });
        let ds = gen_euclidean(&s).unwrap();
        let y = euclid(&ds);
        let big = (0..300)
            .filter(|&i| (y[[i, 0]] - ds.truth[[i, 0]]).abs() > 2.0)
            .count();
        // 30 rows carry U(-50, 50) errors; about 4% of those fall within 2.
        assert!((24..=30).contains(&big), "{big}");
        for i in 0..300 {
            let e = y[[i, 1]] - ds.truth[[i, 1]];
            assert!(e.abs() < 50.0);
        }
    }

    #[test]
    fn reproducible() {
        let s = spec(Model::SettingII2, Scenario::Uniform01, 30, 5);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let t = s.test_spec();
        assert_eq!(t.n, 6);
        assert_ne!(generate(&t).unwrap().x, generate(&s).unwrap().x.slice(ndarray::s![..6, ..]));

        let mut dirty = spec(Model::ModelI, Scenario::B, 50, 4);
        dirty.outliers = Some(Outliers { case: 1, rate: 0.5 });
        let mut clean = dirty.clone();
        clean.outliers = None;
        assert_eq!(generate(&dirty.test_spec()).unwrap(), generate(&clean.test_spec()).unwrap());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate(&spec(Model::ModelII, Scenario::A, 10, 3)).is_err());
        assert!(generate(&spec(Model::SettingI2, Scenario::Uniform01, 10, 4)).is_err());
        assert!(generate(&spec(Model::ModelI, Scenario::Uniform01, 10, 4)).is_err());
        assert!(generate(&spec(Model::SettingI1, Scenario::A, 10, 4)).is_err());
        let mut s = spec(Model::ModelI, Scenario::A, 10, 4);
        s.outliers = Some(Outliers { case: 3, rate: 0.1 });
        assert!(generate(&s).is_err());
        s.outliers = Some(Outliers { case: 1, rate: 1.0 });
        assert!(generate(&s).is_err());
        let mut s = spec(Model::SettingII1, Scenario::Uniform01, 10, 4);
        s.metric = Some(Metric::Wasserstein2);
        assert!(generate(&s).is_err());
    }

    #[test]
    fn distribution_grid_is_normal_quantiles() {
        let mut s = spec(Model::SettingI1, Scenario::Uniform01, 20, 3);
        s.noise_scale = 0.0;
        let ds = gen_distribution(&s).unwrap();
        let q = match ds.responses.responses() {
            Responses::QuantileGrids(q) => q,
            _ => unreachable!(),
        };
        let n01 = Normal::new(0.0, 1.0).unwrap();
        for i in 0..20 {
            let mu = setting_i1_mean(ds.x.row(i));
            assert_eq!(ds.truth[[i, 0]], mu);
            for (j, &t) in midpoint_grid(21).iter().enumerate() {
                assert_eq!(q[[i, j]], mu + n01.inverse_cdf(t));
            }
        }
        // Middle grid point t = 1/2 is the mean.
        assert!((n01.inverse_cdf(0.5)).abs() < 1e-15);
    }

    #[test]
    fn setting_i1_index_values() {
        let x = array![1.0, 0.0, 0.0];
        assert_eq!(dot_prefix(&[0.75, 0.25], x.view()), 0.75);
        let want = (4.0 * PI * 0.75 * (2.0 * 0.25 - 1.0)).sin();
        assert_eq!(setting_i1_mean(x.view()), want);
    }

    #[test]
    fn distribution_w2_matches_gaussian_closed_form() {
        let s = spec(Model::SettingI2, Scenario::Uniform01, 10, 5);
        let ds = gen_distribution(&s).unwrap();
        let q = match ds.responses.responses() {
            Responses::QuantileGrids(q) => q.clone(),
            _ => unreachable!(),
        };
        // W2^2 = (mu1 - mu2)^2 + (s1 - s2)^2, up to the grid's variance deficit.
        let grid_var: f64 = {
            let n01 = Normal::new(0.0, 1.0).unwrap();
            midpoint_grid(21).iter().map(|&t| n01.inverse_cdf(t).powi(2)).sum::<f64>() / 21.0
        };
        for i in 1..10 {
            let mu = |r: usize| q.row(r).sum() / 21.0;
            let (s1, s2) = (ds.truth[[0, 1]], ds.truth[[i, 1]]);
            let want = ((mu(0) - mu(i)).powi(2) + grid_var * (s1 - s2).powi(2)).sqrt();
            let got = wasserstein2(q.row(0).as_slice().unwrap(), q.row(i).as_slice().unwrap()).unwrap();
            assert!((want - got).abs() < 1e-10, "{want} {got}");
            let exact = ((mu(0) - mu(i)).powi(2) + (s1 - s2).powi(2)).sqrt();
            assert!((exact - got).abs() <= 0.1 * exact + 1e-12);
        }
    }

    #[test]
    fn spd_noise_free_equals_mean() {
        let mut s = spec(Model::SettingII1, Scenario::Uniform01, 10, 3);
        s.noise_scale = 0.0;
        let ds = gen_spd(&s).unwrap();
        let mats = match ds.responses.responses() {
            Responses::SpdMatrices(m) => m.clone(),
            _ => unreachable!(),
        };
        for (i, y) in mats.iter().enumerate() {
            let d = matrix_exp(spd_log_mean(Model::SettingII1, ds.x.row(i)).unwrap().view()).unwrap();
            let d = SpdMatrix::new((&d + &d.t()) * 0.5).unwrap();
            assert!(log_cholesky(y, &d).unwrap() < 1e-12);
            assert_eq!(ds.truth[[i, 0]], setting_ii1_zeta(ds.x.row(i)));
        }
    }

    #[test]
    fn symmetric_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut off, mut diag) = (0.0, 0.0);
        let draws = 100_000;
        for _ in 0..draws {
            let z = symmetric_normal(2, &mut rng);
            assert_eq!(z, z.t());
            off += z[[0, 1]] * z[[0, 1]];
            diag += z[[0, 0]] * z[[0, 0]];
        }
        assert!((off / draws as f64 - 0.5).abs() < 0.01);
        assert!((diag / draws as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn spd_setting_two_truth() {
        let ds = gen_spd(&spec(Model::SettingII2, Scenario::Uniform01, 40, 4)).unwrap();
        for i in 0..40 {
            let x = ds.x.row(i);
            assert_eq!(ds.truth[[i, 0]], x[0] / (1.0 + x[1].abs().sqrt()));
            assert_eq!(ds.truth[[i, 1]], (x[2] * x[2]).sin() + (x[3] * x[3]).exp());
        }
        assert_eq!(ds.responses.len(), 40);
    }

    #[test]
    fn spec_serde_names() {
        let s: SimulationSpec = serde_json::from_str(
            r#"{"model":"setting-I-2","scenario":"uniform01","n":10,"p":5,"seed":1}"#,
        )
        .unwrap();
        assert_eq!(s.model, Model::SettingI2);
        assert_eq!(s.grid_len, 21);
        assert_eq!("model-II".parse::<Model>().unwrap(), Model::ModelII);
    }
}
