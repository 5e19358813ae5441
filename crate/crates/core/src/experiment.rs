//! Seeded replicate sweeps: simulate or split data, train, score on held-out
//! samples and write machine-readable reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate, SimulationSpec};
use crate::error::{Error, Result};
use crate::evaluation::{covariance_deviation, distance_correlation, kappa_distance, standardize};
use crate::fccov::AnchorOrderIndex;
use crate::io::{read_matrix, read_responses, write_atomic};
use crate::metrics::{pairwise_distances, Metric, ResponseSet};
use crate::trainer::{component_fccov, train, TrainConfig};

/// Share of an external data set held out for scoring.
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

/// Predictor and response files, with optional true sufficient predictors
/// (needed for `dcor` and `kappa`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileData {
    pub predictors: PathBuf,
    pub responses: PathBuf,
    #[serde(default)]
    pub metric: Option<Metric>,
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportMetric {
    Dcor,
    Kappa,
    FccovComponents,
}

fn default_replicates() -> usize {
    1
}

fn default_metrics() -> Vec<ReportMetric> {
    vec![ReportMetric::Dcor]
}

/// One experiment. Exactly one of `simulation` and `data` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub simulation: Option<SimulationSpec>,
    #[serde(default)]
    pub data: Option<FileData>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<ReportMetric>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        self.train.validate()?;
        let wants_truth = self.metrics.iter().any(|m| matches!(m, ReportMetric::Dcor | ReportMetric::Kappa));
        match (&self.simulation, &self.data) {
            (Some(sim), None) => {
                sim.validate()?;
                if self.metrics.contains(&ReportMetric::Kappa) && self.train.d != sim.model.true_dim() {
                    return Err(Error::Config(format!(
                        "kappa needs d = {} for {}, got d = {}",
                        sim.model.true_dim(),
                        sim.model.name(),
                        self.train.d
                    )));
                }
            }
            (None, Some(data)) => {
                if !(data.test_fraction > 0.0 && data.test_fraction < 1.0) {
                    return Err(Error::Config(format!("test fraction must lie in (0, 1), got {}", data.test_fraction)));
                }
                if wants_truth && data.truth.is_none() {
                    return Err(Error::Config("dcor and kappa need a truth file".into()));
                }
                for path in [Some(&data.predictors), Some(&data.responses), data.truth.as_ref()].into_iter().flatten() {
                    if !path.exists() {
                        return Err(Error::Config(format!("{} does not exist", path.display())));
                    }
                }
            }
            _ => return Err(Error::Config("set exactly one of `simulation` and `data`".into())),
        }
        Ok(())
    }
}

/// Per-replicate outcome. Metrics not requested, or not computable, are
/// `None`; a failed replicate carries its error instead.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub data_seed: u64,
    pub train_seed: u64,
    pub error: Option<String>,
    pub numerical_failure: bool,
    pub dcor: Option<f64>,
    pub dcor_degenerate: bool,
    pub kappa: Option<f64>,
    /// Held-out `||Var f - I||_F`.
    pub covariance_deviation: Option<f64>,
    pub final_loss: Option<f64>,
    /// Held-out estimate per output component.
    pub fccov: Vec<f64>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl ReplicateResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 when only one value exists.
    pub sd: f64,
    pub count: usize,
    pub single_value: bool,
}

/// Mean and sample standard deviation, accumulated in input order.
pub fn summarize(values: &[f64]) -> Option<MetricSummary> {
    let count = values.len();
    if count == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let sd = if count > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(MetricSummary { mean, sd, count, single_value: count == 1 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub version: String,
    pub spec: ExperimentSpec,
    pub replicates: Vec<ReplicateResult>,
    pub failures: usize,
    pub summary: BTreeMap<String, MetricSummary>,
}

impl ExperimentReport {
    /// Column names and rows of the per-replicate table; absent values are
    /// empty cells.
    pub fn table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let d = self.replicates.iter().map(|r| r.fccov.len()).max().unwrap_or(0);
        let mut header: Vec<String> = [
            "replicate",
            "data_seed",
            "train_seed",
            "status",
            "dcor",
            "dcor_degenerate",
            "kappa",
            "covariance_deviation",
            "final_loss",
        ]
        .map(String::from)
        .to_vec();
        header.extend((1..=d).map(|k| format!("fccov_{k}")));
        header.push("error".into());
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let rows = self
            .replicates
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.replicate.to_string(),
                    r.data_seed.to_string(),
                    r.train_seed.to_string(),
                    if r.ok() { "ok" } else { "failed" }.to_string(),
                    opt(r.dcor),
                    r.dcor_degenerate.to_string(),
                    opt(r.kappa),
                    opt(r.covariance_deviation),
                    opt(r.final_loss),
                ];
                row.extend((0..d).map(|k| opt(r.fccov.get(k).copied())));
                row.push(r.error.clone().unwrap_or_default());
                row
            })
            .collect();
        (header, rows)
    }

    /// Writes `replicates.csv`, `summary.json` and `timings.csv` into `dir`.
    /// Timings live in their own file so the other two are reproducible.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let (header, rows) = self.table();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).map_err(csv_error)?;
        for row in &rows {
            w.write_record(row).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        write_atomic(&dir.join("replicates.csv"), &bytes)?;

        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        write_atomic(&dir.join("summary.json"), json.as_bytes())?;

        let mut timings = String::from("replicate,wall_clock_secs\n");
        for r in &self.replicates {
            timings.push_str(&format!("{},{}\n", r.replicate, r.wall_clock_secs));
        }
        write_atomic(&dir.join("timings.csv"), timings.as_bytes())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

struct Split {
    x_train: Array2<f64>,
    y_train: ResponseSet,
    x_test: Array2<f64>,
    y_test: ResponseSet,
    truth_test: Option<Array2<f64>>,
}

struct LoadedFiles {
    x: Array2<f64>,
    y: ResponseSet,
    truth: Option<Array2<f64>>,
}

fn load_files(data: &FileData) -> Result<LoadedFiles> {
    let x = read_matrix(&data.predictors)?;
    let y = read_responses(&data.responses, data.metric)?;
    if y.len() != x.nrows() {
        return Err(Error::Shape(format!("{} predictor rows but {} responses", x.nrows(), y.len())));
    }
    let truth = data.truth.as_deref().map(read_matrix).transpose()?;
    if let Some(t) = &truth {
        if t.nrows() != x.nrows() {
            return Err(Error::Shape(format!("{} predictor rows but {} truth rows", x.nrows(), t.nrows())));
        }
    }
    Ok(LoadedFiles { x, y, truth })
}

fn file_split(files: &LoadedFiles, fraction: f64, seed: u64) -> Result<Split> {
    let n = files.x.nrows();
    let n_test = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    order.shuffle(&mut rng);
    let (test, train) = order.split_at(n_test);
    Ok(Split {
        x_train: files.x.select(Axis(0), train),
        y_train: files.y.select(train)?,
        x_test: files.x.select(Axis(0), test),
        y_test: files.y.select(test)?,
        truth_test: files.truth.as_ref().map(|t| t.select(Axis(0), test)),
    })
}

fn run_replicate(spec: &ExperimentSpec, files: Option<&LoadedFiles>, r: usize) -> ReplicateResult {
    let start = std::time::Instant::now();
    let data_seed = match (&spec.simulation, &spec.data) {
        (Some(sim), _) => sim.seed.wrapping_add(r as u64),
        _ => spec.train.seed.wrapping_add(r as u64),
    };
    let train_cfg = TrainConfig { seed: spec.train.seed.wrapping_add(r as u64), ..spec.train.clone() };
    let mut result = ReplicateResult {
        replicate: r,
        data_seed,
        train_seed: train_cfg.seed,
        error: None,
        numerical_failure: false,
        dcor: None,
        dcor_degenerate: false,
        kappa: None,
        covariance_deviation: None,
        final_loss: None,
        fccov: Vec::new(),
        wall_clock_secs: 0.0,
    };
    let outcome = (|| -> Result<()> {
        let split = match (&spec.simulation, files) {
            (Some(sim), _) => {
                let sim = SimulationSpec { seed: data_seed, ..sim.clone() };
                let tr = generate(&sim)?;
                let te = generate(&sim.test_spec())?;
                Split {
                    x_train: tr.x,
                    y_train: tr.responses,
                    x_test: te.x,
                    y_test: te.responses,
                    truth_test: Some(te.truth),
                }
            }
            (None, Some(files)) => {
                let fraction = spec.data.as_ref().map_or(DEFAULT_TEST_FRACTION, |d| d.test_fraction);
                file_split(files, fraction, data_seed)?
            }
            (None, None) => return Err(Error::Config("no data source".into())),
        };
        let report = train(split.x_train.view(), &split.y_train, &train_cfg)?;
        result.final_loss = report.loss.last().copied();
        let f = report.model.forward(split.x_test.view())?;
        result.covariance_deviation = Some(covariance_deviation(f.view()));
        for metric in &spec.metrics {
            match metric {
                ReportMetric::Dcor => {
                    let truth = split.truth_test.as_ref().ok_or_else(|| Error::Config("dcor needs truth".into()))?;
                    let dc = distance_correlation(f.view(), truth.view())?;
                    result.dcor = Some(dc.value);
                    result.dcor_degenerate = dc.degenerate;
                }
                ReportMetric::Kappa => {
                    let truth = split.truth_test.as_ref().ok_or_else(|| Error::Config("kappa needs truth".into()))?;
                    let k = kappa_distance(f.view(), standardize(truth.view())?.view())?;
                    result.kappa = Some(k.value);
                }
                ReportMetric::FccovComponents => {
                    let idx = AnchorOrderIndex::build(&pairwise_distances(&split.y_test)?);
                    result.fccov = component_fccov(f.view(), &idx)?;
                }
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        result.numerical_failure = e.is_numerical();
        result.error = Some(e.to_string());
    }
    result.wall_clock_secs = start.elapsed().as_secs_f64();
    result
}

/// Runs every replicate (in parallel on the current rayon pool) and
/// summarizes the successful ones. A failing replicate is recorded and the
/// others continue; only an invalid spec or unreadable input is an error.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let files = spec.data.as_ref().map(load_files).transpose()?;
    let replicates: Vec<ReplicateResult> =
        (0..spec.replicates).into_par_iter().map(|r| run_replicate(spec, files.as_ref(), r)).collect();
    let ok: Vec<&ReplicateResult> = replicates.iter().filter(|r| r.ok()).collect();
    let mut summary = BTreeMap::new();
    let mut add = |name: String, values: Vec<f64>| {
        if let Some(s) = summarize(&values) {
            summary.insert(name, s);
        }
    };
    add("dcor".into(), ok.iter().filter_map(|r| r.dcor).collect());
    add("kappa".into(), ok.iter().filter_map(|r| r.kappa).collect());
    add("covariance_deviation".into(), ok.iter().filter_map(|r| r.covariance_deviation).collect());
    add("final_loss".into(), ok.iter().filter_map(|r| r.final_loss).collect());
    let d = ok.iter().map(|r| r.fccov.len()).max().unwrap_or(0);
    for k in 0..d {
        add(format!("fccov_{}", k + 1), ok.iter().filter_map(|r| r.fccov.get(k).copied()).collect());
    }
    Ok(ExperimentReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        spec: spec.clone(),
        failures: replicates.len() - ok.len(),
        replicates,
        summary,
    })
}
