use std::fmt;
use std::path::Path;

use fccov_core::datagen::{generate, Outliers, SimulationSpec};
use fccov_core::evaluation::{covariance_deviation, distance_correlation, kappa_distance, standardize};
use fccov_core::experiment::run_experiment;
use fccov_core::fccov::{fccov_fast, fccov_naive, permutation_test_indexed, AnchorOrderIndex, CenteredScores};
use fccov_core::io::{read_matrix, read_responses, write_atomic, write_matrix, write_responses};
use fccov_core::metrics::{pairwise_distances, DistanceMatrix, ResponseSet};
use fccov_core::networks::{load_checkpoint, save_checkpoint};
use fccov_core::trainer::{component_fccov, estimate_dimension, train, TrainConfig};
use fccov_core::Error;
use serde::Serialize;

use crate::config::{load_config, load_spec};
use crate::Command;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_PARTIAL: u8 = 4;

/// The literal estimator enumerates (n)_4 tuples; beyond this it would run
/// for hours.
const NAIVE_LIMIT: usize = 200;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Fccov { scores, column, distances, responses, metric, fast, naive, permutations, seed } => {
            let d = match (distances, responses) {
                (Some(path), None) => DistanceMatrix::new(read_matrix(&path)?)?,
                (None, Some(path)) => pairwise_distances(&read_responses(&path, metric)?)?,
                _ => return Err(CliError::Usage("give exactly one of --distances and --responses".into())),
            };
            cmd_fccov(&read_matrix(&scores)?, column, &d, fast, naive, permutations, seed)
        }
        Command::Train { predictors, responses, config, estimate_dimension, out } => {
            let cfg = load_config(config.as_deref())?;
            let x = read_matrix(&predictors)?;
            let y = read_responses(&responses.responses, responses.metric)?;
            cmd_train(&x, &y, cfg.train, estimate_dimension.then_some(&cfg.dimension), &out)
        }
        Command::Evaluate { checkpoint, predictors, responses, metric, truth, config, out } => {
            let expected = match config {
                Some(path) => Some(load_config(Some(&path))?.train),
                None => None,
            };
            let x = read_matrix(&predictors)?;
            let y = responses.map(|p| read_responses(&p, metric)).transpose()?;
            let truth = truth.map(|p| read_matrix(&p)).transpose()?;
            cmd_evaluate(&checkpoint, &x, y.as_ref(), truth.as_ref(), expected.as_ref(), &out)
        }
        Command::Benchmark { spec, out } => {
            let mut spec = load_spec(&spec)?;
            if out.is_some() {
                spec.output_dir = out;
            }
            let dir = spec
                .output_dir
                .clone()
                .ok_or_else(|| CliError::Usage("set output_dir in the spec or pass --out".into()))?;
            let report = run_experiment(&spec)?;
            report.write(&dir)?;
            for (name, s) in &report.summary {
                println!("{name}: mean {} sd {} (n = {})", s.mean, s.sd, s.count);
            }
            if report.failures > 0 {
                eprintln!("{} of {} replicates failed; see replicates.csv", report.failures, spec.replicates);
                return Ok(EXIT_PARTIAL);
            }
            Ok(EXIT_OK)
        }
        Command::Simulate { model, scenario, n, p, seed, metric, outlier_case, outlier_rate, out } => {
            let mut spec = SimulationSpec::new(model, scenario, n, p, seed);
            spec.metric = metric;
            if let (Some(case), Some(rate)) = (outlier_case, outlier_rate) {
                spec.outliers = Some(Outliers { case, rate });
            }
            cmd_simulate(&spec, &out)
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

pub fn cmd_fccov(
    scores: &ndarray::Array2<f64>,
    column: usize,
    d: &DistanceMatrix,
    fast: bool,
    naive: bool,
    permutations: Option<usize>,
    seed: u64,
) -> Result<u8> {
    if column >= scores.ncols() {
        return Err(CliError::Usage(format!("score file has {} columns, asked for column {column}", scores.ncols())));
    }
    let raw = scores.column(column).to_vec();
    if raw.len() != d.len() {
        return Err(CliError::Usage(format!("{} scores but {} response objects", raw.len(), d.len())));
    }
    if raw.len() < 5 {
        return Err(CliError::Usage(format!("need at least 5 samples, got {}", raw.len())));
    }
    let u = CenteredScores::new(&raw);
    let idx = AnchorOrderIndex::build(d);
    let fast_value = (fast || !naive).then(|| fccov_fast(&u, &idx)).transpose()?;
    let naive_value = if naive {
        if raw.len() > NAIVE_LIMIT {
            return Err(CliError::Usage(format!("--naive is limited to n <= {NAIVE_LIMIT}")));
        }
        Some(fccov_naive(&u, d)?)
    } else {
        None
    };
    match (fast_value, naive_value) {
        (Some(f), Some(n)) => {
            println!("fast: {f:e}");
            println!("naive: {n:e}");
            println!("difference: {:e}", f - n);
        }
        (Some(v), None) | (None, Some(v)) => println!("fccov: {v:e}"),
        (None, None) => unreachable!("one estimator always runs"),
    }
    if raw.iter().all(|&v| v == raw[0]) {
        println!("note: scores are constant, so the statistic is 0");
    }
    if let Some(n_perm) = permutations {
        let test = permutation_test_indexed(&u, &idx, n_perm, seed)?;
        println!("p-value: {} ({} permutations)", test.p_value, test.permutations);
    }
    Ok(EXIT_OK)
}

fn cmd_train(
    x: &ndarray::Array2<f64>,
    y: &ResponseSet,
    mut cfg: TrainConfig,
    dimension: Option<&fccov_core::trainer::DimensionConfig>,
    out: &Path,
) -> Result<u8> {
    std::fs::create_dir_all(out)?;
    if let Some(dim) = dimension {
        let est = estimate_dimension(x.view(), y, dim, &cfg)?;
        write_json(&out.join("dimension.json"), &est)?;
        println!("estimated dimension: {}", est.d);
        if est.d == 0 {
            println!("no component is significant; nothing to train");
            return Ok(EXIT_OK);
        }
        cfg.d = est.d;
    }
    let report = train(x.view(), y, &cfg)?;
    save_checkpoint(&report.model, &out.join("checkpoint.json"))?;
    write_json(&out.join("train_report.json"), &report)?;
    println!("architecture: {}", report.architecture);
    if let Some(f) = &report.final_fccov {
        let text: Vec<String> = f.iter().map(|v| format!("{v:e}")).collect();
        println!("final fccov: {}", text.join(", "));
    }
    println!("final loss: {}", report.loss.last().copied().unwrap_or(f64::NAN));
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct EvaluationReport {
    architecture: String,
    n: usize,
    covariance_deviation: f64,
    fccov: Option<Vec<f64>>,
    dcor: Option<f64>,
    dcor_degenerate: Option<bool>,
    kappa: Option<f64>,
}

fn cmd_evaluate(
    checkpoint: &Path,
    x: &ndarray::Array2<f64>,
    y: Option<&ResponseSet>,
    truth: Option<&ndarray::Array2<f64>>,
    expected: Option<&TrainConfig>,
    out: &Path,
) -> Result<u8> {
    let expected_arch = expected.map(|cfg| cfg.architecture_for(x.ncols()));
    let model = load_checkpoint(checkpoint, expected_arch.as_ref())?;
    let f = model.forward(x.view())?;
    let n = f.nrows();
    for (what, rows) in [("responses", y.map(|y| y.len())), ("truth", truth.map(|t| t.nrows()))] {
        if let Some(rows) = rows.filter(|&r| r != n) {
            return Err(CliError::Usage(format!("{n} predictor rows but {rows} {what} rows")));
        }
    }
    let fccov = y
        .map(|y| -> Result<Vec<f64>> {
            let idx = AnchorOrderIndex::build(&pairwise_distances(y)?);
            Ok(component_fccov(f.view(), &idx)?)
        })
        .transpose()?;
    let dc = truth.map(|t| distance_correlation(f.view(), t.view())).transpose()?;
    let kappa = match truth {
        Some(t) if t.ncols() == f.ncols() => Some(kappa_distance(f.view(), standardize(t.view())?.view())?.value),
        _ => None,
    };
    let report = EvaluationReport {
        architecture: model.nets[0].arch.with_outputs(model.output_dim()).describe(),
        n,
        covariance_deviation: covariance_deviation(f.view()),
        fccov,
        dcor: dc.map(|d| d.value),
        dcor_degenerate: dc.map(|d| d.degenerate),
        kappa,
    };
    std::fs::create_dir_all(out)?;
    write_matrix(&out.join("predictors.csv"), &f)?;
    write_json(&out.join("metrics.json"), &report)?;
    if let Some(v) = &report.fccov {
        let text: Vec<String> = v.iter().map(|v| format!("{v:e}")).collect();
        println!("fccov: {}", text.join(", "));
    }
    if let Some(d) = dc {
        println!("dcor: {}{}", d.value, if d.degenerate { " (degenerate)" } else { "" });
    }
    if let Some(k) = report.kappa {
        println!("kappa: {k}");
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(spec: &SimulationSpec, out: &Path) -> Result<u8> {
    let train_set = generate(spec)?;
    let test_set = generate(&spec.test_spec())?;
    std::fs::create_dir_all(out)?;
    for (prefix, ds) in [("train", &train_set), ("test", &test_set)] {
        write_matrix(&out.join(format!("{prefix}_x.csv")), &ds.x)?;
        write_responses(&out.join(format!("{prefix}_y.csv")), &ds.responses)?;
        write_matrix(&out.join(format!("{prefix}_truth.csv")), &ds.truth)?;
    }
    println!(
        "{}: {} training and {} test rows, d0 = {}, metric {}",
        spec.model.name(),
        train_set.x.nrows(),
        test_set.x.nrows(),
        train_set.d0,
        spec.metric()
    );
    Ok(EXIT_OK)
}
