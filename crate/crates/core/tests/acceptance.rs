//! Acceptance checks. Each criterion prints one `PASS` or `FAIL` line.
//!
//! Run a subset by number:
//! `cargo test --release -p fccov-core --test acceptance -- 1 9`.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use fccov_core::datagen::{generate, symmetric_normal, Model, Outliers, Scenario, SimulationSpec};
use fccov_core::experiment::{run_experiment, ExperimentSpec, ReplicateResult, ReportMetric};
use fccov_core::fccov::{fccov_fast, fccov_naive, permutation_test_indexed, AnchorOrderIndex, CenteredScores};
use fccov_core::metrics::linalg::{cholesky, matrix_exp, matrix_log};
use fccov_core::metrics::{affine_invariant, midpoint_grid, pairwise_distances, wasserstein2, Metric, ResponseSet, SpdMatrix};
use fccov_core::networks::{Architecture, CnnSpec, FnnSpec, NetworkParams};
use fccov_core::objective::{batch_loss, penalty_plugin, ustat_penalty_rows, BatchOutputs, PenaltyConfig, PenaltyEstimator};
use fccov_core::trainer::{estimate_dimension, DimensionConfig, TrainConfig};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Responses on a coarse integer grid produce many tied distances.
fn random_instance(rng: &mut ChaCha8Rng, n: usize, ties: bool) -> (Vec<f64>, ResponseSet) {
    let raw = (0..n).map(|_| normal(rng)).collect();
    let y = Array2::from_shape_fn((n, 2), |_| if ties { rng.random_range(0..3) as f64 } else { normal(rng) });
    (raw, ResponseSet::euclidean(y).unwrap())
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n = 5 + i % 36;
        let (raw, y) = random_instance(&mut rng, n, i % 2 == 0);
        let d = pairwise_distances(&y).unwrap();
        let u = CenteredScores::new(&raw);
        let naive = fccov_naive(&u, &d).unwrap();
        let fast = fccov_fast(&u, &AnchorOrderIndex::build(&d)).unwrap();
        worst = worst.max((fast - naive).abs() / (1.0 + naive.abs()));
    }
    let (raw, y) = random_instance(&mut rng, 2000, false);
    let d = pairwise_distances(&y).unwrap();
    let start = Instant::now();
    let idx = AnchorOrderIndex::build(&d);
    fccov_fast(&CenteredScores::new(&raw), &idx).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 2.0,
        format!("max scaled |fast - naive| {worst:.1e} over 100 instances; n = 2000 index + estimate {secs:.3}s"),
    )
}

/// Largest `|fd - g|` over all entries, relative to the largest `|g|`.
fn fd_relative(x: &[f64], grad: &[f64], h: f64, eval: impl Fn(&[f64]) -> f64) -> f64 {
    let scale = grad.iter().fold(1e-12f64, |a, g| a.max(g.abs()));
    let mut worst = 0.0f64;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = eval(&probe);
        probe[i] = x[i] - h;
        let dn = eval(&probe);
        probe[i] = x[i];
        worst = worst.max(((up - dn) / (2.0 * h) - grad[i]).abs() / scale);
    }
    worst
}

fn as_outputs(v: &[f64], d: usize) -> BatchOutputs {
    BatchOutputs::new(Array2::from_shape_vec((v.len() / d, d), v.to_vec()).unwrap()).unwrap()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |key, err: f64| {
        let w = worst.entry(key).or_insert(0.0);
        *w = w.max(err);
    };
    for c in 0..20 {
        let b = 6 + c % 15;
        let d = 1 + c % 3;
        let f: Vec<f64> = (0..b * d).map(|_| normal(&mut rng)).collect();
        let (_, y) = random_instance(&mut rng, b, c % 4 == 0);
        let idx = AnchorOrderIndex::build(&pairwise_distances(&y).unwrap());
        for (key, estimator) in [("loss/plug-in", PenaltyEstimator::PlugIn), ("loss/u-stat", PenaltyEstimator::UStatistic)] {
            let cfg = PenaltyConfig { lambda: rng.random_range(0.1..2.0), estimator };
            let eval = |v: &[f64]| batch_loss(&as_outputs(v, d), &idx, &cfg).unwrap().value;
            let g = batch_loss(&as_outputs(&f, d), &idx, &cfg).unwrap().grad;
            note(key, fd_relative(&f, g.as_slice().unwrap(), 1e-6, eval));

            // The penalty path alone: the loss at lambda 1 minus the loss at 0.
            let at = |lambda| PenaltyConfig { lambda, estimator };
            let pen = |v: &[f64]| {
                let o = as_outputs(v, d);
                batch_loss(&o, &idx, &at(1.0)).unwrap().value - batch_loss(&o, &idx, &at(0.0)).unwrap().value
            };
            let o = as_outputs(&f, d);
            let pg = batch_loss(&o, &idx, &at(1.0)).unwrap().grad - batch_loss(&o, &idx, &at(0.0)).unwrap().grad;
            let key = if estimator == PenaltyEstimator::PlugIn { "penalty/plug-in" } else { "penalty/u-stat" };
            note(key, fd_relative(&f, pg.as_slice().unwrap(), 1e-6, pen));
        }
        let (_, g) = penalty_plugin(&as_outputs(&f, d));
        note("penalty_plugin", fd_relative(&f, g.as_slice().unwrap(), 1e-6, |v| penalty_plugin(&as_outputs(v, d)).0));
    }
    let loss_worst = worst.values().fold(0.0f64, |a, &b| a.max(b));

    let mut net_worst = [0.0f64; 2];
    for c in 0..20 {
        let p = 3 + c % 5;
        let out = 1 + c % 3;
        let fnn = Architecture::Fnn(FnnSpec::new(vec![p, 4 + c % 4, 3 + c % 3, out]).unwrap());
        let cnn = Architecture::Cnn(CnnSpec {
            input_len: p,
            blocks: 1 + c % 2,
            layers_per_block: 1 + c % 3,
            channels: 1 + c % 3,
            filter: 2 + c % (p - 1),
            outputs: out,
        });
        for (k, arch) in [fnn, cnn].into_iter().enumerate() {
            let net = NetworkParams::init(arch, c as u64).unwrap();
            let x = Array2::from_shape_fn((6, p), |_| normal(&mut rng));
            let w = Array2::from_shape_fn((6, out), |_| normal(&mut rng));
            let g = net.backward(x.view(), w.view()).unwrap();
            let eval = |v: &[f64]| {
                let probe = NetworkParams { values: v.to_vec(), ..net.clone() };
                (probe.forward(x.view()).unwrap() * &w).sum()
            };
            net_worst[k] = net_worst[k].max(fd_relative(&net.values, &g, 1e-6, eval));
        }
    }
    let parts: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    outcome(
        loss_worst < 1e-6 && net_worst.iter().all(|&e| e < 1e-5),
        format!(
            "max relative error over 20 configs: {}; fnn {:.1e}; cnn {:.1e}",
            parts.join(", "),
            net_worst[0],
            net_worst[1]
        ),
    )
}

fn criterion_3() -> Outcome {
    // f = L z with L L^T = sigma, so ||Var f - I||^2 is known exactly. The
    // kernel assumes E f = 0, so the rows are not recentered.
    let sigma = array![[1.5, 0.4, -0.2], [0.4, 0.7, 0.1], [-0.2, 0.1, 1.2]];
    let l = cholesky(sigma.view()).unwrap();
    let mut target = sigma.clone();
    for i in 0..3 {
        target[[i, i]] -= 1.0;
    }
    let target: f64 = target.iter().map(|v| v * v).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 10_000;
    let b = 20;
    let values: Vec<f64> = (0..draws)
        .map(|_| {
            let z = Array2::from_shape_fn((b, 3), |_| normal(&mut rng));
            let rows = z.dot(&l.t());
            ustat_penalty_rows(rows.view()).unwrap()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / draws as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let se = (var / draws as f64).sqrt();
    let z = (mean - target) / se;
    outcome(
        z.abs() <= 3.0,
        format!("mean {mean:.5} vs {target:.5} over {draws} batches of {b} (z = {z:.2})"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let reps = 500;
    let n = 100;
    let mut known = Vec::with_capacity(reps);
    let mut sample = Vec::with_capacity(reps);
    let mut rejections = 0;
    for r in 0..reps {
        let raw: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let y = Array2::from_shape_fn((n, 2), |_| normal(&mut rng));
        let idx = AnchorOrderIndex::build(&pairwise_distances(&ResponseSet::euclidean(y).unwrap()).unwrap());
        known.push(fccov_fast(&CenteredScores::about(&raw, 0.0), &idx).unwrap());
        let u = CenteredScores::new(&raw);
        sample.push(fccov_fast(&u, &idx).unwrap());
        if permutation_test_indexed(&u, &idx, 199, r as u64).unwrap().p_value <= 0.05 {
            rejections += 1;
        }
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        (m, (var / v.len() as f64).sqrt())
    };
    let (mean, se) = stats(&known);
    let (sample_mean, sample_se) = stats(&sample);
    let rate = rejections as f64 / reps as f64;
    outcome(
        mean.abs() <= 3.0 * se && (0.01..=0.10).contains(&rate),
        format!(
            "mean {mean:.2e} (se {se:.1e}) centered at the known mean; sample-centered mean {sample_mean:.2e} (se {sample_se:.1e}); rejection rate {rate:.3}"
        ),
    )
}

fn experiment(sim: SimulationSpec, replicates: usize) -> Vec<ReplicateResult> {
    let train = TrainConfig { d: sim.model.true_dim(), ..TrainConfig::default() };
    let spec = ExperimentSpec {
        simulation: Some(sim),
        data: None,
        train,
        replicates,
        metrics: vec![ReportMetric::Dcor],
        output_dir: None,
    };
    run_experiment(&spec).unwrap().replicates
}

fn mean_dcor(reps: &[ReplicateResult]) -> (f64, usize, f64) {
    let ok: Vec<f64> = reps.iter().filter_map(|r| r.dcor).collect();
    let secs = reps.iter().map(|r| r.wall_clock_secs).fold(0.0, f64::max);
    (ok.iter().sum::<f64>() / ok.len().max(1) as f64, reps.len() - ok.len(), secs)
}

fn dcor_check(label: &str, reps: &[ReplicateResult], threshold: f64) -> (bool, String) {
    let (mean, failed, secs) = mean_dcor(reps);
    let pass = failed == 0 && mean >= threshold;
    let fail_note = if failed > 0 { format!(", {failed} failed") } else { String::new() };
    (pass, format!("{label} mean dcor {mean:.3} (>= {threshold}) over {} reps{fail_note}, slowest {secs:.0}s", reps.len()))
}

/// Simulation seed base. Replicate `r` draws data with `SIM_SEED + r` and
/// trains with seed `r`.
const SIM_SEED: u64 = 1000;

#[derive(Default)]
struct Runs {
    cache: BTreeMap<&'static str, Vec<ReplicateResult>>,
}

impl Runs {
    fn get(&mut self, key: &'static str) -> &[ReplicateResult] {
        self.cache.entry(key).or_insert_with(|| match key {
            "model-I" => experiment(SimulationSpec::new(Model::ModelI, Scenario::A, 1000, 10, SIM_SEED), 10),
            "model-II" => experiment(SimulationSpec::new(Model::ModelII, Scenario::A, 1000, 10, SIM_SEED), 10),
            "outliers" => {
                let mut sim = SimulationSpec::new(Model::ModelI, Scenario::B, 1000, 10, SIM_SEED);
                sim.outliers = Some(Outliers { case: 1, rate: 0.3 });
                experiment(sim, 10)
            }
            "setting-I-1" => experiment(SimulationSpec::new(Model::SettingI1, Scenario::Uniform01, 2000, 10, SIM_SEED), 5),
            "log-cholesky" | "affine-invariant" => {
                let mut sim = SimulationSpec::new(Model::SettingII1, Scenario::Uniform01, 2000, 10, SIM_SEED);
                sim.metric = Some(if key == "log-cholesky" { Metric::LogCholesky } else { Metric::AffineInvariant });
                experiment(sim, 5)
            }
            _ => unreachable!("unknown run {key}"),
        })
    }
}

fn criteria_pair(runs: &mut Runs, checks: [(&'static str, f64); 2]) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for (key, threshold) in checks {
        let (ok, detail) = dcor_check(key, runs.get(key), threshold);
        pass &= ok;
        details.push(detail);
    }
    outcome(pass, details.join("; "))
}

fn criterion_9() -> Outcome {
    let grid = midpoint_grid(2001);
    let normal_q = Normal::new(0.0, 1.0).unwrap();
    let z: Vec<f64> = grid.iter().map(|&g| normal_q.inverse_cdf(g)).collect();
    let mut w2_worst = 0.0f64;
    for (m1, s1, m2, s2) in [(0.0, 1.0, 1.0, 2.0), (-1.0, 0.5, 2.0, 3.0), (0.3, 1.0, 0.3, 1.5), (2.0, 0.2, -0.5, 0.2)] {
        let q1: Vec<f64> = z.iter().map(|v| m1 + s1 * v).collect();
        let q2: Vec<f64> = z.iter().map(|v| m2 + s2 * v).collect();
        let exact = ((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2)).sqrt();
        w2_worst = w2_worst.max((wasserstein2(&q1, &q2).unwrap() - exact).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut affine_worst = 0.0f64;
    let mut exp_log_worst = 0.0f64;
    for m in [2, 3, 5] {
        for _ in 0..10 {
            let spd = |rng: &mut ChaCha8Rng| matrix_exp(symmetric_normal(m, rng).view()).unwrap();
            let (y1, y2) = (spd(&mut rng), spd(&mut rng));
            let mut a = Array2::from_shape_fn((m, m), |_| normal(&mut rng));
            for i in 0..m {
                a[[i, i]] += 3.0;
            }
            let move_by = |y: &Array2<f64>| {
                let c = a.dot(y).dot(&a.t());
                SpdMatrix::new((&c + &c.t()) * 0.5).unwrap()
            };
            let before = affine_invariant(&SpdMatrix::new(y1.clone()).unwrap(), &SpdMatrix::new(y2.clone()).unwrap()).unwrap();
            let after = affine_invariant(&move_by(&y1), &move_by(&y2)).unwrap();
            affine_worst = affine_worst.max((before - after).abs());

            let back = matrix_exp(matrix_log(y1.view()).unwrap().view()).unwrap();
            exp_log_worst = exp_log_worst.max((&back - &y1).iter().fold(0.0f64, |a, v| a.max(v.abs())));
        }
    }
    outcome(
        w2_worst <= 1e-3 && affine_worst <= 1e-8 && exp_log_worst <= 1e-8,
        format!("W2 grid error {w2_worst:.1e}; affine invariance {affine_worst:.1e}; exp(log Y) error {exp_log_worst:.1e}"),
    )
}

fn criterion_10(runs: &mut Runs) -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for key in ["model-I", "model-II", "setting-I-1", "log-cholesky", "affine-invariant"] {
        for r in runs.get(key) {
            if let Some(dev) = r.covariance_deviation {
                worst = worst.max(dev);
                count += 1;
            }
        }
    }
    outcome(worst <= 0.5, format!("max held-out ||Var f - I||_F {worst:.3} over {count} replicates"))
}

fn criterion_11() -> Outcome {
    let mut hits = 0;
    let mut found = Vec::new();
    for trial in 0..10u64 {
        let data = generate(&SimulationSpec::new(Model::ModelI, Scenario::A, 1000, 10, SIM_SEED + trial)).unwrap();
        let cfg = TrainConfig { seed: trial, ..TrainConfig::default() };
        let est = estimate_dimension(data.x.view(), &data.responses, &DimensionConfig::default(), &cfg).unwrap();
        hits += usize::from(est.d == 1);
        found.push(est.d.to_string());
    }
    outcome(hits >= 8, format!("estimated d = 1 in {hits} of 10 trials (found {})", found.join(" ")))
}

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let selected = |k: u32| wanted.is_empty() || wanted.contains(&k);
    let mut runs = Runs::default();
    let mut failures = 0;
    for k in 1..=11u32 {
        if !selected(k) {
            continue;
        }
        let start = Instant::now();
        let result = match k {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criteria_pair(&mut runs, [("model-I", 0.90), ("model-II", 0.65)]),
            6 => {
                let (pass, detail) = dcor_check("outlier case 1 at 30%", runs.get("outliers"), 0.75);
                outcome(pass, detail)
            }
            7 => {
                let (pass, detail) = dcor_check("setting I-1", runs.get("setting-I-1"), 0.85);
                outcome(pass, detail)
            }
            8 => criteria_pair(&mut runs, [("log-cholesky", 0.80), ("affine-invariant", 0.85)]),
            9 => criterion_9(),
            10 => criterion_10(&mut runs),
            11 => criterion_11(),
            _ => unreachable!(),
        };
        failures += usize::from(!result.pass);
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {k:>2}: {verdict}: {} [{:.1}s]", result.detail, start.elapsed().as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
