//! Frechet cumulative covariance `FCCov(U | V)` between real scores `U` and
//! metric-space objects `V`.
//!
//! The estimator is the fourth-order U-statistic
//!
//! ```text
//! (1/(n)_4) * sum over distinct (i, j, k, l) of u_i u_j phi(i, k, l) phi(j, k, l)
//! phi(i, k, l) = 1[d(V_i, V_l) < d(V_k, V_l)]
//! ```
//!
//! on centered scores. It is available in three tiers that agree to rounding:
//! [`fccov_naive`] enumerates every 4-tuple (`O(n^4)`), [`fccov_slice`] sums
//! over comparator/anchor pairs (`O(n^3)`), and [`fccov_fast`] walks each
//! anchor's distance order with prefix sums (`O(n^2)` after an
//! `O(n^2 log n)` sort).
//!
//! Comparisons are strict, so a sample whose distance to the anchor ties the
//! comparator's never counts. The fast path handles ties by taking prefix
//! sums over whole tie groups.

mod index;
mod permutation;

pub use index::{
    distinct_tuples, falling_factorial, increasing_tuples, AnchorOrderIndex, DistinctTuples,
    IncreasingTuples,
};
pub use permutation::{permutation_independence_test, permutation_test_indexed, PermutationTest};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::DistanceMatrix;

/// Smallest sample size for which the estimator is defined.
pub const MIN_SAMPLES: usize = 5;

/// Scores with their sample mean removed.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredScores(pub(crate) Vec<f64>);

impl CenteredScores {
    pub fn new(raw: &[f64]) -> Self {
        let mean = if raw.is_empty() {
            0.0
        } else {
            raw.iter().sum::<f64>() / raw.len() as f64
        };
        Self(raw.iter().map(|v| v - mean).collect())
    }

    /// Centers about a known population mean. Unlike [`Self::new`], this
    /// keeps the estimator unbiased; sample centering correlates the scores
    /// and shifts the estimate by `O(Var U / n)`.
    pub fn about(raw: &[f64], mean: f64) -> Self {
        Self(raw.iter().map(|v| v - mean).collect())
    }

    /// Wraps scores that are already centered, checking
    /// `|mean| <= 1e-12 * max(1, max |u|)`.
    pub fn from_centered(u: Vec<f64>) -> Result<Self> {
        let scale = u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mean = u.iter().sum::<f64>() / u.len().max(1) as f64;
        if mean.abs() > 1e-12 * scale {
            return Err(Error::Shape(format!("scores are not centered (mean {mean:e})")));
        }
        Ok(Self(u))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_sizes(n_scores: usize, n_objects: usize) -> Result<()> {
    if n_scores != n_objects {
        return Err(Error::Shape(format!(
            "{n_scores} scores but {n_objects} response objects"
        )));
    }
    if n_scores < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            n: n_scores,
            min: MIN_SAMPLES,
        });
    }
    Ok(())
}

/// Literal enumeration over all `(n)_4` distinct 4-tuples.
pub fn fccov_naive(u: &CenteredScores, d: &DistanceMatrix) -> Result<f64> {
    let n = u.len();
    check_sizes(n, d.len())?;
    let u = u.as_slice();
    let mut total = 0.0;
    for l in 0..n {
        for k in 0..n {
            if k == l {
                continue;
            }
            let dkl = d.get(k, l);
            for i in 0..n {
                if i == k || i == l || !(d.get(i, l) < dkl) {
                    continue;
                }
                for j in 0..n {
                    if j == i || j == k || j == l || !(d.get(j, l) < dkl) {
                        continue;
                    }
                    total += u[i] * u[j];
                }
            }
        }
    }
    Ok(total / falling_factorial(n, 4))
}

/// Slice form: for each ordered pair `(k, l)`, `S_kl^2 - sum_i u_i^2 phi`.
pub fn fccov_slice(u: &CenteredScores, d: &DistanceMatrix) -> Result<f64> {
    let n = u.len();
    check_sizes(n, d.len())?;
    let u = u.as_slice();
    let mut total = 0.0;
    for l in 0..n {
        for k in 0..n {
            if k == l {
                continue;
            }
            let dkl = d.get(k, l);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for i in 0..n {
                if i != k && i != l && d.get(i, l) < dkl {
                    s += u[i];
                    s2 += u[i] * u[i];
                }
            }
            total += s * s - s2;
        }
    }
    Ok(total / falling_factorial(n, 4))
}

/// Contribution of one anchor `t` to `(n)_4 * FCCov`.
///
/// With `P`, `Q` the sums of `u` and `u^2` over samples strictly closer to
/// `t` than comparator `k`, and `c = 1[d(k, t) > 0]` (the anchor is among
/// those samples exactly when `c = 1`), each comparator contributes
/// `(P - c u_t)^2 - (Q - c u_t^2) = P^2 - Q - 2 c u_t P + 2 c u_t^2`.
/// Every member of a tie group shares `P` and `Q`.
fn anchor_term(u: &[f64], idx: &AnchorOrderIndex, t: usize) -> f64 {
    let order = idx.order(t);
    let ut = u[t];
    let mut p = 0.0;
    let mut q = 0.0;
    let mut acc = 0.0;
    let mut positive = 0usize;
    for (g, range) in idx.groups(t).enumerate() {
        if g > 0 {
            let m = range.len();
            acc += m as f64 * (p * p - q - 2.0 * ut * p);
            positive += m;
        }
        for &i in &order[range] {
            let v = u[i as usize];
            p += v;
            q += v * v;
        }
    }
    acc + 2.0 * ut * ut * positive as f64
}

/// Anchor-sorted prefix-sum evaluation.
///
/// On tie-free data this is the closed form
/// `sum_t sum_r [ (sum_{i<r} u_(i)t)^2 - sum_{i<r} u_(i)t^2 - 2 u_t sum_{i<r} u_(i)t ] + 2(n-1) sum_i u_i^2`
/// divided by `(n)_4`.
pub fn fccov_fast(u: &CenteredScores, idx: &AnchorOrderIndex) -> Result<f64> {
    let n = u.len();
    check_sizes(n, idx.len())?;
    let u = u.as_slice();
    // Per-anchor partials are summed in anchor order on either path.
    let partials: Vec<f64> = if n >= 512 {
        (0..n).into_par_iter().map(|t| anchor_term(u, idx, t)).collect()
    } else {
        (0..n).map(|t| anchor_term(u, idx, t)).collect()
    };
    Ok(partials.iter().sum::<f64>() / falling_factorial(n, 4))
}

/// Gradient of the estimator with respect to the (centered) scores.
///
/// The statistic is the quadratic form `u^T M u / (n)_4` with `M` fixed by
/// the response comparisons, so the gradient is `2 M u / (n)_4`.
/// Component `m` collects `2 (S_kt - u_m)` from every comparator `k` that is
/// strictly farther from anchor `t` than `m`; suffix sums over tie groups
/// make each anchor `O(n)`.
///
/// The result is the gradient of the quadratic form itself. Callers that
/// center raw scores first apply the centering projection.
pub fn fccov_grad(u: &CenteredScores, idx: &AnchorOrderIndex) -> Result<Vec<f64>> {
    let n = u.len();
    check_sizes(n, idx.len())?;
    let u = u.as_slice();
    let mut grad = vec![0.0; n];
    let mut prefix = Vec::new();
    for t in 0..n {
        let order = idx.order(t);
        let ut = u[t];
        prefix.clear();
        let mut p = 0.0;
        for range in idx.groups(t) {
            prefix.push(p);
            for &i in &order[range] {
                p += u[i as usize];
            }
        }
        let groups: Vec<_> = idx.groups(t).collect();
        // Suffix pass: w = sum of S_kt over later groups, cnt = their size.
        let mut w = 0.0;
        let mut cnt = 0.0;
        for (g, range) in groups.iter().enumerate().rev() {
            for &m in &order[range.clone()] {
                let m = m as usize;
                if m != t {
                    grad[m] += 2.0 * (w - u[m] * cnt);
                }
            }
            if g > 0 {
                let s = prefix[g] - ut;
                w += s * range.len() as f64;
                cnt += range.len() as f64;
            }
        }
    }
    let scale = falling_factorial(n, 4);
    for g in &mut grad {
        *g /= scale;
    }
    Ok(grad)
}

/// Centers `raw`, builds the anchor index from `d`, and evaluates the fast
/// estimator. Returns the centered scores alongside the statistic.
pub fn fccov(raw: &[f64], d: &DistanceMatrix) -> Result<(f64, CenteredScores)> {
    let u = CenteredScores::new(raw);
    check_sizes(u.len(), d.len())?;
    let idx = AnchorOrderIndex::build(d);
    Ok((fccov_fast(&u, &idx)?, u))
}
