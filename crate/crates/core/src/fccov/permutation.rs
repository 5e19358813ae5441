use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{check_sizes, fccov_fast, AnchorOrderIndex, CenteredScores};
use crate::error::{Error, Result};
use crate::metrics::DistanceMatrix;

/// Minimum number of permutations accepted.
pub const MIN_PERMUTATIONS: usize = 19;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationTest {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    /// Set when the scores are constant; the p-value is then 1.
    pub degenerate: bool,
}

/// Permutation test of `E(U | V) = E(U)` using the FCCov statistic.
///
/// `p = (1 + #{permuted >= observed}) / (n_perm + 1)`; scores are centered
/// internally and shuffled with a ChaCha generator seeded by `seed`.
pub fn permutation_independence_test(
    raw: &[f64],
    d: &DistanceMatrix,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationTest> {
    check_sizes(raw.len(), d.len())?;
    let u = CenteredScores::new(raw);
    let idx = AnchorOrderIndex::build(d);
    permutation_test_indexed(&u, &idx, n_perm, seed)
}

/// [`permutation_independence_test`] against a prebuilt anchor index.
pub fn permutation_test_indexed(
    u: &CenteredScores,
    idx: &AnchorOrderIndex,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationTest> {
    check_sizes(u.len(), idx.len())?;
    if n_perm < MIN_PERMUTATIONS {
        return Err(Error::Config(format!(
            "need at least {MIN_PERMUTATIONS} permutations, got {n_perm}"
        )));
    }
    let raw = u.as_slice();
    if raw.iter().all(|&v| v == raw[0]) {
        return Ok(PermutationTest {
            statistic: 0.0,
            p_value: 1.0,
            permutations: n_perm,
            degenerate: true,
        });
    }
    let observed = fccov_fast(u, idx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = CenteredScores(raw.to_vec());
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        // A permutation of centered scores stays centered.
        shuffled.0.shuffle(&mut rng);
        if fccov_fast(&shuffled, idx)? >= observed {
            exceed += 1;
        }
    }
    Ok(PermutationTest {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (n_perm + 1) as f64,
        permutations: n_perm,
        degenerate: false,
    })
}
