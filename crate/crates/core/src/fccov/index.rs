//! Index-tuple enumerators and the per-anchor sort order used by the fast
//! estimator.

use std::ops::Range;

use rayon::prelude::*;

use crate::metrics::DistanceMatrix;

/// Falling factorial `(n)_m = n (n-1) ... (n-m+1)`, as a float.
pub fn falling_factorial(n: usize, m: usize) -> f64 {
    if m > n {
        return 0.0;
    }
    (0..m).map(|i| (n - i) as f64).product()
}

/// Ordered `k`-tuples of pairwise distinct indices from `0..n`.
#[derive(Debug, Clone)]
pub struct DistinctTuples {
    n: usize,
    cur: Vec<usize>,
    done: bool,
}

/// Enumerates `A_{n,k}` in lexicographic order; the count is `(n)_k`.
pub fn distinct_tuples(n: usize, k: usize) -> DistinctTuples {
    DistinctTuples {
        n,
        cur: vec![0; k],
        done: k > n,
    }
}

impl DistinctTuples {
    fn advance(&mut self) {
        for pos in (0..self.cur.len()).rev() {
            self.cur[pos] += 1;
            if self.cur[pos] < self.n {
                return;
            }
            self.cur[pos] = 0;
        }
        self.done = true;
    }
}

impl Iterator for DistinctTuples {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        while !self.done {
            let out = self.cur.clone();
            self.advance();
            if (0..out.len()).all(|a| (0..a).all(|b| out[a] != out[b])) {
                return Some(out);
            }
        }
        None
    }
}

/// Strictly increasing `k`-tuples from `0..n`.
#[derive(Debug, Clone)]
pub struct IncreasingTuples {
    n: usize,
    current: Option<Vec<usize>>,
}

/// Enumerates `C_{n,k}`; the count is `C(n, k)`.
pub fn increasing_tuples(n: usize, k: usize) -> IncreasingTuples {
    IncreasingTuples {
        n,
        current: (k <= n).then(|| (0..k).collect()),
    }
}

impl Iterator for IncreasingTuples {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut cur = out.clone();
        let mut i = k;
        self.current = loop {
            if i == 0 {
                break None;
            }
            i -= 1;
            if cur[i] < self.n - k + i {
                cur[i] += 1;
                for j in (i + 1)..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break Some(cur);
            }
        };
        Some(out)
    }
}

/// For every anchor `t`, all sample indices sorted ascending by their
/// distance to sample `t`, with runs of equal distance marked as tie groups.
///
/// Ties within a run are broken by index, so the order depends only on the
/// comparisons between distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorOrderIndex {
    n: usize,
    order: Vec<u32>,
    group_offsets: Vec<usize>,
    group_starts: Vec<u32>,
}

impl AnchorOrderIndex {
    pub fn build(d: &DistanceMatrix) -> Self {
        let n = d.len();
        assert!(n <= u32::MAX as usize, "sample too large for u32 indices");
        let per_anchor: Vec<(Vec<u32>, Vec<u32>)> = if n >= 512 {
            (0..n).into_par_iter().map(|t| sort_anchor(d, t)).collect()
        } else {
            (0..n).map(|t| sort_anchor(d, t)).collect()
        };
        let mut order = Vec::with_capacity(n * n);
        let mut group_offsets = Vec::with_capacity(n + 1);
        let mut group_starts = Vec::new();
        group_offsets.push(0);
        for (ord, starts) in per_anchor {
            order.extend_from_slice(&ord);
            group_starts.extend_from_slice(&starts);
            group_offsets.push(group_starts.len());
        }
        Self {
            n,
            order,
            group_offsets,
            group_starts,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Sample indices sorted by distance to sample `t`.
    pub fn order(&self, t: usize) -> &[u32] {
        &self.order[t * self.n..(t + 1) * self.n]
    }

    /// Position ranges (into [`Self::order`]) of the tie groups of anchor `t`.
    /// The first group always holds the anchor itself and any exact
    /// duplicates of it.
    pub fn groups(&self, t: usize) -> impl Iterator<Item = Range<usize>> + '_ {
        let starts = &self.group_starts[self.group_offsets[t]..self.group_offsets[t + 1]];
        let n = self.n;
        starts.iter().enumerate().map(move |(g, &s)| {
            let end = starts.get(g + 1).map_or(n, |&e| e as usize);
            s as usize..end
        })
    }

    pub fn group_count(&self, t: usize) -> usize {
        self.group_offsets[t + 1] - self.group_offsets[t]
    }
}

fn sort_anchor(d: &DistanceMatrix, t: usize) -> (Vec<u32>, Vec<u32>) {
    let row = d.row(t);
    let mut ord: Vec<u32> = (0..row.len() as u32).collect();
    ord.sort_unstable_by(|&a, &b| {
        row[a as usize]
            .total_cmp(&row[b as usize])
            .then(a.cmp(&b))
    });
    let mut starts = vec![0u32];
    for r in 1..ord.len() {
        if row[ord[r] as usize] != row[ord[r - 1] as usize] {
            starts.push(r as u32);
        }
    }
    (ord, starts)
}
