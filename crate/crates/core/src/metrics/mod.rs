//! Response objects, the metrics that compare them, and pairwise distance
//! matrices.

pub mod distribution;
pub mod linalg;
pub mod spd;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use distribution::{hellinger, midpoint_grid, total_variation, wasserstein2};
pub use spd::{affine_invariant, log_cholesky, SpdMatrix};

/// Tolerance on the total mass of a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Euclidean,
    Wasserstein2,
    LogCholesky,
    AffineInvariant,
    Hellinger,
    TotalVariation,
    Precomputed,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Wasserstein2 => "wasserstein2",
            Metric::LogCholesky => "log-cholesky",
            Metric::AffineInvariant => "affine-invariant",
            Metric::Hellinger => "hellinger",
            Metric::TotalVariation => "total-variation",
            Metric::Precomputed => "precomputed",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "euclidean" => Metric::Euclidean,
            "wasserstein2" | "wasserstein" => Metric::Wasserstein2,
            "log-cholesky" => Metric::LogCholesky,
            "affine-invariant" => Metric::AffineInvariant,
            "hellinger" => Metric::Hellinger,
            "total-variation" | "tv" => Metric::TotalVariation,
            "precomputed" => Metric::Precomputed,
            other => return Err(Error::Config(format!("unknown metric `{other}`"))),
        })
    }
}

/// Response payloads. Row `i` of a matrix payload is object `i`.
#[derive(Debug, Clone, PartialEq)]
pub enum Responses {
    EuclideanVectors(Array2<f64>),
    QuantileGrids(Array2<f64>),
    SpdMatrices(Vec<SpdMatrix>),
    ProbabilityVectors(Array2<f64>),
    Precomputed(DistanceMatrix),
}

impl Responses {
    pub fn kind(&self) -> &'static str {
        match self {
            Responses::EuclideanVectors(_) => "euclidean-vectors",
            Responses::QuantileGrids(_) => "quantile-grids",
            Responses::SpdMatrices(_) => "spd-matrices",
            Responses::ProbabilityVectors(_) => "probability-vectors",
            Responses::Precomputed(_) => "precomputed",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Responses::EuclideanVectors(a)
            | Responses::QuantileGrids(a)
            | Responses::ProbabilityVectors(a) => a.nrows(),
            Responses::SpdMatrices(v) => v.len(),
            Responses::Precomputed(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A collection of response objects with the metric that compares them.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSet {
    responses: Responses,
    metric: Metric,
}

impl ResponseSet {
    pub fn new(responses: Responses, metric: Metric) -> Result<Self> {
        let compatible = matches!(
            (&responses, metric),
            (Responses::EuclideanVectors(_), Metric::Euclidean)
                | (Responses::QuantileGrids(_), Metric::Wasserstein2)
                | (
                    Responses::SpdMatrices(_),
                    Metric::LogCholesky | Metric::AffineInvariant
                )
                | (
                    Responses::ProbabilityVectors(_),
                    Metric::Hellinger | Metric::TotalVariation | Metric::Euclidean
                )
                | (Responses::Precomputed(_), Metric::Precomputed)
        );
        if !compatible {
            return Err(Error::IncompatibleMetric {
                metric: metric.to_string(),
                kind: responses.kind().to_string(),
            });
        }
        validate(&responses)?;
        Ok(Self { responses, metric })
    }

    pub fn euclidean(y: Array2<f64>) -> Result<Self> {
        Self::new(Responses::EuclideanVectors(y), Metric::Euclidean)
    }

    pub fn precomputed(d: DistanceMatrix) -> Self {
        Self {
            responses: Responses::Precomputed(d),
            metric: Metric::Precomputed,
        }
    }

    pub fn responses(&self) -> &Responses {
        &self.responses
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Objects at `indices`, in that order, under the same metric.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Shape(format!("index {bad} out of range for {n} responses")));
        }
        let rows = |a: &Array2<f64>| a.select(ndarray::Axis(0), indices);
        let responses = match &self.responses {
            Responses::EuclideanVectors(a) => Responses::EuclideanVectors(rows(a)),
            Responses::QuantileGrids(a) => Responses::QuantileGrids(rows(a)),
            Responses::ProbabilityVectors(a) => Responses::ProbabilityVectors(rows(a)),
            Responses::SpdMatrices(v) => {
                Responses::SpdMatrices(indices.iter().map(|&i| v[i].clone()).collect())
            }
            Responses::Precomputed(d) => Responses::Precomputed(d.submatrix(indices)),
        };
        Ok(Self {
            responses,
            metric: self.metric,
        })
    }
}

fn validate(responses: &Responses) -> Result<()> {
    match responses {
        Responses::EuclideanVectors(a) => {
            if a.ncols() == 0 {
                return Err(Error::Shape("response vectors have zero length".into()));
            }
            if let Some((i, _)) = a.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Shape(format!("non-finite response at row {}", i.0)));
            }
        }
        Responses::QuantileGrids(a) => {
            if a.ncols() == 0 {
                return Err(Error::Shape("quantile grids are empty".into()));
            }
            for (index, row) in a.outer_iter().enumerate() {
                if row.iter().any(|v| !v.is_finite())
                    || row.windows(2).into_iter().any(|w| w[1] < w[0])
                {
                    return Err(Error::NonMonotoneGrid { index });
                }
            }
        }
        Responses::SpdMatrices(v) => {
            if let Some(first) = v.first() {
                let m = first.order();
                if let Some(index) = v.iter().position(|y| y.order() != m) {
                    return Err(Error::Shape(format!(
                        "SPD object {index} has order {} but object 0 has order {m}",
                        v[index].order()
                    )));
                }
            }
        }
        Responses::ProbabilityVectors(a) => {
            if a.ncols() == 0 {
                return Err(Error::Shape("probability vectors are empty".into()));
            }
            for (index, row) in a.outer_iter().enumerate() {
                if let Some(v) = row.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidProbability {
                        index,
                        reason: format!("entry {v}"),
                    });
                }
                let total: f64 = row.sum();
                if (total - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidProbability {
                        index,
                        reason: format!("mass sums to {total}"),
                    });
                }
            }
        }
        Responses::Precomputed(_) => {}
    }
    Ok(())
}

/// Symmetric, zero-diagonal, nonnegative matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix(Array2<f64>);

impl DistanceMatrix {
    /// Validates symmetry (to 1e-12 relative), a zero diagonal and
    /// nonnegative finite entries.
    pub fn new(d: Array2<f64>) -> Result<Self> {
        if d.nrows() != d.ncols() {
            return Err(Error::InvalidDistanceMatrix(format!(
                "not square: {}x{}",
                d.nrows(),
                d.ncols()
            )));
        }
        let n = d.nrows();
        for i in 0..n {
            if d[[i, i]] != 0.0 {
                return Err(Error::InvalidDistanceMatrix(format!(
                    "diagonal entry {i} is {}",
                    d[[i, i]]
                )));
            }
            for j in 0..i {
                let (a, b) = (d[[i, j]], d[[j, i]]);
                if !(a >= 0.0) || !a.is_finite() || !(b >= 0.0) || !b.is_finite() {
                    return Err(Error::InvalidDistanceMatrix(format!(
                        "entry ({i},{j}) is negative or non-finite"
                    )));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidDistanceMatrix(format!(
                        "asymmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self(d))
    }

    pub(crate) fn from_trusted(d: Array2<f64>) -> Self {
        Self(d)
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.0.as_slice().expect("standard layout")[i * n..(i + 1) * n]
    }

    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let k = indices.len();
        Self(Array2::from_shape_fn((k, k), |(a, b)| {
            self.0[[indices[a], indices[b]]]
        }))
    }

    /// Applies `g` to every entry. With `g` strictly increasing and
    /// `g(0) = 0` the result is again a valid distance matrix.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> Self {
        Self(self.0.mapv(g).as_standard_layout().into_owned())
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Per-object precomputation so that each pair costs one cheap evaluation.
enum Prepared<'a> {
    Rows {
        rows: ArrayView2<'a, f64>,
        dist: fn(&[f64], &[f64]) -> f64,
    },
    Coordinates(Vec<Vec<f64>>),
    Whitened {
        inv_sqrt: Vec<Array2<f64>>,
        mats: &'a [SpdMatrix],
    },
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    spd::euclid(a, b)
}

fn prepare<'a>(set: &'a ResponseSet) -> Result<Prepared<'a>> {
    Ok(match (&set.responses, set.metric) {
        (Responses::EuclideanVectors(a), _) | (Responses::ProbabilityVectors(a), Metric::Euclidean) => {
            Prepared::Rows {
                rows: a.view(),
                dist: euclid,
            }
        }
        (Responses::QuantileGrids(a), _) => Prepared::Rows {
            rows: a.view(),
            dist: distribution::wasserstein2_unchecked,
        },
        (Responses::ProbabilityVectors(a), Metric::Hellinger) => Prepared::Rows {
            rows: a.view(),
            dist: distribution::hellinger_unchecked,
        },
        (Responses::ProbabilityVectors(a), _) => Prepared::Rows {
            rows: a.view(),
            dist: distribution::total_variation_unchecked,
        },
        (Responses::SpdMatrices(v), Metric::LogCholesky) => Prepared::Coordinates(
            v.iter()
                .enumerate()
                .map(|(i, y)| spd::log_cholesky_coordinates(y).map_err(|e| at_index(e, i)))
                .collect::<Result<_>>()?,
        ),
        (Responses::SpdMatrices(v), _) => Prepared::Whitened {
            inv_sqrt: v
                .iter()
                .enumerate()
                .map(|(i, y)| linalg::inv_sqrt(y.view()).map_err(|e| at_index(e, i)))
                .collect::<Result<_>>()?,
            mats: v,
        },
        (Responses::Precomputed(_), _) => unreachable!("handled by caller"),
    })
}

fn at_index(e: Error, index: usize) -> Error {
    match e {
        Error::NotPositiveDefinite { reason, .. } => Error::NotPositiveDefinite { index, reason },
        other => other,
    }
}

impl Prepared<'_> {
    fn distance(&self, i: usize, j: usize) -> Result<f64> {
        match self {
            Prepared::Rows { rows, dist } => {
                let (a, b) = (rows.row(i), rows.row(j));
                Ok(match (a.as_slice(), b.as_slice()) {
                    (Some(a), Some(b)) => dist(a, b),
                    _ => dist(&a.to_vec(), &b.to_vec()),
                })
            }
            Prepared::Coordinates(c) => Ok(euclid(&c[i], &c[j])),
            Prepared::Whitened { inv_sqrt, mats } => {
                spd::affine_invariant_whitened(inv_sqrt[i].view(), mats[j].view())
            }
        }
    }
}

/// All pairwise distances under the set's metric.
///
/// Entry `(i, j)` for `i < j` is computed once and mirrored, so the result is
/// exactly symmetric. Rows are computed in parallel; each entry is a single
/// independent evaluation, so the result does not depend on thread count.
pub fn pairwise_distances(responses: &ResponseSet) -> Result<DistanceMatrix> {
    let n = responses.len();
    if n < 2 {
        return Err(Error::TooFewSamples { n, min: 2 });
    }
    if let Responses::Precomputed(d) = &responses.responses {
        return Ok(d.clone());
    }
    let prepared = prepare(responses)?;
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| prepared.distance(i, j))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut d = Array2::<f64>::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(DistanceMatrix::from_trusted(d))
}

/// Distances among the objects at `indices` (in that order).
pub fn subset_distances(responses: &ResponseSet, indices: &[usize]) -> Result<DistanceMatrix> {
    pairwise_distances(&responses.select(indices)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(metric: Metric, n: usize, seed: u64) -> ResponseSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let responses = match metric {
            Metric::Euclidean => {
                Responses::EuclideanVectors(Array2::from_shape_fn((n, 3), |_| rng.random_range(-2.0..2.0)))
            }
            Metric::Wasserstein2 => {
                let mut a = Array2::from_shape_fn((n, 7), |_| rng.random_range(-1.0..1.0));
                for mut row in a.outer_iter_mut() {
                    let mut v = row.to_vec();
                    v.sort_by(f64::total_cmp);
                    row.assign(&ndarray::Array1::from(v));
                }
                Responses::QuantileGrids(a)
            }
            Metric::LogCholesky | Metric::AffineInvariant => Responses::SpdMatrices(
                (0..n)
                    .map(|_| {
                        let a = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));
                        SpdMatrix::new(a.dot(&a.t()) + Array2::<f64>::eye(3) * 0.3).unwrap()
                    })
                    .collect(),
            ),
            Metric::Hellinger | Metric::TotalVariation => {
                let mut a = Array2::from_shape_fn((n, 4), |_| rng.random_range(0.0..1.0));
                for mut row in a.outer_iter_mut() {
                    let s = row.sum();
                    row.mapv_inplace(|v| v / s);
                }
                Responses::ProbabilityVectors(a)
            }
            Metric::Precomputed => unreachable!(),
        };
        ResponseSet::new(responses, metric).unwrap()
    }

    const METRICS: [Metric; 6] = [
        Metric::Euclidean,
        Metric::Wasserstein2,
        Metric::LogCholesky,
        Metric::AffineInvariant,
        Metric::Hellinger,
        Metric::TotalVariation,
    ];

    #[test]
    fn three_four_five() {
        let set = ResponseSet::euclidean(array![[0.0, 0.0], [3.0, 4.0]]).unwrap();
        let d = pairwise_distances(&set).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn identical_objects_have_zero_distance() {
        for metric in METRICS {
            let set = random_set(metric, 3, 4);
            let dup = set.select(&[1, 1, 2]).unwrap();
            let d = pairwise_distances(&dup).unwrap();
            assert!(d.get(0, 1) < 1e-12, "{metric}: {}", d.get(0, 1));
        }
    }

    #[test]
    fn entries_match_standalone_functions() {
        for metric in METRICS {
            let set = random_set(metric, 6, 9);
            let d = pairwise_distances(&set).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    if i == j {
                        continue;
                    }
                    let want = match set.responses() {
                        Responses::EuclideanVectors(a) => spd::euclid(
                            a.row(i).as_slice().unwrap(),
                            a.row(j).as_slice().unwrap(),
                        ),
                        Responses::QuantileGrids(a) => wasserstein2(
                            a.row(i).as_slice().unwrap(),
                            a.row(j).as_slice().unwrap(),
                        )
                        .unwrap(),
                        Responses::SpdMatrices(v) if metric == Metric::LogCholesky => {
                            log_cholesky(&v[i], &v[j]).unwrap()
                        }
                        Responses::SpdMatrices(v) => affine_invariant(&v[i], &v[j]).unwrap(),
                        Responses::ProbabilityVectors(a) if metric == Metric::Hellinger => hellinger(
                            a.row(i).as_slice().unwrap(),
                            a.row(j).as_slice().unwrap(),
                        )
                        .unwrap(),
                        Responses::ProbabilityVectors(a) => total_variation(
                            a.row(i).as_slice().unwrap(),
                            a.row(j).as_slice().unwrap(),
                        )
                        .unwrap(),
                        Responses::Precomputed(_) => unreachable!(),
                    };
                    // The matrix holds d(i, j) for i < j; the affine-invariant
                    // metric is symmetric only up to rounding.
                    assert!((d.get(i, j) - want).abs() <= 1e-12 * want.max(1.0), "{metric}");
                }
            }
        }
    }

    #[test]
    fn precomputed_is_identity() {
        let base = pairwise_distances(&random_set(Metric::Euclidean, 5, 1)).unwrap();
        let set = ResponseSet::precomputed(base.clone());
        assert_eq!(pairwise_distances(&set).unwrap(), base);
        let sub = subset_distances(&set, &[4, 0, 2]).unwrap();
        assert_eq!(sub.get(0, 1), base.get(4, 0));
        assert_eq!(sub.get(2, 0), base.get(2, 4));
    }

    #[test]
    fn metric_kind_compatibility() {
        let a = array![[0.5, 0.5], [1.0, 0.0]];
        assert!(ResponseSet::new(Responses::ProbabilityVectors(a.clone()), Metric::Hellinger).is_ok());
        assert!(matches!(
            ResponseSet::new(Responses::ProbabilityVectors(a.clone()), Metric::Wasserstein2),
            Err(Error::IncompatibleMetric { .. })
        ));
        assert!(ResponseSet::new(Responses::EuclideanVectors(a), Metric::LogCholesky).is_err());
    }

    #[test]
    fn invalid_payloads_rejected() {
        let neg = array![[1.2, -0.2], [0.5, 0.5]];
        assert!(matches!(
            ResponseSet::new(Responses::ProbabilityVectors(neg), Metric::TotalVariation),
            Err(Error::InvalidProbability { index: 0, .. })
        ));
        let mass = array![[0.5, 0.6]];
        assert!(ResponseSet::new(Responses::ProbabilityVectors(mass), Metric::Hellinger).is_err());
        let grid = array![[0.0, 1.0], [1.0, 0.5]];
        assert!(matches!(
            ResponseSet::new(Responses::QuantileGrids(grid), Metric::Wasserstein2),
            Err(Error::NonMonotoneGrid { index: 1 })
        ));
        let mixed = vec![
            SpdMatrix::new(Array2::eye(2)).unwrap(),
            SpdMatrix::new(Array2::eye(3)).unwrap(),
        ];
        assert!(ResponseSet::new(Responses::SpdMatrices(mixed), Metric::LogCholesky).is_err());
    }

    #[test]
    fn distance_matrix_validation() {
        assert!(DistanceMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).is_ok());
        assert!(DistanceMatrix::new(array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(array![[1.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(array![[0.0, -1.0], [-1.0, 0.0]]).is_err());
        assert!(pairwise_distances(&random_set(Metric::Euclidean, 1, 0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn metric_axioms(seed in any::<u64>(), which in 0usize..6) {
            let metric = METRICS[which];
            let set = random_set(metric, 6, seed);
            let d = pairwise_distances(&set).unwrap();
            for i in 0..6 {
                prop_assert_eq!(d.get(i, i), 0.0);
                for j in 0..6 {
                    prop_assert!(d.get(i, j) >= 0.0);
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                    if i != j {
                        prop_assert!(d.get(i, j) > 1e-9);
                    }
                    for k in 0..6 {
                        prop_assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-9);
                    }
                }
            }
        }
    }
}
