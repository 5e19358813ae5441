//! Accuracy measures for recovered sufficient predictors.

use ndarray::{Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::linalg::{inv_sqrt, sym_eig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceCorrelation {
    pub value: f64,
    /// Set when either sample has zero distance variance; `value` is 0.
    pub degenerate: bool,
}

fn double_centered(a: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a
                .row(i)
                .iter()
                .zip(a.row(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    let row = d.mean_axis(Axis(1)).expect("non-empty");
    let grand = row.mean().expect("non-empty");
    for i in 0..n {
        for j in 0..n {
            d[[i, j]] += grand - row[i] - row[j];
        }
    }
    d
}

/// Sample distance correlation (the V-statistic form) between the rows of
/// `a` and the rows of `b`.
pub fn distance_correlation(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<DistanceCorrelation> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::Shape(format!("{n} rows against {} rows", b.nrows())));
    }
    if n < 2 {
        return Err(Error::TooFewSamples { n, min: 2 });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Shape("non-finite entry".into()));
    }
    let da = double_centered(a);
    let db = double_centered(b);
    let nn = (n * n) as f64;
    let cov = (&da * &db).sum() / nn;
    let va = (&da * &da).sum() / nn;
    let vb = (&db * &db).sum() / nn;
    let denom = (va * vb).sqrt();
    if !(denom > 0.0) {
        return Ok(DistanceCorrelation { value: 0.0, degenerate: true });
    }
    let value = (cov.max(0.0) / denom).sqrt().min(1.0);
    Ok(DistanceCorrelation { value, degenerate: false })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaDistance {
    pub value: f64,
    /// The minimising orthogonal matrix: `estimate_i ~ rotation * truth_i`.
    pub rotation: Array2<f64>,
    /// Set when the cross-moment matrix is singular, so the minimiser is
    /// not unique.
    pub rank_deficient: bool,
}

fn centered(a: ArrayView2<f64>) -> Array2<f64> {
    let mean = a.mean_axis(Axis(0)).expect("non-empty");
    &a - &mean
}

/// `min_Q mean_i ||e_i - Q t_i||^2` over orthogonal `Q`, after centering
/// both inputs' columns. Solved by orthogonal Procrustes.
pub fn kappa_distance(estimate: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<KappaDistance> {
    if estimate.dim() != truth.dim() {
        return Err(Error::Shape(format!(
            "estimate is {:?} but truth is {:?}",
            estimate.dim(),
            truth.dim()
        )));
    }
    let (n, d) = estimate.dim();
    if n == 0 || d == 0 {
        return Err(Error::Shape("empty inputs".into()));
    }
    let e = centered(estimate);
    let t = centered(truth);
    let m = e.t().dot(&t);
    let (vals, v) = sym_eig(m.t().dot(&m).view())?;
    let svals: Vec<f64> = vals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let smax = svals.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let mut u = Array2::<f64>::zeros((d, d));
    let mut filled = vec![false; d];
    for k in 0..d {
        if svals[k] > tol {
            let col = m.dot(&v.column(k)) / svals[k];
            u.column_mut(k).assign(&col);
            filled[k] = true;
        }
    }
    let rank_deficient = filled.iter().any(|f| !f);
    if rank_deficient {
        complete_orthonormal(&mut u, &filled);
    }
    let rotation = u.dot(&v.t());
    let nuclear: f64 = svals.iter().sum();
    let ne = e.iter().map(|x| x * x).sum::<f64>();
    let nt = t.iter().map(|x| x * x).sum::<f64>();
    let value = ((ne + nt - 2.0 * nuclear) / n as f64).max(0.0);
    Ok(KappaDistance { value, rotation, rank_deficient })
}

/// Fills the unset columns of `u` with an orthonormal completion by
/// Gram-Schmidt against the standard basis.
fn complete_orthonormal(u: &mut Array2<f64>, filled: &[bool]) {
    let d = u.nrows();
    let mut basis: Vec<ndarray::Array1<f64>> = (0..d).filter(|&k| filled[k]).map(|k| u.column(k).to_owned()).collect();
    let mut candidates = (0..d).map(|i| {
        let mut e = ndarray::Array1::zeros(d);
        e[i] = 1.0;
        e
    });
    for k in (0..d).filter(|&k| !filled[k]) {
        loop {
            let mut c = candidates.next().expect("standard basis spans");
            for b in &basis {
                let proj = c.dot(b);
                c.scaled_add(-proj, b);
            }
            let norm = c.dot(&c).sqrt();
            if norm > 1e-8 {
                c /= norm;
                u.column_mut(k).assign(&c);
                basis.push(c);
                break;
            }
        }
    }
}

/// Centers the columns of `a` and whitens them to identity sample
/// covariance (`1/n` convention).
pub fn standardize(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { n, min: 2 });
    }
    let c = centered(a);
    let cov = c.t().dot(&c) / n as f64;
    Ok(c.dot(&inv_sqrt(cov.view())?))
}

/// Frobenius distance between the sample covariance of `f` (`1/n`
/// convention) and the identity.
pub fn covariance_deviation(f: ArrayView2<f64>) -> f64 {
    let n = f.nrows() as f64;
    let c = centered(f);
    let mut cov = c.t().dot(&c) / n;
    for i in 0..cov.nrows() {
        cov[[i, i]] -= 1.0;
    }
    cov.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0))
    }

    fn rotation(theta: f64, reflect: bool) -> Array2<f64> {
        let (s, c) = theta.sin_cos();
        if reflect {
            array![[c, s], [s, -c]]
        } else {
            array![[c, -s], [s, c]]
        }
    }

    /// Raw double-sum definition of the squared distance covariance.
    fn dcov2_raw(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let n = a.nrows();
        let dist = |m: &Array2<f64>, i: usize, j: usize| {
            m.row(i).iter().zip(m.row(j).iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let nf = n as f64;
        let mut s1 = 0.0;
        let mut s2a = 0.0;
        let mut s2b = 0.0;
        let mut s3 = 0.0;
        for i in 0..n {
            for j in 0..n {
                s1 += dist(a, i, j) * dist(b, i, j);
                s2a += dist(a, i, j);
                s2b += dist(b, i, j);
                for k in 0..n {
                    s3 += dist(a, i, j) * dist(b, i, k);
                }
            }
        }
        s1 / nf.powi(2) + (s2a / nf.powi(2)) * (s2b / nf.powi(2)) - 2.0 * s3 / nf.powi(3)
    }

    #[test]
    fn dcor_matches_raw_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 6, 2);
        let b = random(&mut rng, 6, 3);
        let want = (dcov2_raw(&a, &b) / (dcov2_raw(&a, &a) * dcov2_raw(&b, &b)).sqrt()).sqrt();
        let got = distance_correlation(a.view(), b.view()).unwrap();
        assert!((want - got.value).abs() < 1e-12, "{want} {}", got.value);
    }

    #[test]
    fn dcor_self_and_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 30, 2);
        assert!((distance_correlation(a.view(), a.view()).unwrap().value - 1.0).abs() < 1e-12);
        let b = a.dot(&rotation(0.7, true)) * -3.0 + 5.0;
        assert!((distance_correlation(a.view(), b.view()).unwrap().value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dcor_symmetric_bounded_and_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random(&mut rng, 25, 2);
            let b = random(&mut rng, 25, 1).mapv(|v| v * v);
            let ab = distance_correlation(a.view(), b.view()).unwrap().value;
            let ba = distance_correlation(b.view(), a.view()).unwrap().value;
            assert!((ab - ba).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&ab));
            let a2 = a.dot(&rotation(1.1, false)) * 2.5 + 1.0;
            let t = distance_correlation(a2.view(), b.view()).unwrap().value;
            assert!((ab - t).abs() < 1e-10);
        }
    }

    #[test]
    fn dcor_degenerate() {
        let a = Array2::from_elem((10, 1), 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random(&mut rng, 10, 1);
        let r = distance_correlation(a.view(), b.view()).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value, 0.0);
        assert!(distance_correlation(b.view(), random(&mut rng, 9, 1).view()).is_err());
    }

    #[test]
    fn kappa_zero_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random(&mut rng, 40, 3);
        assert!(kappa_distance(t.view(), t.view()).unwrap().value < 1e-12);
        let (_, q) = sym_eig({
            let a = random(&mut rng, 3, 3);
            &a + &a.t()
        }
        .view())
        .unwrap();
        let e = t.dot(&q);
        let k = kappa_distance(e.view(), t.view()).unwrap();
        assert!(k.value < 1e-10);
        assert!(!k.rank_deficient);
        let eye = k.rotation.t().dot(&k.rotation);
        for i in 0..3 {
            for j in 0..3 {
                assert!((eye[[i, j]] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kappa_matches_grid_search_over_o2() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let t = random(&mut rng, 50, 2);
            let e = t.dot(&rotation(rng.random_range(0.0..6.0), rng.random())) + random(&mut rng, 50, 2) * 0.3;
            let (ec, tc) = (centered(e.view()), centered(t.view()));
            let objective = |q: &Array2<f64>| {
                let diff = &ec - &tc.dot(&q.t());
                diff.iter().map(|v| v * v).sum::<f64>() / 50.0
            };
            let mut best = f64::INFINITY;
            let steps = 200_000;
            for reflect in [false, true] {
                for s in 0..steps {
                    let theta = 2.0 * std::f64::consts::PI * s as f64 / steps as f64;
                    best = best.min(objective(&rotation(theta, reflect)));
                }
            }
            let k = kappa_distance(e.view(), t.view()).unwrap();
            assert!((k.value - best).abs() < 1e-6, "{} vs {best}", k.value);
            assert!((objective(&k.rotation) - k.value).abs() < 1e-10);
        }
    }

    #[test]
    fn kappa_orthogonal_invariance_of_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random(&mut rng, 60, 2);
        let e = random(&mut rng, 60, 2);
        let a = kappa_distance(e.view(), t.view()).unwrap().value;
        let b = kappa_distance(e.dot(&rotation(2.2, true)).view(), t.view()).unwrap().value;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn kappa_rank_deficient() {
        let t = array![[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0], [-2.0, 0.0]];
        let e = array![[0.0, 1.0], [0.0, -1.0], [0.0, 2.0], [0.0, -2.0]];
        let k = kappa_distance(e.view(), t.view()).unwrap();
        assert!(k.rank_deficient);
        assert!(k.value < 1e-12);
        let qtq = k.rotation.t().dot(&k.rotation);
        assert!((qtq[[0, 0]] - 1.0).abs() < 1e-12 && qtq[[0, 1]].abs() < 1e-12);
        assert!(kappa_distance(e.view(), array![[1.0], [2.0], [3.0], [4.0]].view()).is_err());
    }

    #[test]
    fn standardize_whitens() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random(&mut rng, 100, 2).dot(&array![[2.0, 0.5], [0.0, 1.0]]);
        let s = standardize(a.view()).unwrap();
        assert!(covariance_deviation(s.view()) < 1e-10);
        assert!(covariance_deviation((s * 2.0).view()) > 4.0);
    }
}
