//! Distances between one-dimensional distributions and probability vectors.

use crate::error::{Error, Result};

fn same_len(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "{what} lengths differ or are empty: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Midpoint probability levels `(2j-1)/(2G)`, `j = 1..=G`.
pub fn midpoint_grid(len: usize) -> Vec<f64> {
    (1..=len)
        .map(|j| (2 * j - 1) as f64 / (2 * len) as f64)
        .collect()
}

/// Quadratic Wasserstein distance between two quantile functions sampled on
/// the same equal-weight midpoint grid: the square root of the mean squared
/// quantile difference.
pub fn wasserstein2(q1: &[f64], q2: &[f64]) -> Result<f64> {
    same_len(q1, q2, "quantile grid")?;
    for (index, q) in [q1, q2].into_iter().enumerate() {
        if q.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::NonMonotoneGrid { index });
        }
    }
    Ok(wasserstein2_unchecked(q1, q2))
}

pub(crate) fn wasserstein2_unchecked(q1: &[f64], q2: &[f64]) -> f64 {
    let ss: f64 = q1.iter().zip(q2).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / q1.len() as f64).sqrt()
}

fn check_nonnegative(p: &[f64], index: usize) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidProbability {
            index,
            reason: format!("negative or non-finite mass {v}"),
        });
    }
    Ok(())
}

/// `(1/sqrt 2) * || sqrt p - sqrt q ||_2`, in `[0, 1]` on the simplex.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q, "probability vector")?;
    check_nonnegative(p, 0)?;
    check_nonnegative(q, 1)?;
    Ok(hellinger_unchecked(p, q))
}

pub(crate) fn hellinger_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let ss: f64 = p
        .iter()
        .zip(q)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum();
    (0.5 * ss).sqrt()
}

/// `0.5 * sum_j |p_j - q_j|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q, "probability vector")?;
    check_nonnegative(p, 0)?;
    check_nonnegative(q, 1)?;
    Ok(total_variation_unchecked(p, q))
}

pub(crate) fn total_variation_unchecked(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
