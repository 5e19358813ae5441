//! Distances on the cone of symmetric positive-definite matrices.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::linalg;
use crate::error::{Error, Result};

/// Symmetry tolerance accepted by [`SpdMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A validated symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdMatrix(Array2<f64>);

impl SpdMatrix {
    pub fn new(a: Array2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::Shape(format!(
                "SPD matrix must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let m = a.nrows();
        for i in 0..m {
            for j in 0..i {
                if (a[[i, j]] - a[[j, i]]).abs() > SYMMETRY_TOL {
                    return Err(Error::NotPositiveDefinite {
                        index: 0,
                        reason: format!("asymmetric at ({i},{j})"),
                    });
                }
            }
        }
        linalg::cholesky(a.view())?;
        Ok(Self(a))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

fn same_order(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.order() != b.order() {
        return Err(Error::Shape(format!(
            "SPD orders differ: {} vs {}",
            a.order(),
            b.order()
        )));
    }
    Ok(())
}

/// Strictly-lower entries of the Cholesky factor followed by the logs of
/// its diagonal. The log-Cholesky distance is the Euclidean distance between
/// these coordinates.
pub fn log_cholesky_coordinates(y: &SpdMatrix) -> Result<Vec<f64>> {
    let l = linalg::cholesky(y.view())?;
    let m = l.nrows();
    let mut out = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for j in 0..i {
            out.push(l[[i, j]]);
        }
    }
    for i in 0..m {
        out.push(l[[i, i]].ln());
    }
    Ok(out)
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `{ ||lower(P1) - lower(P2)||_F^2 + ||log diag(P1) - log diag(P2)||_F^2 }^{1/2}`
/// with `P_i` the lower Cholesky factors.
pub fn log_cholesky(y1: &SpdMatrix, y2: &SpdMatrix) -> Result<f64> {
    same_order(y1, y2)?;
    Ok(euclid(
        &log_cholesky_coordinates(y1)?,
        &log_cholesky_coordinates(y2)?,
    ))
}

/// Affine-invariant distance from a precomputed `Y1^{-1/2}`.
pub(crate) fn affine_invariant_whitened(
    y1_inv_sqrt: ArrayView2<f64>,
    y2: ArrayView2<f64>,
) -> Result<f64> {
    let c = linalg::congruence(y1_inv_sqrt, y2);
    let vals = linalg::sym_eigvals(c.view())?;
    Ok(vals.iter().map(|v| v.ln() * v.ln()).sum::<f64>().sqrt())
}

/// `|| log(Y1^{-1/2} Y2 Y1^{-1/2}) ||_F`.
pub fn affine_invariant(y1: &SpdMatrix, y2: &SpdMatrix) -> Result<f64> {
    same_order(y1, y2)?;
    let s = linalg::inv_sqrt(y1.view())?;
    affine_invariant_whitened(s.view(), y2.view())
}
