//! Dense symmetric linear algebra for small matrices (order 2-5 in practice).

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Maximum number of cyclic Jacobi sweeps.
pub const MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius norm, relative to `max(1, ||A||_F)`, at which
/// Jacobi iteration stops.
pub const JACOBI_TOL: f64 = 1e-12;
/// Smallest pivot accepted by [`cholesky`].
pub const PIVOT_TOL: f64 = 1e-12;

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let m = a.nrows();
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                s += a[[i, j]] * a[[i, j]];
            }
        }
    }
    s.sqrt()
}

fn check_square(a: &ArrayView2<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns. Only the lower triangle is trusted; the input
/// is symmetrised before iterating.
pub fn sym_eig(a: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let m = check_square(&a)?;
    let mut w = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            w[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut v = Array2::<f64>::eye(m);
    let scale = w.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let tol = JACOBI_TOL * scale;

    let mut converged = off_diagonal_norm(&w) <= tol;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                off_norm: off_diagonal_norm(&w),
            });
        }
        sweeps += 1;
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = w[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (w[[q, q]] - w[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let wkp = w[[k, p]];
                    let wkq = w[[k, q]];
                    w[[k, p]] = c * wkp - s * wkq;
                    w[[k, q]] = s * wkp + c * wkq;
                }
                for k in 0..m {
                    let wpk = w[[p, k]];
                    let wqk = w[[q, k]];
                    w[[p, k]] = c * wpk - s * wqk;
                    w[[q, k]] = s * wpk + c * wqk;
                }
                for k in 0..m {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_diagonal_norm(&w) <= tol;
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| w[[i, i]].total_cmp(&w[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| w[[i, i]]));
    let mut vectors = Array2::<f64>::zeros((m, m));
    for (col, &src) in order.iter().enumerate() {
        vectors.column_mut(col).assign(&v.column(src));
    }
    Ok((values, vectors))
}

/// Eigenvalues only, ascending.
pub fn sym_eigvals(a: ArrayView2<f64>) -> Result<Array1<f64>> {
    sym_eig(a).map(|(vals, _)| vals)
}

/// `V diag(g(lambda)) V^T` for a symmetric matrix.
pub fn sym_apply(a: ArrayView2<f64>, g: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
    let (vals, vecs) = sym_eig(a)?;
    Ok(reassemble(&vals.mapv(g), &vecs))
}

fn reassemble(vals: &Array1<f64>, vecs: &Array2<f64>) -> Array2<f64> {
    let m = vals.len();
    let mut out = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..m {
                s += vecs[[i, k]] * vals[k] * vecs[[j, k]];
            }
            out[[i, j]] = s;
            out[[j, i]] = s;
        }
    }
    out
}

/// Lower Cholesky factor `L` with `A = L L^T`.
///
/// Fails with the pivot position when a pivot is at most [`PIVOT_TOL`].
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let m = check_square(&a)?;
    let mut l = Array2::<f64>::zeros((m, m));
    for j in 0..m {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > PIVOT_TOL) {
            return Err(Error::NotPositiveDefinite {
                index: 0,
                reason: format!("Cholesky pivot {j} is {diag:e}"),
            });
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..m {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

/// Principal logarithm of a symmetric positive-definite matrix.
pub fn matrix_log(y: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (vals, vecs) = sym_eig(y)?;
    if let Some(&bad) = vals.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            index: 0,
            reason: format!("eigenvalue {bad:e}"),
        });
    }
    Ok(reassemble(&vals.mapv(f64::ln), &vecs))
}

/// Exponential of a symmetric matrix; the result is positive definite.
pub fn matrix_exp(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    sym_apply(a, f64::exp)
}

/// `Y^{-1/2}` for a positive-definite `Y`.
pub fn inv_sqrt(y: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (vals, vecs) = sym_eig(y)?;
    if let Some(&bad) = vals.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            index: 0,
            reason: format!("eigenvalue {bad:e}"),
        });
    }
    Ok(reassemble(&vals.mapv(|v| 1.0 / v.sqrt()), &vecs))
}

/// Symmetric product `S Y S` for symmetric `S`, symmetrised.
pub fn congruence(s: ArrayView2<f64>, y: ArrayView2<f64>) -> Array2<f64> {
    let c = s.dot(&y).dot(&s);
    let m = c.nrows();
    let mut out = c.clone();
    for i in 0..m {
        for j in 0..m {
            out[[i, j]] = 0.5 * (c[[i, j]] + c[[j, i]]);
        }
    }
    out
}
