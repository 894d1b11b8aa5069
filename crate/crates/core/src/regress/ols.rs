//! Least squares through the normal equations with deterministic column dropping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve_psd_dropping, Csr};
use crate::scalar::Scalar;

/// Scaled pivot below which a column counts as collinear with earlier ones.
pub const OLS_COLLINEAR_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit<T> {
    /// Zero for dropped columns.
    pub beta: Vec<T>,
    pub dropped: Vec<usize>,
    pub rss: T,
    pub tss: T,
    /// Centered R squared.
    pub r2: T,
    pub n: usize,
}

impl<T: Scalar> OlsFit<T> {
    pub fn predict(&self, x: &Csr<T>) -> Vec<T> {
        x.mul(&self.beta)
    }
}

fn residuals<T: Scalar>(x: &Csr<T>, y: &[T], beta: &[T]) -> Vec<T> {
    (0..x.nrows()).map(|i| y[i] - x.row_dot(i, beta)).collect()
}

/// Solves min |y - X b|^2. Columns that are (numerically) linear
/// combinations of earlier columns are dropped and reported; one step of
/// iterative refinement follows the Cholesky solve.
pub fn ols<T: Scalar>(x: &Csr<T>, y: &[T]) -> Result<OlsFit<T>> {
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::Other(format!("design has {n} rows, response {}", y.len())));
    }
    if n == 0 {
        return Err(Error::Empty("least-squares design"));
    }
    let gram = x.gram(None);
    let tol = T::of(OLS_COLLINEAR_TOL);
    let first = solve_psd_dropping(&gram, &x.tmul(y), tol);
    let mut beta = first.x;
    let r = residuals(x, y, &beta);
    let mut g = x.tmul(&r);
    for &d in &first.dropped {
        g[d] = T::zero();
    }
    let corr = solve_psd_dropping(&gram, &g, tol);
    if corr.dropped == first.dropped {
        for (b, c) in beta.iter_mut().zip(&corr.x) {
            *b += *c;
        }
    }
    let r = residuals(x, y, &beta);
    let rss: T = r.iter().map(|&v| v * v).sum();
    let ybar = y.iter().copied().sum::<T>() / T::of_usize(n);
    let tss: T = y.iter().map(|&v| (v - ybar) * (v - ybar)).sum();
    let r2 = if tss > T::zero() { T::one() - rss / tss } else { T::one() };
    Ok(OlsFit {
        beta,
        dropped: first.dropped,
        rss,
        tss,
        r2,
        n,
    })
}
