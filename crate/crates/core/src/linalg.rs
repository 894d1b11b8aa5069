//! Small dense and sparse kernels used by the regression solvers.

use crate::scalar::Scalar;

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row given (column, value) pairs; zeros are skipped.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, T)>) {
        for (c, v) in entries {
            assert!(c < self.ncols, "column {c} out of range");
            if v != T::zero() {
                self.indices.push(c as u32);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .zip(&self.values[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// Row i dotted with `b`.
    #[inline]
    pub fn row_dot(&self, i: usize, b: &[T]) -> T {
        let mut acc = T::zero();
        for (c, v) in self.row(i) {
            acc += v * b[c];
        }
        acc
    }

    /// X b
    pub fn mul(&self, b: &[T]) -> Vec<T> {
        (0..self.nrows()).map(|i| self.row_dot(i, b)).collect()
    }

    /// X' v
    pub fn tmul(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.ncols];
        for (i, &vi) in v.iter().enumerate() {
            if vi != T::zero() {
                for (c, x) in self.row(i) {
                    out[c] += x * vi;
                }
            }
        }
        out
    }

    /// X' diag(w) X as a dense symmetric matrix (`None` weights = identity).
    pub fn gram(&self, w: Option<&[T]>) -> Dense<T> {
        let p = self.ncols;
        let mut g = Dense::zeros(p, p);
        for i in 0..self.nrows() {
            let wi = w.map_or(T::one(), |w| w[i]);
            if wi == T::zero() {
                continue;
            }
            let r = self.indptr[i]..self.indptr[i + 1];
            let cols = &self.indices[r.clone()];
            let vals = &self.values[r];
            for a in 0..cols.len() {
                let va = vals[a] * wi;
                let ca = cols[a] as usize;
                for b in a..cols.len() {
                    let cb = cols[b] as usize;
                    let (lo, hi) = if ca <= cb { (ca, cb) } else { (cb, ca) };
                    g.data[lo * p + hi] += va * vals[b];
                }
            }
        }
        for r in 0..p {
            for c in 0..r {
                g.data[r * p + c] = g.data[c * p + r];
            }
        }
        g
    }

    /// Keeps only the listed columns, renumbered in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Csr<T> {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut out = Csr::new(keep.len());
        for i in 0..self.nrows() {
            out.push_row(self.row(i).filter(|(c, _)| map[*c] != usize::MAX).map(|(c, v)| (map[c], v)));
        }
        out
    }

    /// Keeps the listed rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Csr<T> {
        let mut out = Csr::new(self.ncols);
        for &i in rows {
            out.push_row(self.row(i));
        }
        out
    }

    pub fn to_dense_row(&self, i: usize) -> Vec<T> {
        let mut r = vec![T::zero(); self.ncols];
        for (c, v) in self.row(i) {
            r[c] = v;
        }
        r
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factorizes `a`; returns `None` if a pivot is not positive.
    pub fn new(a: &Dense<T>) -> Option<Self> {
        let n = a.rows;
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a.at(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a.at(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(Self { n, l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

/// Result of a rank-revealing symmetric solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSolve<T> {
    pub x: Vec<T>,
    /// Columns judged linearly dependent on earlier ones (their x is zero).
    pub dropped: Vec<usize>,
}

/// Solves `a x = b` for symmetric positive semi-definite `a`, eliminating in
/// column order and dropping any column whose scaled pivot falls below `tol`.
/// Later columns are dropped in favour of earlier ones, so the choice is
/// deterministic.
pub fn solve_psd_dropping<T: Scalar>(a: &Dense<T>, b: &[T], tol: T) -> RankSolve<T> {
    let n = a.rows;
    let scale: Vec<T> = (0..n)
        .map(|j| {
            let d = a.at(j, j);
            if d > T::zero() { T::one() / d.sqrt() } else { T::zero() }
        })
        .collect();
    let mut keep = Vec::with_capacity(n);
    let mut dropped = Vec::new();
    // incremental Cholesky on the kept set, in scaled coordinates
    let mut l: Vec<Vec<T>> = Vec::with_capacity(n);
    for j in 0..n {
        if scale[j] == T::zero() {
            dropped.push(j);
            continue;
        }
        let mut row = Vec::with_capacity(keep.len() + 1);
        for (m, &k) in keep.iter().enumerate() {
            let mut s = a.at(j, k) * scale[j] * scale[k];
            for q in 0..m {
                s -= row[q] * l[m][q];
            }
            row.push(s / l[m][m]);
        }
        let mut d = T::one();
        for v in &row {
            d -= *v * *v;
        }
        if d > tol {
            row.push(d.sqrt());
            l.push(row);
            keep.push(j);
        } else {
            dropped.push(j);
        }
    }
    let m = keep.len();
    let mut y: Vec<T> = keep.iter().map(|&k| b[k] * scale[k]).collect();
    for i in 0..m {
        let mut s = y[i];
        for q in 0..i {
            s -= l[i][q] * y[q];
        }
        y[i] = s / l[i][i];
    }
    for i in (0..m).rev() {
        let mut s = y[i];
        for q in i + 1..m {
            s -= l[q][i] * y[q];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![T::zero(); n];
    for (i, &k) in keep.iter().enumerate() {
        x[k] = y[i] * scale[k];
    }
    RankSolve { x, dropped }
}

/// Solves a square system by Gaussian elimination with partial pivoting;
/// `None` when (numerically) singular.
pub fn lu_solve<T: Scalar>(mut a: Vec<T>, mut b: Vec<T>, n: usize) -> Option<Vec<T>> {
    let norm = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = norm * T::epsilon() * T::of_usize(n.max(1)) * T::of(16.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i * n + col]
                .abs()
                .partial_cmp(&a[j * n + col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if !(a[piv * n + col].abs() > tiny) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != T::zero() {
                for k in col..n {
                    let v = a[col * n + k];
                    a[r * n + k] -= f * v;
                }
                let bv = b[col];
                b[r] -= f * bv;
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            s -= a[r * n + k] * x[k];
        }
        x[r] = s / a[r * n + r];
    }
    Some(x)
}
