//! Linear quantile regression by a primal-dual interior point method
//! (Frisch-Newton with Mehrotra correction) on the bounded dual LP,
//! followed by a basic-solution polish.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, solve_psd_dropping, Cholesky, Csr};
use crate::scalar::Scalar;

#[inline]
pub fn pinball<T: Scalar>(r: T, tau: T) -> T {
    if r < T::zero() {
        r * (tau - T::one())
    } else {
        r * tau
    }
}

/// Total pinball loss of `beta` on (x, y).
pub fn objective<T: Scalar>(x: &Csr<T>, y: &[T], beta: &[T], tau: T) -> T {
    (0..x.nrows()).map(|i| pinball(y[i] - x.row_dot(i, beta), tau)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QrOptions {
    pub max_iter: usize,
    /// Stop when the duality gap falls below `tol * (1 + sum |y|)`.
    pub tol: f64,
    /// Step-length damping toward the boundary.
    pub step: f64,
    pub polish: bool,
}

impl Default for QrOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-12,
            step: 0.99995,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrSolution<T> {
    pub beta: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    /// Columns dropped as collinear (coefficient fixed at zero).
    pub dropped: Vec<usize>,
    /// True when the reported beta is the polished basic solution.
    pub polished: bool,
}

const COLLINEAR_TOL: f64 = 1e-10;

/// Minimizes the pinball loss at quantile `tau` in (0, 1).
pub fn rq_fit<T: Scalar>(x: &Csr<T>, y: &[T], tau: f64, opts: &QrOptions) -> Result<QrSolution<T>> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Other("response length differs from design rows".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::config("tau", format!("{tau} outside (0, 1)")));
    }
    let p_all = x.ncols();
    if n == 0 {
        return Err(Error::TooFew { what: "quantile regression rows", needed: p_all + 1, got: n });
    }
    let ols = solve_psd_dropping(&x.gram(None), &x.tmul(y), T::of(COLLINEAR_TOL));
    let keep: Vec<usize> = (0..p_all).filter(|c| !ols.dropped.contains(c)).collect();
    let xr = if ols.dropped.is_empty() { x.clone() } else { x.select_columns(&keep) };
    let t = T::of(tau);

    let (beta_r, iterations, converged) = if keep.is_empty() {
        (Vec::new(), 0, true)
    } else {
        fnb(&xr, y, t, opts)
    };
    let mut beta_r = beta_r;
    let mut obj = objective(&xr, y, &beta_r, t);
    let mut polished = false;
    if opts.polish && !keep.is_empty() {
        if let Some(b) = polish(&xr, y, &beta_r) {
            let o = objective(&xr, y, &b, t);
            if o <= obj {
                beta_r = b;
                obj = o;
                polished = true;
            }
        }
    }
    let mut beta = vec![T::zero(); p_all];
    for (k, &c) in keep.iter().enumerate() {
        beta[c] = beta_r[k];
    }
    Ok(QrSolution {
        beta,
        objective: obj,
        iterations,
        converged,
        dropped: ols.dropped,
        polished,
    })
}

/// Step length to the boundary of `v + a dv >= 0`.
#[inline]
fn bound<T: Scalar>(v: &[T], dv: &[T]) -> T {
    let mut m = T::of(1e20);
    for (&a, &d) in v.iter().zip(dv) {
        if d < T::zero() {
            let s = -a / d;
            if s < m {
                m = s;
            }
        }
    }
    m
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn factor<T: Scalar>(x: &Csr<T>, q: &[T]) -> Option<Cholesky<T>> {
    let mut g = x.gram(Some(q));
    if let Some(c) = Cholesky::new(&g) {
        return Some(c);
    }
    let p = g.rows;
    let tr = (0..p).map(|i| g.at(i, i)).fold(T::zero(), |a, b| a + b) / T::of_usize(p);
    for i in 0..p {
        *g.at_mut(i, i) += tr * T::of(1e-12);
    }
    Cholesky::new(&g)
}

/// Interior point iterations on: min c'd s.t. X'd = (1 - tau) X'1, 0 <= d <= 1,
/// with c = -y. The regression coefficients are the negated dual variables.
fn fnb<T: Scalar>(x: &Csr<T>, resp: &[T], tau: T, opts: &QrOptions) -> (Vec<T>, usize, bool) {
    let n = x.nrows();
    let one = T::one();
    let beta_step = T::of(opts.step);
    let c: Vec<T> = resp.iter().map(|&v| -v).collect();
    let b: Vec<T> = x.tmul(&vec![one - tau; n]);
    let mut xv = vec![one - tau; n];
    let mut s = vec![tau; n];

    let ls = solve_psd_dropping(&x.gram(None), &x.tmul(&c), T::of(COLLINEAR_TOL));
    let mut yv = ls.x;
    let r0: Vec<T> = {
        let ay = x.mul(&yv);
        c.iter().zip(&ay).map(|(&ci, &a)| ci - a).collect()
    };
    let scale = one + resp.iter().map(|v| v.abs()).sum::<T>();
    let mean_abs = r0.iter().map(|v| v.abs()).sum::<T>() / T::of_usize(n.max(1));
    let delta = (mean_abs * T::of(1e-3)).max(T::of(1e-8));
    let mut z: Vec<T> = r0.iter().map(|&r| r.max(T::zero()) + delta).collect();
    let mut w: Vec<T> = r0.iter().map(|&r| (-r).max(T::zero()) + delta).collect();

    let gap_of = |xv: &[T], yv: &[T], w: &[T]| dot(&c, xv) - dot(yv, &b) + w.iter().copied().sum::<T>();
    let mut gap = gap_of(&xv, &yv, &w);
    let tol = T::of(opts.tol) * scale;
    let mut it = 0;
    let two_n = T::of_usize(2 * n);
    while gap.abs() > tol && it < opts.max_iter {
        it += 1;
        let q: Vec<T> = (0..n).map(|i| one / (z[i] / xv[i] + w[i] / s[i])).collect();
        let r: Vec<T> = (0..n).map(|i| z[i] - w[i]).collect();
        let Some(chol) = factor(x, &q) else { break };
        let qr: Vec<T> = q.iter().zip(&r).map(|(&a, &b)| a * b).collect();
        let rhs = x.tmul(&qr);
        let mut dy = chol.solve(&rhs);
        let ady = x.mul(&dy);
        let mut dx: Vec<T> = (0..n).map(|i| q[i] * (ady[i] - r[i])).collect();
        let mut ds: Vec<T> = dx.iter().map(|&v| -v).collect();
        let mut dz: Vec<T> = (0..n).map(|i| -z[i] * (dx[i] / xv[i] + one)).collect();
        let mut dw: Vec<T> = (0..n).map(|i| -w[i] * (ds[i] / s[i] + one)).collect();
        let mut fp = (beta_step * bound(&xv, &dx).min(bound(&s, &ds))).min(one);
        let mut fd = (beta_step * bound(&w, &dw).min(bound(&z, &dz))).min(one);
        if fp.min(fd) < one {
            let mu = dot(&z, &xv) + dot(&w, &s);
            let g: T = (0..n)
                .map(|i| (z[i] + fd * dz[i]) * (xv[i] + fp * dx[i]) + (w[i] + fd * dw[i]) * (s[i] + fp * ds[i]))
                .sum();
            let ratio = g / mu;
            let mu = mu * ratio * ratio * ratio / two_n;
            let dxdz: Vec<T> = (0..n).map(|i| dx[i] * dz[i]).collect();
            let dsdw: Vec<T> = (0..n).map(|i| ds[i] * dw[i]).collect();
            let xi: Vec<T> = (0..n).map(|i| mu * (one / xv[i] - one / s[i])).collect();
            let corr: Vec<T> = (0..n).map(|i| q[i] * (dxdz[i] - dsdw[i] - xi[i])).collect();
            let rhs2: Vec<T> = rhs.iter().zip(x.tmul(&corr)).map(|(&a, b)| a + b).collect();
            dy = chol.solve(&rhs2);
            let ady = x.mul(&dy);
            dx = (0..n)
                .map(|i| q[i] * (ady[i] + xi[i] - r[i] - dxdz[i] + dsdw[i]))
                .collect();
            ds = dx.iter().map(|&v| -v).collect();
            dz = (0..n)
                .map(|i| mu / xv[i] - z[i] - z[i] / xv[i] * dx[i] - dxdz[i])
                .collect();
            dw = (0..n)
                .map(|i| mu / s[i] - w[i] - w[i] / s[i] * ds[i] - dsdw[i])
                .collect();
            fp = (beta_step * bound(&xv, &dx).min(bound(&s, &ds))).min(one);
            fd = (beta_step * bound(&w, &dw).min(bound(&z, &dz))).min(one);
        }
        for i in 0..n {
            xv[i] += fp * dx[i];
            s[i] += fp * ds[i];
            z[i] += fd * dz[i];
            w[i] += fd * dw[i];
        }
        for (a, d) in yv.iter_mut().zip(&dy) {
            *a += fd * *d;
        }
        let g = gap_of(&xv, &yv, &w);
        if !g.is_finite() {
            break;
        }
        gap = g;
    }
    let beta = yv.into_iter().map(|v| -v).collect();
    (beta, it, gap.abs() <= tol)
}

/// Basic solution through the p rows with the smallest absolute residuals
/// that are linearly independent.
fn polish<T: Scalar>(x: &Csr<T>, y: &[T], beta: &[T]) -> Option<Vec<T>> {
    let p = x.ncols();
    let n = x.nrows();
    if n < p {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    let res: Vec<T> = (0..n).map(|i| (y[i] - x.row_dot(i, beta)).abs()).collect();
    order.sort_by(|&a, &b| res[a].partial_cmp(&res[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(p);
    let mut rows = Vec::with_capacity(p);
    for &i in &order {
        let v = x.to_dense_row(i);
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == T::zero() {
            continue;
        }
        let mut u = v.clone();
        for e in &basis {
            let proj = dot(&u, e);
            for (a, &b) in u.iter_mut().zip(e) {
                *a -= proj * b;
            }
        }
        let nu = dot(&u, &u).sqrt();
        if nu > norm0 * T::of(1e-9) {
            u.iter_mut().for_each(|a| *a /= nu);
            basis.push(u);
            rows.push(i);
            if rows.len() == p {
                break;
            }
        }
    }
    if rows.len() < p {
        return None;
    }
    let mut a = Vec::with_capacity(p * p);
    for &i in &rows {
        a.extend(x.to_dense_row(i));
    }
    let rhs = rows.iter().map(|&i| y[i]).collect();
    lu_solve(a, rhs, p)
}

/// Per-quantile convergence record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrDiagnostic {
    pub theta: u32,
    pub iterations: usize,
    pub converged: bool,
    pub polished: bool,
    pub objective: f64,
}

/// Coefficients for a grid of quantile indices theta (tau = theta / 100).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit<T> {
    pub thetas: Vec<u32>,
    /// `beta[k]` belongs to `thetas[k]`.
    pub beta: Vec<Vec<T>>,
    pub diagnostics: Vec<QrDiagnostic>,
    pub dropped: Vec<usize>,
    pub n: usize,
}

impl<T: Scalar> QuantileFit<T> {
    pub fn beta_for(&self, theta: u32) -> Option<&[T]> {
        self.thetas.iter().position(|&t| t == theta).map(|k| self.beta[k].as_slice())
    }

    /// Predicted quantiles at a covariate vector, sorted across theta
    /// (monotone rearrangement, diagnostic only).
    pub fn rearranged_at(&self, xbar: &[T]) -> Vec<T> {
        let mut v: Vec<T> = self.beta.iter().map(|b| dot(b, xbar)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        v
    }

    /// Number of adjacent theta pairs whose raw predictions at `xbar` cross.
    pub fn crossings_at(&self, xbar: &[T]) -> usize {
        let v: Vec<T> = self.beta.iter().map(|b| dot(b, xbar)).collect();
        v.windows(2).filter(|w| w[1] < w[0]).count()
    }
}

/// The 99 quantile indices 1..=99.
pub fn theta_grid() -> Vec<u32> {
    (1..=99).collect()
}

/// Fits every theta independently (in parallel); gathered in theta order.
pub fn fit_quantile_grid<T: Scalar>(
    x: &Csr<T>,
    y: &[T],
    thetas: &[u32],
    opts: &QrOptions,
) -> Result<QuantileFit<T>> {
    if x.nrows() < x.ncols() + 1 {
        return Err(Error::TooFew {
            what: "rows for quantile grid",
            needed: x.ncols() + 1,
            got: x.nrows(),
        });
    }
    let sols: Vec<Result<QrSolution<T>>> = thetas
        .par_iter()
        .map(|&th| rq_fit(x, y, th as f64 / 100.0, opts))
        .collect();
    let mut fit = QuantileFit {
        thetas: thetas.to_vec(),
        beta: Vec::with_capacity(thetas.len()),
        diagnostics: Vec::with_capacity(thetas.len()),
        dropped: Vec::new(),
        n: x.nrows(),
    };
    for (&th, sol) in thetas.iter().zip(sols) {
        let sol = sol?;
        if fit.dropped.is_empty() {
            fit.dropped = sol.dropped.clone();
        }
        fit.diagnostics.push(QrDiagnostic {
            theta: th,
            iterations: sol.iterations,
            converged: sol.converged,
            polished: sol.polished,
            objective: sol.objective.to_f64_lossy(),
        });
        fit.beta.push(sol.beta);
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(rows: &[Vec<f64>]) -> Csr<f64> {
        let mut x = Csr::new(rows[0].len());
        for r in rows {
            x.push_row(r.iter().copied().enumerate());
        }
        x
    }

    /// Best objective over fits through every p-subset of rows.
    fn brute(rows: &[Vec<f64>], y: &[f64], tau: f64) -> f64 {
        let n = rows.len();
        let p = rows[0].len();
        let x = design(rows);
        let mut best = f64::INFINITY;
        let mut idx: Vec<usize> = (0..p).collect();
        loop {
            let a: Vec<f64> = idx.iter().flat_map(|&i| rows[i].clone()).collect();
            let b: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            if let Some(beta) = lu_solve(a, b, p) {
                best = best.min(objective(&x, y, &beta, tau));
            }
            // next combination
            let mut k = p;
            while k > 0 && idx[k - 1] == n - p + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            idx[k - 1] += 1;
            for j in k..p {
                idx[j] = idx[j - 1] + 1;
            }
        }
        best
    }

    #[test]
    fn intercept_only_median() {
        let ys = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let x = design(&vec![vec![1.0]; ys.len()]);
        let s = rq_fit(&x, &ys, 0.5, &QrOptions::default()).unwrap();
        assert!((s.beta[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn seven_points_two_covariates() {
        let rows: Vec<Vec<f64>> = (0..7).map(|i| vec![1.0, i as f64 * 0.7 - 1.0]).collect();
        let y = [0.3, -1.2, 2.5, 0.9, 1.7, 3.3, 2.2];
        let s = rq_fit(&design(&rows), &y, 0.25, &QrOptions::default()).unwrap();
        assert!(s.objective <= brute(&rows, &y, 0.25) + 1e-8);
    }

    #[test]
    fn random_small_instances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let n = rng.random_range(4..=12);
            let p = rng.random_range(1..=3usize).min(n - 1);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let mut r = vec![1.0];
                    r.extend((1..p).map(|_| rng.random_range(-2.0..2.0)));
                    r
                })
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let tau = rng.random_range(0.05..0.95);
            let s = rq_fit(&design(&rows), &y, tau, &QrOptions::default()).unwrap();
            let b = brute(&rows, &y, tau);
            assert!(s.objective <= b + 1e-8, "n={n} p={p} tau={tau}: {} vs {b}", s.objective);
        }
    }

    #[test]
    fn collinear_column_dropped() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| 1.0 + 0.5 * i as f64).collect();
        let s = rq_fit(&design(&rows), &y, 0.5, &QrOptions::default()).unwrap();
        assert_eq!(s.dropped, vec![2]);
        assert!((s.beta[1] - 0.5).abs() < 1e-8);
    }
}
