//! Two-way (person and firm) fixed effects on log earnings, identified within
//! connected components of the person-firm graph.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Disjoint-set forest over `n` nodes.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = p;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a as u32;
        self.size[a] += self.size[b];
        true
    }
}

/// Component label per person and per firm (`None` for nodes without edges).
/// Labels are numbered by first appearance in person order, then firm order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub person: Vec<Option<u32>>,
    pub firm: Vec<Option<u32>>,
    pub count: usize,
}

pub fn connected_components(n_persons: usize, n_firms: usize, edges: &[(usize, usize)]) -> Components {
    let mut uf = UnionFind::new(n_persons + n_firms);
    let mut has_edge = vec![false; n_persons + n_firms];
    for &(p, f) in edges {
        uf.union(p, n_persons + f);
        has_edge[p] = true;
        has_edge[n_persons + f] = true;
    }
    let mut label = vec![u32::MAX; n_persons + n_firms];
    let mut next = 0u32;
    let mut assign = |node: usize, uf: &mut UnionFind| -> Option<u32> {
        if !has_edge[node] {
            return None;
        }
        let r = uf.find(node);
        if label[r] == u32::MAX {
            label[r] = next;
            next += 1;
        }
        Some(label[r])
    };
    let person = (0..n_persons).map(|p| assign(p, &mut uf)).collect();
    let firm = (0..n_firms).map(|f| assign(n_persons + f, &mut uf)).collect();
    Components {
        person,
        firm,
        count: next as usize,
    }
}

/// One positive-earnings job-year observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeObs<T> {
    pub person: usize,
    pub firm: usize,
    pub year: i32,
    pub y: T,
    pub weight: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeSolver {
    /// Jacobi-preconditioned conjugate gradient on the firm system with person
    /// effects eliminated.
    Cg,
    /// Alternating exact person and firm updates.
    ZigZag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeOptions {
    pub solver: FeSolver,
    pub tol: f64,
    pub max_iter: usize,
    /// Subtract the (weighted) year mean of y before fitting.
    pub demean_by_year: bool,
}

impl Default for FeOptions {
    fn default() -> Self {
        Self {
            solver: FeSolver::Cg,
            tol: 1e-8,
            max_iter: 20_000,
            demean_by_year: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeSolution<T> {
    /// Person effects (zero for persons without observations).
    pub theta: Vec<T>,
    pub psi: Vec<T>,
    pub components: Components,
    pub rss: T,
    pub iterations: usize,
    pub grad_norm: T,
    /// Objective after every iteration (the first entry is the start).
    pub objective_trace: Vec<T>,
    /// Job-year count per firm, used by the normalization.
    pub firm_counts: Vec<usize>,
}

struct Layout<T> {
    // observations grouped by person and by firm (indices into the obs array)
    by_person: Vec<Vec<u32>>,
    by_firm: Vec<Vec<u32>>,
    wp: Vec<T>,
    wf: Vec<T>,
}

fn layout<T: Scalar>(obs: &[FeObs<T>], n_persons: usize, n_firms: usize) -> Layout<T> {
    let mut by_person = vec![Vec::new(); n_persons];
    let mut by_firm = vec![Vec::new(); n_firms];
    let mut wp = vec![T::zero(); n_persons];
    let mut wf = vec![T::zero(); n_firms];
    for (k, o) in obs.iter().enumerate() {
        by_person[o.person].push(k as u32);
        by_firm[o.firm].push(k as u32);
        wp[o.person] += o.weight;
        wf[o.firm] += o.weight;
    }
    Layout { by_person, by_firm, wp, wf }
}

/// Person effects that minimize the objective for given firm effects.
fn best_theta<T: Scalar>(obs: &[FeObs<T>], lay: &Layout<T>, psi: &[T]) -> Vec<T> {
    lay.by_person
        .par_iter()
        .enumerate()
        .map(|(i, ks)| {
            if ks.is_empty() {
                return T::zero();
            }
            let s: T = ks.iter().map(|&k| {
                let o = &obs[k as usize];
                o.weight * (o.y - psi[o.firm])
            }).sum();
            s / lay.wp[i]
        })
        .collect()
}

/// Per-firm weighted residual sums (half the negative gradient in psi).
fn firm_residual_sums<T: Scalar>(obs: &[FeObs<T>], lay: &Layout<T>, theta: &[T], psi: &[T]) -> Vec<T> {
    lay.by_firm
        .par_iter()
        .map(|ks| {
            ks.iter()
                .map(|&k| {
                    let o = &obs[k as usize];
                    o.weight * (o.y - theta[o.person] - psi[o.firm])
                })
                .sum()
        })
        .collect()
}

fn person_residual_sums<T: Scalar>(obs: &[FeObs<T>], lay: &Layout<T>, theta: &[T], psi: &[T]) -> Vec<T> {
    lay.by_person
        .par_iter()
        .map(|ks| {
            ks.iter()
                .map(|&k| {
                    let o = &obs[k as usize];
                    o.weight * (o.y - theta[o.person] - psi[o.firm])
                })
                .sum()
        })
        .collect()
}

fn rss<T: Scalar>(obs: &[FeObs<T>], theta: &[T], psi: &[T]) -> T {
    // chunked for parallelism, combined in fixed order
    obs.par_chunks(4096)
        .map(|c| {
            c.iter()
                .map(|o| {
                    let r = o.y - theta[o.person] - psi[o.firm];
                    o.weight * r * r
                })
                .sum::<T>()
        })
        .collect::<Vec<T>>()
        .into_iter()
        .sum()
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Applies the reduced firm operator A psi = W_f psi - C' W_p^{-1} C psi.
fn apply_reduced<T: Scalar>(obs: &[FeObs<T>], lay: &Layout<T>, v: &[T]) -> Vec<T> {
    let t: Vec<T> = lay
        .by_person
        .par_iter()
        .enumerate()
        .map(|(i, ks)| {
            if ks.is_empty() {
                return T::zero();
            }
            ks.iter().map(|&k| obs[k as usize].weight * v[obs[k as usize].firm]).sum::<T>() / lay.wp[i]
        })
        .collect();
    lay.by_firm
        .par_iter()
        .enumerate()
        .map(|(j, ks)| {
            let s: T = ks.iter().map(|&k| obs[k as usize].weight * t[obs[k as usize].person]).sum();
            lay.wf[j] * v[j] - s
        })
        .collect()
}

/// Fits y = theta_person + psi_firm + e by weighted least squares.
pub fn fit_two_way_fe<T: Scalar>(
    obs: &[FeObs<T>],
    n_persons: usize,
    n_firms: usize,
    opts: &FeOptions,
) -> Result<FeSolution<T>> {
    for o in obs {
        if !o.y.is_finite() {
            return Err(Error::Other("non-finite log earnings in fixed-effects input".into()));
        }
        if !(o.weight > T::zero()) {
            return Err(Error::Other("fixed-effects weights must be positive".into()));
        }
        if o.person >= n_persons || o.firm >= n_firms {
            return Err(Error::Other("fixed-effects node index out of range".into()));
        }
    }
    let mut data: Vec<FeObs<T>> = obs.to_vec();
    if opts.demean_by_year {
        let mut sums: std::collections::BTreeMap<i32, (T, T)> = Default::default();
        for o in &data {
            let e = sums.entry(o.year).or_insert((T::zero(), T::zero()));
            e.0 += o.weight * o.y;
            e.1 += o.weight;
        }
        for o in &mut data {
            let (s, w) = sums[&o.year];
            o.y -= s / w;
        }
    }
    let edges: Vec<(usize, usize)> = data.iter().map(|o| (o.person, o.firm)).collect();
    let components = connected_components(n_persons, n_firms, &edges);
    let lay = layout(&data, n_persons, n_firms);
    let tol = T::of(opts.tol);

    let mut psi = vec![T::zero(); n_firms];
    let mut theta = best_theta(&data, &lay, &psi);
    let mut trace = vec![rss(&data, &theta, &psi)];
    let mut iterations = 0;
    let mut grad = norm(&firm_residual_sums(&data, &lay, &theta, &psi));

    match opts.solver {
        FeSolver::Cg => {
            // residual of the reduced system equals the firm residual sums at optimal theta
            let mut r = firm_residual_sums(&data, &lay, &theta, &psi);
            let diag: Vec<T> = reduced_diagonal(&data, &lay);
            let minv: Vec<T> = diag.iter().map(|&d| if d > T::zero() { T::one() / d } else { T::zero() }).collect();
            let mut z: Vec<T> = r.iter().zip(&minv).map(|(&a, &b)| a * b).collect();
            let mut p = z.clone();
            let mut rz: T = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
            while grad > tol && iterations < opts.max_iter {
                iterations += 1;
                let ap = apply_reduced(&data, &lay, &p);
                let pap: T = p.iter().zip(&ap).map(|(&a, &b)| a * b).sum();
                if !(pap > T::zero()) {
                    break;
                }
                let alpha = rz / pap;
                for j in 0..n_firms {
                    psi[j] += alpha * p[j];
                    r[j] -= alpha * ap[j];
                }
                theta = best_theta(&data, &lay, &psi);
                // refresh the recursive residual against drift
                if iterations % 50 == 0 {
                    r = firm_residual_sums(&data, &lay, &theta, &psi);
                }
                grad = norm(&r);
                trace.push(rss(&data, &theta, &psi));
                z = r.iter().zip(&minv).map(|(&a, &b)| a * b).collect();
                let rz_new: T = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
                let beta = rz_new / rz;
                rz = rz_new;
                for j in 0..n_firms {
                    p[j] = z[j] + beta * p[j];
                }
                if grad <= tol {
                    // confirm with the true residual
                    grad = norm(&firm_residual_sums(&data, &lay, &theta, &psi));
                    r = firm_residual_sums(&data, &lay, &theta, &psi);
                }
            }
        }
        FeSolver::ZigZag => {
            while grad > tol && iterations < opts.max_iter {
                iterations += 1;
                let s = firm_residual_sums(&data, &lay, &theta, &psi);
                for j in 0..n_firms {
                    if lay.wf[j] > T::zero() {
                        psi[j] += s[j] / lay.wf[j];
                    }
                }
                theta = best_theta(&data, &lay, &psi);
                grad = norm(&firm_residual_sums(&data, &lay, &theta, &psi));
                trace.push(rss(&data, &theta, &psi));
            }
        }
    }
    let grad_full = {
        let gf = firm_residual_sums(&data, &lay, &theta, &psi);
        let gp = person_residual_sums(&data, &lay, &theta, &psi);
        (gf.iter().map(|&x| x * x).sum::<T>() + gp.iter().map(|&x| x * x).sum::<T>()).sqrt()
    };
    if grad_full > tol {
        return Err(Error::NoConvergence {
            iterations,
            residual: grad_full.to_f64_lossy(),
        });
    }

    let mut firm_counts = vec![0usize; n_firms];
    for o in &data {
        firm_counts[o.firm] += 1;
    }
    normalize(&mut theta, &mut psi, &components, &firm_counts);
    let rss_final = rss(&data, &theta, &psi);
    Ok(FeSolution {
        theta,
        psi,
        components,
        rss: rss_final,
        iterations,
        grad_norm: grad_full,
        objective_trace: trace,
        firm_counts,
    })
}

fn reduced_diagonal<T: Scalar>(obs: &[FeObs<T>], lay: &Layout<T>) -> Vec<T> {
    // A_jj = W_j - sum_i w_ij^2 / W_i, with w_ij the weight of person i at firm j
    lay.by_firm
        .par_iter()
        .enumerate()
        .map(|(j, ks)| {
            let mut per: Vec<(usize, T)> = ks.iter().map(|&k| (obs[k as usize].person, obs[k as usize].weight)).collect();
            per.sort_by_key(|a| a.0);
            let mut s = T::zero();
            let mut i = 0;
            while i < per.len() {
                let mut w = T::zero();
                let mut k = i;
                while k < per.len() && per[k].0 == per[i].0 {
                    w += per[k].1;
                    k += 1;
                }
                s += w * w / lay.wp[per[i].0];
                i = k;
            }
            let d = lay.wf[j] - s;
            if d > lay.wf[j] * T::of(1e-12) { d } else { T::zero() }
        })
        .collect()
}

/// Shifts each component so its job-year-weighted mean firm effect is zero.
fn normalize<T: Scalar>(theta: &mut [T], psi: &mut [T], comps: &Components, counts: &[usize]) {
    let mut num = vec![T::zero(); comps.count];
    let mut den = vec![T::zero(); comps.count];
    for (j, c) in comps.firm.iter().enumerate() {
        if let Some(c) = c {
            num[*c as usize] += T::of_usize(counts[j]) * psi[j];
            den[*c as usize] += T::of_usize(counts[j]);
        }
    }
    let shift: Vec<T> = num.iter().zip(&den).map(|(&a, &b)| if b > T::zero() { a / b } else { T::zero() }).collect();
    for (j, c) in comps.firm.iter().enumerate() {
        if let Some(c) = c {
            psi[j] -= shift[*c as usize];
        }
    }
    for (i, c) in comps.person.iter().enumerate() {
        if let Some(c) = c {
            theta[i] += shift[*c as usize];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FirmEffectWeighting {
    /// Weight each employer by the person's job-year count there.
    #[default]
    JobYears,
    /// Each distinct employer counts once.
    Employers,
    /// Weight by the person's earnings at the employer.
    Earnings,
}

/// Weighted mean firm effect over a person's jobs, given as (firm, earnings)
/// per job-year. `None` when the list is empty.
pub fn person_average_firm_effect<T: Scalar>(
    psi: &[T],
    jobs: &[(usize, T)],
    weighting: FirmEffectWeighting,
) -> Option<T> {
    if jobs.is_empty() {
        return None;
    }
    let (mut num, mut den) = (T::zero(), T::zero());
    match weighting {
        FirmEffectWeighting::JobYears => {
            for &(f, _) in jobs {
                num += psi[f];
                den += T::one();
            }
        }
        FirmEffectWeighting::Earnings => {
            for &(f, e) in jobs {
                num += e * psi[f];
                den += e;
            }
        }
        FirmEffectWeighting::Employers => {
            let mut firms: Vec<usize> = jobs.iter().map(|j| j.0).collect();
            firms.sort_unstable();
            firms.dedup();
            for f in firms {
                num += psi[f];
                den += T::one();
            }
        }
    }
    (den > T::zero()).then(|| num / den)
}
