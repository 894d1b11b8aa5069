//! Rank-rank mobility: percentile ranks within cells, 100-point profiles and slopes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{total_cmp, Scalar};

/// Ranks in (0, 100]: the i-th smallest of n gets 100 i / n; ties share the
/// mean rank of their positions. Output is in input order.
pub fn rank_percentiles<T: Scalar>(values: &[T]) -> Vec<T> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| total_cmp(&values[a], &values[b]));
    let mut ranks = vec![T::zero(); n];
    let denom = T::of_usize(2 * n.max(1));
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i+1..=j share the mean position (i + 1 + j) / 2
        let r = T::of(100.0) * T::of_usize(i + 1 + j) / denom;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Ranks values separately within each cell key.
pub fn rank_within_cells<T: Scalar, K: Ord + Copy>(cells: &[K], values: &[T]) -> Vec<T> {
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, &c) in cells.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    let mut out = vec![T::zero(); values.len()];
    for idx in groups.values() {
        let vals: Vec<T> = idx.iter().map(|&i| values[i]).collect();
        for (&i, r) in idx.iter().zip(rank_percentiles(&vals)) {
            out[i] = r;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint<T> {
    /// Integer rank bin `ceil(rank_t)` in 1..=100.
    pub bin: u32,
    pub n: usize,
    pub mean_rank_t: T,
    pub mean_rank_tz: T,
}

/// Mean rank at t+z per integer rank bin at t. Empty bins are omitted.
pub fn mobility_profile<T: Scalar>(pairs: &[(T, T)]) -> Vec<ProfilePoint<T>> {
    let mut acc: Vec<(usize, T, T)> = vec![(0, T::zero(), T::zero()); 100];
    for &(rt, rz) in pairs {
        let b = rank_bin(rt);
        let a = &mut acc[b - 1];
        a.0 += 1;
        a.1 += rt;
        a.2 += rz;
    }
    acc.into_iter()
        .enumerate()
        .filter(|(_, a)| a.0 > 0)
        .map(|(b, (n, st, sz))| ProfilePoint {
            bin: b as u32 + 1,
            n,
            mean_rank_t: st / T::of_usize(n),
            mean_rank_tz: sz / T::of_usize(n),
        })
        .collect()
}

/// `ceil(rank)` clamped to 1..=100.
#[inline]
pub fn rank_bin<T: Scalar>(rank: T) -> usize {
    let r = rank.to_f64_lossy();
    // ranks like 100*i/n may land an ulp above an integer
    let c = (r - 1e-9).ceil();
    (c.max(1.0) as usize).min(100)
}

/// OLS slope of rank at t+z on rank at t.
pub fn rank_rank_slope<T: Scalar>(pairs: &[(T, T)]) -> Result<T> {
    if pairs.len() < 2 {
        return Err(Error::TooFew {
            what: "rank pairs",
            needed: 2,
            got: pairs.len(),
        });
    }
    crate::stats::simple_ols(pairs)
        .map(|(b, _)| b)
        .ok_or(Error::Degenerate("base ranks have no variance"))
}

/// One person observed at base year t and horizon t+z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityObs<T> {
    /// Ranking cell, e.g. sex x age at t.
    pub cell: u32,
    pub base: T,
    pub later: T,
}

/// Ranks base and later values within cells and returns (rank_t, rank_{t+z}).
pub fn ranked_pairs<T: Scalar>(obs: &[MobilityObs<T>]) -> Vec<(T, T)> {
    let cells: Vec<u32> = obs.iter().map(|o| o.cell).collect();
    let a: Vec<T> = obs.iter().map(|o| o.base).collect();
    let b: Vec<T> = obs.iter().map(|o| o.later).collect();
    let ra = rank_within_cells(&cells, &a);
    let rb = rank_within_cells(&cells, &b);
    ra.into_iter().zip(rb).collect()
}
