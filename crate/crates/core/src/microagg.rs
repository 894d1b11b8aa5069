//! Micro-aggregation of earnings variables within (year, sex, birth-year) cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codes::Sex;
use crate::error::{Error, Result};
use crate::scalar::{total_cmp, Scalar};

pub const DEFAULT_MIN_BIN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub year: i32,
    pub sex: Sex,
    pub birth_year: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinPlan {
    pub min_bin_size: usize,
}

impl Default for BinPlan {
    fn default() -> Self {
        Self {
            min_bin_size: DEFAULT_MIN_BIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinAudit<T> {
    pub cell: CellKey,
    /// 1-based bin number within the cell, ascending in value.
    pub bin: usize,
    pub size: usize,
    pub mean: T,
    /// Set when the whole cell was smaller than the minimum bin size.
    pub small_cell: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binned<T> {
    /// Replacement values in input order; missing inputs stay missing.
    pub values: Vec<Option<T>>,
    /// Bin number per record (0 when missing).
    pub bin_of: Vec<usize>,
    pub audit: Vec<BinAudit<T>>,
}

/// Replaces each value by the mean of its bin. Within each cell, records are
/// sorted by value (ties by input position) and cut into consecutive bins of
/// `min_bin_size`; the remainder joins the last, highest-value bin.
pub fn microaggregate<T: Scalar>(
    cells: &[CellKey],
    values: &[Option<T>],
    plan: &BinPlan,
) -> Result<Binned<T>> {
    if cells.len() != values.len() {
        return Err(Error::Other("cell and value columns differ in length".into()));
    }
    if plan.min_bin_size == 0 {
        return Err(Error::config("min_bin_size", "must be at least 1"));
    }
    let mut by_cell: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
    for (i, (c, v)) in cells.iter().zip(values).enumerate() {
        if v.is_some() {
            by_cell.entry(*c).or_default().push(i);
        }
    }
    let k = plan.min_bin_size;
    let mut out = vec![None; values.len()];
    let mut bin_of = vec![0usize; values.len()];
    let mut audit = Vec::new();
    for (cell, mut idx) in by_cell {
        idx.sort_by(|&a, &b| total_cmp(&values[a].unwrap(), &values[b].unwrap()).then(a.cmp(&b)));
        let n = idx.len();
        let n_bins = (n / k).max(1);
        for b in 0..n_bins {
            let lo = b * k;
            let hi = if b + 1 == n_bins { n } else { lo + k };
            let members = &idx[lo..hi];
            let m = bin_mean(members.iter().map(|&i| values[i].unwrap()));
            for &i in members {
                out[i] = Some(m);
                bin_of[i] = b + 1;
            }
            audit.push(BinAudit {
                cell,
                bin: b + 1,
                size: members.len(),
                mean: m,
                small_cell: n < k,
            });
        }
    }
    Ok(Binned {
        values: out,
        bin_of,
        audit,
    })
}

/// Arithmetic mean that returns the common value exactly when all inputs are
/// equal, so re-binning binned output is a fixed point.
fn bin_mean<T: Scalar>(xs: impl Iterator<Item = T> + Clone) -> T {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    let mut sum = T::zero();
    let mut n = 0usize;
    for x in xs {
        lo = lo.min(x);
        hi = hi.max(x);
        sum += x;
        n += 1;
    }
    if lo == hi {
        lo
    } else {
        sum / T::of_usize(n)
    }
}
