//! Quantile gap decompositions and counterfactual ratios.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Csr;
use crate::regress::mm::simulate_mm;
use crate::regress::quantreg::QuantileFit;
use crate::stats;

/// Quantile indices reported in the decomposition tables.
pub const DECOMP_THETAS: [u32; 5] = [10, 25, 50, 75, 90];

/// Predicted gaps below this magnitude leave shares blank.
pub const SHARE_MIN_GAP: f64 = 1e-6;

const GRID: f64 = 1_099_511_627_776.0; // 2^40

/// Rounds to a multiple of 2^-40 (for |v| < 2^10), so that sums and
/// differences of a handful of such values are exact in f64.
#[inline]
pub fn snap(v: f64) -> f64 {
    if v.abs() < 1024.0 {
        (v * GRID).round() / GRID
    } else {
        v
    }
}

/// Snapped empirical quantile (nearest rank) at theta / 100.
pub fn snapped_quantile(sorted: &[f64], theta: u32) -> Result<f64> {
    Ok(snap(stats::quantile_sorted(sorted, theta as f64 / 100.0)?))
}

/// Rows, response, quantile fit and person keys of one group.
#[derive(Debug, Clone, Copy)]
pub struct GroupData<'a> {
    pub group: usize,
    pub x: &'a Csr<f64>,
    pub log_w: &'a [f64],
    pub person_keys: &'a [u64],
    pub fit: &'a QuantileFit<f64>,
}

/// Sorted simulated samples for a group g against the reference 0:
/// `own` = f*(b(g); x(g)), `g_on_ref` = f*(b(g); x(0)),
/// `reference` = f*(b(0); x(0)), `ref_on_g` = f*(b(0); x(g)).
#[derive(Debug, Clone)]
pub struct Simulations {
    pub actual_g: Vec<f64>,
    pub actual_0: Vec<f64>,
    pub own: Vec<f64>,
    pub g_on_ref: Vec<f64>,
    pub reference: Vec<f64>,
    pub ref_on_g: Vec<f64>,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

pub fn simulate_pair(g: &GroupData<'_>, r: &GroupData<'_>, seed: u64) -> Result<Simulations> {
    Ok(Simulations {
        actual_g: sorted(g.log_w.to_vec()),
        actual_0: sorted(r.log_w.to_vec()),
        own: sorted(simulate_mm(g.fit, g.x, g.person_keys, g.group, seed)?),
        g_on_ref: sorted(simulate_mm(g.fit, r.x, r.person_keys, r.group, seed)?),
        reference: sorted(simulate_mm(r.fit, r.x, r.person_keys, r.group, seed)?),
        ref_on_g: sorted(simulate_mm(r.fit, g.x, g.person_keys, g.group, seed)?),
    })
}

/// Which counterfactual sits in the middle of the telescoping sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ordering {
    /// Via f*(b(g); x(0)): covariates first.
    One,
    /// Via f*(b(0); x(g)).
    Two,
}

impl Ordering {
    pub fn number(self) -> u8 {
        match self {
            Ordering::One => 1,
            Ordering::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompRow {
    pub group: usize,
    pub theta: u32,
    pub ordering: u8,
    pub actual: f64,
    pub predicted: f64,
    pub covariates: f64,
    pub coefficients: f64,
    pub residual: f64,
    pub share_covariates: Option<f64>,
    pub share_coefficients: Option<f64>,
}

/// Decomposes the gap at each theta for one ordering.
pub fn decompose_gap(group: usize, sims: &Simulations, thetas: &[u32], ordering: Ordering) -> Result<Vec<DecompRow>> {
    thetas
        .iter()
        .map(|&th| {
            let q = |v: &[f64]| snapped_quantile(v, th);
            let actual = q(&sims.actual_g)? - q(&sims.actual_0)?;
            let own = q(&sims.own)?;
            let reference = q(&sims.reference)?;
            let predicted = own - reference;
            let (covariates, coefficients) = match ordering {
                Ordering::One => {
                    let mid = q(&sims.g_on_ref)?;
                    (own - mid, mid - reference)
                }
                Ordering::Two => {
                    let mid = q(&sims.ref_on_g)?;
                    (mid - reference, own - mid)
                }
            };
            let share = |c: f64| (predicted.abs() >= SHARE_MIN_GAP).then(|| c / predicted);
            Ok(DecompRow {
                group,
                theta: th,
                ordering: ordering.number(),
                actual,
                predicted,
                covariates,
                coefficients,
                residual: actual - predicted,
                share_covariates: share(covariates),
                share_coefficients: share(coefficients),
            })
        })
        .collect()
}

/// Counterfactual differentials as shares of the reference group:
/// `ref_characteristics` = exp(Q f*(b(g); x(0)) - Q f*(b(0); x(0))),
/// `ref_coefficients` = exp(Q f*(b(0); x(g)) - Q f*(b(0); x(0))).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub group: usize,
    pub theta: u32,
    pub ref_characteristics: f64,
    pub ref_coefficients: f64,
}

pub fn counterfactual_ratios(group: usize, sims: &Simulations, thetas: &[u32]) -> Result<Vec<RatioRow>> {
    thetas
        .iter()
        .map(|&th| {
            let r = snapped_quantile(&sims.reference, th)?;
            Ok(RatioRow {
                group,
                theta: th,
                ref_characteristics: (snapped_quantile(&sims.g_on_ref, th)? - r).exp(),
                ref_coefficients: (snapped_quantile(&sims.ref_on_g, th)? - r).exp(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sims(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: Vec<f64>) -> Simulations {
        Simulations {
            actual_g: a.clone(),
            actual_0: c.clone(),
            own: a,
            g_on_ref: b,
            reference: c,
            ref_on_g: d,
        }
    }

    #[test]
    fn identity_is_exact() {
        let s = sims(
            vec![9.123456789, 9.3, 9.7],
            vec![9.5, 9.8, 10.1],
            vec![10.01, 10.2, 10.33333],
            vec![8.9, 9.1, 9.95],
        );
        for o in [Ordering::One, Ordering::Two] {
            for r in decompose_gap(3, &s, &DECOMP_THETAS, o).unwrap() {
                assert_eq!(r.covariates + r.coefficients - r.predicted, 0.0);
                assert_eq!(r.residual, 0.0);
            }
        }
    }

    #[test]
    fn reference_rows_are_zero_with_blank_shares() {
        let v = vec![9.0, 9.5, 10.0];
        let s = sims(v.clone(), v.clone(), v.clone(), v);
        for r in decompose_gap(0, &s, &DECOMP_THETAS, Ordering::One).unwrap() {
            assert_eq!((r.predicted, r.covariates, r.coefficients), (0.0, 0.0, 0.0));
            assert!(r.share_covariates.is_none() && r.share_coefficients.is_none());
        }
        for r in counterfactual_ratios(0, &s, &DECOMP_THETAS).unwrap() {
            assert_eq!((r.ref_characteristics, r.ref_coefficients), (1.0, 1.0));
        }
    }

    #[test]
    fn ratio_of_log_gap() {
        assert!(((-0.27f64).exp() - 0.76).abs() < 0.005);
    }
}
