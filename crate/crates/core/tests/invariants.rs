//! Property tests against small independent oracles.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use gid_core::akm::connected_components;
use gid_core::linalg::Csr;
use gid_core::measures::{arc_change, cell_demean};
use gid_core::microagg::{microaggregate, BinPlan, CellKey};
use gid_core::mobility::{rank_percentiles, rank_within_cells};
use gid_core::regress::decomp::{decompose_gap, Ordering, Simulations, DECOMP_THETAS};
use gid_core::regress::quantreg::objective;
use gid_core::regress::{ols, rq_fit, QrOptions};
use gid_core::stats::{gini, quantile, summarize, SummarySpec};
use gid_core::Sex;

fn values(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantiles_are_monotone_in_p(v in values(200), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantile(&v, lo).unwrap() <= quantile(&v, hi).unwrap());
    }

    #[test]
    fn quantile_is_an_order_statistic(v in values(200), p in 0.001..1.0f64) {
        // nearest rank: the smallest value with at least p n values at or below it
        let q = quantile(&v, p).unwrap();
        let at_or_below = v.iter().filter(|&&x| x <= q).count() as f64;
        let below = v.iter().filter(|&&x| x < q).count() as f64;
        prop_assert!(at_or_below >= p * v.len() as f64 - 1e-9);
        prop_assert!(below < p * v.len() as f64 + 1e-9);
    }

    #[test]
    fn gini_bounds_and_scale(v in prop::collection::vec(0.01..1e6f64, 2..100), s in 0.1..100.0f64) {
        let g = gini(&v).unwrap();
        prop_assert!((-1e-12..=1.0).contains(&g));
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        prop_assert!((gini(&scaled).unwrap() - g).abs() < 1e-9);
    }

    #[test]
    fn dispersion_is_shift_invariant(v in values(300), c in -10.0..10.0f64) {
        let spec = SummarySpec::default();
        let a = summarize(&v, &spec).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let b = summarize(&shifted, &spec).unwrap();
        prop_assert!((a.p90_p10 - b.p90_p10).abs() < 1e-9);
        prop_assert!(a.p90_p10 >= 0.0);
    }

    #[test]
    fn ranks_match_counting_oracle(v in prop::collection::vec(-5i32..5, 1..80)) {
        let x: Vec<f64> = v.iter().map(|&a| a as f64).collect();
        let r = rank_percentiles(&x);
        let n = x.len() as f64;
        for (i, xi) in x.iter().enumerate() {
            let below = x.iter().filter(|y| *y < xi).count() as f64;
            let ties = x.iter().filter(|y| *y == xi).count() as f64;
            let want = 100.0 * (below + (ties + 1.0) / 2.0) / n;
            prop_assert!((r[i] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn ranks_ignore_monotone_transforms(v in values(100), cells in prop::collection::vec(0u8..4, 100)) {
        let cells = &cells[..v.len()];
        let t: Vec<f64> = v.iter().map(|x| 3.0 * x - 1.0).collect();
        prop_assert_eq!(rank_within_cells(cells, &v), rank_within_cells(cells, &t));
    }

    #[test]
    fn arc_change_is_bounded(a in 0.0..1e6f64, b in 0.0..1e6f64) {
        if let Some(c) = arc_change(a, b) {
            prop_assert!((-2.0..=2.0).contains(&c));
            prop_assert!((c + arc_change(b, a).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn demeaned_cells_sum_to_zero(v in values(120), keys in prop::collection::vec(0u8..6, 120)) {
        let keys = &keys[..v.len()];
        let d = cell_demean(keys, &v);
        let mut sums: BTreeMap<u8, f64> = BTreeMap::new();
        for (k, r) in keys.iter().zip(&d.residual) {
            *sums.entry(*k).or_default() += r;
        }
        for s in sums.values() {
            prop_assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn microaggregation_preserves_cells(
        sizes in prop::collection::vec(1usize..60, 1..8),
        min_bin in 1usize..15,
        seed in any::<u64>(),
    ) {
        let mut cells = Vec::new();
        let mut vals = Vec::new();
        let mut s = seed;
        for (c, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                cells.push(CellKey { year: 2000, sex: Sex::Female, birth_year: 1960 + c as i32 });
                vals.push(Some((s >> 11) as f64 / (1u64 << 53) as f64 * 1000.0));
            }
        }
        let plan = BinPlan { min_bin_size: min_bin };
        let b = microaggregate(&cells, &vals, &plan).unwrap();
        for a in &b.audit {
            prop_assert!(a.small_cell || a.size >= min_bin);
        }
        let mut sums: BTreeMap<i32, (f64, f64)> = BTreeMap::new();
        for ((c, x), y) in cells.iter().zip(&vals).zip(&b.values) {
            let e = sums.entry(c.birth_year).or_default();
            e.0 += x.unwrap();
            e.1 += y.unwrap();
        }
        for (a, m) in sums.values() {
            prop_assert!((a - m).abs() <= 1e-12 * a.abs().max(1.0));
        }
        prop_assert_eq!(microaggregate(&cells, &b.values, &plan).unwrap().values, b.values);
    }

    #[test]
    fn decomposition_adds_up_exactly(
        a in prop::collection::vec(5.0..12.0f64, 5..40),
        b in prop::collection::vec(5.0..12.0f64, 5..40),
        c in prop::collection::vec(5.0..12.0f64, 5..40),
        d in prop::collection::vec(5.0..12.0f64, 5..40),
    ) {
        let sorted = |mut v: Vec<f64>| { v.sort_by(f64::total_cmp); v };
        let sims = Simulations {
            actual_g: sorted(a.clone()),
            actual_0: sorted(c.clone()),
            own: sorted(a),
            g_on_ref: sorted(b),
            reference: sorted(c),
            ref_on_g: sorted(d),
        };
        let one = decompose_gap(1, &sims, &DECOMP_THETAS, Ordering::One).unwrap();
        let two = decompose_gap(1, &sims, &DECOMP_THETAS, Ordering::Two).unwrap();
        for (x, y) in one.iter().zip(&two) {
            prop_assert_eq!(x.covariates + x.coefficients, x.predicted);
            prop_assert_eq!(y.covariates + y.coefficients, y.predicted);
            prop_assert_eq!(x.predicted, y.predicted);
        }
    }

    #[test]
    fn qr_beats_nearby_coefficients(
        pts in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 8..40),
        tau in 0.05..0.95f64,
        db in (-0.2..0.2f64, -0.2..0.2f64),
    ) {
        let mut x = Csr::new(2);
        for (xi, _) in &pts {
            x.push_row([(0, 1.0), (1, *xi)]);
        }
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let sol = rq_fit(&x, &y, tau, &QrOptions::default()).unwrap();
        let at = objective(&x, &y, &sol.beta, tau);
        let moved = [sol.beta[0] + db.0, sol.beta[1] + db.1];
        prop_assert!(at <= objective(&x, &y, &moved, tau) + 1e-9);
    }

    #[test]
    fn components_match_bfs(edges in prop::collection::vec((0usize..30, 0usize..20), 0..60)) {
        let c = connected_components(30, 20, &edges);
        // oracle: breadth-first search on the bipartite graph
        let mut adj = vec![Vec::new(); 50];
        for &(p, f) in &edges {
            adj[p].push(30 + f);
            adj[30 + f].push(p);
        }
        let mut seen = vec![usize::MAX; 50];
        let mut count = 0;
        for s in 0..50 {
            if seen[s] != usize::MAX || adj[s].is_empty() {
                continue;
            }
            seen[s] = count;
            let mut queue = vec![s];
            while let Some(u) = queue.pop() {
                for &v in &adj[u] {
                    if seen[v] == usize::MAX {
                        seen[v] = count;
                        queue.push(v);
                    }
                }
            }
            count += 1;
        }
        prop_assert_eq!(c.count, count);
        let label = |i: usize| if i < 30 { c.person[i] } else { c.firm[i - 30] };
        for a in 0..50 {
            prop_assert_eq!(label(a).is_some(), seen[a] != usize::MAX);
            for b in 0..50 {
                if seen[a] != usize::MAX && seen[b] != usize::MAX {
                    prop_assert_eq!(label(a) == label(b), seen[a] == seen[b]);
                }
            }
        }
    }
}

#[test]
fn dummy_regression_gives_group_means() {
    let groups = [0usize, 0, 1, 1, 1, 2, 2, 0, 2, 1];
    let y = [1.0, 2.0, 5.0, 6.0, 7.0, -1.0, 0.5, 3.0, 2.0, 4.0];
    let mut x = Csr::new(3);
    for &g in &groups {
        let mut row = vec![(0, 1.0)];
        if g > 0 {
            row.push((g, 1.0));
        }
        x.push_row(row);
    }
    let fit = ols(&x, &y).unwrap();
    let mean = |g: usize| {
        let v: Vec<f64> = groups.iter().zip(&y).filter(|(a, _)| **a == g).map(|(_, b)| *b).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!((fit.beta[0] - mean(0)).abs() < 1e-12);
    for g in 1..3 {
        assert!((fit.beta[g] - (mean(g) - mean(0))).abs() < 1e-12);
    }
}

#[test]
fn generic_over_f32() {
    let v: Vec<f32> = (1..=100).map(|i| i as f32).collect();
    let s = summarize(&v, &SummarySpec::default()).unwrap();
    assert_eq!(s.p90_p10, 80.0f32);
    let r = rank_percentiles(&v);
    assert_eq!(r[99], 100.0f32);
    let distinct: BTreeSet<u32> = r.iter().map(|x| x.to_bits()).collect();
    assert_eq!(distinct.len(), 100);
}
