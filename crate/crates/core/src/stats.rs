//! Distributional statistics: nearest-rank quantiles, dispersion, quantile
//! skewness and kurtosis, Gini, top shares, Pareto tail slopes, binned
//! profiles and percentile-window profiles.

use std::collections::{BTreeMap, HashMap};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{total_cmp, Scalar};

/// Normal-distribution reference value subtracted from the Crow-Siddiqui ratio.
pub const CS_NORMAL: f64 = 2.91;
/// P90 - P10 of a standard normal, in standard deviations (rounded).
pub const NORMAL_P90_P10: f64 = 2.56;

/// 1-based nearest-rank position `ceil(p * n)`, clamped to `1..=n`.
///
/// The product is nudged down by a relative 1e-12 so that `p * n` landing a
/// rounding error above an integer does not skip a rank.
#[inline]
pub fn rank_position(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    let k = (x - x.abs() * 1e-12).ceil();
    (k.max(1.0) as usize).min(n.max(1))
}

/// Nearest-rank-lower quantile of already sorted values.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], p: f64) -> Result<T> {
    if sorted.is_empty() {
        return Err(Error::Empty("quantile input"));
    }
    Ok(sorted[rank_position(p, sorted.len()) - 1])
}

/// Sorts a copy of the values ascending (NaN last).
pub fn sorted_copy<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    v.sort_unstable_by(total_cmp);
    v
}

pub fn quantile<T: Scalar>(values: &[T], p: f64) -> Result<T> {
    quantile_sorted(&sorted_copy(values), p)
}

/// Quantiles at several probabilities from one sort.
pub fn quantiles<T: Scalar>(values: &[T], ps: &[f64]) -> Result<Vec<T>> {
    let s = sorted_copy(values);
    ps.iter().map(|&p| quantile_sorted(&s, p)).collect()
}

pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    (!values.is_empty()).then(|| values.iter().copied().sum::<T>() / T::of_usize(values.len()))
}

/// Sample variance with the n - 1 denominator.
pub fn variance<T: Scalar>(values: &[T]) -> Option<T> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: T = values.iter().map(|&x| (x - m) * (x - m)).sum();
    Some(ss / T::of_usize(values.len() - 1))
}

/// ((P90 - P50) - (P50 - P10)) / (P90 - P10); `None` when P90 == P10.
pub fn kelley<T: Scalar>(p10: T, p50: T, p90: T) -> Option<T> {
    let d = p90 - p10;
    (d > T::zero()).then(|| ((p90 - p50) - (p50 - p10)) / d)
}

/// (P97.5 - P2.5) / (P75 - P25) - 2.91; `None` when P75 == P25.
pub fn cs_excess_kurtosis<T: Scalar>(p2_5: T, p25: T, p75: T, p97_5: T) -> Option<T> {
    let d = p75 - p25;
    (d > T::zero()).then(|| (p97_5 - p2_5) / d - T::of(CS_NORMAL))
}

/// Gini coefficient via the sorted-index formula; `None` unless the mean is positive.
pub fn gini_sorted<T: Scalar>(sorted: &[T]) -> Option<T> {
    let n = sorted.len();
    let total: T = sorted.iter().copied().sum();
    if n == 0 || total <= T::zero() {
        return None;
    }
    let nn = T::of_usize(n);
    let acc: T = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (T::of_usize(2 * (i + 1)) - nn - T::one()) * x)
        .sum();
    // n^2 * mean == n * total
    Some(acc / (nn * total))
}

pub fn gini<T: Scalar>(values: &[T]) -> Option<T> {
    gini_sorted(&sorted_copy(values))
}

/// Share of the total held by the top fraction `f`: the values at sorted
/// positions above `ceil((1 - f) n)`.
pub fn top_share_sorted<T: Scalar>(sorted: &[T], f: f64) -> Option<T> {
    let total: T = sorted.iter().copied().sum();
    if sorted.is_empty() || total == T::zero() {
        return None;
    }
    let k = split_point(1.0 - f, sorted.len());
    Some(sorted[k..].iter().copied().sum::<T>() / total)
}

/// Share of the total held by the bottom fraction `g` (positions `1..=ceil(g n)`).
pub fn bottom_share_sorted<T: Scalar>(sorted: &[T], g: f64) -> Option<T> {
    let total: T = sorted.iter().copied().sum();
    if sorted.is_empty() || total == T::zero() {
        return None;
    }
    let k = split_point(g, sorted.len());
    Some(sorted[..k].iter().copied().sum::<T>() / total)
}

fn split_point(g: f64, n: usize) -> usize {
    if g <= 0.0 {
        0
    } else if g >= 1.0 {
        n
    } else {
        let x = g * n as f64;
        ((x - x.abs() * 1e-12).ceil().max(0.0) as usize).min(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySpec {
    pub percentiles: Vec<f64>,
    pub top_fractions: Vec<f64>,
}

impl Default for SummarySpec {
    fn default() -> Self {
        Self {
            percentiles: vec![0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99],
            top_fractions: vec![0.1, 0.01, 0.001],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary<T> {
    pub n: usize,
    pub mean: T,
    pub sd: Option<T>,
    /// (p, q(p)) in the order requested.
    pub percentiles: Vec<(f64, T)>,
    pub p10: T,
    pub p50: T,
    pub p90: T,
    pub p90_p10: T,
    /// 2.56 standard deviations, comparable to P90 - P10 under normality.
    pub sigma_256: Option<T>,
    pub kelley: Option<T>,
    pub cs_kurtosis: Option<T>,
    pub gini: Option<T>,
    /// (f, share of the top fraction f).
    pub top_shares: Vec<(f64, Option<T>)>,
}

pub fn summarize<T: Scalar>(values: &[T], spec: &SummarySpec) -> Result<DistributionSummary<T>> {
    if values.is_empty() {
        return Err(Error::Empty("summarize"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Other("summarize: non-finite value".into()));
    }
    let s = sorted_copy(values);
    let q = |p: f64| s[rank_position(p, s.len()) - 1];
    let (p10, p50, p90) = (q(0.10), q(0.50), q(0.90));
    let sd = variance(&s).map(Float::sqrt);
    Ok(DistributionSummary {
        n: s.len(),
        mean: mean(&s).expect("non-empty"),
        sd,
        percentiles: spec.percentiles.iter().map(|&p| (p, q(p))).collect(),
        p10,
        p50,
        p90,
        p90_p10: p90 - p10,
        sigma_256: sd.map(|v| v * T::of(NORMAL_P90_P10)),
        kelley: kelley(p10, p50, p90),
        cs_kurtosis: cs_excess_kurtosis(q(0.025), q(0.25), q(0.75), q(0.975)),
        gini: if s[0] >= T::zero() { gini_sorted(&s) } else { None },
        top_shares: spec
            .top_fractions
            .iter()
            .map(|&f| (f, top_share_sorted(&s, f)))
            .collect(),
    })
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow<T> {
    pub year: i32,
    pub percentile: f64,
    pub value: T,
    pub delta: T,
}

/// Change of each percentile relative to the base year, `q_t(p) - q_base(p)`.
/// Values are used as given (callers pass log earnings).
pub fn percentile_delta_series<T: Scalar>(
    by_year: &BTreeMap<i32, Vec<T>>,
    base_year: i32,
    percentiles: &[f64],
) -> Result<Vec<DeltaRow<T>>> {
    let base = by_year.get(&base_year).ok_or(Error::MissingYear {
        series: "percentile base",
        year: base_year,
    })?;
    let qb = quantiles(base, percentiles)?;
    let mut out = Vec::new();
    for (&year, vals) in by_year {
        if vals.is_empty() {
            continue;
        }
        let qt = quantiles(vals, percentiles)?;
        for ((&p, &v), &b) in percentiles.iter().zip(&qt).zip(&qb) {
            out.push(DeltaRow {
                year,
                percentile: p,
                value: v,
                delta: v - b,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinStat {
    P90P10,
    Kelley,
    CsKurtosis,
}

impl BinStat {
    pub const ALL: [BinStat; 3] = [BinStat::P90P10, BinStat::Kelley, BinStat::CsKurtosis];

    pub fn name(self) -> &'static str {
        match self {
            BinStat::P90P10 => "p90_p10",
            BinStat::Kelley => "kelley",
            BinStat::CsKurtosis => "cs_kurtosis",
        }
    }

    pub fn eval<T: Scalar>(self, sorted: &[T]) -> Option<T> {
        if sorted.is_empty() {
            return None;
        }
        let q = |p: f64| sorted[rank_position(p, sorted.len()) - 1];
        match self {
            BinStat::P90P10 => Some(q(0.9) - q(0.1)),
            BinStat::Kelley => kelley(q(0.1), q(0.5), q(0.9)),
            BinStat::CsKurtosis => cs_excess_kurtosis(q(0.025), q(0.25), q(0.75), q(0.975)),
        }
    }
}

/// One observation for the binned profile: `x` orders the bins, `y` is summarized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinObs<T> {
    pub x: T,
    pub y: T,
    pub class: usize,
    /// Stable tie-break key (e.g. person index then year).
    pub tie: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow<T> {
    /// 1-based bin number.
    pub bin: usize,
    /// `None` for the pooled row.
    pub class: Option<usize>,
    pub n: usize,
    pub x_mean: T,
    pub value: Option<T>,
}

/// Assigns observations to `n_bins` equal-count bins of `x` (ties broken by
/// `tie`) and evaluates `stat` on `y` within each bin, pooled and per class.
pub fn binned_profile<T: Scalar>(
    obs: &[BinObs<T>],
    n_bins: usize,
    n_classes: usize,
    stat: BinStat,
) -> Result<Vec<BinRow<T>>> {
    if obs.len() < n_bins || n_bins == 0 {
        return Err(Error::TooFew {
            what: "binned profile observations",
            needed: n_bins.max(1),
            got: obs.len(),
        });
    }
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.sort_by(|&a, &b| total_cmp(&obs[a].x, &obs[b].x).then(obs[a].tie.cmp(&obs[b].tie)));
    let n = obs.len();
    let mut rows = Vec::with_capacity(n_bins * (n_classes + 1));
    for b in 0..n_bins {
        let lo = b * n / n_bins;
        let hi = (b + 1) * n / n_bins;
        let members = &order[lo..hi];
        let x_mean = members.iter().map(|&i| obs[i].x).sum::<T>() / T::of_usize(members.len());
        let mut ys: Vec<T> = members.iter().map(|&i| obs[i].y).collect();
        ys.sort_unstable_by(total_cmp);
        rows.push(BinRow {
            bin: b + 1,
            class: None,
            n: ys.len(),
            x_mean,
            value: stat.eval(&ys),
        });
        for c in 0..n_classes {
            let mut yc: Vec<T> = members
                .iter()
                .filter(|&&i| obs[i].class == c)
                .map(|&i| obs[i].y)
                .collect();
            yc.sort_unstable_by(total_cmp);
            rows.push(BinRow {
                bin: b + 1,
                class: Some(c),
                n: yc.len(),
                x_mean,
                value: stat.eval(&yc),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFit<T> {
    pub slope: T,
    pub intercept: T,
    pub n_points: usize,
    /// Slope refitted on a tenth of the tail; `None` if too few points.
    pub slope_inner: Option<T>,
    /// True when the two slopes differ by more than 15% (non-Pareto tail).
    pub unstable: bool,
}

/// Fraction of the very top excluded before fitting.
pub const PARETO_EXCLUDE: f64 = 1e-5;
const PARETO_MIN_POINTS: usize = 10;
const PARETO_STABILITY: f64 = 0.15;

/// OLS slope of log(1 - F) on log(x) over the top `top_fraction` of positive values.
pub fn pareto_tail_fit<T: Scalar>(values: &[T], top_fraction: f64) -> Result<ParetoFit<T>> {
    if !(top_fraction > 0.0 && top_fraction <= 0.5) {
        return Err(Error::config("top_fraction", "must lie in (0, 0.5]"));
    }
    let mut desc: Vec<T> = values.iter().copied().filter(|v| v.is_finite()).collect();
    desc.sort_unstable_by(|a, b| total_cmp(b, a));
    let (slope, intercept, n_points) = ccdf_slope(&desc, top_fraction)?;
    let slope_inner = ccdf_slope(&desc, top_fraction / 10.0).ok().map(|r| r.0);
    let unstable = slope_inner.is_some_and(|s| {
        ((s - slope) / slope).abs().to_f64_lossy() > PARETO_STABILITY
    });
    Ok(ParetoFit {
        slope,
        intercept,
        n_points,
        slope_inner,
        unstable,
    })
}

fn ccdf_slope<T: Scalar>(desc: &[T], top_fraction: f64) -> Result<(T, T, usize)> {
    let n = desc.len();
    let skip = (PARETO_EXCLUDE * n as f64).floor() as usize;
    let take = split_point(top_fraction, n);
    let pts: Vec<(T, T)> = (skip..take)
        .filter(|&i| desc[i] > T::zero())
        .map(|i| {
            let ccdf = T::of_usize(i + 1) / T::of_usize(n);
            (desc[i].ln(), ccdf.ln())
        })
        .collect();
    if pts.len() < PARETO_MIN_POINTS {
        return Err(Error::TooFew {
            what: "Pareto tail points",
            needed: PARETO_MIN_POINTS,
            got: pts.len(),
        });
    }
    let (slope, intercept) = simple_ols(&pts).ok_or(Error::Degenerate("Pareto tail"))?;
    Ok((slope, intercept, pts.len()))
}

/// Slope and intercept of y on x; `None` if x has no variance.
pub fn simple_ols<T: Scalar>(pts: &[(T, T)]) -> Option<(T, T)> {
    let n = T::of_usize(pts.len());
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for &(x, y) in pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx <= T::zero() {
        return None;
    }
    let b = sxy / sxx;
    Some((b, my - b * mx))
}

/// Fixed-width histogram on [lo, hi). Returns (lower edge, upper edge,
/// count, density) per bin; density is relative to the values inside the
/// range, and values outside it are dropped.
pub fn histogram(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Vec<(f64, f64, usize, f64)> {
    if n_bins == 0 || !(hi > lo) {
        return Vec::new();
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    let mut total = 0usize;
    for &v in values {
        if v >= lo && v < hi {
            let b = (((v - lo) / width) as usize).min(n_bins - 1);
            counts[b] += 1;
            total += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            let e0 = lo + b as f64 * width;
            let dens = if total > 0 { c as f64 / (total as f64 * width) } else { 0.0 };
            (e0, e0 + width, c, dens)
        })
        .collect()
}

/// [`histogram`] of ln(v) over positive values; edges are on the log scale.
pub fn log_histogram(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Vec<(f64, f64, usize, f64)> {
    let logs: Vec<f64> = values.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect();
    histogram(&logs, lo, hi, n_bins)
}

/// Mean, standard deviation (n - 1), skewness and excess kurtosis (both from
/// central moments with divisor n). `None` below two values or with zero
/// variance.
pub fn standard_moments(values: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let m = values.iter().sum::<f64>() / n as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let nf = n as f64;
    let sd = (m2 / (nf - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    if !(m2 > 0.0) {
        return None;
    }
    Some((m, sd, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0))
}

/// Input for [`percentile_window_profile`]: one entry per person.
#[derive(Debug, Clone, Default)]
pub struct WindowInput {
    /// Ranking variable (long-term average earnings).
    pub w: Vec<f64>,
    /// Stable tie-break key per person.
    pub tie: Vec<u64>,
    /// Named numeric columns; NaN marks a missing cell and is skipped.
    pub numeric: Vec<(String, Vec<f64>)>,
    /// Named categorical columns with the number of top categories to report.
    pub categorical: Vec<(String, Vec<String>, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub percentile: u32,
    pub w_quantile: f64,
    pub n_window: usize,
    pub means: Vec<(String, Option<f64>)>,
    /// Per categorical column: top categories with their window shares.
    pub top: Vec<(String, Vec<(String, f64)>)>,
    /// Set when the group has fewer than 100 persons.
    pub small_group: bool,
}

/// For each percentile p, reports q(p) of `w` and column means over persons
/// ranked strictly above the (p-1)th and up to the (p+1)th percentile position.
pub fn percentile_window_profile(input: &WindowInput, percentiles: &[u32]) -> Result<Vec<WindowRow>> {
    let n = input.w.len();
    if n == 0 {
        return Err(Error::Empty("percentile window group"));
    }
    if input.tie.len() != n
        || input.numeric.iter().any(|c| c.1.len() != n)
        || input.categorical.iter().any(|c| c.1.len() != n)
    {
        return Err(Error::Other("window profile columns differ in length".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| total_cmp(&input.w[a], &input.w[b]).then(input.tie[a].cmp(&input.tie[b])));
    let pos = |pct: u32| -> usize {
        match pct {
            0 => 0,
            p if p >= 100 => n,
            p => rank_position(p as f64 / 100.0, n),
        }
    };
    let mut out = Vec::with_capacity(percentiles.len());
    for &p in percentiles {
        let q = input.w[order[rank_position(p as f64 / 100.0, n) - 1]];
        let lo = pos(p.saturating_sub(1));
        let hi = pos(p + 1);
        let win = &order[lo.min(hi)..hi];
        let means = input
            .numeric
            .iter()
            .map(|(name, col)| {
                let vals: Vec<f64> = win.iter().map(|&i| col[i]).filter(|v| !v.is_nan()).collect();
                (name.clone(), mean(&vals))
            })
            .collect();
        let top = input
            .categorical
            .iter()
            .map(|(name, col, k)| (name.clone(), top_categories(win.iter().map(|&i| col[i].as_str()), *k)))
            .collect();
        out.push(WindowRow {
            percentile: p,
            w_quantile: q,
            n_window: win.len(),
            means,
            top,
            small_group: n < 100,
        });
    }
    Ok(out)
}

/// Most frequent non-empty labels with shares of the window (ties by label).
pub fn top_categories<'a>(labels: impl Iterator<Item = &'a str>, k: usize) -> Vec<(String, f64)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut total = 0usize;
    for l in labels {
        total += 1;
        if !l.is_empty() {
            *counts.entry(l).or_default() += 1;
        }
    }
    let mut v: Vec<(&str, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    v.into_iter()
        .take(k)
        .map(|(l, c)| (l.to_string(), c as f64 / total as f64))
        .collect()
}
