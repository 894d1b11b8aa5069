//! Cross-sectional, volatility and cohort descriptive outputs.

use std::collections::BTreeMap;

use super::data::{read_person_effects, CohortView, YearlyView};
use super::sink::StageDir;
use super::{f, group_fields, Ctx, Notes, GROUP_HEADER};
use crate::codes::{Education, Group, Sex};
use crate::error::Result;
use crate::io::fmt_opt;
use crate::samples::{build_sample, MeasureLookup, SampleKind};
use crate::stats::{self, BinObs, BinStat, SummarySpec, WindowInput};

use super::config::RunConfig;

const SEXES: [Option<Sex>; 3] = [None, Some(Sex::Male), Some(Sex::Female)];

/// Ages of the fixed-age dispersion series.
const FIXED_AGES: [i32; 2] = [25, 35];

pub(super) fn sex_label(s: Option<Sex>) -> &'static str {
    s.map_or("all", Sex::code)
}

/// Percentile label: 0.1 -> "10", 0.999 -> "99.9".
pub(super) fn pct_label(p: f64) -> String {
    let v = (p * 1e6).round() / 1e4;
    format!("{v}")
}

/// Label of class `k` of lower bounds `bounds`: "25-34", or "45+" for the last.
pub(super) fn class_label(bounds: &[i32], k: usize) -> String {
    match bounds.get(k + 1) {
        Some(next) => format!("{}-{}", bounds[k], next - 1),
        None => format!("{}+", bounds[k]),
    }
}

fn pick(v: &[(Sex, f64)], s: Option<Sex>) -> Vec<f64> {
    v.iter().filter(|(x, _)| s.is_none_or(|s| *x == s)).map(|p| p.1).collect()
}

#[derive(Clone, Copy)]
struct CsObs {
    sex: Sex,
    age: i32,
    birth_year: i32,
    y: f64,
    eps: Option<f64>,
    delta: Option<f64>,
}

struct YearData {
    cs: Vec<CsObs>,
    lx: [Vec<(Sex, f64)>; 2],
}

const HORIZONS: [(i32, SampleKind, SampleKind); 2] = [(1, SampleKind::Lx1, SampleKind::H1), (5, SampleKind::Lx5, SampleKind::H5)];

pub(super) fn run(ctx: &mut Ctx, dir: &mut StageDir) -> Result<Notes> {
    let cfg = ctx.cfg;
    let mut notes = Notes::new();
    {
        let v = ctx.yearly()?;
        yearly_outputs(cfg, v, dir, &mut notes)?;
    }
    let effects = read_person_effects(&ctx.out.join("person_effects.csv"))?;
    if effects.is_empty() {
        notes.insert("person_effects".into(), "absent".into());
    }
    let c = ctx.cohort()?;
    cohort_outputs(cfg, c, &effects, dir)?;
    Ok(notes)
}

fn gather(v: &YearlyView) -> BTreeMap<i32, YearData> {
    let persons = v.panel.persons();
    let m = &v.measures;
    let mut out = BTreeMap::new();
    for year in v.frame.first_year()..=v.frame.last_year() {
        let cs = build_sample(&v.frame, m, SampleKind::Cs, year)
            .map(|s| {
                s.members
                    .iter()
                    .filter_map(|&p| {
                        let y = m.y(p, year).filter(|y| *y > 0.0)?;
                        Some(CsObs {
                            sex: persons[p].sex,
                            age: persons[p].age(year),
                            birth_year: persons[p].birth_year,
                            y,
                            eps: m.eps(p, year),
                            delta: m.delta(p, year),
                        })
                    })
                    .collect()
            })
            .unwrap_or_default();
        let lx = HORIZONS.map(|(z, kind, _)| {
            build_sample(&v.frame, m, kind, year)
                .map(|s| {
                    s.members
                        .iter()
                        .filter_map(|&p| m.g(z, p, year).map(|g| (persons[p].sex, g)))
                        .collect()
                })
                .unwrap_or_default()
        });
        out.insert(year, YearData { cs, lx });
    }
    out
}

fn dispersion_cells(values: &[f64]) -> Option<[String; 5]> {
    let s = stats::summarize(values, &SummarySpec::default()).ok()?;
    let p50 = s.p50;
    Some([
        s.n.to_string(),
        f(s.p90_p10),
        f(s.p90 - p50),
        f(p50 - s.p10),
        fmt_opt(s.sigma_256),
    ])
}

const DISPERSION_HEADER: [&str; 5] = ["n", "p90_p10", "p90_p50", "p50_p10", "sigma_256"];

fn with_header<'a>(lead: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    lead.iter().chain(tail).copied().collect()
}

fn dispersion_table(
    dir: &mut StageDir,
    name: &str,
    series: &BTreeMap<(Option<Sex>, i32), Vec<f64>>,
) -> Result<()> {
    let mut t = dir.table(name, &with_header(&["sex", "year"], &DISPERSION_HEADER))?;
    for s in SEXES {
        for ((sx, year), vals) in series {
            if *sx != s {
                continue;
            }
            if let Some(cells) = dispersion_cells(vals) {
                t.row([sex_label(s).to_string(), year.to_string()].into_iter().chain(cells))?;
            }
        }
    }
    dir.close(t)
}

fn shape_table(dir: &mut StageDir, name: &str, data: &BTreeMap<i32, YearData>, h: usize) -> Result<()> {
    let mut t = dir.table(name, &["sex", "year", "n", "kelley", "cs_kurtosis"])?;
    for s in SEXES {
        for (year, d) in data {
            let vals = pick(&d.lx[h], s);
            let Ok(sm) = stats::summarize(&vals, &SummarySpec::default()) else {
                continue;
            };
            t.row([
                sex_label(s).to_string(),
                year.to_string(),
                sm.n.to_string(),
                fmt_opt(sm.kelley),
                fmt_opt(sm.cs_kurtosis),
            ])?;
        }
    }
    dir.close(t)
}

/// Percentile levels and changes from the base year, per sex.
fn delta_table(
    dir: &mut StageDir,
    name: &str,
    cfg: &RunConfig,
    base: i32,
    by_sex: &[(Option<Sex>, BTreeMap<i32, Vec<f64>>)],
    moments: bool,
) -> Result<()> {
    let mut header = vec!["sex", "year", "percentile", "value", "delta"];
    if moments {
        header.extend(["sd", "sigma_256"]);
    }
    let mut t = dir.table(name, &header)?;
    for (s, series) in by_sex {
        if !series.get(&base).is_some_and(|v| !v.is_empty()) {
            continue;
        }
        let rows = stats::percentile_delta_series(series, base, &cfg.analysis.percentiles)?;
        let sds: BTreeMap<i32, Option<f64>> = series
            .iter()
            .map(|(y, v)| (*y, stats::variance(v).map(f64::sqrt)))
            .collect();
        for r in rows {
            let mut row = vec![
                sex_label(*s).to_string(),
                r.year.to_string(),
                pct_label(r.percentile),
                f(r.value),
                f(r.delta),
            ];
            if moments {
                let sd = sds[&r.year];
                row.push(fmt_opt(sd));
                row.push(fmt_opt(sd.map(|v| v * stats::NORMAL_P90_P10)));
            }
            t.row(row)?;
        }
    }
    dir.close(t)
}

fn series_by_sex(
    data: &BTreeMap<i32, YearData>,
    value: impl Fn(&CsObs) -> Option<f64>,
) -> Vec<(Option<Sex>, BTreeMap<i32, Vec<f64>>)> {
    SEXES
        .iter()
        .map(|&s| {
            let m = data
                .iter()
                .map(|(y, d)| {
                    let v = d
                        .cs
                        .iter()
                        .filter(|o| s.is_none_or(|s| o.sex == s))
                        .filter_map(&value)
                        .collect();
                    (*y, v)
                })
                .collect();
            (s, m)
        })
        .collect()
}

fn yearly_outputs(cfg: &RunConfig, v: &YearlyView, dir: &mut StageDir, notes: &mut Notes) -> Result<()> {
    let a = &cfg.analysis;
    let data = gather(v);
    let base = a.base_year.unwrap_or(v.frame.first_year());

    // percentile changes and distributions of levels and residuals
    let log_y = series_by_sex(&data, |o| Some(o.y.ln()));
    delta_table(dir, "fig1.csv", cfg, base, &log_y, false)?;
    delta_table(dir, "figA5.csv", cfg, base, &log_y, true)?;
    delta_table(dir, "figA6.csv", cfg, base, &series_by_sex(&data, |o| o.eps), true)?;
    delta_table(dir, "figA7.csv", cfg, base, &series_by_sex(&data, |o| o.delta), true)?;

    // dispersion of log earnings, overall and at age 25
    let mut all = BTreeMap::new();
    let mut young = BTreeMap::new();
    for (year, d) in &data {
        for s in SEXES {
            let sel = d.cs.iter().filter(|o| s.is_none_or(|s| o.sex == s));
            all.insert((s, *year), sel.clone().map(|o| o.y.ln()).collect::<Vec<_>>());
            young.insert(
                (s, *year),
                sel.filter(|o| o.age == FIXED_AGES[0]).map(|o| o.y.ln()).collect::<Vec<_>>(),
            );
        }
    }
    dispersion_table(dir, "fig2.csv", &all)?;
    dispersion_table(dir, "fig3.csv", &young)?;

    // life-cycle dispersion by entry cohort and at fixed ages
    let mut t = dir.table("fig4.csv", &["series", "sex", "year", "n", "p90_p10"])?;
    let mut series: Vec<(String, Box<dyn Fn(&CsObs, i32) -> bool>)> = Vec::new();
    for &c in &a.lifecycle_cohorts {
        let birth = c - FIXED_AGES[0];
        series.push((format!("cohort_{c}"), Box::new(move |o, y| y >= c && o.birth_year == birth)));
    }
    for age in FIXED_AGES {
        series.push((format!("age_{age}"), Box::new(move |o, _| o.age == age)));
    }
    for (label, keep) in &series {
        for s in SEXES {
            for (year, d) in &data {
                let vals: Vec<f64> = d
                    .cs
                    .iter()
                    .filter(|o| s.is_none_or(|s| o.sex == s) && keep(o, *year))
                    .map(|o| o.y.ln())
                    .collect();
                if let Ok(sm) = stats::summarize(&vals, &SummarySpec::default()) {
                    t.row([label.clone(), sex_label(s).into(), year.to_string(), sm.n.to_string(), f(sm.p90_p10)])?;
                }
            }
        }
    }
    dir.close(t)?;

    // changes: dispersion and shape by year
    for (h, (disp, shape)) in [("fig5.csv", "fig6.csv"), ("figA12.csv", "figA13.csv")].into_iter().enumerate() {
        let mut m = BTreeMap::new();
        for (year, d) in &data {
            for s in SEXES {
                m.insert((s, *year), pick(&d.lx[h], s));
            }
        }
        dispersion_table(dir, disp, &m)?;
        shape_table(dir, shape, &data, h)?;
    }

    // changes by permanent earnings bin
    for (h, (profile, moments)) in [("fig7.csv", "figA15.csv"), ("figA14.csv", "figA16.csv")].into_iter().enumerate() {
        let (z, _, kind) = HORIZONS[h];
        let obs = h_observations(cfg, v, z, kind);
        let mut t = dir.table(profile, &["sex", "stat", "age_class", "bin", "n", "p_mean", "value"])?;
        let mut tm = dir.table(
            moments,
            &["sex", "bin", "n", "p_mean", "mean", "sd", "skewness", "excess_kurtosis"],
        )?;
        for s in SEXES {
            let sel: Vec<BinObs<f64>> = obs
                .iter()
                .filter(|(sx, _)| s.is_none_or(|s| *sx == s))
                .map(|o| o.1)
                .collect();
            if sel.len() < a.n_bins {
                notes.insert(format!("{profile}:{}", sex_label(s)), format!("{} observations", sel.len()));
                continue;
            }
            for stat in BinStat::ALL {
                for r in stats::binned_profile(&sel, a.n_bins, a.age_classes.len(), stat)? {
                    t.row([
                        sex_label(s).to_string(),
                        stat.name().to_string(),
                        r.class.map_or("all".to_string(), |k| class_label(&a.age_classes, k)),
                        r.bin.to_string(),
                        r.n.to_string(),
                        f(r.x_mean),
                        fmt_opt(r.value),
                    ])?;
                }
            }
            for (b, members) in equal_count_bins(&sel, a.n_bins).iter().enumerate() {
                let ys: Vec<f64> = members.iter().map(|&i| sel[i].y).collect();
                let p_mean = members.iter().map(|&i| sel[i].x).sum::<f64>() / members.len() as f64;
                let mo = stats::standard_moments(&ys);
                tm.row([
                    sex_label(s).to_string(),
                    (b + 1).to_string(),
                    ys.len().to_string(),
                    f(p_mean),
                    fmt_opt(mo.map(|m| m.0)),
                    fmt_opt(mo.map(|m| m.1)),
                    fmt_opt(mo.map(|m| m.2)),
                    fmt_opt(mo.map(|m| m.3)),
                ])?;
            }
        }
        dir.close(t)?;
        dir.close(tm)?;
    }

    // top tail, shares and concentration of levels
    for (name, frac) in [("figA8.csv", 0.01), ("figA9.csv", 0.05)] {
        let mut t = dir.table(
            name,
            &["year", "n", "top_fraction", "slope", "intercept", "n_points", "slope_inner", "unstable"],
        )?;
        for (year, d) in &data {
            let ys: Vec<f64> = d.cs.iter().map(|o| o.y).collect();
            if let Ok(p) = stats::pareto_tail_fit(&ys, frac) {
                t.row([
                    year.to_string(),
                    ys.len().to_string(),
                    f(frac),
                    f(p.slope),
                    f(p.intercept),
                    p.n_points.to_string(),
                    fmt_opt(p.slope_inner),
                    u8::from(p.unstable).to_string(),
                ])?;
            }
        }
        dir.close(t)?;
    }
    let mut shares: BTreeMap<i32, Vec<(String, f64)>> = BTreeMap::new();
    let mut tg = dir.table("figA11.csv", &["sex", "year", "n", "gini"])?;
    for s in SEXES {
        for (year, d) in &data {
            let mut ys: Vec<f64> = d.cs.iter().filter(|o| s.is_none_or(|s| o.sex == s)).map(|o| o.y).collect();
            if ys.is_empty() {
                continue;
            }
            ys.sort_by(f64::total_cmp);
            tg.row([
                sex_label(s).to_string(),
                year.to_string(),
                ys.len().to_string(),
                fmt_opt(stats::gini_sorted(&ys)),
            ])?;
            if s.is_none() {
                let mut row: Vec<(String, f64)> = a
                    .top_shares
                    .iter()
                    .filter_map(|&fr| stats::top_share_sorted(&ys, fr).map(|v| (format!("top_{}", pct_label(fr)), v)))
                    .collect();
                if let Some(b) = stats::bottom_share_sorted(&ys, 0.5) {
                    row.push(("bottom_50".into(), b));
                }
                shares.insert(*year, row);
            }
        }
    }
    dir.close(tg)?;
    let mut t = dir.table("figA10.csv", &["year", "share", "value", "delta"])?;
    let base_shares = shares.get(&base).cloned().unwrap_or_default();
    for (year, row) in &shares {
        for (label, val) in row {
            let b = base_shares.iter().find(|x| &x.0 == label).map(|x| val - x.1);
            t.row([year.to_string(), label.clone(), f(*val), fmt_opt(b)])?;
        }
    }
    dir.close(t)?;

    // densities of changes in one year
    let (lo, hi) = a.density_range;
    for (h, (dens, logd)) in [("figA19.csv", "figA21.csv"), ("figA20.csv", "figA22.csv")].into_iter().enumerate() {
        let year = density_year(&data, a.density_year, h);
        if year != Some(a.density_year) {
            notes.insert(format!("{dens}:year"), year.map_or("none".into(), |y| y.to_string()));
        }
        let mut td = dir.table(dens, &["sex", "year", "bin_lo", "bin_hi", "count", "density", "normal_density"])?;
        let mut tl = dir.table(logd, &["sex", "year", "bin_lo", "bin_hi", "count", "log_density", "normal_log_density"])?;
        if let Some(year) = year {
            for s in SEXES {
                let vals = pick(&data[&year].lx[h], s);
                let (Some(mu), Some(var)) = (stats::mean(&vals), stats::variance(&vals)) else {
                    continue;
                };
                let sd = var.sqrt();
                for (b0, b1, n, d) in stats::histogram(&vals, lo, hi, a.density_bins) {
                    let mid = 0.5 * (b0 + b1);
                    let z = (mid - mu) / sd;
                    let log_phi = -0.5 * z * z - (sd * (2.0 * std::f64::consts::PI).sqrt()).ln();
                    let lead = [sex_label(s).to_string(), year.to_string(), f(b0), f(b1), n.to_string()];
                    td.row(lead.iter().cloned().chain([f(d), f(log_phi.exp())]))?;
                    let ld = (d > 0.0).then(|| d.ln());
                    tl.row(lead.into_iter().chain([fmt_opt(ld), f(log_phi)]))?;
                }
            }
        }
        dir.close(td)?;
        dir.close(tl)?;
    }
    Ok(())
}

/// The configured density year if it has observations, else the latest year
/// that does.
fn density_year(data: &BTreeMap<i32, YearData>, want: i32, h: usize) -> Option<i32> {
    if data.get(&want).is_some_and(|d| !d.lx[h].is_empty()) {
        return Some(want);
    }
    data.iter().rev().find(|(_, d)| !d.lx[h].is_empty()).map(|(y, _)| *y)
}

/// Pooled H-sample observations: x = P(t-1), y = g^z(t), class = age class.
fn h_observations(cfg: &RunConfig, v: &YearlyView, z: i32, kind: SampleKind) -> Vec<(Sex, BinObs<f64>)> {
    let a = &cfg.analysis;
    let persons = v.panel.persons();
    let mut out = Vec::new();
    for year in a.h_years.0..=a.h_years.1 {
        let Ok(s) = build_sample(&v.frame, &v.measures, kind, year) else {
            continue;
        };
        for &p in &s.members {
            let (Some(x), Some(y)) = (v.measures.perm_residual(p, year - 1), v.measures.g(z, p, year)) else {
                continue;
            };
            let class = YearlyView::age_class(&a.age_classes, persons[p].age(year)).unwrap_or(usize::MAX);
            out.push((
                persons[p].sex,
                BinObs {
                    x,
                    y,
                    class,
                    tie: ((p as u64) << 16) | (year - a.h_years.0) as u64,
                },
            ));
        }
    }
    out
}

/// Member indices of `n_bins` equal-count bins of `x` (ties by `tie`).
fn equal_count_bins(obs: &[BinObs<f64>], n_bins: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.sort_by(|&a, &b| obs[a].x.total_cmp(&obs[b].x).then(obs[a].tie.cmp(&obs[b].tie)));
    let n = obs.len();
    (0..n_bins)
        .map(|b| order[b * n / n_bins..(b + 1) * n / n_bins].to_vec())
        .collect()
}

fn cohort_outputs(
    cfg: &RunConfig,
    c: &CohortView,
    effects: &BTreeMap<String, (f64, f64)>,
    dir: &mut StageDir,
) -> Result<()> {
    let a = &cfg.analysis;
    let r = &a.rules;
    let groups = &a.cohort_age_groups;

    // activity and mean log earnings by age group at the window start
    let mut t10 = dir.table("fig10.csv", &["sex", "age_group", "year", "n", "share_active"])?;
    let mut t11 = dir.table("fig11.csv", &["sex", "age_group", "year", "n_active", "mean_log_earnings"])?;
    for s in SEXES {
        for k in 0..groups.len() {
            let members: Vec<usize> = c
                .cohort
                .members
                .iter()
                .copied()
                .filter(|&p| {
                    let rec = c.panel.person(p);
                    s.is_none_or(|s| rec.sex == s)
                        && YearlyView::age_class(groups, rec.age(r.cohort_start)) == Some(k)
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            for year in r.cohort_start..=r.cohort_end() {
                let logs: Vec<f64> = members
                    .iter()
                    .filter_map(|&p| c.grid.earnings(p, year).filter(|e| *e > 0.0).map(f64::ln))
                    .collect();
                let label = class_label(groups, k);
                t10.row([
                    sex_label(s).to_string(),
                    label.clone(),
                    year.to_string(),
                    members.len().to_string(),
                    f(logs.len() as f64 / members.len() as f64),
                ])?;
                t11.row([
                    sex_label(s).to_string(),
                    label,
                    year.to_string(),
                    logs.len().to_string(),
                    fmt_opt(stats::mean(&logs)),
                ])?;
            }
        }
    }
    dir.close(t10)?;
    dir.close(t11)?;

    // percentile windows of long-term average earnings by group
    let mut by_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, lt) in c.longterm.iter().enumerate() {
        by_group.entry(c.panel.person(lt.person).group().id()).or_default().push(i);
    }
    let t2_cols = [
        "share_active_each_period",
        "growth_active_each_period",
        "earnings_volatility_arc",
        "avg_annual_hours",
        "years_partially_active",
        "years_inactive",
        "hc_person_effect",
        "hc_avg_firm_effect",
    ];
    let t2_header = with_header(
        &GROUP_HEADER,
        &with_header(&["n", "percentile", "avg_annual_earnings"], &with_header(&t2_cols, &["small_group"])),
    );
    let t3_header = with_header(
        &GROUP_HEADER,
        &[
            "n",
            "percentile",
            "division_first",
            "division_second",
            "division_share",
            "industry_first",
            "industry_second",
            "industry_third",
            "industry_fourth",
            "industry_share",
            "age_start",
            "educ_lt_hs",
            "educ_ba_plus",
            "small_group",
        ],
    );
    let mut t2 = dir.table("table2.csv", &t2_header)?;
    let mut t3 = dir.table("table3.csv", &t3_header)?;
    let nan = f64::NAN;
    for g in Group::table_order() {
        let idx = by_group.get(&g.id()).cloned().unwrap_or_default();
        let lead = group_fields(g);
        if idx.is_empty() {
            for &p in &a.table_percentiles {
                let mut row: Vec<String> = lead.to_vec();
                row.extend(["0".into(), p.to_string()]);
                row.resize(t2_header.len(), String::new());
                t2.row(&row)?;
                row.truncate(lead.len() + 2);
                row.resize(t3_header.len(), String::new());
                t3.row(&row)?;
            }
            continue;
        }
        let recs: Vec<_> = idx.iter().map(|&i| &c.longterm[i]).collect();
        let persons: Vec<_> = recs.iter().map(|lt| c.panel.person(lt.person)).collect();
        let eff: Vec<(f64, f64)> = persons
            .iter()
            .map(|p| effects.get(&p.person_id).copied().unwrap_or((nan, nan)))
            .collect();
        let num = |name: &str, col: Vec<f64>| (name.to_string(), col);
        let jobs: Vec<_> = recs.iter().map(|lt| c.main_job(lt.person, cfg)).collect();
        let educ = |e: Education| -> Vec<f64> {
            persons
                .iter()
                .map(|p| p.education.map_or(nan, |x| f64::from(u8::from(x == e))))
                .collect()
        };
        let input = WindowInput {
            w: recs.iter().map(|lt| lt.w).collect(),
            tie: recs.iter().map(|lt| lt.person as u64).collect(),
            numeric: vec![
                num(t2_cols[0], recs.iter().map(|lt| f64::from(u8::from(lt.long_term_active))).collect()),
                num(t2_cols[1], recs.iter().map(|lt| lt.growth.unwrap_or(nan)).collect()),
                num(t2_cols[2], recs.iter().map(|lt| lt.arc_volatility.unwrap_or(nan)).collect()),
                num(t2_cols[3], recs.iter().map(|lt| lt.avg_hours.unwrap_or(nan)).collect()),
                num(t2_cols[4], recs.iter().map(|lt| f64::from(lt.years_partial)).collect()),
                num(t2_cols[5], recs.iter().map(|lt| f64::from(lt.years_inactive)).collect()),
                num(t2_cols[6], eff.iter().map(|e| e.0).collect()),
                num(t2_cols[7], eff.iter().map(|e| e.1).collect()),
                num("age_start", persons.iter().map(|p| f64::from(p.age(r.cohort_start))).collect()),
                num("educ_lt_hs", educ(Education::LTHS)),
                num("educ_ba_plus", educ(Education::BAplus)),
            ],
            categorical: vec![
                (
                    "division".into(),
                    jobs.iter().map(|j| j.map_or(String::new(), |j| j.0.number().to_string())).collect(),
                    2,
                ),
                (
                    "industry".into(),
                    jobs.iter().map(|j| j.map_or(String::new(), |j| j.1.letter().to_string())).collect(),
                    4,
                ),
            ],
        };
        for w in stats::percentile_window_profile(&input, &a.table_percentiles)? {
            let mean = |name: &str| fmt_opt(w.means.iter().find(|m| m.0 == name).and_then(|m| m.1));
            let mut row: Vec<String> = lead.to_vec();
            row.extend([idx.len().to_string(), w.percentile.to_string(), f(w.w_quantile)]);
            row.extend(t2_cols.iter().map(|c| mean(c)));
            row.push(u8::from(w.small_group).to_string());
            t2.row(&row)?;

            let mut row: Vec<String> = lead.to_vec();
            row.extend([idx.len().to_string(), w.percentile.to_string()]);
            for (k, (_, top)) in w.top.iter().enumerate() {
                let want = if k == 0 { 2 } else { 4 };
                for i in 0..want {
                    row.push(top.get(i).map_or(String::new(), |x| x.0.clone()));
                }
                row.push(f(top.iter().map(|x| x.1).sum()));
            }
            row.extend(["age_start", "educ_lt_hs", "educ_ba_plus"].map(mean));
            row.push(u8::from(w.small_group).to_string());
            t3.row(&row)?;
        }
    }
    dir.close(t2)?;
    dir.close(t3)?;
    Ok(())
}
