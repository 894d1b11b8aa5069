//! Cohort regressions: the OLS ladder, per-group quantile fits, simulated
//! decompositions and counterfactual ratios.

use std::collections::BTreeMap;

use super::data::{read_person_effects, CohortView};
use super::sink::StageDir;
use super::{f, group_fields, Ctx, Notes, GROUP_HEADER};
use crate::codes::{Group, RaceEth};
use crate::error::{Error, Result};
use crate::io::fmt_opt;
use crate::regress::decomp::{snapped_quantile, simulate_pair, GroupData, DECOMP_THETAS};
use crate::regress::quantreg::theta_grid;
use crate::regress::{
    build_design, counterfactual_ratios, decompose_gap, fit_quantile_grid, model_blocks, ols, person_key, Block,
    CohortRow, Ordering, QuantileFit, QUANTILE_BLOCKS,
};

use super::config::RunConfig;

/// Groups below this size are estimated but flagged.
pub const SMALL_GROUP: usize = 500;

const MODELS: usize = 5;

/// Decomposition figure of a group: one per nativity and sex, with the
/// residual race category in its own figure.
pub fn decomposition_figure(g: Group) -> u32 {
    if g.race_eth == RaceEth::AllOther {
        return 17;
    }
    match (g.foreign_born, g.sex) {
        (true, crate::codes::Sex::Female) => 13,
        (true, crate::codes::Sex::Male) => 14,
        (false, crate::codes::Sex::Female) => 15,
        (false, crate::codes::Sex::Male) => 16,
    }
}

/// Cohort design rows plus the number of cohort members dropped for missing
/// hours, education, main job or non-positive average earnings.
pub(super) fn cohort_rows(
    c: &CohortView,
    cfg: &RunConfig,
    effects: &BTreeMap<String, (f64, f64)>,
) -> (Vec<CohortRow>, Vec<String>, usize) {
    let start = cfg.analysis.rules.cohort_start;
    let mut rows = Vec::with_capacity(c.longterm.len());
    let mut ids = Vec::with_capacity(c.longterm.len());
    let mut dropped = 0;
    for lt in &c.longterm {
        let rec = c.panel.person(lt.person);
        let (Some(hours), Some(education), Some((division, sector))) =
            (lt.avg_hours, rec.education, c.main_job(lt.person, cfg))
        else {
            dropped += 1;
            continue;
        };
        if !(lt.w > 0.0) {
            dropped += 1;
            continue;
        }
        let (theta, psi_bar) = effects.get(&rec.person_id).copied().unwrap_or((0.0, 0.0));
        let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
        rows.push(CohortRow {
            person: lt.person,
            group: rec.group().id(),
            log_w: lt.w.ln(),
            avg_hours: hours,
            years_inactive: f64::from(lt.years_inactive),
            years_partial: f64::from(lt.years_partial),
            division,
            sector,
            age: rec.age(start),
            education,
            theta: finite(theta),
            psi_bar: finite(psi_bar),
        });
        ids.push(rec.person_id.clone());
    }
    (rows, ids, dropped)
}

struct Fitted {
    x: crate::linalg::Csr<f64>,
    y: Vec<f64>,
    keys: Vec<u64>,
    fit: Option<QuantileFit<f64>>,
}

fn data(g: usize, fd: &Fitted) -> Option<GroupData<'_>> {
    Some(GroupData {
        group: g,
        x: &fd.x,
        log_w: &fd.y,
        person_keys: &fd.keys,
        fit: fd.fit.as_ref()?,
    })
}

fn block_label(b: Block) -> Option<&'static str> {
    match b {
        Block::Hours => Some("hours"),
        Block::Geography => Some("division_industry"),
        Block::AgeEducation => Some("age_education"),
        Block::HumanCapital => Some("person_firm_effects"),
        _ => None,
    }
}

pub(super) fn decompose(ctx: &mut Ctx, dir: &mut StageDir) -> Result<Notes> {
    let cfg = ctx.cfg;
    let effects = read_person_effects(&ctx.out.join("person_effects.csv"))?;
    let c = ctx.cohort()?;
    let (rows, ids, dropped) = cohort_rows(c, cfg, &effects);
    if rows.is_empty() {
        return Err(Error::Empty("cohort rows with hours, education and a main job"));
    }
    let mut notes = Notes::new();
    notes.insert("rows".into(), rows.len().to_string());
    notes.insert("dropped_rows".into(), dropped.to_string());
    if effects.is_empty() {
        notes.insert("person_effects".into(), "absent; set to zero".into());
    }

    ols_ladder(&rows, dir)?;

    // per-group quantile fits
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        members.entry(r.group).or_default().push(i);
    }
    let thetas = theta_grid();
    let mut fitted: BTreeMap<usize, Fitted> = BTreeMap::new();
    let mut diag = dir.table(
        "qr_diagnostics.csv",
        &[
            "group_id",
            "theta",
            "n",
            "iterations",
            "converged",
            "polished",
            "objective",
            "pred_at_mean",
            "pred_at_mean_rearranged",
        ],
    )?;
    for (&g, idx) in &members {
        let sub: Vec<CohortRow> = idx.iter().map(|&i| rows[i].clone()).collect();
        let d = build_design(&sub, &QUANTILE_BLOCKS);
        let keys: Vec<u64> = idx.iter().map(|&i| person_key(&ids[i])).collect();
        let fit = match fit_quantile_grid(&d.x, &d.y, &thetas, &cfg.decompose.qr) {
            Ok(fit) => Some(fit),
            Err(Error::TooFew { .. }) => {
                notes.insert(format!("group_{g}"), format!("{} rows, not estimated", sub.len()));
                None
            }
            Err(e) => return Err(e),
        };
        if let Some(fit) = &fit {
            let n = d.x.nrows() as f64;
            let xbar: Vec<f64> = d.x.tmul(&vec![1.0; d.x.nrows()]).into_iter().map(|s| s / n).collect();
            let pred: Vec<f64> = fit.beta.iter().map(|b| xbar.iter().zip(b).map(|(a, b)| a * b).sum()).collect();
            let mut sorted = pred.clone();
            sorted.sort_by(f64::total_cmp);
            for (k, dg) in fit.diagnostics.iter().enumerate() {
                diag.row([
                    g.to_string(),
                    dg.theta.to_string(),
                    fit.n.to_string(),
                    dg.iterations.to_string(),
                    u8::from(dg.converged).to_string(),
                    u8::from(dg.polished).to_string(),
                    f(dg.objective),
                    f(pred[k]),
                    f(sorted[k]),
                ])?;
            }
            if sub.len() < SMALL_GROUP {
                notes.insert(format!("group_{g}"), format!("{} rows, small", sub.len()));
            }
        }
        fitted.insert(g, Fitted { x: d.x, y: d.y, keys, fit });
    }
    dir.close(diag)?;

    let reference = fitted
        .get(&0)
        .filter(|r| r.fit.is_some())
        .ok_or(Error::Empty("reference group quantile fit"))?;
    let rd = data(0, reference).expect("reference fit");
    let seed = cfg.decompose.seed;

    let lead_header = |rest: &[&'static str]| -> Vec<&'static str> {
        GROUP_HEADER.iter().copied().chain(["theta"]).chain(rest.iter().copied()).collect()
    };
    let mut t5 = dir.table(
        "table5.csv",
        &lead_header(&[
            "n",
            "actual_diff",
            "q_own",
            "q_ref",
            "q_ref_coef_own_x",
            "q_own_coef_ref_x",
            "predicted_diff",
            "residual_diff",
            "small_group",
        ]),
    )?;
    let mut t6 = dir.table(
        "table6.csv",
        &lead_header(&[
            "predicted_diff",
            "d1_covariates",
            "d1_coefficients",
            "d1_share_covariates",
            "d1_share_coefficients",
            "d2_covariates",
            "d2_coefficients",
            "d2_share_covariates",
            "d2_share_coefficients",
        ]),
    )?;
    let mut t12 = dir.table("fig12.csv", &lead_header(&["actual_diff", "share_of_reference"]))?;
    let fig_header: Vec<&str> = ["figure"]
        .into_iter()
        .chain(lead_header(&["actual_diff", "covariates", "coefficients", "residual"]))
        .collect();
    let mut t13 = dir.table("fig13_17.csv", &fig_header)?;
    let mut t18 = dir.table("fig18.csv", &lead_header(&["share_of_reference"]))?;
    let mut t19 = dir.table("fig19.csv", &lead_header(&["share_of_reference"]))?;
    let mut ref_sorted = reference.y.clone();
    ref_sorted.sort_by(f64::total_cmp);

    for g in Group::table_order() {
        let id = g.id();
        let lead = group_fields(g);
        let with = |theta: u32, rest: Vec<String>| -> Vec<String> {
            lead.iter().cloned().chain([theta.to_string()]).chain(rest).collect()
        };
        let fd = fitted.get(&id);
        // actual gaps need only the data
        let mut own_sorted = fd.map(|fd| fd.y.clone()).unwrap_or_default();
        own_sorted.sort_by(f64::total_cmp);
        for &th in &DECOMP_THETAS {
            let gap = if own_sorted.is_empty() {
                None
            } else {
                Some(snapped_quantile(&own_sorted, th)? - snapped_quantile(&ref_sorted, th)?)
            };
            t12.row(with(th, vec![fmt_opt(gap), fmt_opt(gap.map(f64::exp))]))?;
        }
        let Some(gd) = fd.and_then(|fd| data(id, fd)) else {
            for &th in &DECOMP_THETAS {
                let n = fd.map_or(0, |fd| fd.y.len());
                let mut r5 = vec![n.to_string()];
                r5.resize(9, String::new());
                t5.row(with(th, r5))?;
                t6.row(with(th, vec![String::new(); 9]))?;
                t13.row(
                    [decomposition_figure(g).to_string()]
                        .into_iter()
                        .chain(with(th, vec![String::new(); 4])),
                )?;
                t18.row(with(th, vec![String::new()]))?;
                t19.row(with(th, vec![String::new()]))?;
            }
            continue;
        };
        let sims = simulate_pair(&gd, &rd, seed)?;
        let d1 = decompose_gap(id, &sims, &DECOMP_THETAS, Ordering::One)?;
        let d2 = decompose_gap(id, &sims, &DECOMP_THETAS, Ordering::Two)?;
        let ratios = counterfactual_ratios(id, &sims, &DECOMP_THETAS)?;
        let n = gd.log_w.len();
        for (k, &th) in DECOMP_THETAS.iter().enumerate() {
            let q = |v: &[f64]| snapped_quantile(v, th);
            let (a, b) = (&d1[k], &d2[k]);
            t5.row(with(
                th,
                vec![
                    n.to_string(),
                    f(a.actual),
                    f(q(&sims.own)?),
                    f(q(&sims.reference)?),
                    f(q(&sims.ref_on_g)?),
                    f(q(&sims.g_on_ref)?),
                    f(a.predicted),
                    f(a.residual),
                    u8::from(n < SMALL_GROUP).to_string(),
                ],
            ))?;
            t6.row(with(
                th,
                vec![
                    f(a.predicted),
                    f(a.covariates),
                    f(a.coefficients),
                    fmt_opt(a.share_covariates),
                    fmt_opt(a.share_coefficients),
                    f(b.covariates),
                    f(b.coefficients),
                    fmt_opt(b.share_covariates),
                    fmt_opt(b.share_coefficients),
                ],
            ))?;
            t13.row(
                [decomposition_figure(g).to_string()]
                    .into_iter()
                    .chain(with(th, vec![f(a.actual), f(a.covariates), f(a.coefficients), f(a.residual)])),
            )?;
            t18.row(with(th, vec![f(ratios[k].ref_characteristics)]))?;
            t19.row(with(th, vec![f(ratios[k].ref_coefficients)]))?;
        }
    }
    for t in [t5, t6, t12, t13, t18, t19] {
        dir.close(t)?;
    }
    Ok(notes)
}

/// Table of the five nested OLS models: intercept and group coefficients,
/// block indicators, R squared and observations.
fn ols_ladder(rows: &[CohortRow], dir: &mut StageDir) -> Result<()> {
    let mut fits = Vec::with_capacity(MODELS);
    for m in 1..=MODELS {
        let d = build_design(rows, &model_blocks(m));
        fits.push((model_blocks(m), ols(&d.x, &d.y)?));
    }
    let header: Vec<String> = ["parameter"]
        .iter()
        .chain(GROUP_HEADER.iter())
        .map(|s| s.to_string())
        .chain((1..=MODELS).map(|m| format!("model_{m}")))
        .collect();
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = dir.table("table4.csv", &hdr)?;
    let blank = || vec![String::new(); GROUP_HEADER.len()];
    let mut row = vec!["intercept".to_string()];
    row.extend(blank());
    row.extend(fits.iter().map(|(_, fit)| f(fit.beta[0])));
    t.row(&row)?;
    for g in Group::table_order() {
        let id = g.id();
        let mut row = vec![format!("group_{id}")];
        row.extend(group_fields(g));
        // group indicators follow the intercept; the reference is omitted
        row.extend(fits.iter().map(|(_, fit)| f(if id == 0 { 0.0 } else { fit.beta[id] })));
        t.row(&row)?;
    }
    for b in [Block::Hours, Block::Geography, Block::AgeEducation, Block::HumanCapital] {
        let mut row = vec![block_label(b).expect("covariate block").to_string()];
        row.extend(blank());
        row.extend(fits.iter().map(|(bl, _)| if bl.contains(&b) { "yes" } else { "no" }.to_string()));
        t.row(&row)?;
    }
    for (label, val) in [
        ("r2", fits.iter().map(|(_, fit)| f(fit.r2)).collect::<Vec<_>>()),
        ("observations", fits.iter().map(|(_, fit)| fit.n.to_string()).collect()),
    ] {
        let mut row = vec![label.to_string()];
        row.extend(blank());
        row.extend(val);
        t.row(&row)?;
    }
    dir.close(t)
}
