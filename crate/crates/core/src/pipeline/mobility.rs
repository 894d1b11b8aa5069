//! Rank-rank mobility profiles and slopes.

use std::collections::BTreeMap;

use super::data::YearlyView;
use super::indicators::{class_label, sex_label};
use super::sink::StageDir;
use super::{f, Ctx, Notes};
use crate::codes::Sex;
use crate::error::Result;
use crate::mobility::{mobility_profile, rank_rank_slope, ranked_pairs, MobilityObs};
use crate::samples::{build_sample, MeasureLookup, SampleKind};

struct Ranked {
    year: i32,
    sex: Sex,
    class: Option<usize>,
    pair: (f64, f64),
}

pub(super) fn run(ctx: &mut Ctx, dir: &mut StageDir) -> Result<Notes> {
    let cfg = ctx.cfg;
    let a = &cfg.analysis;
    let v = ctx.yearly()?;
    let mut notes = Notes::new();
    let mut slope = dir.table("slope.csv", &["horizon", "cell", "n", "slope"])?;
    for (z, kind, by_age, by_year) in [
        (10, SampleKind::Pa10, "fig8.csv", "fig9.csv"),
        (5, SampleKind::Pa5, "figA17.csv", "figA18.csv"),
    ] {
        let ranked = rank_all(v, &a.age_classes, kind, z);
        notes.insert(format!("pairs_{z}"), ranked.len().to_string());
        let header = ["bin", "n", "mean_rank_t", "mean_rank_tz"];
        let mut t = dir.table(by_age, &[&["age_class"][..], &header].concat())?;
        let mut cells: Vec<(String, Vec<(f64, f64)>)> = vec![(
            "all".into(),
            ranked.iter().map(|r| r.pair).collect(),
        )];
        for s in Sex::ALL {
            cells.push((sex_label(Some(s)).into(), ranked.iter().filter(|r| r.sex == s).map(|r| r.pair).collect()));
        }
        for k in 0..a.age_classes.len() {
            let label = class_label(&a.age_classes, k);
            cells.push((format!("age_{label}"), ranked.iter().filter(|r| r.class == Some(k)).map(|r| r.pair).collect()));
        }
        for (label, pairs) in &cells {
            if label != "male" && label != "female" {
                let class = label.strip_prefix("age_").unwrap_or(label);
                for p in mobility_profile(pairs) {
                    t.row([class.to_string(), p.bin.to_string(), p.n.to_string(), f(p.mean_rank_t), f(p.mean_rank_tz)])?;
                }
            }
        }
        dir.close(t)?;
        let mut t = dir.table(by_year, &[&["base_year"][..], &header].concat())?;
        for &year in &a.mobility_years {
            let pairs: Vec<(f64, f64)> = ranked.iter().filter(|r| r.year == year).map(|r| r.pair).collect();
            if pairs.is_empty() {
                notes.insert(format!("{by_year}:{year}"), "no pairs".into());
                continue;
            }
            for p in mobility_profile(&pairs) {
                t.row([year.to_string(), p.bin.to_string(), p.n.to_string(), f(p.mean_rank_t), f(p.mean_rank_tz)])?;
            }
            cells.push((format!("year_{year}"), pairs));
        }
        dir.close(t)?;
        for (label, pairs) in &cells {
            if let Ok(b) = rank_rank_slope(pairs) {
                slope.row([z.to_string(), label.clone(), pairs.len().to_string(), f(b)])?;
            }
        }
    }
    dir.close(slope)?;
    Ok(notes)
}

/// Rank pairs of every base year, ranked within (base year, sex, age at t).
fn rank_all(v: &YearlyView, classes: &[i32], kind: SampleKind, z: i32) -> Vec<Ranked> {
    let persons = v.panel.persons();
    let mut by_year: BTreeMap<i32, Vec<Ranked>> = BTreeMap::new();
    for year in v.frame.first_year()..=v.frame.last_year() {
        let Ok(s) = build_sample(&v.frame, &v.measures, kind, year) else {
            continue;
        };
        let mut obs = Vec::with_capacity(s.len());
        let mut meta = Vec::with_capacity(s.len());
        for &p in &s.members {
            let (Some(b), Some(l)) = (v.measures.p3(p, year), v.measures.p3(p, year + z)) else {
                continue;
            };
            let rec = &persons[p];
            let age = rec.age(year);
            obs.push(MobilityObs {
                cell: (rec.sex.index() as u32) << 16 | age.clamp(0, 0xffff) as u32,
                base: b,
                later: l,
            });
            meta.push((rec.sex, YearlyView::age_class(classes, age)));
        }
        let pairs = ranked_pairs(&obs);
        by_year.insert(
            year,
            pairs
                .into_iter()
                .zip(meta)
                .map(|(pair, (sex, class))| Ranked { year, sex, class, pair })
                .collect(),
        );
    }
    by_year.into_values().flatten().collect()
}
