//! Estimators checked against the generator's known parameters.

use std::collections::BTreeMap;

use gid_core::akm::{fit_two_way_fe, FeObs, FeOptions};
use gid_core::impute::{impute_education, impute_hours, EducCellSpec, MAX_ANNUAL_HOURS};
use gid_core::synth::{firm_id, gen_population, GenConfig, GenOutput};

fn world() -> GenOutput {
    gen_population(&GenConfig {
        n_persons: 4000,
        n_firms: 150,
        first_year: 2005,
        last_year: 2014,
        ..GenConfig::default()
    })
    .unwrap()
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn firm_effects_track_the_truth() {
    let out = world();
    let panel = out.panel().unwrap();
    let mut obs = Vec::new();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for j in panel.jobs() {
        let e = j.earnings();
        if e > 0.0 {
            obs.push(FeObs {
                person: j.person,
                firm: j.employer,
                year: j.year,
                y: e.ln(),
                weight: 1.0,
            });
            *counts.entry(j.employer).or_default() += 1;
        }
    }
    let sol = fit_two_way_fe(&obs, panel.persons().len(), panel.employers().len(), &FeOptions::default()).unwrap();
    let truth: BTreeMap<String, f64> = out
        .truth
        .firm_effect
        .iter()
        .enumerate()
        .map(|(j, &v)| (firm_id(j), v))
        .collect();
    let (mut est, mut tru) = (Vec::new(), Vec::new());
    for (k, name) in panel.employers().iter().enumerate() {
        if counts.get(&k).copied().unwrap_or(0) >= 200 {
            if let Some(&t) = truth.get(name) {
                est.push(sol.psi[k]);
                tru.push(t);
            }
        }
    }
    assert!(est.len() > 50, "{} large firms", est.len());
    let r = corr(&est, &tru);
    assert!(r > 0.9, "correlation {r}");
}

#[test]
fn hours_imputation_fills_only_missing_rows() {
    let panel = world().panel().unwrap();
    let h = impute_hours(&panel).unwrap();
    assert_eq!(h.hours.len(), panel.jobs().len());
    let mut imputed = 0;
    for ((j, &v), &flag) in panel.jobs().iter().zip(&h.hours).zip(&h.imputed) {
        assert!(v >= 1.0 && v <= MAX_ANNUAL_HOURS, "{v}");
        match j.hours {
            Some(obs) if obs > 0.0 => {
                assert!(!flag);
                assert_eq!(obs, v);
            }
            _ => {
                assert!(flag);
                imputed += 1;
            }
        }
    }
    assert!(imputed > 0);
    assert_eq!(impute_hours(&panel).unwrap().hours, h.hours);
}

#[test]
fn education_imputation_keeps_observed_values() {
    let panel = world().panel().unwrap();
    let spec = EducCellSpec::default();
    let e = impute_education(&panel, &spec, 9).unwrap();
    for ((p, &v), &flag) in panel.persons().iter().zip(&e.education).zip(&e.imputed) {
        match p.education {
            Some(obs) => {
                assert!(!flag);
                assert_eq!(obs, v);
            }
            None => assert!(flag),
        }
    }
    assert_eq!(impute_education(&panel, &spec, 9).unwrap().education, e.education);
}
