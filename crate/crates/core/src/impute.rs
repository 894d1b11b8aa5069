//! Hours and education imputation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{Education, RaceEth, Sector, Sex};
use crate::error::{Error, Result};
use crate::linalg::Csr;
use crate::panel::{quarter_pattern, Panel};
use crate::regress::ols::ols;

/// Log-hours predictions are clamped to [0, ln 8784] (one to 8784 hours).
pub const MAX_ANNUAL_HOURS: f64 = 8784.0;

/// Stratum of the hours model: quarter pattern of the job, dominant job flag, sex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HoursStratum {
    pub pattern: u8,
    pub dominant: bool,
    pub sex: Sex,
}

impl HoursStratum {
    pub fn label(&self) -> String {
        let bits: String = (0..4).map(|q| if self.pattern & (1 << q) != 0 { '1' } else { '0' }).collect();
        format!(
            "q{bits}/{}/{}",
            if self.dominant { "dominant" } else { "coincident" },
            self.sex.code()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub cell: String,
    pub n_observed: usize,
    pub n_imputed: usize,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct HoursImputation {
    /// Completed hours per job row (panel job order).
    pub hours: Vec<f64>,
    pub imputed: Vec<bool>,
    pub audit: Vec<AuditRow>,
}

/// Width of the hours design: intercept, log-earnings quartic, age quartic,
/// four race indicators, foreign-born, 19 sector indicators, log other-job
/// earnings.
const HOURS_WIDTH: usize = 1 + 4 + 4 + 4 + 1 + (Sector::COUNT - 1) + 1;

fn hours_row(
    log_e: f64,
    age: i32,
    race: RaceEth,
    foreign_born: bool,
    sector: Sector,
    other: f64,
) -> Vec<(usize, f64)> {
    let l = log_e - 10.0;
    let a = (age as f64 - 40.0) / 10.0;
    let mut r = vec![
        (0, 1.0),
        (1, l),
        (2, l * l),
        (3, l * l * l),
        (4, l * l * l * l),
        (5, a),
        (6, a * a),
        (7, a * a * a),
        (8, a * a * a * a),
    ];
    // race indicators relative to White Non-Hispanic
    let race_col = match race {
        RaceEth::AsianNH => Some(9),
        RaceEth::BlackNH => Some(10),
        RaceEth::WhiteHisp => Some(11),
        RaceEth::AllOther => Some(12),
        RaceEth::WhiteNH => None,
    };
    if let Some(c) = race_col {
        r.push((c, 1.0));
    }
    if foreign_born {
        r.push((13, 1.0));
    }
    if sector.index() > 0 {
        r.push((14 + sector.index() - 1, 1.0));
    }
    r.push((HOURS_WIDTH - 1, other.ln_1p()));
    r
}

/// Fits log hours by least squares within each stratum on rows with observed
/// positive hours and fills the other rows with exponentiated predictions.
/// Strata without observed rows use a model pooled over all observed rows.
pub fn impute_hours(panel: &Panel) -> Result<HoursImputation> {
    let jobs = panel.jobs();
    let persons = panel.persons();
    let n = jobs.len();
    let mut strata = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for p in 0..persons.len() {
        let range = panel.job_range(p);
        let mut k = range.start;
        while k < range.end {
            let year = jobs[k].year;
            let mut e = k;
            while e < range.end && jobs[e].year == year {
                e += 1;
            }
            let total: f64 = jobs[k..e].iter().map(|j| j.earnings()).sum();
            let mut dom = k;
            for i in k..e {
                if jobs[i].earnings() > jobs[dom].earnings() {
                    dom = i;
                }
            }
            for i in k..e {
                let j = &jobs[i];
                let earn = j.earnings();
                strata.push(HoursStratum {
                    pattern: quarter_pattern(&j.q),
                    dominant: i == dom,
                    sex: persons[p].sex,
                });
                rows.push(hours_row(
                    earn.max(1.0).ln(),
                    persons[p].age(year),
                    persons[p].race_eth,
                    persons[p].foreign_born,
                    j.sector,
                    (total - earn).max(0.0),
                ));
            }
            k = e;
        }
    }
    let observed: Vec<bool> = jobs.iter().map(|j| j.hours.is_some_and(|h| h > 0.0 && h.is_finite())).collect();
    if !observed.iter().any(|&o| o) {
        return Err(Error::NothingObserved("hours"));
    }
    let mut by_stratum: BTreeMap<HoursStratum, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.iter().enumerate() {
        by_stratum.entry(*s).or_default().push(i);
    }
    let fit = |idx: &[usize]| -> Result<Vec<f64>> {
        let mut x = Csr::new(HOURS_WIDTH);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.push_row(rows[i].iter().copied());
            y.push(jobs[i].hours.expect("observed").ln());
        }
        Ok(ols(&x, &y)?.beta)
    };
    let all_obs: Vec<usize> = (0..n).filter(|&i| observed[i]).collect();
    let pooled = fit(&all_obs)?;
    let fits: Vec<(HoursStratum, Option<Vec<f64>>, usize, usize)> = by_stratum
        .par_iter()
        .map(|(s, idx)| {
            let obs: Vec<usize> = idx.iter().copied().filter(|&i| observed[i]).collect();
            let n_imp = idx.len() - obs.len();
            let beta = if obs.is_empty() { None } else { fit(&obs).ok() };
            (*s, beta, obs.len(), n_imp)
        })
        .collect();
    let mut models: BTreeMap<HoursStratum, (Vec<f64>, bool)> = BTreeMap::new();
    let mut audit = Vec::with_capacity(fits.len());
    for (s, beta, n_obs, n_imp) in fits {
        let fallback = beta.is_none();
        audit.push(AuditRow {
            cell: s.label(),
            n_observed: n_obs,
            n_imputed: n_imp,
            fallback,
        });
        models.insert(s, (beta.unwrap_or_else(|| pooled.clone()), fallback));
    }
    let cap = MAX_ANNUAL_HOURS.ln();
    let mut hours = Vec::with_capacity(n);
    let mut imputed = Vec::with_capacity(n);
    for i in 0..n {
        if observed[i] {
            hours.push(jobs[i].hours.expect("observed"));
            imputed.push(false);
        } else {
            let beta = &models[&strata[i]].0;
            let lp: f64 = rows[i].iter().map(|&(c, v)| beta[c] * v).sum();
            let lp = if lp.is_finite() { lp.clamp(0.0, cap) } else { 0.0 };
            hours.push(lp.exp().clamp(1.0, MAX_ANNUAL_HOURS));
            imputed.push(true);
        }
    }
    Ok(HoursImputation { hours, imputed, audit })
}

/// Education cell rules: minimum observed donors per cell and the reference
/// year for age bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EducCellSpec {
    pub min_cell_size: usize,
    pub age_year: i32,
}

impl Default for EducCellSpec {
    fn default() -> Self {
        Self {
            min_cell_size: 20,
            age_year: 2004,
        }
    }
}

/// Full cell key; `None` fields are dropped by the merge ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct EducKey {
    level: u8,
    sex: Option<Sex>,
    foreign_born: Option<bool>,
    race: Option<RaceEth>,
    age_band: Option<i32>,
    earn_quartile: Option<u8>,
    modal_industry: Option<u8>,
}

/// Number of ladder levels: full key, then modal industry, earnings quartile,
/// age band, race/ethnicity and place of birth are dropped in turn; the last
/// level keys on sex only, and a global pool follows.
const LADDER: u8 = 7;

impl EducKey {
    fn at_level(full: &EducKey, level: u8) -> EducKey {
        let mut k = *full;
        k.level = level;
        if level >= 1 {
            k.modal_industry = None;
        }
        if level >= 2 {
            k.earn_quartile = None;
        }
        if level >= 3 {
            k.age_band = None;
        }
        if level >= 4 {
            k.race = None;
        }
        if level >= 5 {
            k.foreign_born = None;
        }
        if level >= 6 {
            k.sex = None;
        }
        k
    }

    fn label(&self) -> String {
        let f = |o: Option<String>| o.unwrap_or_else(|| "*".into());
        format!(
            "L{}:{}|{}|{}|{}|{}|{}",
            self.level,
            f(self.sex.map(|s| s.code().to_string())),
            f(self.foreign_born.map(|b| if b { "FB" } else { "NB" }.to_string())),
            f(self.race.map(|r| r.code().to_string())),
            f(self.age_band.map(|a| format!("age{a}"))),
            f(self.earn_quartile.map(|q| if q == 0 { "noearn".into() } else { format!("q{q}") })),
            f(self.modal_industry.map(|m| {
                Sector::from_index(m as usize).map_or("none".to_string(), |s| s.letter().to_string())
            })),
        )
    }

    fn id(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.label().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct EducImputation {
    pub education: Vec<Education>,
    pub imputed: Vec<bool>,
    pub audit: Vec<AuditRow>,
}

/// Mean positive annual earnings and modal sector (by job-year count, ties to
/// the lower letter) per person.
fn job_history(panel: &Panel) -> Vec<(Option<f64>, Option<u8>)> {
    (0..panel.persons().len())
        .map(|p| {
            let mut by_year: BTreeMap<i32, f64> = BTreeMap::new();
            let mut counts = [0usize; Sector::COUNT];
            for j in panel.jobs_of(p) {
                *by_year.entry(j.year).or_default() += j.earnings();
                counts[j.sector.index()] += 1;
            }
            let pos: Vec<f64> = by_year.values().copied().filter(|&v| v > 0.0).collect();
            let mean = (!pos.is_empty()).then(|| pos.iter().sum::<f64>() / pos.len() as f64);
            let modal = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i as u8);
            (mean, modal)
        })
        .collect()
}

/// Fills missing education by drawing from the observed distribution of the
/// person's cell, merging cells up the key-dropping ladder until the cell has
/// at least `min_cell_size` observed donors.
pub fn impute_education(panel: &Panel, spec: &EducCellSpec, seed: u64) -> Result<EducImputation> {
    let persons = panel.persons();
    if !persons.iter().any(|p| p.education.is_some()) {
        return Err(Error::NothingObserved("education"));
    }
    let hist = job_history(panel);
    let mut means: Vec<f64> = hist.iter().filter_map(|h| h.0).collect();
    means.sort_by(f64::total_cmp);
    let cut = |q: f64| crate::stats::quantile_sorted(&means, q).ok();
    let cuts = [cut(0.25), cut(0.5), cut(0.75)];
    let full: Vec<EducKey> = persons
        .iter()
        .zip(&hist)
        .map(|(p, h)| {
            let quartile = match h.0 {
                None => 0,
                Some(m) => 1 + cuts.iter().filter(|c| c.is_some_and(|c| m > c)).count() as u8,
            };
            EducKey {
                level: 0,
                sex: Some(p.sex),
                foreign_born: Some(p.foreign_born),
                race: Some(p.race_eth),
                age_band: Some((p.age(spec.age_year).clamp(0, 99) / 10) * 10),
                earn_quartile: Some(quartile),
                modal_industry: Some(h.1.unwrap_or(Sector::COUNT as u8)),
            }
        })
        .collect();
    // observed category counts per key at every level
    let mut counts: BTreeMap<EducKey, [usize; 4]> = BTreeMap::new();
    for (p, k) in persons.iter().zip(&full) {
        if let Some(e) = p.education {
            for level in 0..LADDER {
                counts.entry(EducKey::at_level(k, level)).or_default()[e.index()] += 1;
            }
        }
    }
    let global: [usize; 4] = persons.iter().filter_map(|p| p.education).fold([0; 4], |mut a, e| {
        a[e.index()] += 1;
        a
    });
    let min = spec.min_cell_size.max(1);
    let mut education = Vec::with_capacity(persons.len());
    let mut imputed = Vec::with_capacity(persons.len());
    let mut audit_map: BTreeMap<EducKey, (usize, usize, bool)> = BTreeMap::new();
    for (i, (p, k)) in persons.iter().zip(&full).enumerate() {
        if let Some(e) = p.education {
            education.push(e);
            imputed.push(false);
            continue;
        }
        let mut chosen = None;
        for level in 0..LADDER {
            let key = EducKey::at_level(k, level);
            if let Some(c) = counts.get(&key) {
                if c.iter().sum::<usize>() >= min {
                    chosen = Some((key, *c));
                    break;
                }
            }
        }
        let (key, dist) = chosen.unwrap_or_else(|| {
            let mut g = EducKey::at_level(k, LADDER - 1);
            g.level = LADDER;
            (g, global)
        });
        let total: usize = dist.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ key.id().rotate_left(17) ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut u = rng.random_range(0..total);
        let mut cat = 0;
        for (c, &n) in dist.iter().enumerate() {
            if u < n {
                cat = c;
                break;
            }
            u -= n;
        }
        education.push(Education::ALL[cat]);
        imputed.push(true);
        let e = audit_map.entry(key).or_insert((total, 0, key.level > 0));
        e.1 += 1;
    }
    let audit = audit_map
        .into_iter()
        .map(|(k, (n_obs, n_imp, fb))| AuditRow {
            cell: k.label(),
            n_observed: n_obs,
            n_imputed: n_imp,
            fallback: fb,
        })
        .collect();
    Ok(EducImputation {
        education,
        imputed,
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{JobYearRecord, PersonRecord};

    fn person(id: &str, educ: Option<Education>) -> PersonRecord {
        PersonRecord {
            person_id: id.into(),
            sex: Sex::Female,
            race_eth: RaceEth::BlackNH,
            foreign_born: false,
            birth_year: 1970,
            death_year: None,
            ssn_active: true,
            education: educ,
            state: "WA".parse().unwrap(),
        }
    }

    #[test]
    fn single_category_cell() {
        let persons: Vec<_> = (0..50)
            .map(|i| person(&format!("p{i:03}"), (i < 25).then_some(Education::ALL[2])))
            .collect();
        let panel = Panel::from_records(persons, vec![]).unwrap().with_span(2004, 2004);
        let out = impute_education(&panel, &EducCellSpec::default(), 1).unwrap();
        assert!(out.education.iter().all(|&e| e == Education::ALL[2]));
        assert_eq!(out.imputed.iter().filter(|&&b| b).count(), 25);
        assert_eq!(out.audit.iter().map(|a| a.n_imputed).sum::<usize>(), 25);
    }

    #[test]
    fn no_observed_education_is_an_error() {
        let panel = Panel::from_records(vec![person("a", None)], vec![]).unwrap();
        assert!(matches!(
            impute_education(&panel, &EducCellSpec::default(), 1),
            Err(Error::NothingObserved(_))
        ));
    }

    #[test]
    fn perfect_fit_hours() {
        let mut persons = Vec::new();
        let mut jobs = Vec::new();
        for i in 0..200 {
            let id = format!("p{i:03}");
            persons.push(person(&id, None));
            let e = 5000.0 + 150.0 * i as f64;
            let h = (6.0 + 0.4 * (e.ln() - 10.0)).exp();
            jobs.push(JobYearRecord {
                person_id: id,
                employer_id: "f".into(),
                year: 2004,
                q_earnings: [e / 4.0; 4],
                industry_sector: "G".parse().unwrap(),
                state: "WA".parse().unwrap(),
                hours: (i % 3 != 0).then_some(h),
            });
        }
        let panel = Panel::from_records(persons, jobs).unwrap().with_span(2004, 2004);
        let out = impute_hours(&panel).unwrap();
        for (j, (h, imp)) in panel.jobs().iter().zip(out.hours.iter().zip(&out.imputed)) {
            let truth = (6.0 + 0.4 * (j.earnings().ln() - 10.0)).exp();
            assert!((h - truth).abs() / truth < 1e-6);
            assert_eq!(*imp, j.hours.is_none());
            if let Some(o) = j.hours {
                assert_eq!(*h, o);
            }
        }
    }
}
