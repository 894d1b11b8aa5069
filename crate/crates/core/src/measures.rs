//! Derived earnings measures: P3, residual log earnings, residual changes,
//! long-term averages and activity summaries.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::Education;
use crate::error::{Error, Result};
use crate::panel::{EarningsGrid, Panel};
use crate::samples::{AnalysisSample, Frame, MeasureLookup, SampleRules};
use crate::stats;

/// Residuals from demeaning within cells (a saturated dummy regression).
#[derive(Debug, Clone, PartialEq)]
pub struct Demeaned<K> {
    pub residual: Vec<f64>,
    /// True where the observation is alone in its cell (residual forced to 0).
    pub singleton: Vec<bool>,
    /// Cell mean and count.
    pub cells: BTreeMap<K, (f64, usize)>,
}

/// Subtracts each value's cell mean.
pub fn cell_demean<K: Ord + Copy>(keys: &[K], values: &[f64]) -> Demeaned<K> {
    assert_eq!(keys.len(), values.len());
    let mut acc: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for (k, &v) in keys.iter().zip(values) {
        let e = acc.entry(*k).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    for v in acc.values_mut() {
        v.0 /= v.1 as f64;
    }
    let residual = keys.iter().zip(values).map(|(k, &v)| v - acc[k].0).collect();
    let singleton = keys.iter().map(|k| acc[k].1 == 1).collect();
    Demeaned {
        residual,
        singleton,
        cells: acc,
    }
}

/// Three-year permanent earnings ending in `year`: the mean of the three
/// annual totals, zeros included, when at least one exceeds m(year).
/// Missing when any of the three years is missing or outside the span.
pub fn permanent_p3(frame: &Frame, person: usize, year: i32) -> Option<f64> {
    let m = frame.m(year);
    let a = frame.earnings(person, year - 2)?;
    let b = frame.earnings(person, year - 1)?;
    let c = frame.earnings(person, year)?;
    let any = [a, b, c].iter().any(|&v| v > m);
    any.then(|| (a + b + c) / 3.0)
}

/// Cell for age-by-sex-by-year residuals.
pub type AgeSexYear = (u8, i32, i32);
/// Cell for age-by-education-by-sex-by-year residuals.
pub type AgeEducSexYear = (u8, i32, u8, i32);

/// Person-year measures over the frame span.
#[derive(Debug, Clone)]
pub struct MeasureTable {
    first: i32,
    n_years: usize,
    n_persons: usize,
    /// Annual earnings y_it for CS person-years.
    pub y: Vec<Option<f64>>,
    pub p3: Vec<Option<f64>>,
    /// Log earnings residual on age x sex x year cells (CS).
    pub eps: Vec<Option<f64>>,
    /// Log earnings residual on age x education x sex x year cells (CS with
    /// known education).
    pub delta: Vec<Option<f64>>,
    /// Residual permanent log earnings.
    pub perm: Vec<Option<f64>>,
    pub g1: Vec<Option<f64>>,
    pub g5: Vec<Option<f64>>,
    /// Person-years whose residual came from a single-observation cell.
    pub singleton_cells: usize,
    eps_cells: BTreeMap<AgeSexYear, (f64, usize)>,
}

impl MeasureLookup for MeasureTable {
    fn perm_residual(&self, person: usize, year: i32) -> Option<f64> {
        self.at(&self.perm, person, year)
    }

    fn p3(&self, person: usize, year: i32) -> Option<f64> {
        self.at(&self.p3, person, year)
    }
}

impl MeasureTable {
    /// Computes every person-year measure. `education` is aligned with the
    /// panel's persons (observed or imputed).
    pub fn build(panel: &Panel, frame: &Frame, education: &[Option<Education>]) -> Result<Self> {
        let n_persons = frame.n_persons();
        if education.len() != n_persons {
            return Err(Error::config("education", "length differs from the person count"));
        }
        let first = frame.first_year();
        let n_years = frame.n_years();
        let n = n_persons * n_years;
        let years: Vec<i32> = (first..=frame.last_year()).collect();
        let persons = panel.persons();
        let sex = |p: usize| persons[p].sex.index() as u8;

        let mut y = vec![None; n];
        let mut p3 = vec![None; n];
        for p in 0..n_persons {
            for (k, &t) in years.iter().enumerate() {
                if frame.in_cs(p, t) {
                    y[p * n_years + k] = frame.earnings(p, t);
                }
                p3[p * n_years + k] = permanent_p3(frame, p, t);
            }
        }

        // eps and delta on CS person-years
        let mut idx = Vec::new();
        let mut keys = Vec::new();
        let mut ekeys = Vec::new();
        let mut logs = Vec::new();
        for p in 0..n_persons {
            for (k, &t) in years.iter().enumerate() {
                if let Some(v) = y[p * n_years + k] {
                    idx.push(p * n_years + k);
                    keys.push((sex(p), persons[p].age(t), t));
                    ekeys.push(education[p].map(|e| (sex(p), persons[p].age(t), e.index() as u8, t)));
                    logs.push(v.ln());
                }
            }
        }
        let d = cell_demean(&keys, &logs);
        let mut eps = vec![None; n];
        let mut singleton_cells = d.singleton.iter().filter(|s| **s).count();
        for (i, &c) in idx.iter().enumerate() {
            eps[c] = Some(d.residual[i]);
        }
        let eps_cells = d.cells;

        let with_educ: Vec<usize> = (0..idx.len()).filter(|&i| ekeys[i].is_some()).collect();
        let dk: Vec<AgeEducSexYear> = with_educ.iter().map(|&i| ekeys[i].expect("filtered")).collect();
        let dv: Vec<f64> = with_educ.iter().map(|&i| logs[i]).collect();
        let dd = cell_demean(&dk, &dv);
        singleton_cells += dd.singleton.iter().filter(|s| **s).count();
        let mut delta = vec![None; n];
        for (j, &i) in with_educ.iter().enumerate() {
            delta[idx[i]] = Some(dd.residual[j]);
        }

        // P: mean of at least two non-missing y over t-2..t, logged, demeaned
        let mut pidx = Vec::new();
        let mut pkeys = Vec::new();
        let mut pvals = Vec::new();
        for p in 0..n_persons {
            for (k, &t) in years.iter().enumerate().skip(2) {
                if !frame.eligible(p, t) {
                    continue;
                }
                let vals: Vec<f64> = (k - 2..=k).filter_map(|j| y[p * n_years + j]).collect();
                if vals.len() >= 2 {
                    pidx.push(p * n_years + k);
                    pkeys.push((sex(p), persons[p].age(t), t));
                    pvals.push((vals.iter().sum::<f64>() / vals.len() as f64).ln());
                }
            }
        }
        let pd = cell_demean(&pkeys, &pvals);
        singleton_cells += pd.singleton.iter().filter(|s| **s).count();
        let mut perm = vec![None; n];
        for (i, &c) in pidx.iter().enumerate() {
            perm[c] = Some(pd.residual[i]);
        }

        let mut table = Self {
            first,
            n_years,
            n_persons,
            y,
            p3,
            eps,
            delta,
            perm,
            g1: vec![None; n],
            g5: vec![None; n],
            singleton_cells,
            eps_cells,
        };
        for z in [1, 5] {
            let g: Vec<Option<f64>> = (0..n)
                .map(|c| {
                    let p = c / n_years;
                    let t = first + (c % n_years) as i32;
                    table.residual_change(panel, frame, p, t, z)
                })
                .collect();
            if z == 1 {
                table.g1 = g;
            } else {
                table.g5 = g;
            }
        }
        Ok(table)
    }

    fn at(&self, v: &[Option<f64>], person: usize, year: i32) -> Option<f64> {
        let k = year - self.first;
        if k < 0 || k as usize >= self.n_years || person >= self.n_persons {
            return None;
        }
        v[person * self.n_years + k as usize]
    }

    pub fn first_year(&self) -> i32 {
        self.first
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn n_persons(&self) -> usize {
        self.n_persons
    }

    pub fn y(&self, person: usize, year: i32) -> Option<f64> {
        self.at(&self.y, person, year)
    }

    pub fn eps(&self, person: usize, year: i32) -> Option<f64> {
        self.at(&self.eps, person, year)
    }

    pub fn delta(&self, person: usize, year: i32) -> Option<f64> {
        self.at(&self.delta, person, year)
    }

    pub fn g(&self, z: i32, person: usize, year: i32) -> Option<f64> {
        match z {
            1 => self.at(&self.g1, person, year),
            5 => self.at(&self.g5, person, year),
            _ => None,
        }
    }

    /// Age x sex x year residual of an arbitrary positive amount, using the
    /// cell means estimated on the CS sample.
    pub fn eps_of(&self, panel: &Panel, person: usize, year: i32, amount: f64) -> Option<f64> {
        if !(amount > 0.0) {
            return None;
        }
        let rec = &panel.persons()[person];
        let key = (rec.sex.index() as u8, rec.age(year), year);
        self.eps_cells.get(&key).map(|(m, _)| amount.ln() - m)
    }

    /// g^z = eps(t+z) - eps(t), defined when y_t > m_t and y_{t+z} > m_{t+z}/3.
    /// The t+z residual uses that year's CS cell means, so it also exists for
    /// earnings between m/3 and m.
    fn residual_change(&self, panel: &Panel, frame: &Frame, person: usize, year: i32, z: i32) -> Option<f64> {
        if !frame.in_lx(person, year, z) {
            return None;
        }
        let e0 = self.eps(person, year)?;
        let e1 = self.eps_of(panel, person, year + z, frame.earnings(person, year + z)?)?;
        Some(e1 - e0)
    }
}

/// Which consecutive-year pairs enter the arc-change volatility.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcPairs {
    /// Both years have positive earnings.
    #[default]
    BothPositive,
    /// At least one year has positive earnings (changes of +/-2 included).
    AnyPositive,
}

/// (x1 - x0) / ((x1 + x0) / 2).
pub fn arc_change(x0: f64, x1: f64) -> Option<f64> {
    let s = x0 + x1;
    (s > 0.0).then(|| 2.0 * (x1 - x0) / s)
}

/// Long-term measures for one cohort member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTermRecord {
    pub person: usize,
    pub w: f64,
    pub years_full: u32,
    pub years_partial: u32,
    pub years_inactive: u32,
    pub period_active: [bool; 3],
    pub long_term_active: bool,
    /// Relative change of mean earnings from the first to the last period.
    pub growth: Option<f64>,
    pub arc_volatility: Option<f64>,
    /// Mean annual hours over the window, zeros included; `None` when any job
    /// lacks hours.
    pub avg_hours: Option<f64>,
}

/// (1/Y) sum of annual earnings over the window, zero years included.
pub fn longterm_average_w(grid: &EarningsGrid, person: usize, first: i32, last: i32) -> f64 {
    let n = (last - first + 1) as f64;
    (first..=last).map(|y| grid.raw_total(person, y)).sum::<f64>() / n
}

/// Activity classification and long-term summaries for one person.
pub fn activity_summary(
    panel: &Panel,
    grid: &EarningsGrid,
    rules: &SampleRules,
    person: usize,
    arc: ArcPairs,
) -> LongTermRecord {
    let (a, b) = (rules.cohort_start, rules.cohort_end());
    let years: Vec<i32> = (a..=b).collect();
    let n = years.len();
    let earn: Vec<f64> = years.iter().map(|&y| grid.raw_total(person, y)).collect();
    let mut full = 0;
    let mut partial = 0;
    let mut inactive = 0;
    let mut active = vec![false; n];
    for (k, &y) in years.iter().enumerate() {
        match grid.quarter_pattern(person, y).count_ones() {
            4 => full += 1,
            0 => inactive += 1,
            _ => partial += 1,
        }
        active[k] = grid.quarter_pattern(person, y) != 0;
    }
    let bounds = [0, n / 3, 2 * n / 3, n];
    let period_active: [bool; 3] = std::array::from_fn(|i| active[bounds[i]..bounds[i + 1]].iter().any(|&x| x));
    let long_term_active = period_active.iter().all(|&x| x);
    let mean_of = |i: usize| {
        let s = &earn[bounds[i]..bounds[i + 1]];
        s.iter().sum::<f64>() / s.len() as f64
    };
    let growth = if long_term_active && n >= 3 {
        let m1 = mean_of(0);
        (m1 > 0.0).then(|| (mean_of(2) - m1) / m1)
    } else {
        None
    };
    let changes: Vec<f64> = earn
        .windows(2)
        .filter(|w| match arc {
            ArcPairs::BothPositive => w[0] > 0.0 && w[1] > 0.0,
            ArcPairs::AnyPositive => w[0] > 0.0 || w[1] > 0.0,
        })
        .filter_map(|w| arc_change(w[0], w[1]))
        .collect();
    let mut hours = Some(0.0);
    for &y in &years {
        for j in panel.jobs_in(person, y) {
            hours = match (hours, j.hours) {
                (Some(h), Some(x)) => Some(h + x),
                _ => None,
            };
        }
    }
    LongTermRecord {
        person,
        w: longterm_average_w(grid, person, a, b),
        years_full: full,
        years_partial: partial,
        years_inactive: inactive,
        period_active,
        long_term_active,
        growth,
        arc_volatility: stats::variance(&changes),
        avg_hours: hours.map(|h| h / n as f64),
    }
}

/// Long-term records for every cohort member, in member order.
pub fn longterm_table(
    panel: &Panel,
    grid: &EarningsGrid,
    rules: &SampleRules,
    cohort: &AnalysisSample,
    arc: ArcPairs,
) -> Vec<LongTermRecord> {
    cohort
        .members
        .par_iter()
        .map(|&p| activity_summary(panel, grid, rules, p, arc))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{JobYearRecord, MinWageSeries, PersonRecord};
    use crate::samples::EarningsFloor;
    use crate::{RaceEth, Sex};

    fn person(id: &str, birth: i32) -> PersonRecord {
        PersonRecord {
            person_id: id.into(),
            sex: Sex::Male,
            race_eth: RaceEth::WhiteNH,
            foreign_born: false,
            birth_year: birth,
            death_year: None,
            ssn_active: true,
            education: None,
            state: "CA".parse().unwrap(),
        }
    }

    fn job(p: &str, year: i32, q: [f64; 4]) -> JobYearRecord {
        JobYearRecord {
            person_id: p.into(),
            employer_id: "f".into(),
            year,
            q_earnings: q,
            industry_sector: "G".parse().unwrap(),
            state: "CA".parse().unwrap(),
            hours: Some(500.0),
        }
    }

    fn frame_for(panel: &Panel) -> Frame {
        let (a, b) = panel.span();
        let mw = MinWageSeries::new((a..=b).map(|y| (y, 7.25)).collect()).unwrap();
        let floor = EarningsFloor::nominal(&mw, 1.0).unwrap();
        Frame::build(panel, &EarningsGrid::build(panel), &floor, &SampleRules::default()).unwrap()
    }

    #[test]
    fn p3_examples() {
        let persons = vec![person("a", 1970), person("b", 1970), person("c", 1970)];
        let jobs = vec![
            job("a", 2000, [30000.0, 0.0, 0.0, 0.0]),
            job("a", 2002, [15000.0, 0.0, 0.0, 0.0]),
            job("b", 2000, [500.0, 0.0, 0.0, 0.0]),
            job("b", 2001, [400.0, 0.0, 0.0, 0.0]),
            job("b", 2002, [300.0, 0.0, 0.0, 0.0]),
            job("c", 2000, [9000.0, 0.0, 0.0, 0.0]),
            job("c", 2001, [9000.0, 0.0, 0.0, 0.0]),
            job("c", 2002, [9000.0, 0.0, 0.0, 0.0]),
        ];
        let panel = Panel::from_records(persons, jobs).unwrap().with_span(2000, 2002);
        let f = frame_for(&panel);
        assert_eq!(permanent_p3(&f, 0, 2002), Some(15000.0));
        assert_eq!(permanent_p3(&f, 1, 2002), None);
        assert_eq!(permanent_p3(&f, 2, 2002), Some(9000.0));
        assert_eq!(permanent_p3(&f, 2, 2001), None);
    }

    #[test]
    fn demean_examples() {
        let d = cell_demean(&[1, 1], &[10.0, 12.0]);
        assert_eq!(d.residual, vec![-1.0, 1.0]);
        let d = cell_demean(&[1, 2, 2], &[5.0, 3.0, 3.0]);
        assert_eq!(d.residual, vec![0.0, 0.0, 0.0]);
        assert_eq!(d.singleton, vec![true, false, false]);
    }

    #[test]
    fn w_and_activity_examples() {
        let persons = vec![person("a", 1970), person("b", 1970), person("c", 1970)];
        let mut jobs = Vec::new();
        for y in 2004..=2015 {
            jobs.push(job("a", y, [6000.0; 4]));
            if y < 2010 {
                jobs.push(job("b", y, [10000.0; 4]));
            }
        }
        jobs.push(job("c", 2011, [0.0, 0.0, 1200.0, 0.0]));
        let panel = Panel::from_records(persons, jobs).unwrap().with_span(2004, 2015);
        let grid = EarningsGrid::build(&panel);
        let r = SampleRules::default();
        assert_eq!(longterm_average_w(&grid, 0, 2004, 2015), 24000.0);
        assert_eq!(longterm_average_w(&grid, 1, 2004, 2015), 20000.0);
        assert_eq!(longterm_average_w(&grid, 2, 2004, 2015), 100.0);
        let c = activity_summary(&panel, &grid, &r, 2, ArcPairs::BothPositive);
        assert_eq!((c.years_full, c.years_partial, c.years_inactive), (0, 1, 11));
        assert!(!c.long_term_active && c.growth.is_none());
        let a = activity_summary(&panel, &grid, &r, 0, ArcPairs::BothPositive);
        assert_eq!(a.growth, Some(0.0));
        assert_eq!(a.arc_volatility, Some(0.0));
        assert_eq!(a.avg_hours, Some(500.0));
        assert_eq!(arc_change(100.0, 300.0), Some(1.0));
    }
}
