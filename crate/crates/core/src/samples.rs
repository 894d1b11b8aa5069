//! Eligibility rules, the eight yearly analysis samples and the 12-year cohort.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{CellStatus, DeflatorSeries, EarningsGrid, MinWageSeries, Panel};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SampleKind {
    Bs,
    Cs,
    Lx1,
    Lx5,
    H1,
    H5,
    Pa5,
    Pa10,
    Cohort12,
}

impl SampleKind {
    /// The yearly samples, in table order.
    pub const YEARLY: [SampleKind; 8] = [
        SampleKind::Bs,
        SampleKind::Cs,
        SampleKind::Lx1,
        SampleKind::Lx5,
        SampleKind::H1,
        SampleKind::H5,
        SampleKind::Pa5,
        SampleKind::Pa10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SampleKind::Bs => "BS",
            SampleKind::Cs => "CS",
            SampleKind::Lx1 => "LX_1",
            SampleKind::Lx5 => "LX_5",
            SampleKind::H1 => "H_1",
            SampleKind::H5 => "H_5",
            SampleKind::Pa5 => "PA_5",
            SampleKind::Pa10 => "PA_10",
            SampleKind::Cohort12 => "COHORT12",
        }
    }

    /// Forward horizon z of the kind (0 for BS, CS and COHORT12).
    pub fn horizon(self) -> i32 {
        match self {
            SampleKind::Lx1 | SampleKind::H1 => 1,
            SampleKind::Lx5 | SampleKind::H5 | SampleKind::Pa5 => 5,
            SampleKind::Pa10 => 10,
            _ => 0,
        }
    }

    /// Years before t the kind's measures look back to.
    pub fn lookback(self) -> i32 {
        match self {
            // P in t-1 averages t-3..t-1
            SampleKind::H1 | SampleKind::H5 => 3,
            SampleKind::Pa5 | SampleKind::Pa10 => 2,
            _ => 0,
        }
    }

    /// The kind this one is nested in.
    pub fn parent(self) -> Option<SampleKind> {
        match self {
            SampleKind::Bs | SampleKind::Cohort12 => None,
            SampleKind::Cs | SampleKind::Pa5 | SampleKind::Pa10 => Some(SampleKind::Bs),
            SampleKind::Lx1 | SampleKind::Lx5 => Some(SampleKind::Cs),
            SampleKind::H1 => Some(SampleKind::Lx1),
            SampleKind::H5 => Some(SampleKind::Lx5),
        }
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SampleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        SampleKind::YEARLY
            .into_iter()
            .chain([SampleKind::Cohort12])
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown sample kind `{s}`"))
    }
}

/// Annual earnings floor m_t and the winsorization quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarningsFloor {
    pub m: BTreeMap<i32, f64>,
    pub winsor_quantile: f64,
}

pub const DEFAULT_WINSOR_QUANTILE: f64 = 0.99999999;

impl EarningsFloor {
    /// m_t = 260 x minimum wage(t), in the currency of the minimum wage.
    pub fn nominal(min_wage: &MinWageSeries, winsor_quantile: f64) -> Result<Self> {
        Self::build(min_wage, None, winsor_quantile)
    }

    /// m_t = 260 x minimum wage(t) converted to the deflator's reference-year
    /// currency, matching deflated earnings.
    pub fn real(min_wage: &MinWageSeries, deflator: &DeflatorSeries, winsor_quantile: f64) -> Result<Self> {
        Self::build(min_wage, Some(deflator), winsor_quantile)
    }

    fn build(min_wage: &MinWageSeries, deflator: Option<&DeflatorSeries>, q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::config("winsor_quantile", format!("{q} outside (0, 1]")));
        }
        let mut m = BTreeMap::new();
        for (&year, &w) in &min_wage.wage {
            let f = match deflator {
                Some(d) => d.factor(year)?,
                None => 1.0,
            };
            let v = 260.0 * w * f;
            if !(v > 0.0) {
                return Err(Error::config("min_wage", format!("floor for {year} is not positive")));
            }
            m.insert(year, v);
        }
        Ok(Self { m, winsor_quantile: q })
    }

    pub fn m(&self, year: i32) -> Result<f64> {
        self.m.get(&year).copied().ok_or(Error::MissingYear {
            series: "minimum wage",
            year,
        })
    }
}

/// Age band and cohort window rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleRules {
    pub age_lo: i32,
    pub age_hi: i32,
    pub cohort_start: i32,
    pub cohort_years: i32,
    pub cohort_age_lo: i32,
    pub cohort_age_hi: i32,
}

impl Default for SampleRules {
    fn default() -> Self {
        Self {
            age_lo: 25,
            age_hi: 55,
            cohort_start: 2004,
            cohort_years: 12,
            cohort_age_lo: 25,
            cohort_age_hi: 54,
        }
    }
}

impl SampleRules {
    pub fn cohort_end(&self) -> i32 {
        self.cohort_start + self.cohort_years - 1
    }
}

/// A named membership set. Members are person indices in increasing order;
/// `year` is `None` for the cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSample {
    pub kind: SampleKind,
    pub year: Option<i32>,
    pub members: Vec<usize>,
    pub provenance: String,
}

impl AnalysisSample {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, person: usize) -> bool {
        self.members.binary_search(&person).is_ok()
    }

    /// True when every member is also in `other`.
    pub fn is_subset_of(&self, other: &AnalysisSample) -> bool {
        self.members.iter().all(|&p| other.contains(p))
    }
}

/// Persons aged `age_lo..=age_hi` in `year`, alive and with an active SSN.
pub fn eligible_workers(panel: &Panel, year: i32, age_lo: i32, age_hi: i32) -> Vec<usize> {
    panel
        .persons()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.ssn_active && p.alive_in(year) && (age_lo..=age_hi).contains(&p.age(year)))
        .map(|(i, _)| i)
        .collect()
}

/// The `q` quantile of `reference`, used as the winsorization cap. At `q = 1`
/// it is the maximum, so capping is the identity.
pub fn winsor_threshold(reference: &[f64], q: f64) -> Option<f64> {
    stats::quantile(reference, q).ok()
}

#[inline]
pub fn winsorize(v: f64, threshold: Option<f64>) -> f64 {
    match threshold {
        Some(t) if v > t => t,
        _ => v,
    }
}

/// Person x year frame of annual earnings with eligibility flags and per-year
/// winsorization applied.
#[derive(Debug, Clone)]
pub struct Frame {
    first: i32,
    n_years: usize,
    n_persons: usize,
    /// Winsorized annual earnings; `None` when missing (masked or discarded).
    earnings: Vec<Option<f64>>,
    eligible: Vec<bool>,
    thresholds: BTreeMap<i32, f64>,
    floor: EarningsFloor,
    rules: SampleRules,
}

impl Frame {
    /// Builds the frame from a deflated, masked panel.
    pub fn build(panel: &Panel, grid: &EarningsGrid, floor: &EarningsFloor, rules: &SampleRules) -> Result<Self> {
        let (first, last) = panel.span();
        let n_years = panel.n_years();
        let n_persons = panel.persons().len();
        for y in first..=last {
            floor.m(y)?;
        }
        let mut earnings = vec![None; n_persons * n_years];
        let mut eligible = vec![false; n_persons * n_years];
        for (p, rec) in panel.persons().iter().enumerate() {
            for (k, y) in (first..=last).enumerate() {
                let c = p * n_years + k;
                earnings[c] = grid.earnings(p, y);
                eligible[c] = rec.ssn_active && rec.alive_in(y) && (rules.age_lo..=rules.age_hi).contains(&rec.age(y));
            }
        }
        let mut thresholds = BTreeMap::new();
        for (k, y) in (first..=last).enumerate() {
            let m = floor.m(y)?;
            let cs: Vec<f64> = (0..n_persons)
                .filter(|p| eligible[p * n_years + k])
                .filter_map(|p| earnings[p * n_years + k])
                .filter(|&v| v > m)
                .collect();
            if let Some(t) = winsor_threshold(&cs, floor.winsor_quantile) {
                thresholds.insert(y, t);
                for p in 0..n_persons {
                    if let Some(v) = earnings[p * n_years + k].as_mut() {
                        *v = winsorize(*v, Some(t));
                    }
                }
            }
        }
        Ok(Self {
            first,
            n_years,
            n_persons,
            earnings,
            eligible,
            thresholds,
            floor: floor.clone(),
            rules: rules.clone(),
        })
    }

    pub fn first_year(&self) -> i32 {
        self.first
    }

    pub fn last_year(&self) -> i32 {
        self.first + self.n_years as i32 - 1
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn n_persons(&self) -> usize {
        self.n_persons
    }

    pub fn floor(&self) -> &EarningsFloor {
        &self.floor
    }

    pub fn rules(&self) -> &SampleRules {
        &self.rules
    }

    pub fn contains_year(&self, year: i32) -> bool {
        year >= self.first && year <= self.last_year()
    }

    #[inline]
    pub fn index(&self, person: usize, year: i32) -> Option<usize> {
        self.contains_year(year).then(|| person * self.n_years + (year - self.first) as usize)
    }

    /// Winsorized annual earnings (zero for no job rows, `None` when missing
    /// or outside the span).
    pub fn earnings(&self, person: usize, year: i32) -> Option<f64> {
        self.earnings[self.index(person, year)?]
    }

    /// Age/alive/SSN eligibility for the yearly samples.
    pub fn eligible(&self, person: usize, year: i32) -> bool {
        self.index(person, year).is_some_and(|c| self.eligible[c])
    }

    pub fn threshold(&self, year: i32) -> Option<f64> {
        self.thresholds.get(&year).copied()
    }

    /// m_t (the frame validated that every span year has one).
    pub fn m(&self, year: i32) -> f64 {
        self.floor.m.get(&year).copied().unwrap_or(f64::NAN)
    }

    pub fn in_bs(&self, person: usize, year: i32) -> bool {
        self.eligible(person, year) && self.earnings(person, year).is_some_and(|v| v > 0.0)
    }

    pub fn in_cs(&self, person: usize, year: i32) -> bool {
        self.in_bs(person, year) && self.earnings(person, year).is_some_and(|v| v > self.m(year))
    }

    /// CS in t and earnings above a third of the floor in t+z.
    pub fn in_lx(&self, person: usize, year: i32, z: i32) -> bool {
        self.in_cs(person, year)
            && self
                .earnings(person, year + z)
                .is_some_and(|v| v > self.m(year + z) / 3.0)
    }
}

/// Source of the multi-year measures the H and PA samples depend on.
pub trait MeasureLookup {
    /// Residual permanent log earnings P for (person, year).
    fn perm_residual(&self, person: usize, year: i32) -> Option<f64>;
    /// Three-year permanent earnings P3 for (person, year).
    fn p3(&self, person: usize, year: i32) -> Option<f64>;
}

fn span_check(frame: &Frame, kind: SampleKind, year: i32) -> Result<()> {
    for y in [year - kind.lookback(), year + kind.horizon()] {
        if !frame.contains_year(y) {
            return Err(Error::OutsideSpan {
                year: y,
                first: frame.first_year(),
                last: frame.last_year(),
            });
        }
    }
    Ok(())
}

/// Membership of a yearly sample in `year`.
pub fn build_sample(
    frame: &Frame,
    measures: &dyn MeasureLookup,
    kind: SampleKind,
    year: i32,
) -> Result<AnalysisSample> {
    if kind == SampleKind::Cohort12 {
        return Err(Error::config("kind", "COHORT12 is built by build_cohort12"));
    }
    span_check(frame, kind, year)?;
    let z = kind.horizon();
    let test = |p: usize| -> bool {
        match kind {
            SampleKind::Bs => frame.in_bs(p, year),
            SampleKind::Cs => frame.in_cs(p, year),
            SampleKind::Lx1 | SampleKind::Lx5 => frame.in_lx(p, year, z),
            SampleKind::H1 | SampleKind::H5 => {
                frame.in_lx(p, year, z) && measures.perm_residual(p, year - 1).is_some()
            }
            SampleKind::Pa5 | SampleKind::Pa10 => {
                frame.in_bs(p, year) && measures.p3(p, year).is_some() && measures.p3(p, year + z).is_some()
            }
            SampleKind::Cohort12 => unreachable!(),
        }
    };
    let members: Vec<usize> = (0..frame.n_persons()).filter(|&p| test(p)).collect();
    let r = frame.rules();
    let provenance = match kind {
        SampleKind::Bs => format!("age {}-{}, alive, ssn active, y > 0", r.age_lo, r.age_hi),
        SampleKind::Cs => format!("BS and y > m_t = {:.2}", frame.m(year)),
        SampleKind::Lx1 | SampleKind::Lx5 => format!("CS and y(t+{z}) > m(t+{z})/3"),
        SampleKind::H1 | SampleKind::H5 => format!("LX_{z} and P(t-1) not missing"),
        _ => format!("BS and P3 not missing in t and t+{z}"),
    };
    Ok(AnalysisSample {
        kind,
        year: Some(year),
        members,
        provenance: format!("{provenance}; winsor quantile {}", frame.floor().winsor_quantile),
    })
}

/// Persons aged `cohort_age_lo..=cohort_age_hi` at the window start, alive
/// with an active SSN and an observed earnings record in every window year,
/// and with at least one positive quarter in the window.
pub fn build_cohort12(panel: &Panel, grid: &EarningsGrid, rules: &SampleRules) -> Result<AnalysisSample> {
    let (a, b) = (rules.cohort_start, rules.cohort_end());
    if rules.cohort_years < 1 {
        return Err(Error::config("cohort_years", "must be positive"));
    }
    let (first, last) = panel.span();
    if a < first || b > last {
        return Err(Error::OutsideSpan {
            year: if a < first { a } else { b },
            first,
            last,
        });
    }
    let members = panel
        .persons()
        .iter()
        .enumerate()
        .filter(|(p, rec)| {
            let age = rec.age(a);
            rec.ssn_active
                && (rules.cohort_age_lo..=rules.cohort_age_hi).contains(&age)
                && rec.alive_in(b)
                && (a..=b).all(|y| grid.status(*p, y) == Some(CellStatus::Observed))
                && (a..=b).any(|y| grid.quarter_pattern(*p, y) != 0)
        })
        .map(|(p, _)| p)
        .collect();
    Ok(AnalysisSample {
        kind: SampleKind::Cohort12,
        year: None,
        members,
        provenance: format!(
            "age {}-{} in {a}, alive and observed {a}-{b}, active at least one quarter",
            rules.cohort_age_lo, rules.cohort_age_hi
        ),
    })
}

/// One row of a sample-count table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCount {
    pub kind: SampleKind,
    pub year: Option<i32>,
    pub n: usize,
}

/// Counts for every yearly kind and year where the kind is defined, followed
/// by the cohort count.
pub fn sample_counts(frame: &Frame, measures: &dyn MeasureLookup, cohort: Option<&AnalysisSample>) -> Vec<SampleCount> {
    let mut out = Vec::new();
    for kind in SampleKind::YEARLY {
        for year in frame.first_year()..=frame.last_year() {
            if let Ok(s) = build_sample(frame, measures, kind, year) {
                out.push(SampleCount {
                    kind,
                    year: Some(year),
                    n: s.len(),
                });
            }
        }
    }
    if let Some(c) = cohort {
        out.push(SampleCount {
            kind: SampleKind::Cohort12,
            year: None,
            n: c.len(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{JobYearRecord, PersonRecord};

    struct NoMeasures;

    impl MeasureLookup for NoMeasures {
        fn perm_residual(&self, _: usize, _: i32) -> Option<f64> {
            None
        }
        fn p3(&self, _: usize, _: i32) -> Option<f64> {
            None
        }
    }

    fn person(id: &str, birth: i32, death: Option<i32>) -> PersonRecord {
        PersonRecord {
            person_id: id.into(),
            sex: crate::Sex::Male,
            race_eth: crate::RaceEth::WhiteNH,
            foreign_born: false,
            birth_year: birth,
            death_year: death,
            ssn_active: true,
            education: None,
            state: "CA".parse().unwrap(),
        }
    }

    fn job(p: &str, f: &str, year: i32, q: [f64; 4]) -> JobYearRecord {
        JobYearRecord {
            person_id: p.into(),
            employer_id: f.into(),
            year,
            q_earnings: q,
            industry_sector: "G".parse().unwrap(),
            state: "CA".parse().unwrap(),
            hours: None,
        }
    }

    fn flat_floor(years: std::ops::RangeInclusive<i32>, wage: f64) -> EarningsFloor {
        let mw = MinWageSeries::new(years.map(|y| (y, wage)).collect()).unwrap();
        EarningsFloor::nominal(&mw, 1.0).unwrap()
    }

    #[test]
    fn floor_examples() {
        let persons = vec![person("a", 1970, None), person("b", 1970, None)];
        let jobs = vec![
            job("a", "f", 2010, [1500.0, 0.0, 0.0, 0.0]),
            job("b", "f", 2010, [2000.0, 0.0, 0.0, 0.0]),
            job("b", "f", 2011, [700.0, 0.0, 0.0, 0.0]),
        ];
        let panel = Panel::from_records(persons, jobs).unwrap().with_span(2010, 2011);
        let grid = EarningsGrid::build(&panel);
        let floor = flat_floor(2010..=2011, 7.25);
        assert_eq!(floor.m(2010).unwrap(), 1885.0);
        let frame = Frame::build(&panel, &grid, &floor, &SampleRules::default()).unwrap();
        assert!(frame.in_bs(0, 2010) && !frame.in_cs(0, 2010));
        assert!(frame.in_lx(1, 2010, 1));
        let lx = build_sample(&frame, &NoMeasures, SampleKind::Lx1, 2010).unwrap();
        assert_eq!(lx.members, vec![1]);
        assert!(matches!(
            build_sample(&frame, &NoMeasures, SampleKind::Lx5, 2010),
            Err(Error::OutsideSpan { .. })
        ));
    }

    #[test]
    fn eligibility_bounds() {
        let persons = vec![person("a", 1986, None), person("b", 1970, Some(2009)), person("c", 1970, None)];
        let panel = Panel::from_records(persons, vec![]).unwrap().with_span(2010, 2010);
        assert_eq!(eligible_workers(&panel, 2010, 25, 55), vec![2]);
    }

    #[test]
    fn thirteen_employers_make_year_missing() {
        let persons = vec![person("a", 1970, None)];
        let jobs: Vec<_> = (0..13).map(|k| job("a", &format!("f{k}"), 2010, [5000.0, 0.0, 0.0, 0.0])).collect();
        let panel = Panel::from_records(persons, jobs).unwrap().with_span(2010, 2010);
        let grid = EarningsGrid::build(&panel);
        let frame = Frame::build(&panel, &grid, &flat_floor(2010..=2010, 7.25), &SampleRules::default()).unwrap();
        assert!(frame.eligible(0, 2010));
        assert_eq!(frame.earnings(0, 2010), None);
        assert!(!frame.in_bs(0, 2010));
    }

    #[test]
    fn cohort_examples() {
        let persons = vec![
            person("a", 1950, None),       // 54 in 2004
            person("b", 1970, Some(2010)), // dies
            person("c", 1949, None),       // 55 in 2004
        ];
        let jobs = vec![
            job("a", "f", 2011, [0.0, 300.0, 0.0, 0.0]),
            job("b", "f", 2005, [1000.0; 4]),
            job("c", "f", 2005, [1000.0; 4]),
        ];
        let panel = Panel::from_records(persons, jobs).unwrap().with_span(2004, 2015);
        let grid = EarningsGrid::build(&panel);
        let c = build_cohort12(&panel, &grid, &SampleRules::default()).unwrap();
        assert_eq!(c.members, vec![0]);
    }

    #[test]
    fn winsor_identity_and_cap() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let t1 = winsor_threshold(&v, 1.0);
        assert!(v.iter().all(|&x| winsorize(x, t1) == x));
        let t = winsor_threshold(&v, 0.9);
        assert_eq!(t, Some(90.0));
        assert_eq!(winsorize(95.0, t), 90.0);
        assert_eq!(winsorize(winsorize(95.0, t), t), 90.0);
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in SampleKind::YEARLY {
            assert_eq!(k.name().parse::<SampleKind>().unwrap(), k);
        }
    }
}
