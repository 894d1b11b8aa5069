//! Person and job-year data model, deflation and annual earnings.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::codes::{Division, Education, Group, RaceEth, Sector, Sex, State};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub person_id: String,
    pub sex: Sex,
    pub race_eth: RaceEth,
    pub foreign_born: bool,
    pub birth_year: i32,
    pub death_year: Option<i32>,
    pub ssn_active: bool,
    pub education: Option<Education>,
    pub state: State,
}

impl PersonRecord {
    pub fn group(&self) -> Group {
        Group {
            foreign_born: self.foreign_born,
            sex: self.sex,
            race_eth: self.race_eth,
        }
    }

    /// Age in calendar year `year` (no birthdays).
    pub fn age(&self, year: i32) -> i32 {
        year - self.birth_year
    }

    pub fn alive_in(&self, year: i32) -> bool {
        self.death_year.is_none_or(|d| d >= year)
    }

    pub fn division(&self) -> Division {
        self.state.division()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobYearRecord {
    pub person_id: String,
    pub employer_id: String,
    pub year: i32,
    pub q_earnings: [f64; 4],
    pub industry_sector: Sector,
    pub state: State,
    pub hours: Option<f64>,
}

/// Sum of four quarterly amounts, paired as `(q1 + q2) + (q3 + q4)`.
#[inline]
pub fn quarter_sum(q: &[f64; 4]) -> f64 {
    (q[0] + q[1]) + (q[2] + q[3])
}

/// Bit `k` set when quarter `k` has positive earnings.
#[inline]
pub fn quarter_pattern(q: &[f64; 4]) -> u8 {
    q.iter()
        .enumerate()
        .fold(0u8, |m, (k, &v)| if v > 0.0 { m | (1 << k) } else { m })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeflatorSeries {
    pub index: BTreeMap<i32, f64>,
    pub reference_year: i32,
}

impl DeflatorSeries {
    pub fn new(index: BTreeMap<i32, f64>, reference_year: i32) -> Result<Self> {
        for (&year, &v) in &index {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    "deflator.index",
                    format!("index for {year} must be positive, got {v}"),
                ));
            }
        }
        if !index.contains_key(&reference_year) {
            return Err(Error::MissingYear {
                series: "deflator",
                year: reference_year,
            });
        }
        Ok(Self {
            index,
            reference_year,
        })
    }

    pub fn with_reference(&self, reference_year: i32) -> Result<Self> {
        Self::new(self.index.clone(), reference_year)
    }

    pub fn index_for(&self, year: i32) -> Result<f64> {
        self.index.get(&year).copied().ok_or(Error::MissingYear {
            series: "deflator",
            year,
        })
    }

    /// Multiplier taking nominal amounts in `year` to reference-year currency.
    pub fn factor(&self, year: i32) -> Result<f64> {
        Ok(self.index_for(self.reference_year)? / self.index_for(year)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinWageSeries {
    pub wage: BTreeMap<i32, f64>,
}

impl MinWageSeries {
    pub fn new(wage: BTreeMap<i32, f64>) -> Result<Self> {
        for (&year, &v) in &wage {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    "minwage.min_wage",
                    format!("minimum wage for {year} must be positive, got {v}"),
                ));
            }
        }
        Ok(Self { wage })
    }

    pub fn get(&self, year: i32) -> Result<f64> {
        self.wage.get(&year).copied().ok_or(Error::MissingYear {
            series: "minimum wage",
            year,
        })
    }
}

/// (state, year) cells with non-reporting quarters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageMask {
    pub cells: BTreeSet<(State, i32)>,
}

impl CoverageMask {
    pub fn contains(&self, state: State, year: i32) -> bool {
        self.cells.contains(&(state, year))
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// A job-year row with interned person and employer indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub person: usize,
    pub employer: usize,
    pub year: i32,
    pub q: [f64; 4],
    pub sector: Sector,
    pub state: State,
    pub hours: Option<f64>,
}

impl Job {
    #[inline]
    pub fn earnings(&self) -> f64 {
        quarter_sum(&self.q)
    }
}

/// Immutable panel snapshot: persons sorted by id, jobs sorted by
/// (person, year, employer).
#[derive(Debug, Clone)]
pub struct Panel {
    persons: Vec<PersonRecord>,
    employers: Vec<String>,
    jobs: Vec<Job>,
    offsets: Vec<usize>,
    span: (i32, i32),
    real_reference: Option<i32>,
    missing: HashSet<(usize, i32)>,
}

impl Panel {
    /// Builds a panel, rejecting orphan jobs and duplicate (person, employer, year) keys.
    pub fn from_records(mut persons: Vec<PersonRecord>, jobs: Vec<JobYearRecord>) -> Result<Self> {
        persons.sort_by(|a, b| a.person_id.cmp(&b.person_id));
        for w in persons.windows(2) {
            if w[0].person_id == w[1].person_id {
                return Err(Error::DuplicatePerson(w[0].person_id.clone()));
            }
        }
        for p in &persons {
            if let Some(d) = p.death_year {
                if d < p.birth_year {
                    return Err(Error::Other(format!(
                        "person `{}` has death_year {d} before birth_year {}",
                        p.person_id, p.birth_year
                    )));
                }
            }
        }
        let mut employers: Vec<String> = jobs.iter().map(|j| j.employer_id.clone()).collect();
        employers.sort();
        employers.dedup();

        let mut rows = Vec::with_capacity(jobs.len());
        for (row, j) in jobs.into_iter().enumerate() {
            let person = persons
                .binary_search_by(|p| p.person_id.as_str().cmp(&j.person_id))
                .map_err(|_| Error::OrphanJob {
                    row: row + 1,
                    person_id: j.person_id.clone(),
                })?;
            if j.q_earnings.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::schema(
                    "jobs",
                    row + 1,
                    "q1..q4",
                    "quarterly earnings must be finite and non-negative",
                ));
            }
            let employer = employers
                .binary_search(&j.employer_id)
                .expect("employer interned above");
            rows.push(Job {
                person,
                employer,
                year: j.year,
                q: j.q_earnings,
                sector: j.industry_sector,
                state: j.state,
                hours: j.hours,
            });
        }
        rows.sort_by_key(|j| (j.person, j.year, j.employer));
        for w in rows.windows(2) {
            if (w[0].person, w[0].year, w[0].employer) == (w[1].person, w[1].year, w[1].employer) {
                return Err(Error::DuplicateKey {
                    person_id: persons[w[0].person].person_id.clone(),
                    employer_id: employers[w[0].employer].clone(),
                    year: w[0].year,
                });
            }
        }
        let span = match (rows.iter().map(|j| j.year).min(), rows.iter().map(|j| j.year).max()) {
            (Some(a), Some(b)) => (a, b),
            _ => (0, -1),
        };
        Ok(Self::assemble(persons, employers, rows, span, None, HashSet::new()))
    }

    fn assemble(
        persons: Vec<PersonRecord>,
        employers: Vec<String>,
        jobs: Vec<Job>,
        span: (i32, i32),
        real_reference: Option<i32>,
        missing: HashSet<(usize, i32)>,
    ) -> Self {
        let mut offsets = vec![0usize; persons.len() + 1];
        for j in &jobs {
            offsets[j.person + 1] += 1;
        }
        for i in 0..persons.len() {
            offsets[i + 1] += offsets[i];
        }
        Self {
            persons,
            employers,
            jobs,
            offsets,
            span,
            real_reference,
            missing,
        }
    }

    /// Overrides the analysis span (defaults to the range of job years).
    pub fn with_span(mut self, first: i32, last: i32) -> Self {
        self.span = (first, last);
        self
    }

    pub fn persons(&self) -> &[PersonRecord] {
        &self.persons
    }

    pub fn person(&self, idx: usize) -> &PersonRecord {
        &self.persons[idx]
    }

    pub fn person_index(&self, person_id: &str) -> Option<usize> {
        self.persons
            .binary_search_by(|p| p.person_id.as_str().cmp(person_id))
            .ok()
    }

    pub fn employers(&self) -> &[String] {
        &self.employers
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn job_range(&self, person: usize) -> Range<usize> {
        self.offsets[person]..self.offsets[person + 1]
    }

    pub fn jobs_of(&self, person: usize) -> &[Job] {
        &self.jobs[self.job_range(person)]
    }

    /// Jobs of `person` in `year`.
    pub fn jobs_in(&self, person: usize, year: i32) -> &[Job] {
        let js = self.jobs_of(person);
        let lo = js.partition_point(|j| j.year < year);
        let hi = js.partition_point(|j| j.year <= year);
        &js[lo..hi]
    }

    pub fn span(&self) -> (i32, i32) {
        self.span
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.span.0..=self.span.1
    }

    pub fn n_years(&self) -> usize {
        (self.span.1 - self.span.0 + 1).max(0) as usize
    }

    pub fn contains_year(&self, year: i32) -> bool {
        (self.span.0..=self.span.1).contains(&year)
    }

    pub fn check_year(&self, year: i32) -> Result<()> {
        if self.contains_year(year) {
            Ok(())
        } else {
            Err(Error::OutsideSpan {
                year,
                first: self.span.0,
                last: self.span.1,
            })
        }
    }

    /// Reference year of the currency, `None` while amounts are nominal.
    pub fn real_reference(&self) -> Option<i32> {
        self.real_reference
    }

    /// True when the person-year was set missing by the coverage mask.
    pub fn is_masked(&self, person: usize, year: i32) -> bool {
        self.missing.contains(&(person, year))
    }

    /// Sum of all job earnings of `person` in `year`; zero when no job rows exist.
    pub fn annual_earnings(&self, person: usize, year: i32) -> f64 {
        self.jobs_in(person, year).iter().map(Job::earnings).sum()
    }

    /// Returns a copy with every amount in reference-year currency.
    pub fn deflate(&self, deflator: &DeflatorSeries) -> Result<Panel> {
        self.rescale(deflator, false)
            .map(|p| Panel { real_reference: Some(deflator.reference_year), ..p })
    }

    /// Inverse of [`Panel::deflate`].
    pub fn reinflate(&self, deflator: &DeflatorSeries) -> Result<Panel> {
        self.rescale(deflator, true)
            .map(|p| Panel { real_reference: None, ..p })
    }

    fn rescale(&self, deflator: &DeflatorSeries, inverse: bool) -> Result<Panel> {
        let mut factors = BTreeMap::new();
        for j in &self.jobs {
            if let std::collections::btree_map::Entry::Vacant(e) = factors.entry(j.year) {
                let f = deflator.factor(j.year)?;
                e.insert(if inverse { 1.0 / f } else { f });
            }
        }
        let jobs = self
            .jobs
            .iter()
            .map(|j| {
                let f = factors[&j.year];
                let mut q = j.q;
                q.iter_mut().for_each(|v| *v *= f);
                Job { q, ..j.clone() }
            })
            .collect();
        Ok(Panel::assemble(
            self.persons.clone(),
            self.employers.clone(),
            jobs,
            self.span,
            self.real_reference,
            self.missing.clone(),
        ))
    }

    /// State of the person's highest-earnings job-year (earliest on ties),
    /// falling back to the recorded residence state.
    pub fn dominant_state(&self, person: usize) -> State {
        let mut best: Option<&Job> = None;
        for j in self.jobs_of(person) {
            if best.is_none_or(|b| j.earnings() > b.earnings()) {
                best = Some(j);
            }
        }
        best.map(|j| j.state).unwrap_or(self.persons[person].state)
    }

    pub fn person_division(&self, person: usize) -> Division {
        self.dominant_state(person).division()
    }

    /// Drops job rows in masked (state, year) cells. A person-year becomes
    /// missing when all its rows were masked, or when it has no rows and the
    /// person's dominant state is masked that year.
    pub fn apply_mask(&self, mask: &CoverageMask) -> Panel {
        if mask.is_empty() {
            return self.clone();
        }
        let mut missing = self.missing.clone();
        let mut kept = Vec::with_capacity(self.jobs.len());
        for p in 0..self.persons.len() {
            let home = self.dominant_state(p);
            for year in self.years() {
                let js = self.jobs_in(p, year);
                if js.is_empty() {
                    if mask.contains(home, year) {
                        missing.insert((p, year));
                    }
                    continue;
                }
                let before = kept.len();
                kept.extend(js.iter().filter(|j| !mask.contains(j.state, j.year)).cloned());
                if kept.len() == before {
                    missing.insert((p, year));
                }
            }
            // rows outside the span are carried through untouched
            kept.extend(
                self.jobs_of(p)
                    .iter()
                    .filter(|j| !self.contains_year(j.year) && !mask.contains(j.state, j.year))
                    .cloned(),
            );
        }
        kept.sort_by_key(|j| (j.person, j.year, j.employer));
        Panel::assemble(
            self.persons.clone(),
            self.employers.clone(),
            kept,
            self.span,
            self.real_reference,
            missing,
        )
    }

    /// Converts back to flat records (for CSV emission).
    pub fn job_records(&self) -> Vec<JobYearRecord> {
        self.jobs
            .iter()
            .map(|j| JobYearRecord {
                person_id: self.persons[j.person].person_id.clone(),
                employer_id: self.employers[j.employer].clone(),
                year: j.year,
                q_earnings: j.q,
                industry_sector: j.sector,
                state: j.state,
                hours: j.hours,
            })
            .collect()
    }

    /// Replaces person records (same ids, same order), e.g. after imputation.
    pub fn with_persons(&self, persons: Vec<PersonRecord>) -> Result<Panel> {
        if persons.len() != self.persons.len()
            || persons
                .iter()
                .zip(&self.persons)
                .any(|(a, b)| a.person_id != b.person_id)
        {
            return Err(Error::Other("replacement persons must keep ids and order".into()));
        }
        Ok(Panel { persons, ..self.clone() })
    }

    /// Replaces job hours in job order, e.g. after imputation.
    pub fn with_hours(&self, hours: &[Option<f64>]) -> Result<Panel> {
        if hours.len() != self.jobs.len() {
            return Err(Error::Other("hours column length mismatch".into()));
        }
        let jobs = self
            .jobs
            .iter()
            .zip(hours)
            .map(|(j, h)| Job { hours: *h, ..j.clone() })
            .collect();
        Ok(Panel { jobs, ..self.clone() })
    }
}

/// Per person-year status in the earnings grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Observed,
    /// More than 12 employers: the annual report is discarded.
    Discarded,
    /// Missing because of a coverage-mask gap.
    Masked,
}

/// Maximum number of distinct employers before a year's report is discarded.
pub const MAX_EMPLOYERS: usize = 12;

/// Dense person x year view of annual earnings over the panel span.
#[derive(Debug, Clone)]
pub struct EarningsGrid {
    first_year: i32,
    n_years: usize,
    totals: Vec<f64>,
    patterns: Vec<u8>,
    employers: Vec<u16>,
    status: Vec<CellStatus>,
}

impl EarningsGrid {
    pub fn build(panel: &Panel) -> Self {
        let (first_year, _) = panel.span();
        let n_years = panel.n_years();
        let n = panel.persons().len() * n_years;
        let mut totals = vec![0.0; n];
        let mut patterns = vec![0u8; n];
        let mut employers = vec![0u16; n];
        let mut status = vec![CellStatus::Observed; n];
        for p in 0..panel.persons().len() {
            for (k, year) in panel.years().enumerate() {
                let cell = p * n_years + k;
                let js = panel.jobs_in(p, year);
                totals[cell] = js.iter().map(Job::earnings).sum();
                let mut quarters = [0.0f64; 4];
                for j in js {
                    for (acc, v) in quarters.iter_mut().zip(j.q) {
                        *acc += v;
                    }
                }
                patterns[cell] = quarter_pattern(&quarters);
                employers[cell] = js.len().min(u16::MAX as usize) as u16;
                status[cell] = if panel.is_masked(p, year) {
                    CellStatus::Masked
                } else if js.len() > MAX_EMPLOYERS && totals[cell] > 0.0 {
                    CellStatus::Discarded
                } else {
                    CellStatus::Observed
                };
            }
        }
        Self {
            first_year,
            n_years,
            totals,
            patterns,
            employers,
            status,
        }
    }

    #[inline]
    fn cell(&self, person: usize, year: i32) -> Option<usize> {
        let k = year - self.first_year;
        (k >= 0 && (k as usize) < self.n_years).then(|| person * self.n_years + k as usize)
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.n_years as i32 - 1
    }

    pub fn n_persons(&self) -> usize {
        self.totals.len().checked_div(self.n_years).unwrap_or(0)
    }

    /// Annual earnings, `None` when outside the span, discarded or masked.
    pub fn earnings(&self, person: usize, year: i32) -> Option<f64> {
        let c = self.cell(person, year)?;
        (self.status[c] == CellStatus::Observed).then_some(self.totals[c])
    }

    /// Raw annual total regardless of status (zero outside the span).
    pub fn raw_total(&self, person: usize, year: i32) -> f64 {
        self.cell(person, year).map_or(0.0, |c| self.totals[c])
    }

    pub fn status(&self, person: usize, year: i32) -> Option<CellStatus> {
        self.cell(person, year).map(|c| self.status[c])
    }

    /// Bitmask of quarters with positive earnings (summed over jobs).
    pub fn quarter_pattern(&self, person: usize, year: i32) -> u8 {
        self.cell(person, year).map_or(0, |c| self.patterns[c])
    }

    pub fn n_employers(&self, person: usize, year: i32) -> usize {
        self.cell(person, year).map_or(0, |c| self.employers[c] as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn person(id: &str, birth: i32) -> PersonRecord {
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

    pub(crate) fn job(p: &str, f: &str, year: i32, q: [f64; 4]) -> JobYearRecord {
        JobYearRecord {
            person_id: p.into(),
            employer_id: f.into(),
            year,
            q_earnings: q,
            industry_sector: "E".parse().unwrap(),
            state: "CA".parse().unwrap(),
            hours: None,
        }
    }

    #[test]
    fn counts_persons_and_jobs() {
        let panel = Panel::from_records(
            vec![person("p1", 1970), person("p2", 1975)],
            vec![
                job("p1", "f1", 2005, [1.0, 1.0, 1.0, 1.0]),
                job("p1", "f2", 2005, [0.0, 0.0, 5000.0, 0.0]),
                job("p2", "f1", 2006, [3.0, 0.0, 0.0, 0.0]),
            ],
        )
        .unwrap();
        assert_eq!(panel.persons().len(), 2);
        assert_eq!(panel.jobs().len(), 3);
        assert_eq!(panel.span(), (2005, 2006));
    }

    #[test]
    fn orphan_job_is_rejected() {
        let err = Panel::from_records(
            vec![person("p1", 1970)],
            vec![job("p9", "f1", 2005, [1.0; 4])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::OrphanJob { ref person_id, .. } if person_id == "p9"));
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let err = Panel::from_records(
            vec![person("p1", 1970)],
            vec![job("p1", "f1", 2005, [1.0; 4]), job("p1", "f1", 2005, [2.0; 4])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { year: 2005, .. }));
    }

    fn deflator(pairs: &[(i32, f64)], reference: i32) -> DeflatorSeries {
        DeflatorSeries::new(pairs.iter().copied().collect(), reference).unwrap()
    }

    #[test]
    fn deflation_ratio_zero_and_identity() {
        let panel = Panel::from_records(
            vec![person("p1", 1970)],
            vec![
                job("p1", "f1", 2000, [100.0, 0.0, 0.0, 0.0]),
                job("p1", "f1", 2010, [100.0, 0.0, 0.0, 0.0]),
            ],
        )
        .unwrap();
        let d = deflator(&[(2000, 50.0), (2010, 100.0)], 2010);
        let real = panel.deflate(&d).unwrap();
        assert_eq!(real.jobs()[0].q, [200.0, 0.0, 0.0, 0.0]);
        assert_eq!(real.jobs()[1].q, [100.0, 0.0, 0.0, 0.0]);
        assert_eq!(real.real_reference(), Some(2010));
    }

    #[test]
    fn missing_deflator_year() {
        let panel =
            Panel::from_records(vec![person("p1", 1970)], vec![job("p1", "f1", 2001, [1.0; 4])])
                .unwrap();
        let d = deflator(&[(2000, 50.0)], 2000);
        assert!(matches!(
            panel.deflate(&d),
            Err(Error::MissingYear { year: 2001, .. })
        ));
    }

    #[test]
    fn annual_earnings_sums_jobs_and_quarters() {
        let panel = Panel::from_records(
            vec![person("p1", 1970)],
            vec![
                job("p1", "f1", 2005, [3000.0, 3000.0, 3000.0, 3000.0]),
                job("p1", "f2", 2005, [2000.0, 2000.0, 2000.0, 2000.0]),
                job("p1", "f3", 2007, [0.0, 0.0, 5000.0, 0.0]),
            ],
        )
        .unwrap();
        assert_eq!(panel.annual_earnings(0, 2005), 20000.0);
        assert_eq!(panel.annual_earnings(0, 2006), 0.0);
        assert_eq!(panel.annual_earnings(0, 2007), 5000.0);
    }

    #[test]
    fn mask_removes_rows_not_persons() {
        let ny: State = "NY".parse().unwrap();
        let mut j2 = job("p2", "f2", 2005, [10.0; 4]);
        j2.state = ny;
        let panel = Panel::from_records(
            vec![person("p1", 1970), person("p2", 1970)],
            vec![job("p1", "f1", 2005, [10.0; 4]), j2, job("p2", "f2", 2006, [1.0; 4])],
        )
        .unwrap();
        let mask = CoverageMask {
            cells: [(ny, 2005)].into_iter().collect(),
        };
        let masked = panel.apply_mask(&mask);
        assert_eq!(masked.persons().len(), 2);
        assert_eq!(masked.jobs().len(), 2);
        assert!(masked.is_masked(1, 2005));
        assert!(!masked.is_masked(0, 2005));
        let grid = EarningsGrid::build(&masked);
        assert_eq!(grid.earnings(1, 2005), None);
        assert_eq!(grid.earnings(0, 2005), Some(40.0));
    }

    #[test]
    fn thirteen_employers_discards_year() {
        let jobs = (0..13)
            .map(|k| job("p1", &format!("f{k:02}"), 2005, [1.0, 0.0, 0.0, 0.0]))
            .collect();
        let panel = Panel::from_records(vec![person("p1", 1970)], jobs).unwrap();
        let grid = EarningsGrid::build(&panel);
        assert_eq!(grid.status(0, 2005), Some(CellStatus::Discarded));
        assert_eq!(grid.earnings(0, 2005), None);
    }
}
