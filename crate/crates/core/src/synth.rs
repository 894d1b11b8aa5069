//! Synthetic person/job-year panels with known person and firm effects.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! `(seed, person, year, tag)`, so a person's history does not depend on how
//! many other persons are generated or on thread scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{Education, Group, RaceEth, Sector, Sex, State};
use crate::error::{Error, Result};
use crate::io::CsvOut;
use crate::panel::{CoverageMask, DeflatorSeries, JobYearRecord, MinWageSeries, Panel, PersonRecord};

/// Parameters that vary by demographic group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupParams {
    pub share: f64,
    /// Mean and sd of the person effect (log real annual earnings).
    pub theta_mean: f64,
    pub theta_sd: f64,
    /// Shift of the latent firm-rank index; negative values sort the group
    /// toward low-effect firms.
    pub firm_tilt: f64,
    pub rho: f64,
    pub sigma: f64,
    pub participation: f64,
    pub full_year_prob: f64,
    /// Log hours = intercept + slope (log job earnings - 10)
    ///   + quarter_elasticity ln(quarters / 4) + noise.
    pub hours_intercept: f64,
    pub hours_slope: f64,
    pub hours_quarter_elasticity: f64,
    pub hours_noise: f64,
    /// LTHS, HS, SomeCollege, BAplus.
    pub education: [f64; 4],
    pub mobility: f64,
}

impl Default for GroupParams {
    fn default() -> Self {
        Self {
            share: 0.05,
            theta_mean: 10.2,
            theta_sd: 0.55,
            firm_tilt: 0.0,
            rho: 0.6,
            sigma: 0.25,
            participation: 0.88,
            full_year_prob: 0.8,
            hours_intercept: 1800f64.ln(),
            hours_slope: 0.35,
            hours_quarter_elasticity: 1.0,
            hours_noise: 0.15,
            education: [0.10, 0.28, 0.30, 0.32],
            mobility: 0.12,
        }
    }
}

impl GroupParams {
    /// Default parameters for a group, loosely patterned on the qualitative
    /// ordering of group earnings.
    pub fn for_group(g: Group) -> Self {
        let mut p = GroupParams::default();
        let (race_shift, tilt, educ) = match g.race_eth {
            RaceEth::AsianNH => (0.05, 0.05, [0.06, 0.15, 0.19, 0.60]),
            RaceEth::BlackNH => (-0.30, -0.20, [0.12, 0.33, 0.33, 0.22]),
            RaceEth::WhiteHisp => (-0.25, -0.20, [0.15, 0.32, 0.31, 0.22]),
            RaceEth::WhiteNH => (0.0, 0.0, [0.07, 0.27, 0.30, 0.36]),
            RaceEth::AllOther => (-0.20, -0.10, [0.12, 0.32, 0.33, 0.23]),
        };
        p.theta_mean += race_shift;
        p.firm_tilt = tilt;
        p.education = educ;
        if g.sex == Sex::Female {
            p.theta_mean -= 0.30;
            p.firm_tilt -= 0.10;
            p.sigma = 0.28;
            p.participation = 0.84;
            p.hours_intercept -= 0.08;
        }
        if g.race_eth == RaceEth::BlackNH {
            p.participation -= 0.03;
        }
        if g.foreign_born {
            p.theta_mean -= 0.10;
            p.mobility = 0.15;
            if g.race_eth == RaceEth::WhiteHisp {
                p.education = [0.40, 0.30, 0.18, 0.12];
            }
        }
        p.share = default_share(g);
        p
    }
}

fn default_share(g: Group) -> f64 {
    let base = match g.race_eth {
        RaceEth::AsianNH => [0.025, 0.006],
        RaceEth::BlackNH => [0.0085, 0.0525],
        RaceEth::WhiteHisp => [0.0425, 0.045],
        RaceEth::WhiteNH => [0.012, 0.2765],
        RaceEth::AllOther => [0.0105, 0.02],
    };
    base[usize::from(!g.foreign_born)]
}

/// Generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub n_persons: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub n_firms: usize,
    pub firm_effect_sd: f64,
    /// Correlation between a person's standardized effect and the latent
    /// firm-rank index.
    pub sorting_corr: f64,
    /// Indexed by group id (0 = reference).
    pub groups: Vec<GroupParams>,
    /// Overrides `groups[g].share` when present.
    pub shares: Option<Vec<f64>>,
    /// Additive person-effect shift by education (LTHS, HS, SomeCollege, BAplus).
    pub education_effect: [f64; 4],
    /// Linear and quadratic coefficients of log earnings in (age - 40).
    pub age_profile: [f64; 2],
    /// Real log earnings growth per year.
    pub trend: f64,
    /// Probability an innovation is scaled by `shock_scale`.
    pub shock_prob: f64,
    pub shock_scale: f64,
    pub birth_years: (i32, i32),
    pub work_ages: (i32, i32),
    /// Participation is multiplied by this factor from `retire_age` on.
    pub retire_age: i32,
    pub retire_factor: f64,
    /// Annual death hazard at age 50; rises 8.5% per year of age.
    pub death_hazard: f64,
    pub second_job_prob: f64,
    /// Second-job earnings relative to the main job.
    pub second_job_scale: f64,
    /// Share of persons whose identifier is shared in one year, producing more
    /// than 12 employers.
    pub shared_id_rate: f64,
    pub inactive_ssn_rate: f64,
    pub education_missing: f64,
    pub hours_states: Vec<String>,
    pub inflation: f64,
    /// Non-reporting (state, year) cells.
    pub mask: Vec<(String, i32)>,
}

impl Default for GenConfig {
    fn default() -> Self {
        let mut groups: Vec<GroupParams> = (0..Group::COUNT)
            .map(|g| GroupParams::for_group(Group::from_id(g).expect("group id")))
            .collect();
        let total: f64 = groups.iter().map(|g| g.share).sum();
        groups.iter_mut().for_each(|g| g.share /= total);
        Self {
            seed: 20240601,
            n_persons: 10_000,
            first_year: 1998,
            last_year: 2019,
            n_firms: 2_000,
            firm_effect_sd: 0.25,
            sorting_corr: 0.3,
            groups,
            shares: None,
            education_effect: [-0.30, -0.10, 0.0, 0.35],
            age_profile: [0.01, -0.0008],
            trend: 0.005,
            shock_prob: 0.05,
            shock_scale: 3.0,
            birth_years: (1936, 1997),
            work_ages: (16, 75),
            retire_age: 62,
            retire_factor: 0.6,
            death_hazard: 0.004,
            second_job_prob: 0.12,
            second_job_scale: 0.3,
            shared_id_rate: 0.002,
            inactive_ssn_rate: 0.01,
            education_missing: 0.8,
            hours_states: ["WA", "OR", "RI", "MN"].iter().map(|s| s.to_string()).collect(),
            inflation: 0.02,
            mask: Vec::new(),
        }
    }
}

fn check_prob(field: String, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(&field, format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

fn check_nonneg(field: String, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::config(&field, format!("{v} must be finite and non-negative")));
    }
    Ok(())
}

impl GenConfig {
    /// Group parameters with any share override applied.
    pub fn effective_groups(&self) -> Vec<GroupParams> {
        let mut g = self.groups.clone();
        if let Some(s) = &self.shares {
            for (p, &v) in g.iter_mut().zip(s) {
                p.share = v;
            }
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_persons == 0 {
            return Err(Error::config("n_persons", "must be positive"));
        }
        if self.n_persons > 9_999_999 {
            return Err(Error::config("n_persons", "at most 9999999"));
        }
        if self.n_firms == 0 {
            return Err(Error::config("n_firms", "must be positive"));
        }
        if self.first_year > self.last_year {
            return Err(Error::config("first_year", "after last_year"));
        }
        if self.birth_years.0 > self.birth_years.1 {
            return Err(Error::config("birth_years", "empty range"));
        }
        if self.work_ages.0 > self.work_ages.1 {
            return Err(Error::config("work_ages", "empty range"));
        }
        if self.groups.len() != Group::COUNT {
            return Err(Error::config(
                "groups",
                format!("expected {} entries, got {}", Group::COUNT, self.groups.len()),
            ));
        }
        if let Some(s) = &self.shares {
            if s.len() != Group::COUNT {
                return Err(Error::config(
                    "shares",
                    format!("expected {} entries, got {}", Group::COUNT, s.len()),
                ));
            }
        }
        let groups = self.effective_groups();
        let total: f64 = groups.iter().map(|g| g.share).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("shares", format!("sum to {total}, expected 1")));
        }
        for (i, g) in groups.iter().enumerate() {
            let f = |name: &str| format!("groups[{i}].{name}");
            check_prob(f("share"), g.share)?;
            check_prob(f("participation"), g.participation)?;
            check_prob(f("full_year_prob"), g.full_year_prob)?;
            check_prob(f("mobility"), g.mobility)?;
            if !(0.0..1.0).contains(&g.rho) {
                return Err(Error::config(&f("rho"), format!("persistence {} outside [0, 1)", g.rho)));
            }
            check_nonneg(f("sigma"), g.sigma)?;
            check_nonneg(f("theta_sd"), g.theta_sd)?;
            check_nonneg(f("hours_noise"), g.hours_noise)?;
            for (k, &e) in g.education.iter().enumerate() {
                check_prob(format!("groups[{i}].education[{k}]"), e)?;
            }
            let es: f64 = g.education.iter().sum();
            if (es - 1.0).abs() > 1e-9 {
                return Err(Error::config(&f("education"), format!("sums to {es}, expected 1")));
            }
            for (name, v) in [("theta_mean", g.theta_mean), ("firm_tilt", g.firm_tilt)] {
                if !v.is_finite() {
                    return Err(Error::config(&f(name), "not finite"));
                }
            }
        }
        if !(-1.0..=1.0).contains(&self.sorting_corr) {
            return Err(Error::config("sorting_corr", "outside [-1, 1]"));
        }
        check_nonneg("firm_effect_sd".into(), self.firm_effect_sd)?;
        check_nonneg("shock_scale".into(), self.shock_scale)?;
        check_nonneg("second_job_scale".into(), self.second_job_scale)?;
        for (name, p) in [
            ("shock_prob", self.shock_prob),
            ("retire_factor", self.retire_factor),
            ("death_hazard", self.death_hazard),
            ("second_job_prob", self.second_job_prob),
            ("shared_id_rate", self.shared_id_rate),
            ("inactive_ssn_rate", self.inactive_ssn_rate),
            ("education_missing", self.education_missing),
        ] {
            check_prob(name.into(), p)?;
        }
        if !(self.inflation > -1.0) {
            return Err(Error::config("inflation", "must exceed -1"));
        }
        for s in &self.hours_states {
            s.parse::<State>().map_err(|e| Error::config("hours_states", e))?;
        }
        for (s, _) in &self.mask {
            s.parse::<State>().map_err(|e| Error::config("mask", e))?;
        }
        Ok(())
    }
}

/// Known parameters behind a generated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Aligned with `GenOutput::persons`.
    pub person_effect: Vec<f64>,
    pub education: Vec<Education>,
    /// Indexed by firm number; employer ids are `firm_id(j)`.
    pub firm_effect: Vec<f64>,
    /// Realized mean person effect of each group minus the reference group
    /// (`None` for empty groups), by group id.
    pub group_gap: Vec<Option<f64>>,
    /// True annual hours, aligned with `GenOutput::jobs`.
    pub hours: Vec<f64>,
}

impl GroundTruth {
    /// Long-format `kind,id,value` table.
    pub fn write_csv<W: Write>(&self, out: W, persons: &[PersonRecord]) -> Result<()> {
        let mut w = CsvOut::new(out, &["kind", "id", "value"])?;
        for (p, v) in persons.iter().zip(&self.person_effect) {
            w.row(["person_effect", p.person_id.as_str(), &v.to_string()])?;
        }
        for (p, e) in persons.iter().zip(&self.education) {
            w.row(["education", p.person_id.as_str(), e.code()])?;
        }
        for (j, v) in self.firm_effect.iter().enumerate() {
            w.row(["firm_effect".to_string(), firm_id(j), v.to_string()])?;
        }
        for (g, v) in self.group_gap.iter().enumerate() {
            w.row(["group_gap".to_string(), g.to_string(), crate::io::fmt_opt(*v)])?;
        }
        w.finish()
    }
}

#[derive(Debug, Clone)]
pub struct GenOutput {
    pub persons: Vec<PersonRecord>,
    /// Sorted by person, year, employer.
    pub jobs: Vec<JobYearRecord>,
    pub deflator: DeflatorSeries,
    pub min_wage: MinWageSeries,
    pub mask: CoverageMask,
    pub truth: GroundTruth,
}

impl GenOutput {
    /// Nominal panel spanning the generated years.
    pub fn panel(&self) -> Result<Panel> {
        let (a, b) = self.span();
        Ok(Panel::from_records(self.persons.clone(), self.jobs.clone())?.with_span(a, b))
    }

    pub fn span(&self) -> (i32, i32) {
        let a = *self.deflator.index.keys().next().expect("deflator nonempty");
        let b = *self.deflator.index.keys().next_back().expect("deflator nonempty");
        (a, b)
    }
}

pub fn person_id(i: usize) -> String {
    format!("P{:07}", i + 1)
}

pub fn firm_id(j: usize) -> String {
    format!("F{:06}", j + 1)
}

/// Federal hourly minimum wage in effect for most of each year.
pub fn federal_min_wage(year: i32) -> f64 {
    match year {
        ..=1990 => 3.80,
        1991..=1996 => 4.25,
        1997..=2006 => 5.15,
        2007 => 5.85,
        2008 => 6.55,
        _ => 7.25,
    }
}

const TAG_PERSON: u64 = 1;
const TAG_YEAR: u64 = 2;
const TAG_FIRM: u64 = 3;
const TAG_SHARED: u64 = 4;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for one (seed, unit, year, tag) key.
fn stream(seed: u64, unit: u64, year: i32, tag: u64) -> ChaCha8Rng {
    let mut k = splitmix(seed);
    k = splitmix(k ^ unit);
    k = splitmix(k ^ (year as i64 as u64));
    k = splitmix(k ^ tag);
    ChaCha8Rng::seed_from_u64(k)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Rough employment weights by sector letter A..T.
const SECTOR_WEIGHTS: [f64; 20] = [
    1.0, 0.5, 0.5, 5.0, 9.0, 4.5, 11.0, 4.0, 2.0, 4.5, 1.5, 6.5, 2.0, 7.0, 9.0, 14.0, 1.7, 9.5, 3.0, 2.0,
];
/// Sector component of firm effects.
const SECTOR_EFFECT: [f64; 20] = [
    -0.15, 0.25, 0.25, 0.05, 0.08, 0.10, -0.20, 0.02, 0.20, 0.25, 0.0, 0.25, 0.25, -0.15, -0.05, 0.0, -0.20,
    -0.35, -0.15, 0.05,
];

struct Firms {
    psi: Vec<f64>,
    sector: Vec<Sector>,
    state: Vec<State>,
    /// Firm numbers ordered by effect.
    by_rank: Vec<usize>,
}

fn gen_firms(cfg: &GenConfig) -> Firms {
    let n = cfg.n_firms;
    let mut psi = Vec::with_capacity(n);
    let mut sector = Vec::with_capacity(n);
    let mut state = Vec::with_capacity(n);
    for j in 0..n {
        let mut rng = stream(cfg.seed, j as u64, 0, TAG_FIRM);
        let s = pick(&mut rng, &SECTOR_WEIGHTS);
        let st = rng.random_range(0..State::COUNT);
        let e = normal(&mut rng);
        sector.push(Sector::from_index(s).expect("sector"));
        state.push(State::from_index(st).expect("state"));
        psi.push(SECTOR_EFFECT[s] * (cfg.firm_effect_sd / 0.25) + cfg.firm_effect_sd * e);
    }
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by(|&a, &b| psi[a].total_cmp(&psi[b]).then(a.cmp(&b)));
    Firms {
        psi,
        sector,
        state,
        by_rank,
    }
}

struct PersonOut {
    record: PersonRecord,
    theta: f64,
    education: Education,
    jobs: Vec<(JobYearRecord, f64)>,
}

struct Ctx<'a> {
    cfg: &'a GenConfig,
    groups: &'a [GroupParams],
    cum_shares: Vec<f64>,
    firms: &'a Firms,
    hours_states: BTreeSet<State>,
    price: BTreeMap<i32, f64>,
}

impl Ctx<'_> {
    fn group_of(&self, u: f64) -> usize {
        let mut last = 0;
        for (g, &c) in self.cum_shares.iter().enumerate() {
            if self.groups[g].share > 0.0 {
                last = g;
                if u < c {
                    return g;
                }
            }
        }
        last
    }

    /// Firm whose effect rank sits near the person's latent index.
    fn choose_firm(&self, rng: &mut ChaCha8Rng, index: f64, exclude: &[usize]) -> usize {
        let n = self.firms.by_rank.len();
        let c = self.cfg.sorting_corr;
        for _ in 0..8 {
            let z = index * c + (1.0 - c * c).sqrt() * normal(rng);
            // logistic approximation to the normal cdf
            let u = 1.0 / (1.0 + (-1.702 * z).exp());
            let r = ((u * n as f64) as usize).min(n - 1);
            let j = self.firms.by_rank[r];
            if !exclude.contains(&j) {
                return j;
            }
        }
        (0..n).find(|j| !exclude.contains(j)).unwrap_or(0)
    }

    fn job(&self, pid: &str, firm: usize, year: i32, q: [f64; 4], log_hours: f64) -> (JobYearRecord, f64) {
        let state = self.firms.state[firm];
        let price = self.price[&year];
        let hours = log_hours.exp();
        (
            JobYearRecord {
                person_id: pid.to_string(),
                employer_id: firm_id(firm),
                year,
                q_earnings: q.map(|v| v * price),
                industry_sector: self.firms.sector[firm],
                state,
                hours: self.hours_states.contains(&state).then_some(hours),
            },
            hours,
        )
    }

    fn log_hours(&self, gp: &GroupParams, rng: &mut ChaCha8Rng, q: &[f64; 4]) -> f64 {
        let total: f64 = crate::panel::quarter_sum(q);
        let k = q.iter().filter(|v| **v > 0.0).count().max(1) as f64;
        gp.hours_intercept
            + gp.hours_slope * (total.ln() - 10.0)
            + gp.hours_quarter_elasticity * (k / 4.0).ln()
            + gp.hours_noise * normal(rng)
    }

    fn person(&self, i: usize) -> PersonOut {
        let cfg = self.cfg;
        let seed = cfg.seed;
        let mut rng = stream(seed, i as u64, 0, TAG_PERSON);
        let g = self.group_of(rng.random::<f64>());
        let gp = &self.groups[g];
        let group = Group::from_id(g).expect("group id");
        let birth_year = rng.random_range(cfg.birth_years.0..=cfg.birth_years.1);
        let education = Education::ALL[pick(&mut rng, &gp.education)];
        let theta_z = normal(&mut rng);
        let theta = gp.theta_mean + gp.theta_sd * theta_z + cfg.education_effect[education.index()];
        let index = theta_z + gp.firm_tilt;
        let ssn_active = rng.random::<f64>() >= cfg.inactive_ssn_rate;
        let observed_educ = rng.random::<f64>() >= cfg.education_missing;
        let home_state = State::from_index(rng.random_range(0..State::COUNT)).expect("state");
        let mut death_year = None;
        for year in cfg.first_year..=cfg.last_year {
            let age = (year - birth_year) as f64;
            let h = (cfg.death_hazard * (0.085 * (age - 50.0)).exp()).min(1.0);
            if year >= birth_year && rng.random::<f64>() < h {
                death_year = Some(year);
                break;
            }
        }
        let shared_year = (rng.random::<f64>() < cfg.shared_id_rate)
            .then(|| rng.random_range(cfg.first_year..=cfg.last_year));
        let pid = person_id(i);

        let stationary = if gp.rho > 0.0 {
            gp.sigma / (1.0 - gp.rho * gp.rho).sqrt()
        } else {
            gp.sigma
        };
        let mut a = f64::NAN;
        let mut firm: Option<usize> = None;
        let mut was_active = false;
        let mut jobs = Vec::new();
        let mut first_state = None;
        for year in cfg.first_year..=cfg.last_year {
            if death_year.is_some_and(|d| year > d) {
                break;
            }
            let mut yr = stream(seed, i as u64, year, TAG_YEAR);
            let age = year - birth_year;
            let e = normal(&mut yr);
            let shock = if yr.random::<f64>() < cfg.shock_prob { cfg.shock_scale } else { 1.0 };
            a = if a.is_nan() {
                stationary * e
            } else {
                gp.rho * a + gp.sigma * shock * e
            };
            if age < cfg.work_ages.0 || age > cfg.work_ages.1 {
                was_active = false;
                continue;
            }
            let mut p = gp.participation;
            if age >= cfg.retire_age {
                p *= cfg.retire_factor;
            }
            let u_active = yr.random::<f64>();
            let u_move = yr.random::<f64>();
            let u_full = yr.random::<f64>();
            let k = yr.random_range(1..=3usize);
            let start = yr.random_range(0..=(4 - k));
            let split = yr.random_range(1..=3usize);
            let u_second = yr.random::<f64>();
            if u_active >= p {
                was_active = false;
                continue;
            }
            let d = (age - 40) as f64;
            let other = cfg.age_profile[0] * d + cfg.age_profile[1] * d * d
                + cfg.trend * (year - cfg.first_year) as f64
                + a;
            let level = |j: usize| (theta + self.firms.psi[j] + other).exp() / 4.0;
            let mut active_q = [false; 4];
            if u_full < gp.full_year_prob {
                active_q = [true; 4];
            } else {
                active_q[start..start + k].iter_mut().for_each(|v| *v = true);
            }
            let moved = firm.is_some() && u_move < gp.mobility;
            let mut year_jobs: Vec<(usize, [f64; 4])> = Vec::new();
            match firm {
                Some(old) if moved && was_active && active_q == [true; 4] => {
                    let new = self.choose_firm(&mut yr, index, &[old]);
                    let mut q_old = [0.0; 4];
                    let mut q_new = [0.0; 4];
                    for q in 0..4 {
                        if q < split {
                            q_old[q] = level(old);
                        } else {
                            q_new[q] = level(new);
                        }
                    }
                    year_jobs.push((old, q_old));
                    year_jobs.push((new, q_new));
                    firm = Some(new);
                }
                _ => {
                    let j = match firm {
                        Some(j) if !moved => j,
                        Some(j) => self.choose_firm(&mut yr, index, &[j]),
                        None => self.choose_firm(&mut yr, index, &[]),
                    };
                    let mut q = [0.0; 4];
                    for (s, &on) in active_q.iter().enumerate() {
                        if on {
                            q[s] = level(j);
                        }
                    }
                    year_jobs.push((j, q));
                    firm = Some(j);
                }
            }
            if u_second < cfg.second_job_prob {
                let taken: Vec<usize> = year_jobs.iter().map(|j| j.0).collect();
                let j2 = self.choose_firm(&mut yr, index, &taken);
                let qs = yr.random_range(0..4usize);
                let mut q = [0.0; 4];
                for (s, v) in q.iter_mut().enumerate().skip(qs) {
                    if active_q[s] || s == qs {
                        *v = level(j2) * cfg.second_job_scale;
                    }
                }
                year_jobs.push((j2, q));
            }
            if shared_year == Some(year) {
                let mut sr = stream(seed, i as u64, year, TAG_SHARED);
                let extra = sr.random_range(13..=20usize);
                let mut taken: Vec<usize> = year_jobs.iter().map(|j| j.0).collect();
                while taken.len() < extra.min(cfg.n_firms) {
                    let j = sr.random_range(0..cfg.n_firms);
                    if taken.contains(&j) {
                        continue;
                    }
                    taken.push(j);
                    let mut q = [0.0; 4];
                    q[sr.random_range(0..4usize)] = level(j) * 0.1;
                    year_jobs.push((j, q));
                }
            }
            for (j, q) in year_jobs {
                if q.iter().all(|v| *v == 0.0) {
                    continue;
                }
                if first_state.is_none() {
                    first_state = Some(self.firms.state[j]);
                }
                let lh = self.log_hours(gp, &mut yr, &q);
                jobs.push(self.job(&pid, j, year, q, lh));
            }
            was_active = true;
        }
        jobs.sort_by(|a, b| (a.0.year, &a.0.employer_id).cmp(&(b.0.year, &b.0.employer_id)));
        PersonOut {
            record: PersonRecord {
                person_id: pid,
                sex: group.sex,
                race_eth: group.race_eth,
                foreign_born: group.foreign_born,
                birth_year,
                death_year,
                ssn_active,
                education: observed_educ.then_some(education),
                state: first_state.unwrap_or(home_state),
            },
            theta,
            education,
            jobs,
        }
    }
}

/// Generates a panel and its ground truth. Output is a pure function of the
/// configuration.
pub fn gen_population(cfg: &GenConfig) -> Result<GenOutput> {
    cfg.validate()?;
    let groups = cfg.effective_groups();
    let mut cum_shares = Vec::with_capacity(groups.len());
    let mut acc = 0.0;
    for g in &groups {
        acc += g.share;
        cum_shares.push(acc);
    }
    let firms = gen_firms(cfg);
    let years = cfg.first_year..=cfg.last_year;
    let index: BTreeMap<i32, f64> = years
        .clone()
        .map(|y| (y, 100.0 * (1.0 + cfg.inflation).powi(y - cfg.last_year)))
        .collect();
    let deflator = DeflatorSeries::new(index, cfg.last_year)?;
    let price: BTreeMap<i32, f64> = years
        .clone()
        .map(|y| Ok((y, deflator.index_for(y)? / deflator.index_for(cfg.last_year)?)))
        .collect::<Result<_>>()?;
    let min_wage = MinWageSeries::new(years.map(|y| (y, federal_min_wage(y))).collect())?;
    let mut mask = CoverageMask::default();
    for (s, y) in &cfg.mask {
        mask.cells.insert((s.parse::<State>().map_err(|e| Error::config("mask", e))?, *y));
    }
    let ctx = Ctx {
        cfg,
        groups: &groups,
        cum_shares,
        firms: &firms,
        hours_states: cfg
            .hours_states
            .iter()
            .map(|s| s.parse::<State>().map_err(|e| Error::config("hours_states", e)))
            .collect::<Result<_>>()?,
        price,
    };
    let people: Vec<PersonOut> = (0..cfg.n_persons).into_par_iter().map(|i| ctx.person(i)).collect();

    let mut sums = vec![(0.0, 0usize); Group::COUNT];
    for p in &people {
        let s = &mut sums[p.record.group().id()];
        s.0 += p.theta;
        s.1 += 1;
    }
    let mean = |g: usize| (sums[g].1 > 0).then(|| sums[g].0 / sums[g].1 as f64);
    let group_gap = (0..Group::COUNT)
        .map(|g| Some(mean(g)? - mean(0)?))
        .collect();

    let n_jobs = people.iter().map(|p| p.jobs.len()).sum();
    let mut persons = Vec::with_capacity(people.len());
    let mut jobs = Vec::with_capacity(n_jobs);
    let mut hours = Vec::with_capacity(n_jobs);
    let mut person_effect = Vec::with_capacity(people.len());
    let mut education = Vec::with_capacity(people.len());
    for p in people {
        persons.push(p.record);
        person_effect.push(p.theta);
        education.push(p.education);
        for (j, h) in p.jobs {
            jobs.push(j);
            hours.push(h);
        }
    }
    Ok(GenOutput {
        persons,
        jobs,
        deflator,
        min_wage,
        mask,
        truth: GroundTruth {
            person_effect,
            education,
            firm_effect: firms.psi,
            group_gap,
            hours,
        },
    })
}
