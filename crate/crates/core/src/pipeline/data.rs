//! Views of the panel shared by the analysis stages.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use crate::codes::{Division, Education, Sector};
use crate::error::{Error, Result};
use crate::io::{load_panel_dir, LoadedPanel};
use crate::measures::{longterm_table, LongTermRecord, MeasureTable};
use crate::panel::{CoverageMask, EarningsGrid, Panel};
use crate::samples::{build_cohort12, AnalysisSample, EarningsFloor, Frame};

use super::config::RunConfig;

pub struct Inputs {
    pub loaded: LoadedPanel,
    pub mask: CoverageMask,
}

impl Inputs {
    pub fn load(dir: &Path) -> Result<Self> {
        let (loaded, mask) = load_panel_dir(dir).map_err(|e| match e {
            Error::Io(io) => Error::Other(format!("cannot read panel inputs in {}: {io}", dir.display())),
            other => other,
        })?;
        Ok(Self { loaded, mask })
    }

    /// Analysis span: the configured window, else the deflator's years.
    pub fn span(&self, cfg: &RunConfig) -> Result<(i32, i32)> {
        let idx = &self.loaded.deflator.index;
        let first = cfg
            .analysis
            .first_year
            .or_else(|| idx.keys().next().copied())
            .ok_or(Error::Empty("deflator series"))?;
        let last = cfg
            .analysis
            .last_year
            .or_else(|| idx.keys().next_back().copied())
            .ok_or(Error::Empty("deflator series"))?;
        Ok((first, last))
    }

    /// Masked panel in `reference_year` currency over the analysis span.
    pub fn real_panel(&self, cfg: &RunConfig, reference_year: i32) -> Result<Panel> {
        let (first, last) = self.span(cfg)?;
        let defl = self.loaded.deflator.with_reference(reference_year)?;
        let panel = self.loaded.panel.clone().with_span(first, last);
        panel.apply_mask(&self.mask).deflate(&defl)
    }
}

/// Yearly-sample view: masked real panel, frame and person-year measures.
pub struct YearlyView {
    pub panel: Panel,
    pub grid: EarningsGrid,
    pub frame: Frame,
    pub measures: MeasureTable,
}

impl YearlyView {
    pub fn build(inputs: &Inputs, cfg: &RunConfig) -> Result<Self> {
        let a = &cfg.analysis;
        let panel = inputs.real_panel(cfg, a.reference_year)?;
        let defl = inputs.loaded.deflator.with_reference(a.reference_year)?;
        let floor = EarningsFloor::real(&inputs.loaded.min_wage, &defl, a.winsor_quantile)?;
        let grid = EarningsGrid::build(&panel);
        let frame = Frame::build(&panel, &grid, &floor, &a.rules)?;
        let education: Vec<Option<Education>> = panel.persons().iter().map(|p| p.education).collect();
        let measures = MeasureTable::build(&panel, &frame, &education)?;
        Ok(Self {
            panel,
            grid,
            frame,
            measures,
        })
    }

    /// Index of the age class containing `age` (classes are lower bounds).
    pub fn age_class(classes: &[i32], age: i32) -> Option<usize> {
        if age < classes[0] {
            return None;
        }
        Some(classes.iter().rposition(|&lo| age >= lo).expect("age above first bound"))
    }
}

/// Cohort view: masked real panel in the cohort currency, the cohort and its
/// long-term records.
pub struct CohortView {
    pub panel: Panel,
    pub grid: EarningsGrid,
    pub cohort: AnalysisSample,
    pub longterm: Vec<LongTermRecord>,
}

impl CohortView {
    pub fn build(inputs: &Inputs, cfg: &RunConfig) -> Result<Self> {
        let a = &cfg.analysis;
        let panel = inputs.real_panel(cfg, a.cohort_reference_year)?;
        let grid = EarningsGrid::build(&panel);
        let cohort = build_cohort12(&panel, &grid, &a.rules)?;
        let longterm = longterm_table(&panel, &grid, &a.rules, &cohort, a.arc_pairs);
        Ok(Self {
            panel,
            grid,
            cohort,
            longterm,
        })
    }

    /// Division and sector of the person's highest-earnings job-year in the
    /// window (earliest year, then lowest employer on ties).
    pub fn main_job(&self, person: usize, cfg: &RunConfig) -> Option<(Division, Sector)> {
        let r = &cfg.analysis.rules;
        let mut best: Option<&crate::panel::Job> = None;
        for j in self.panel.jobs_of(person) {
            if j.year < r.cohort_start || j.year > r.cohort_end() {
                continue;
            }
            if best.is_none_or(|b| j.earnings() > b.earnings()) {
                best = Some(j);
            }
        }
        best.map(|j| (j.state.division(), j.sector))
    }
}

/// Person and average firm effects by person id, read from the fixed-effects
/// stage output.
pub fn read_person_effects(path: &Path) -> Result<BTreeMap<String, (f64, f64)>> {
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Other(format!("{} lacks column `{name}`", path.display())))
    };
    let (ci, ct, cp) = (col("person_id")?, col("theta")?, col("psi_bar")?);
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| rec[k].parse::<f64>().unwrap_or(f64::NAN);
        out.insert(rec[ci].to_string(), (num(ct), num(cp)));
    }
    Ok(out)
}
