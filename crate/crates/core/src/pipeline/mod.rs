//! Stage orchestration: configuration, cached stage execution, run manifest
//! and the summary report.

mod cohort;
pub mod config;
mod data;
mod indicators;
mod mobility;
pub mod schema;
mod sink;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::akm::{fit_two_way_fe, person_average_firm_effect, FeObs, FirmEffectWeighting};
use crate::codes::{Group, Sex};
use crate::error::{Error, Result};
use crate::impute::{impute_education, impute_hours};
use crate::io::{fmt_opt, write_coverage_mask, write_deflator, write_jobs, write_min_wage, write_persons};
use crate::microagg::{microaggregate, BinPlan, CellKey};
use crate::samples::{build_cohort12, build_sample, sample_counts, SampleKind};
use crate::stats;
use crate::synth::gen_population;

pub use config::{RunConfig, Stage};
use data::{CohortView, Inputs, YearlyView};
use sink::StageDir;

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    Cached,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    /// Content key of the stage's inputs (config and upstream keys).
    pub key: String,
    /// Output path (relative to the output directory) to data row count.
    pub files: BTreeMap<String, usize>,
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    /// Canonical config with the output directory cleared.
    pub config: String,
    pub seeds: BTreeMap<String, u64>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Option<Manifest>> {
        let p = dir.join(MANIFEST);
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&fs::read(p)?)?))
    }

    pub fn stage(&self, s: Stage) -> Option<&StageRecord> {
        self.stages.get(s.name())
    }
}

type Notes = BTreeMap<String, String>;

/// Identifier, nativity, sex and race/ethnicity columns of a group.
pub(crate) fn group_fields(g: Group) -> [String; 4] {
    [
        g.id().to_string(),
        g.nativity().to_string(),
        g.sex.code().to_string(),
        g.race_eth.code().to_string(),
    ]
}

pub(crate) const GROUP_HEADER: [&str; 4] = ["group_id", "nativity", "sex", "race_eth"];

pub(crate) fn f(v: f64) -> String {
    fmt_opt(Some(v))
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    inputs: Option<Inputs>,
    yearly: Option<YearlyView>,
    cohort: Option<CohortView>,
}

impl Ctx<'_> {
    fn base_input_dir(&self) -> PathBuf {
        if self.cfg.stages.gen {
            self.out.join("input")
        } else {
            self.cfg.paths.input_dir.clone().expect("validated")
        }
    }

    /// Panel directory of the analysis stages: the completed panel when
    /// imputation is enabled, else the raw inputs.
    fn panel_dir(&self) -> PathBuf {
        if self.cfg.stages.impute {
            self.out.join("impute")
        } else {
            self.base_input_dir()
        }
    }

    fn inputs(&mut self) -> Result<&Inputs> {
        if self.inputs.is_none() {
            self.inputs = Some(Inputs::load(&self.panel_dir())?);
        }
        Ok(self.inputs.as_ref().expect("loaded"))
    }

    fn yearly(&mut self) -> Result<&YearlyView> {
        if self.yearly.is_none() {
            self.inputs()?;
            let v = YearlyView::build(self.inputs.as_ref().expect("loaded"), self.cfg)?;
            self.yearly = Some(v);
        }
        Ok(self.yearly.as_ref().expect("built"))
    }

    fn cohort(&mut self) -> Result<&CohortView> {
        if self.cohort.is_none() {
            self.inputs()?;
            let v = CohortView::build(self.inputs.as_ref().expect("loaded"), self.cfg)?;
            self.cohort = Some(v);
        }
        Ok(self.cohort.as_ref().expect("built"))
    }
}

/// Config sections a stage reads, serialized.
fn stage_config(cfg: &RunConfig, stage: Stage) -> Result<String> {
    let j = |v: serde_json::Result<String>| v.map_err(Error::from);
    Ok(match stage {
        Stage::Gen => j(serde_json::to_string(&cfg.gen))?,
        Stage::Impute => j(serde_json::to_string(&cfg.impute))?,
        Stage::Samples | Stage::Measures | Stage::Indicators | Stage::Mobility => {
            j(serde_json::to_string(&cfg.analysis))?
        }
        Stage::Akm => j(serde_json::to_string(&(&cfg.analysis, &cfg.akm)))?,
        Stage::Decompose => j(serde_json::to_string(&(&cfg.analysis, &cfg.decompose)))?,
        Stage::Microagg => j(serde_json::to_string(&cfg.microagg))?,
        Stage::Report => String::new(),
    })
}

/// Content key of a stage: its config sections, where its panel comes from
/// and the keys of its upstream stages.
fn stage_key(cfg: &RunConfig, stage: Stage, upstream: &[String], source: &str) -> Result<String> {
    let mut h = Sha256::new();
    h.update(stage.name().as_bytes());
    h.update(stage_config(cfg, stage)?.as_bytes());
    h.update(source.as_bytes());
    for u in upstream {
        h.update(u.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// Digest of the external input files (when the generator is off).
fn input_digest(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in ["persons.csv", "jobs.csv", "deflator.csv", "minwage.csv", "coverage_mask.csv"] {
        let p = dir.join(name);
        if p.exists() {
            h.update(name.as_bytes());
            h.update(fs::read(&p)?);
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Stages executed for a target: every enabled stage for a full run; for a
/// single stage, its upstream closure (enabled ones) plus the stage itself.
fn plan(cfg: &RunConfig, target: Option<Stage>) -> Vec<(Stage, bool)> {
    match target {
        None => Stage::ALL.iter().map(|&s| (s, cfg.stages.enabled(s))).collect(),
        Some(Stage::Report) => vec![(Stage::Report, true)],
        Some(t) => {
            let mut need = vec![t];
            let mut i = 0;
            while i < need.len() {
                for &u in need[i].upstream() {
                    if !need.contains(&u) {
                        need.push(u);
                    }
                }
                i += 1;
            }
            Stage::ALL
                .iter()
                .filter(|s| need.contains(s))
                .map(|&s| (s, s == t || cfg.stages.enabled(s)))
                .collect()
        }
    }
}

/// Runs the pipeline (or one stage with its upstream stages) and writes the
/// manifest. Stages whose content key matches the previous manifest and whose
/// outputs exist are not recomputed.
pub fn run_pipeline(cfg: &RunConfig, target: Option<Stage>) -> Result<Manifest> {
    cfg.validate()?;
    let out = cfg.paths.output_dir.clone();
    if target == Some(Stage::Report) && dir_is_empty(&out) {
        return Err(Error::Stage {
            stage: Stage::Report.name().into(),
            cause: Box::new(empty_dir_error(&out)),
        });
    }
    fs::create_dir_all(&out)?;
    let config_hash = cfg.hash()?;
    let mut canonical = cfg.clone();
    canonical.paths.output_dir = PathBuf::new();
    let previous = Manifest::read(&out).ok().flatten();
    let mut manifest = Manifest {
        config_hash: config_hash.clone(),
        config: canonical.to_toml()?,
        seeds: cfg.seeds().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        stages: previous
            .as_ref()
            .filter(|m| m.config_hash == config_hash)
            .map(|m| m.stages.clone())
            .unwrap_or_default(),
    };
    // which panel the analysis stages read, and its content when external
    let source = format!(
        "gen={} impute={} {}",
        cfg.stages.gen,
        cfg.stages.impute,
        if cfg.stages.gen {
            String::new()
        } else {
            input_digest(cfg.paths.input_dir.as_ref().expect("validated"))?
        }
    );
    let mut ctx = Ctx {
        cfg,
        out: out.clone(),
        inputs: None,
        yearly: None,
        cohort: None,
    };
    for (stage, enabled) in plan(cfg, target) {
        let upstream: Vec<String> = stage
            .upstream()
            .iter()
            .map(|u| manifest.stage(*u).map(|r| r.key.clone()).unwrap_or_default())
            .collect();
        let key = stage_key(cfg, stage, &upstream, &source)?;
        if !enabled {
            if let Some(old) = previous.as_ref().and_then(|m| m.stage(stage)) {
                for f in old.files.keys() {
                    let _ = fs::remove_file(out.join(f));
                }
            }
            manifest.stages.insert(
                stage.name().into(),
                StageRecord {
                    status: StageStatus::Skipped,
                    key: format!("skipped:{key}"),
                    files: BTreeMap::new(),
                    notes: BTreeMap::new(),
                },
            );
            log::info!("stage {}: skipped", stage.name());
            continue;
        }
        let cached = previous.as_ref().and_then(|m| m.stage(stage)).filter(|r| {
            stage != Stage::Report
                && r.key == key
                && r.status != StageStatus::Skipped
                && r.files.keys().all(|f| out.join(f).exists())
        });
        if let Some(r) = cached {
            log::info!("stage {}: cached", stage.name());
            manifest.stages.insert(
                stage.name().into(),
                StageRecord {
                    status: StageStatus::Cached,
                    ..r.clone()
                },
            );
            continue;
        }
        log::info!("stage {}: running", stage.name());
        let sub = match stage {
            Stage::Gen => "input",
            Stage::Impute => "impute",
            _ => "",
        };
        let mut dir = StageDir::open(&out, stage.name(), sub)?;
        let res = match stage {
            Stage::Gen => stage_gen(&ctx, &mut dir),
            Stage::Impute => stage_impute(&ctx, &mut dir),
            Stage::Samples => stage_samples(&mut ctx, &mut dir),
            Stage::Measures => stage_measures(&mut ctx, &mut dir),
            Stage::Akm => stage_akm(&mut ctx, &mut dir),
            Stage::Indicators => indicators::run(&mut ctx, &mut dir),
            Stage::Mobility => mobility::run(&mut ctx, &mut dir),
            Stage::Decompose => cohort::decompose(&mut ctx, &mut dir),
            Stage::Microagg => stage_microagg(&ctx, &mut dir),
            Stage::Report => stage_report(&ctx, &manifest, &mut dir),
        };
        let notes = match res {
            Ok(n) => n,
            Err(e) => {
                dir.abandon();
                return Err(Error::Stage {
                    stage: stage.name().into(),
                    cause: Box::new(e),
                });
            }
        };
        let files = dir.commit()?;
        manifest.stages.insert(
            stage.name().into(),
            StageRecord {
                status: StageStatus::Ran,
                key,
                files,
                notes,
            },
        );
        if stage == Stage::Impute {
            ctx.inputs = None;
            ctx.yearly = None;
            ctx.cohort = None;
        }
    }
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(out.join(MANIFEST), bytes)?;
    Ok(manifest)
}

fn stage_gen(ctx: &Ctx, dir: &mut StageDir) -> Result<Notes> {
    let g = gen_population(&ctx.cfg.gen)?;
    dir.with_writer("persons.csv", g.persons.len(), |w| write_persons(w, &g.persons))?;
    dir.with_writer("jobs.csv", g.jobs.len(), |w| write_jobs(w, &g.jobs))?;
    dir.with_writer("deflator.csv", g.deflator.index.len(), |w| write_deflator(w, &g.deflator))?;
    dir.with_writer("minwage.csv", g.min_wage.wage.len(), |w| write_min_wage(w, &g.min_wage))?;
    dir.with_writer("coverage_mask.csv", g.mask.cells.len(), |w| write_coverage_mask(w, &g.mask))?;
    let truth_rows = 2 * g.persons.len() + g.truth.firm_effect.len() + g.truth.group_gap.len();
    dir.with_writer("ground_truth.csv", truth_rows, |w| g.truth.write_csv(w, &g.persons))?;
    Ok(Notes::new())
}

fn stage_impute(ctx: &Ctx, dir: &mut StageDir) -> Result<Notes> {
    let inputs = Inputs::load(&ctx.base_input_dir())?;
    let panel = &inputs.loaded.panel;
    let hours = impute_hours(panel)?;
    let educ = impute_education(panel, &ctx.cfg.impute.education, ctx.cfg.impute.seed)?;
    let mut persons = panel.persons().to_vec();
    for (p, e) in persons.iter_mut().zip(&educ.education) {
        p.education = Some(*e);
    }
    let completed = panel
        .with_hours(&hours.hours.iter().map(|&h| Some(h)).collect::<Vec<_>>())?
        .with_persons(persons)?;
    let jobs = completed.job_records();
    dir.with_writer("persons.csv", completed.persons().len(), |w| write_persons(w, completed.persons()))?;
    dir.with_writer("jobs.csv", jobs.len(), |w| write_jobs(w, &jobs))?;
    let l = &inputs.loaded;
    dir.with_writer("deflator.csv", l.deflator.index.len(), |w| write_deflator(w, &l.deflator))?;
    dir.with_writer("minwage.csv", l.min_wage.wage.len(), |w| write_min_wage(w, &l.min_wage))?;
    dir.with_writer("coverage_mask.csv", inputs.mask.cells.len(), |w| write_coverage_mask(w, &inputs.mask))?;
    let mut t = dir.table("impute_audit.csv", &["variable", "cell", "n_observed", "n_imputed", "fallback"])?;
    for (var, audit) in [("hours", &hours.audit), ("education", &educ.audit)] {
        for a in audit {
            t.row([
                var.to_string(),
                a.cell.clone(),
                a.n_observed.to_string(),
                a.n_imputed.to_string(),
                u8::from(a.fallback).to_string(),
            ])?;
        }
    }
    dir.close(t)?;
    let mut notes = Notes::new();
    notes.insert("hours_imputed".into(), hours.imputed.iter().filter(|&&b| b).count().to_string());
    notes.insert("education_imputed".into(), educ.imputed.iter().filter(|&&b| b).count().to_string());
    Ok(notes)
}

fn stage_samples<'a>(ctx: &mut Ctx<'a>, dir: &mut StageDir) -> Result<Notes> {
    let rules = &ctx.cfg.analysis.rules;
    let v = ctx.yearly()?;
    let cohort = build_cohort12(&v.panel, &v.grid, rules).ok();
    let counts = sample_counts(&v.frame, &v.measures, cohort.as_ref());
    let mut t = dir.table("sample_counts.csv", &["kind", "year", "n"])?;
    for c in &counts {
        t.row([c.kind.name().to_string(), c.year.map(|y| y.to_string()).unwrap_or_default(), c.n.to_string()])?;
    }
    dir.close(t)?;
    let mut t = dir.table(
        "figA1_4.csv",
        &["kind", "year", "n", "share_male", "mean_age", "median_earnings"],
    )?;
    for kind in SampleKind::YEARLY {
        for year in v.frame.first_year()..=v.frame.last_year() {
            let Ok(s) = build_sample(&v.frame, &v.measures, kind, year) else {
                continue;
            };
            let n = s.len();
            let persons = v.panel.persons();
            let male = s.members.iter().filter(|&&p| persons[p].sex == Sex::Male).count();
            let ages: f64 = s.members.iter().map(|&p| persons[p].age(year) as f64).sum();
            let earn: Vec<f64> = s.members.iter().filter_map(|&p| v.frame.earnings(p, year)).collect();
            let nf = n.max(1) as f64;
            t.row([
                kind.name().to_string(),
                year.to_string(),
                n.to_string(),
                if n > 0 { f(male as f64 / nf) } else { String::new() },
                if n > 0 { f(ages / nf) } else { String::new() },
                stats::quantile(&earn, 0.5).ok().map(f).unwrap_or_default(),
            ])?;
        }
    }
    dir.close(t)?;
    let mut notes = Notes::new();
    notes.insert("singleton_cells".into(), v.measures.singleton_cells.to_string());
    Ok(notes)
}

fn stage_measures(ctx: &mut Ctx, dir: &mut StageDir) -> Result<Notes> {
    {
        let v = ctx.yearly()?;
        let mut t = dir.table(
            "measures.csv",
            &["person_id", "sex", "birth_year", "year", "y", "p3", "eps", "delta", "perm", "g1", "g5"],
        )?;
        for (p, rec) in v.panel.persons().iter().enumerate() {
            for year in v.frame.first_year()..=v.frame.last_year() {
                let m = &v.measures;
                let vals = [
                    m.y(p, year),
                    crate::samples::MeasureLookup::p3(m, p, year),
                    m.eps(p, year),
                    m.delta(p, year),
                    crate::samples::MeasureLookup::perm_residual(m, p, year),
                    m.g(1, p, year),
                    m.g(5, p, year),
                ];
                if vals.iter().all(Option::is_none) {
                    continue;
                }
                let mut row = vec![
                    rec.person_id.clone(),
                    rec.sex.code().to_string(),
                    rec.birth_year.to_string(),
                    year.to_string(),
                ];
                row.extend(vals.iter().map(|&x| fmt_opt(x)));
                t.row(row)?;
            }
        }
        dir.close(t)?;
    }
    let c = ctx.cohort()?;
    let mut t = dir.table(
        "persons_longterm.csv",
        &[
            "person_id",
            "group_id",
            "w",
            "years_full",
            "years_partial",
            "years_inactive",
            "active_period1",
            "active_period2",
            "active_period3",
            "long_term_active",
            "growth",
            "arc_volatility",
            "avg_hours",
        ],
    )?;
    for r in &c.longterm {
        let rec = c.panel.person(r.person);
        t.row([
            rec.person_id.clone(),
            rec.group().id().to_string(),
            f(r.w),
            r.years_full.to_string(),
            r.years_partial.to_string(),
            r.years_inactive.to_string(),
            u8::from(r.period_active[0]).to_string(),
            u8::from(r.period_active[1]).to_string(),
            u8::from(r.period_active[2]).to_string(),
            u8::from(r.long_term_active).to_string(),
            fmt_opt(r.growth),
            fmt_opt(r.arc_volatility),
            fmt_opt(r.avg_hours),
        ])?;
    }
    dir.close(t)?;
    Ok(Notes::new())
}

fn stage_akm(ctx: &mut Ctx, dir: &mut StageDir) -> Result<Notes> {
    let opts = ctx.cfg.akm;
    let c = ctx.cohort()?;
    // every positive job-year of the analysis span; effects are joined to the
    // cohort downstream
    let panel = &c.panel;
    let mut obs = Vec::new();
    let mut person_jobs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); panel.persons().len()];
    for j in panel.jobs() {
        let e = j.earnings();
        if !(e > 0.0) {
            continue;
        }
        obs.push(FeObs {
            person: j.person,
            firm: j.employer,
            year: j.year,
            y: e.ln(),
            weight: 1.0,
        });
        person_jobs[j.person].push((j.employer, e));
    }
    if obs.is_empty() {
        return Err(Error::Empty("positive job-years for the fixed-effects fit"));
    }
    let n_firms = panel.employers().len();
    let sol = fit_two_way_fe(&obs, panel.persons().len(), n_firms, &opts)?;
    let mut t = dir.table("person_effects.csv", &["person_id", "theta", "psi_bar", "component", "n_obs"])?;
    for (p, jobs) in person_jobs.iter().enumerate() {
        if jobs.is_empty() {
            continue;
        }
        let psi_bar = person_average_firm_effect(&sol.psi, jobs, FirmEffectWeighting::JobYears);
        t.row([
            panel.person(p).person_id.clone(),
            f(sol.theta[p]),
            fmt_opt(psi_bar),
            sol.components.person[p].map(|c| c.to_string()).unwrap_or_default(),
            jobs.len().to_string(),
        ])?;
    }
    dir.close(t)?;
    let mut t = dir.table("firm_effects.csv", &["employer_id", "psi", "n_jobyears", "component"])?;
    for (k, id) in panel.employers().iter().enumerate() {
        if sol.firm_counts[k] == 0 {
            continue;
        }
        t.row([
            id.clone(),
            f(sol.psi[k]),
            sol.firm_counts[k].to_string(),
            sol.components.firm[k].map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    dir.close(t)?;
    let mut sizes = vec![(0usize, 0usize); sol.components.count];
    for c in sol.components.person.iter().flatten() {
        sizes[*c as usize].0 += 1;
    }
    for c in sol.components.firm.iter().flatten() {
        sizes[*c as usize].1 += 1;
    }
    let mut t = dir.table("components.csv", &["component", "n_persons", "n_firms"])?;
    for (k, (np, nf)) in sizes.iter().enumerate() {
        t.row([k.to_string(), np.to_string(), nf.to_string()])?;
    }
    dir.close(t)?;
    let trace = &sol.objective_trace;
    let monotone = trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
    let mut notes = Notes::new();
    notes.insert("iterations".into(), sol.iterations.to_string());
    notes.insert("rss".into(), f(sol.rss));
    notes.insert("objective_nonincreasing".into(), monotone.to_string());
    Ok(notes)
}

fn stage_microagg(ctx: &Ctx, dir: &mut StageDir) -> Result<Notes> {
    let mc = &ctx.cfg.microagg;
    let input = if mc.input.is_absolute() {
        mc.input.clone()
    } else {
        ctx.out.join(&mc.input)
    };
    let mut r = csv::Reader::from_path(&input)
        .map_err(|e| Error::Other(format!("cannot read {}: {e}", input.display())))?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config("microagg.input", format!("{} lacks column `{name}`", input.display())))
    };
    let (cy, cs, cb) = (col("year")?, col("sex")?, col("birth_year")?);
    let var_cols: Vec<usize> = mc.variables.iter().map(|v| col(v)).collect::<Result<_>>()?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    let bad = |row: usize, c: &str| Error::schema(&input.display().to_string(), row + 2, c, "not a number");
    let mut cells = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        cells.push(CellKey {
            year: row[cy].parse().map_err(|_| bad(i, "year"))?,
            sex: row[cs].parse::<Sex>().map_err(|_| bad(i, "sex"))?,
            birth_year: row[cb].parse().map_err(|_| bad(i, "birth_year"))?,
        });
    }
    let plan = BinPlan {
        min_bin_size: mc.min_bin_size,
    };
    let mut audit = dir.table(
        "bin_audit.csv",
        &["variable", "year", "sex", "birth_year", "bin", "size", "mean", "small_cell"],
    )?;
    let mut small = 0usize;
    for (vi, &c) in var_cols.iter().enumerate() {
        let mut vals = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let s = row[c].trim();
            vals.push(if s.is_empty() {
                None
            } else {
                Some(s.parse::<f64>().map_err(|_| bad(i, &mc.variables[vi]))?)
            });
        }
        let binned = microaggregate(&cells, &vals, &plan)?;
        for (row, v) in rows.iter_mut().zip(&binned.values) {
            row[c] = fmt_opt(*v);
        }
        for a in &binned.audit {
            small += usize::from(a.small_cell && a.bin == 1);
            audit.row([
                mc.variables[vi].clone(),
                a.cell.year.to_string(),
                a.cell.sex.code().to_string(),
                a.cell.birth_year.to_string(),
                a.bin.to_string(),
                a.size.to_string(),
                f(a.mean),
                u8::from(a.small_cell).to_string(),
            ])?;
        }
    }
    dir.close(audit)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = dir.table(&format!("{stem}_binned.csv"), &hdr)?;
    for row in &rows {
        t.row(row)?;
    }
    dir.close(t)?;
    let mut notes = Notes::new();
    notes.insert("small_cells".into(), small.to_string());
    Ok(notes)
}

/// Report entries: (label, description, file, producing stage).
const ARTIFACTS: &[(&str, &str, &str, Stage)] = &[
    ("table1b", "observations by sample and year", "sample_counts.csv", Stage::Samples),
    ("figA1-A4", "sample size, share male, mean age, median earnings", "figA1_4.csv", Stage::Samples),
    ("fig1", "percentile changes of log real earnings", "fig1.csv", Stage::Indicators),
    ("fig2", "dispersion of log real earnings", "fig2.csv", Stage::Indicators),
    ("fig3", "dispersion at age 25", "fig3.csv", Stage::Indicators),
    ("fig4", "life-cycle dispersion by entry cohort", "fig4.csv", Stage::Indicators),
    ("fig5", "dispersion of one-year residual changes", "fig5.csv", Stage::Indicators),
    ("fig6", "skewness and kurtosis of one-year changes", "fig6.csv", Stage::Indicators),
    ("fig7", "one-year change statistics by permanent earnings bin", "fig7.csv", Stage::Indicators),
    ("fig8", "ten-year rank mobility by age", "fig8.csv", Stage::Mobility),
    ("fig9", "ten-year rank mobility by base year", "fig9.csv", Stage::Mobility),
    ("fig10", "cohort share active by age group", "fig10.csv", Stage::Indicators),
    ("fig11", "cohort mean log earnings by age group", "fig11.csv", Stage::Indicators),
    ("fig12", "group earnings quantiles relative to the reference group", "fig12.csv", Stage::Decompose),
    ("fig13-17", "decomposition components by group", "fig13_17.csv", Stage::Decompose),
    ("fig18", "counterfactual with reference characteristics", "fig18.csv", Stage::Decompose),
    ("fig19", "counterfactual with reference coefficients", "fig19.csv", Stage::Decompose),
    ("figA5", "distribution of log earnings", "figA5.csv", Stage::Indicators),
    ("figA6", "distribution of age residuals", "figA6.csv", Stage::Indicators),
    ("figA7", "distribution of age-education residuals", "figA7.csv", Stage::Indicators),
    ("figA8", "Pareto tail fit, top 1%", "figA8.csv", Stage::Indicators),
    ("figA9", "Pareto tail fit, top 5%", "figA9.csv", Stage::Indicators),
    ("figA10", "top earnings shares", "figA10.csv", Stage::Indicators),
    ("figA11", "Gini coefficient", "figA11.csv", Stage::Indicators),
    ("figA12", "dispersion of five-year changes", "figA12.csv", Stage::Indicators),
    ("figA13", "skewness and kurtosis of five-year changes", "figA13.csv", Stage::Indicators),
    ("figA14", "five-year change statistics by permanent earnings bin", "figA14.csv", Stage::Indicators),
    ("figA15", "moments of one-year changes by bin", "figA15.csv", Stage::Indicators),
    ("figA16", "moments of five-year changes by bin", "figA16.csv", Stage::Indicators),
    ("figA17", "five-year rank mobility by age", "figA17.csv", Stage::Mobility),
    ("figA18", "five-year rank mobility by base year", "figA18.csv", Stage::Mobility),
    ("figA19", "density of one-year changes", "figA19.csv", Stage::Indicators),
    ("figA20", "density of five-year changes", "figA20.csv", Stage::Indicators),
    ("figA21", "log density of one-year changes", "figA21.csv", Stage::Indicators),
    ("figA22", "log density of five-year changes", "figA22.csv", Stage::Indicators),
    ("slope", "rank-rank slopes", "slope.csv", Stage::Mobility),
    ("table2", "earnings and activity by group and percentile", "table2.csv", Stage::Indicators),
    ("table3", "job and worker characteristics by group and percentile", "table3.csv", Stage::Indicators),
    ("table4", "OLS ladder", "table4.csv", Stage::Decompose),
    ("table5", "simulated quantiles by group", "table5.csv", Stage::Decompose),
    ("table6", "gap decompositions by group", "table6.csv", Stage::Decompose),
];

fn dir_is_empty(dir: &Path) -> bool {
    fs::read_dir(dir).map_or(true, |mut it| it.next().is_none())
}

fn empty_dir_error(dir: &Path) -> Error {
    Error::Other(format!("output directory {} is empty or missing", dir.display()))
}

/// One line per table/figure analog with its path (relative to `out`) and
/// row count, or `skipped` when the output is absent.
pub fn emit_report(out: &Path) -> Result<String> {
    if dir_is_empty(out) {
        return Err(empty_dir_error(out));
    }
    let manifest = Manifest::read(out)?;
    let mut s = String::new();
    for (label, desc, file, stage) in ARTIFACTS {
        let path = out.join(file);
        let rows = manifest
            .as_ref()
            .and_then(|m| m.stage(*stage))
            .and_then(|r| r.files.get(*file).copied());
        let status = if path.exists() {
            match rows {
                Some(n) => format!("{file} ({n} rows)"),
                None => file.to_string(),
            }
        } else {
            "skipped".to_string()
        };
        s.push_str(&format!("{label:<10} {desc:<58} {status}\n"));
    }
    Ok(s)
}

fn stage_report(ctx: &Ctx, manifest: &Manifest, dir: &mut StageDir) -> Result<Notes> {
    // write the in-progress manifest first so row counts are current
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    fs::write(ctx.out.join(MANIFEST), bytes)?;
    let text = emit_report(&ctx.out)?;
    let lines = text.lines().count();
    dir.raw(REPORT, text.as_bytes(), lines)?;
    Ok(Notes::new())
}
