//! Run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::akm::FeOptions;
use crate::error::{Error, Result};
use crate::impute::EducCellSpec;
use crate::measures::ArcPairs;
use crate::microagg::DEFAULT_MIN_BIN;
use crate::regress::QrOptions;
use crate::samples::{SampleRules, DEFAULT_WINSOR_QUANTILE};
use crate::synth::GenConfig;

/// Pipeline stages in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Gen,
    Impute,
    Samples,
    Measures,
    Akm,
    Indicators,
    Mobility,
    Decompose,
    Microagg,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Gen,
        Stage::Impute,
        Stage::Samples,
        Stage::Measures,
        Stage::Akm,
        Stage::Indicators,
        Stage::Mobility,
        Stage::Decompose,
        Stage::Microagg,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Gen => "gen",
            Stage::Impute => "impute",
            Stage::Samples => "samples",
            Stage::Measures => "measures",
            Stage::Akm => "akm",
            Stage::Indicators => "indicators",
            Stage::Mobility => "mobility",
            Stage::Decompose => "decompose",
            Stage::Microagg => "microagg",
            Stage::Report => "report",
        }
    }

    /// Stages whose outputs this stage reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Gen => &[],
            Stage::Impute => &[Stage::Gen],
            Stage::Samples | Stage::Measures | Stage::Akm | Stage::Mobility => &[Stage::Impute],
            Stage::Indicators | Stage::Decompose => &[Stage::Impute, Stage::Akm],
            Stage::Microagg => &[Stage::Measures],
            Stage::Report => &[
                Stage::Samples,
                Stage::Measures,
                Stage::Akm,
                Stage::Indicators,
                Stage::Mobility,
                Stage::Decompose,
                Stage::Microagg,
            ],
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory with persons.csv, jobs.csv, deflator.csv, minwage.csv
    /// (and optionally coverage_mask.csv). Unused when the gen stage runs.
    pub input_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            input_dir: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggles {
    pub gen: bool,
    pub impute: bool,
    pub samples: bool,
    pub measures: bool,
    pub akm: bool,
    pub indicators: bool,
    pub mobility: bool,
    pub decompose: bool,
    pub microagg: bool,
    pub report: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            gen: true,
            impute: true,
            samples: true,
            measures: true,
            akm: true,
            indicators: true,
            mobility: true,
            decompose: true,
            microagg: true,
            report: true,
        }
    }
}

impl Toggles {
    pub fn enabled(&self, s: Stage) -> bool {
        match s {
            Stage::Gen => self.gen,
            Stage::Impute => self.impute,
            Stage::Samples => self.samples,
            Stage::Measures => self.measures,
            Stage::Akm => self.akm,
            Stage::Indicators => self.indicators,
            Stage::Mobility => self.mobility,
            Stage::Decompose => self.decompose,
            Stage::Microagg => self.microagg,
            Stage::Report => self.report,
        }
    }
}

/// Windows, reference years and statistic settings shared by the analysis stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    /// Indicator window; defaults to the deflator's span.
    pub first_year: Option<i32>,
    pub last_year: Option<i32>,
    /// Base year of percentile changes; defaults to the first year.
    pub base_year: Option<i32>,
    /// Currency year of the yearly samples.
    pub reference_year: i32,
    /// Currency year of the twelve-year cohort.
    pub cohort_reference_year: i32,
    pub winsor_quantile: f64,
    pub rules: SampleRules,
    /// Percentiles (fractions) of the percentile-change figures.
    pub percentiles: Vec<f64>,
    /// Top fractions for earnings shares.
    pub top_shares: Vec<f64>,
    /// Lower bounds of the age classes of the binned profiles and mobility.
    pub age_classes: Vec<i32>,
    /// Lower bounds of the cohort age groups.
    pub cohort_age_groups: Vec<i32>,
    /// Years at which the life-cycle cohorts are age 25.
    pub lifecycle_cohorts: Vec<i32>,
    /// Pooled years of the heterogeneity profiles.
    pub h_years: (i32, i32),
    pub n_bins: usize,
    pub density_year: i32,
    pub density_range: (f64, f64),
    pub density_bins: usize,
    /// Base years of the mobility profiles by year.
    pub mobility_years: Vec<i32>,
    /// Percentiles of the cohort window tables.
    pub table_percentiles: Vec<u32>,
    pub arc_pairs: ArcPairs,
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            first_year: None,
            last_year: None,
            base_year: None,
            reference_year: 2018,
            cohort_reference_year: 2010,
            winsor_quantile: DEFAULT_WINSOR_QUANTILE,
            rules: SampleRules::default(),
            percentiles: vec![0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.999],
            top_shares: vec![0.1, 0.01, 0.001],
            age_classes: vec![25, 35, 45],
            cohort_age_groups: vec![25, 35, 45],
            lifecycle_cohorts: vec![1998, 2000, 2005, 2009],
            h_years: (2001, 2014),
            n_bins: 41,
            density_year: 2010,
            density_range: (-3.0, 3.0),
            density_bins: 120,
            mobility_years: vec![2001, 2005, 2009],
            table_percentiles: vec![10, 25, 50, 75, 90],
            arc_pairs: ArcPairs::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeConfig {
    pub seed: u64,
    pub education: EducCellSpec,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            education: EducCellSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    /// Seed of the simulation draws.
    pub seed: u64,
    pub qr: QrOptions,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            seed: 11,
            qr: QrOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroaggConfig {
    /// CSV to bin, relative to the output directory unless absolute. It must
    /// carry `year`, `sex` and `birth_year` columns.
    pub input: PathBuf,
    pub variables: Vec<String>,
    pub min_bin_size: usize,
}

impl Default for MicroaggConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("measures.csv"),
            variables: vec!["y".into(), "p3".into()],
            min_bin_size: DEFAULT_MIN_BIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub stages: Toggles,
    pub gen: GenConfig,
    pub analysis: Analysis,
    pub impute: ImputeConfig,
    pub akm: FeOptions,
    pub decompose: DecomposeConfig,
    pub microagg: MicroaggConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.paths.output_dir);
        if let Some(d) = cfg.paths.input_dir.as_mut() {
            fix(d);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Other(format!("config serialization: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.stages.gen && self.paths.input_dir.is_none() {
            return Err(Error::config("paths.input_dir", "required when the gen stage is disabled"));
        }
        if self.stages.gen {
            self.gen.validate()?;
        }
        let a = &self.analysis;
        if let (Some(f), Some(l)) = (a.first_year, a.last_year) {
            if f > l {
                return Err(Error::config("analysis.first_year", "after analysis.last_year"));
            }
        }
        if !(a.winsor_quantile > 0.0 && a.winsor_quantile <= 1.0) {
            return Err(Error::config("analysis.winsor_quantile", "must lie in (0, 1]"));
        }
        if a.rules.age_lo > a.rules.age_hi {
            return Err(Error::config("analysis.rules.age_lo", "above age_hi"));
        }
        if a.rules.cohort_years < 3 {
            return Err(Error::config("analysis.rules.cohort_years", "need at least three years"));
        }
        if a.percentiles.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::config("analysis.percentiles", "fractions must lie in (0, 1]"));
        }
        if a.table_percentiles.iter().any(|p| !(1..=99).contains(p)) {
            return Err(Error::config("analysis.table_percentiles", "must lie in 1..=99"));
        }
        if a.age_classes.is_empty() || a.age_classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("analysis.age_classes", "must be non-empty and increasing"));
        }
        if a.cohort_age_groups.is_empty() || a.cohort_age_groups.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("analysis.cohort_age_groups", "must be non-empty and increasing"));
        }
        if a.n_bins == 0 {
            return Err(Error::config("analysis.n_bins", "must be positive"));
        }
        if a.density_bins == 0 || !(a.density_range.1 > a.density_range.0) {
            return Err(Error::config("analysis.density_range", "needs lo < hi and positive bins"));
        }
        if self.microagg.min_bin_size == 0 {
            return Err(Error::config("microagg.min_bin_size", "must be positive"));
        }
        if !(self.akm.tol > 0.0) {
            return Err(Error::config("akm.tol", "must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical config with the output directory cleared, so
    /// the same analysis written to two places hashes the same.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.paths.output_dir = PathBuf::new();
        Ok(hex::encode(Sha256::digest(c.to_toml()?.as_bytes())))
    }

    /// Every seed the run uses, as recorded in the manifest.
    pub fn seeds(&self) -> Vec<(&'static str, u64)> {
        vec![
            ("gen", self.gen.seed),
            ("impute", self.impute.seed),
            ("decompose", self.decompose.seed),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn named_field_errors() {
        let e = RunConfig::from_toml("[analysis]\nwinsor_quantile = 2.0\n").unwrap_err();
        assert!(e.to_string().contains("analysis.winsor_quantile"));
        let e = RunConfig::from_toml("[stages]\ngen = false\n").unwrap_err();
        assert!(e.to_string().contains("paths.input_dir"));
        assert!(RunConfig::from_toml("[analysis]\nbogus = 1\n").is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.output_dir = "elsewhere".into();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.gen.seed += 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
