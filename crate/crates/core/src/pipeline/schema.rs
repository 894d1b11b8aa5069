//! Checked-in column schema of the pipeline outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use serde::Deserialize;

use crate::codes::Group;
use crate::error::{Error, Result};
use crate::regress::decomp::DECOMP_THETAS;

pub const SCHEMA_TOML: &str = include_str!("../../schema/outputs.toml");

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub stage: String,
    /// Percentile column of group-by-percentile files.
    pub grid: Option<String>,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub files: BTreeMap<String, FileSpec>,
}

impl Schema {
    pub fn bundled() -> Result<Schema> {
        Ok(toml::from_str(SCHEMA_TOML)?)
    }
}

/// Validates one CSV against its spec: exact header, consistent row widths
/// and, for grid files, exactly one row per group and reported percentile.
pub fn check_file(path: &Path, spec: &FileSpec) -> Result<Vec<String>> {
    let name = path.display().to_string();
    let mut problems = Vec::new();
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(File::open(path)?);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != spec.columns {
        problems.push(format!("{name}: header {header:?} differs from {:?}", spec.columns));
        return Ok(problems);
    }
    let grid_cols = spec.grid.as_ref().map(|g| {
        let pos = |c: &str| header.iter().position(|h| h == c);
        (pos("group_id"), pos(g))
    });
    let mut seen: BTreeMap<(usize, u32), usize> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            problems.push(format!("{name}: row {} has {} fields, expected {}", i + 2, rec.len(), header.len()));
            continue;
        }
        if let Some((Some(gc), Some(pc))) = grid_cols {
            match (rec[gc].parse::<usize>(), rec[pc].parse::<u32>()) {
                (Ok(g), Ok(p)) => *seen.entry((g, p)).or_default() += 1,
                _ => problems.push(format!("{name}: row {} has no group/percentile key", i + 2)),
            }
        }
    }
    if let Some(cols) = grid_cols {
        if cols.0.is_none() || cols.1.is_none() {
            problems.push(format!("{name}: grid columns missing"));
            return Ok(problems);
        }
        let want: BTreeSet<(usize, u32)> = (0..Group::COUNT)
            .flat_map(|g| DECOMP_THETAS.iter().map(move |&p| (g, p)))
            .collect();
        for k in &want {
            match seen.get(k) {
                Some(1) => {}
                Some(n) => problems.push(format!("{name}: group {} percentile {} appears {n} times", k.0, k.1)),
                None => problems.push(format!("{name}: group {} percentile {} missing", k.0, k.1)),
            }
        }
        for k in seen.keys().filter(|k| !want.contains(k)) {
            problems.push(format!("{name}: unexpected group {} percentile {}", k.0, k.1));
        }
    }
    Ok(problems)
}

/// Checks every schema file present in `out`; `required` files must exist.
pub fn check_outputs(out: &Path, required: &[&str]) -> Result<Vec<String>> {
    let schema = Schema::bundled()?;
    let mut problems = Vec::new();
    for req in required {
        if !schema.files.contains_key(*req) {
            return Err(Error::Other(format!("{req} is not in the output schema")));
        }
        if !out.join(req).exists() {
            problems.push(format!("{req}: missing"));
        }
    }
    for (file, spec) in &schema.files {
        let p = out.join(file);
        if p.exists() {
            problems.extend(check_file(&p, spec)?);
        }
    }
    Ok(problems)
}
