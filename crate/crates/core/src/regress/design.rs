//! Cohort design matrices: covariate blocks and the cumulative model ladder.

use serde::{Deserialize, Serialize};

use crate::codes::{Division, Education, Group, Sector};
use crate::linalg::Csr;

/// One cohort member's response and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub person: usize,
    /// Group id, 0 = reference.
    pub group: usize,
    pub log_w: f64,
    pub avg_hours: f64,
    pub years_inactive: f64,
    pub years_partial: f64,
    pub division: Division,
    pub sector: Sector,
    /// Age at the start of the window.
    pub age: i32,
    pub education: Education,
    pub theta: f64,
    pub psi_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    Intercept,
    /// Indicators for groups 1..=19.
    Groups,
    /// Hours quartic (hours / 1000), years inactive, years partially active.
    Hours,
    /// Division and industry indicators.
    Geography,
    /// Initial age and education indicators.
    AgeEducation,
    /// Person effect and average firm effect.
    HumanCapital,
}

impl Block {
    fn width(self) -> usize {
        match self {
            Block::Intercept => 1,
            Block::Groups => Group::COUNT - 1,
            Block::Hours => 6,
            Block::Geography => Division::COUNT + Sector::COUNT,
            Block::AgeEducation => 1 + Education::ALL.len(),
            Block::HumanCapital => 2,
        }
    }

    fn names(self) -> Vec<String> {
        match self {
            Block::Intercept => vec!["intercept".into()],
            Block::Groups => (1..Group::COUNT).map(|g| format!("group_{g}")).collect(),
            Block::Hours => ["hours", "hours2", "hours3", "hours4", "years_inactive", "years_partial"]
                .map(String::from)
                .to_vec(),
            Block::Geography => (1..=Division::COUNT as u8)
                .map(|d| format!("division_{d}"))
                .chain(Sector::all().map(|s| format!("industry_{}", s.letter())))
                .collect(),
            Block::AgeEducation => std::iter::once("age".to_string())
                .chain(Education::ALL.iter().map(|e| format!("educ_{}", e.code())))
                .collect(),
            Block::HumanCapital => vec!["person_effect".into(), "firm_effect".into()],
        }
    }

    fn push(self, row: &CohortRow, offset: usize, out: &mut Vec<(usize, f64)>) {
        match self {
            Block::Intercept => out.push((offset, 1.0)),
            Block::Groups => {
                if row.group > 0 {
                    out.push((offset + row.group - 1, 1.0));
                }
            }
            Block::Hours => {
                let h = row.avg_hours / 1000.0;
                out.extend([
                    (offset, h),
                    (offset + 1, h * h),
                    (offset + 2, h * h * h),
                    (offset + 3, h * h * h * h),
                    (offset + 4, row.years_inactive),
                    (offset + 5, row.years_partial),
                ]);
            }
            Block::Geography => {
                out.push((offset + row.division.index(), 1.0));
                out.push((offset + Division::COUNT + row.sector.index(), 1.0));
            }
            Block::AgeEducation => {
                out.push((offset, row.age as f64));
                out.push((offset + 1 + row.education.index(), 1.0));
            }
            Block::HumanCapital => out.extend([(offset, row.theta), (offset + 1, row.psi_bar)]),
        }
    }
}

/// Blocks of ladder model `m` (1..=5). Models are nested: each adds blocks
/// to the previous one.
pub fn model_blocks(m: usize) -> Vec<Block> {
    let ladder = [
        Block::Intercept,
        Block::Groups,
        Block::Hours,
        Block::Geography,
        Block::AgeEducation,
        Block::HumanCapital,
    ];
    ladder[..(m.clamp(1, 5) + 1)].to_vec()
}

/// Covariates of the per-group quantile regressions (ladder model 4 without
/// group indicators).
pub const QUANTILE_BLOCKS: [Block; 4] = [Block::Intercept, Block::Hours, Block::Geography, Block::AgeEducation];

#[derive(Debug, Clone)]
pub struct Design {
    pub x: Csr<f64>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
}

/// Builds the design for the given blocks (in the order given).
pub fn build_design(rows: &[CohortRow], blocks: &[Block]) -> Design {
    let width: usize = blocks.iter().map(|b| b.width()).sum();
    let mut x = Csr::new(width);
    let mut entries = Vec::with_capacity(16);
    for r in rows {
        entries.clear();
        let mut off = 0;
        for b in blocks {
            b.push(r, off, &mut entries);
            off += b.width();
        }
        x.push_row(entries.iter().copied());
    }
    Design {
        x,
        y: rows.iter().map(|r| r.log_w).collect(),
        names: blocks.iter().flat_map(|b| b.names()).collect(),
    }
}
