//! Earnings-dynamics measurement engine for person-year earnings panels.
//!
//! The numeric kernels (statistics, ranks, regression, two-way fixed effects)
//! are generic over [`Scalar`]; money and the pipeline run on `f64`, and the
//! aliases below name the `f64` instantiations.

pub mod akm;
pub mod codes;
pub mod error;
pub mod impute;
pub mod io;
pub mod linalg;
pub mod measures;
pub mod microagg;
pub mod mobility;
pub mod panel;
pub mod pipeline;
pub mod regress;
pub mod samples;
pub mod scalar;
pub mod stats;
pub mod synth;

pub use codes::{Division, Education, Group, RaceEth, Sector, Sex, State};
pub use error::{Error, Result};
pub use panel::{
    CoverageMask, DeflatorSeries, EarningsGrid, JobYearRecord, MinWageSeries, Panel, PersonRecord,
};
pub use scalar::Scalar;
