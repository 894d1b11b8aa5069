//! OLS ladder, quantile regression grid, Machado-Mata simulation and gap decompositions.

pub mod decomp;
pub mod design;
pub mod mm;
pub mod ols;
pub mod quantreg;

pub use decomp::{counterfactual_ratios, decompose_gap, DecompRow, Ordering, RatioRow, Simulations};
pub use design::{build_design, model_blocks, Block, CohortRow, Design, QUANTILE_BLOCKS};
pub use mm::{person_key, simulate_mm};
pub use ols::{ols, OlsFit};
pub use quantreg::{fit_quantile_grid, pinball, rq_fit, QrOptions, QrSolution, QuantileFit};
