//! Numerics for ψ-Hilfer fractional p-Laplacian boundary value problems on
//! Ω = [0, T]: ψ-fractional integrals and derivatives, the Euler energy and
//! its critical points, variational eigenvalues, and audits of the bracket
//! hypotheses on a nonlinearity.

pub mod coordinate_map;
pub mod eigen;
pub mod energy;
pub mod error;
pub mod fractional_operators;
pub mod function_spaces;
pub mod grid_function;
pub mod hypothesis;
pub mod nonlinearity;
pub mod solver;
pub mod special;

pub use coordinate_map::{Grid, PsiMap, SpacingRule};
pub use error::{Error, Result};
pub use eigen::EigenEstimate;
pub use energy::{Energy, EnergyBreakdown};
pub use fractional_operators::FractionalOrder;
pub use function_spaces::SpaceParams;
pub use grid_function::GridFunction;
pub use hypothesis::{HypothesisConfig, HypothesisReport, Theorem};
pub use nonlinearity::Nonlinearity;
pub use solver::{SolveOptions, SolveReport};
