pub mod error;
pub mod grid;
pub mod linalg;
pub mod potential;
pub mod gaussian_bridge;
pub mod greens;
pub mod quadrature;
mod descent;
pub mod functionals;
pub mod optimize;

/// Library version, recorded in run summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use functionals::{KLBreakdown, QuasipotentialCache};
pub use gaussian_bridge::{sample_bridge, GaussianPathMeasure};
pub use grid::{BVStepPath, FieldGrid, PathGrid};
pub use optimize::{alternate_minimize, gamma_sweep, Objective, OptimizerConfig};
pub use potential::{builtin_potential, CriticalKind, CriticalPoint, Potential, PotentialModel};
