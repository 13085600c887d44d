//! Locally conservative low-rank tensor solver for the Vlasov-Poisson system.
//!
//! The kinetic distribution is evolved in a factored format (SVD-type for
//! 1D1V, hierarchical Tucker for 2D2V). Alongside it, the macroscopic
//! mass, momentum and energy equations are advanced in flux-difference form
//! with kinetic flux vector splitting, and the kinetic solution is projected
//! so that its low moments match the macroscopic ones exactly.

pub mod driver;
pub mod error;
pub mod fdops;
pub mod field;
pub mod grid;
pub mod ht;
pub mod io;
pub mod lowrank;
pub mod macroscopic;
pub mod presets;
pub mod projection;

pub use driver::{
    run, select_dt, transport_1d, DiagnosticsRow, DiagnosticsSeries, Dimensionality, KineticState,
    Level, Simulation, SolverConfig, Variant,
};
pub use error::{LomacError, Result};
pub use grid::{SpatialGrid, VelocityGrid, WeightFunction};
pub use ht::{HtSpace, HtTensor, Moments2D, ProjectionBasis4D};
pub use lowrank::LowRankMatrix;
pub use macroscopic::{FluxSet, MacroState};
pub use presets::Preset;
pub use projection::{Moments1D, ProjectionBasis};
