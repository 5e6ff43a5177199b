//! Finite-volume simulation of the nonlocal Busenberg–Travis cross-diffusion
//! system with a power-law pressure and a Brinkman velocity law.

pub mod brinkman;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod harness;
pub mod integrator;
pub mod linalg;
pub mod pressure;

pub use error::{Error, Result};
pub use grid::{FaceFluxField, Grid, GridSpec, ScalarField, VectorField};
pub use pressure::ModelParams;
pub use entropy::DiagnosticsRecord;
pub use integrator::{run, RunOutput, SchemeVariant, SimulationState, Stepper, TimeStepConfig};
