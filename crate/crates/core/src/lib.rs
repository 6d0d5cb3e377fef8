//! Steering reaction-diffusion states with piecewise-static
//! reaction-coefficient controls.

pub mod dynamics;
pub mod error;
pub mod estimates;
pub mod field;
pub mod linalg;
pub mod scalar;
pub mod spectral;
pub mod suite;
pub mod synthesis;

pub use dynamics::{ControlSchedule, Nonlinearity, ProblemSpec, SolveTrace};
pub use error::{Error, Result};
pub use field::{Grid, ScalarField};
pub use scalar::Real;
pub use synthesis::{steer, SynthesisReport};

/// `f64` grid.
pub type Grid64 = Grid<f64>;
/// `f64` field.
pub type Field64 = ScalarField<f64>;
/// `f32` grid.
pub type Grid32 = Grid<f32>;
/// `f32` field.
pub type Field32 = ScalarField<f32>;
/// `f64` control schedule.
pub type Schedule64 = ControlSchedule<f64>;
/// `f64` solve trace.
pub type Trace64 = SolveTrace<f64>;
