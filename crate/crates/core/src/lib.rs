//! P1 finite elements for the Landau-Lifshitz-Bloch equation with
//! spin-transfer torques on a rectangle: a linear implicit scheme, an
//! energy-dissipative nonlinear scheme, and a verification harness.

pub mod app;
pub mod fem;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod schemes;

pub use app::AppError as Error;
