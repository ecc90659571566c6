//! Fixed-step explicit and implicit Runge-Kutta integrators for index-1 DAEs
//! with exact forward, adjoint and second-order sensitivities, plus
//! multiple-shooting and collocation transcriptions and a small SQP solver.

pub mod ad;
pub mod butcher;
pub mod erk;
pub mod error;
pub mod experiments;
pub mod handle;
pub mod integrator;
pub mod irk;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod nlp;
pub mod ocp;
pub mod sim;
pub mod sqp;

pub use butcher::{make_tableau, ButcherTableau, SchemeFamily};
pub use error::{Error, Result};
pub use integrator::Integrator;
pub use model::{Dims, Dynamics, Model, ModelRegistry};
pub use sim::{NewtonOpts, SensFlags, SimConfig, SimOutput, SimStats};
