//! Finite-impulse-response state-feedback synthesis and deployment of the
//! resulting controllers onto networks of sensors, actuators and relays.
//!
//! The crate is organised bottom-up:
//!
//! - [`lti`]: the plant `x[t+1] = A x[t] + B u[t] + d[t]`.
//! - [`synthesis`]: achievable system responses `(Φx, Φu)` by constrained
//!   least squares, plus reconstruction and robustness helpers.
//! - [`realization`]: the standard and simplified controller realizations.
//! - [`architecture`]: component graphs for the centralized and distributed
//!   deployments, with static cost accounting.
//! - [`simulator`]: step-synchronous execution of those graphs, failures and
//!   internal-stability checks.
//! - [`experiment`]: JSON experiment files and the command implementations.

pub mod architecture;
pub mod error;
pub mod experiment;
pub mod lti;
pub mod realization;
pub mod report;
mod serde_mat;
pub mod simulator;
pub mod synthesis;
pub mod trace;

pub use architecture::{build, cost_report, Architecture, ArchitectureGraph, CostReport};
pub use error::{Error, Result};
pub use lti::LtiSystem;
pub use realization::{SimplifiedRealization, StandardRealization};
pub use synthesis::{synthesize_h2, SynthesisProblem, SystemResponse};
pub use trace::{FailureEvent, SimTrace};
