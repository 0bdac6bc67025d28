//! Signalized two-lane, four-approach roundabout: a discrete-time queueing
//! simulator, vehicle-actuated and fuzzy signal controllers, and a particle
//! swarm optimizer for the fuzzy controller's membership functions.

pub mod controllers;
pub mod fuzzy;
pub mod phases;
pub mod pso;
pub mod sim;

pub use controllers::{Controller, ControllerKind, ControllerParams};
pub use fuzzy::{FuzzyEngine, MembershipSet};
pub use phases::{FlowId, PhaseId, SignalCommand, Subset};
pub use sim::{Scenario, SimMetrics};
