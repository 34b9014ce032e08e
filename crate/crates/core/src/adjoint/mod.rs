//! Whole-trajectory gradients of initial value problems.
//!
//! A forward sweep stores checkpoints according to a [`CheckpointSchedule`];
//! the reverse sweep restores and recomputes states as the plan dictates and
//! runs the integrator's adjoint step on each of them. Parameters reach the
//! gradient either directly through the right-hand side cotangents or by
//! [`augment_parameters`]. Several solver stages can be differentiated end to
//! end with a [`Chain`].

mod augment;
mod chain;
mod engine;
mod schedule;

pub use augment::{append_integrated_cost, augment_parameters, Augmented};
pub use chain::{Chain, ChainGradient, FnStage, IvpStage, LbvpStage, Stage};
pub use engine::{gradient_ivp, solve_ivp, Cost, Diagnostics, Forward, GradientResult, GraphCost, SeedCost};
pub use schedule::{Action, CheckpointSchedule, ScheduleKind};
