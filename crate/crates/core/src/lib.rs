//! Human–machine shared control for connected automated vehicle platoons.
//!
//! The human driver is modelled as a finite-horizon LQ tracker that reacts
//! to the machine's planned commands; the machine plans as the leader of a
//! Stackelberg game by substituting that reaction law into its own MPC.

// `!(x > 0)` is deliberate: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod fusion;
pub mod human_model;
pub mod linalg;
pub mod machine_controller;
pub mod metrics;
pub mod oracle;
pub mod scalar;
pub mod simulator;
pub mod stacked_ops;
pub mod validate;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type VehicleState64 = dynamics::VehicleState<f64>;
pub type DiscreteDynamics64 = dynamics::DiscreteDynamics<f64>;
pub type AuthorityPair64 = dynamics::AuthorityPair<f64>;
pub type GainSequence64 = human_model::GainSequence<f64>;
pub type TrackingObjective64 = human_model::TrackingObjective<f64>;
pub type StackedHumanLaw64 = stacked_ops::StackedHumanLaw<f64>;
pub type QpProblem64 = machine_controller::QpProblem<f64>;
pub type KktSolution64 = machine_controller::KktSolution<f64>;
pub type Plan64 = machine_controller::Plan<f64>;
