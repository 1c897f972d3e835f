//! Deterministic multi-robot soccer simulation and coordination library.
//!
//! The crate is organized around the stack a wheeled soccer robot team runs:
//!
//! - [`field`] — planar field geometry, poses, and geometric queries
//! - [`sim`] — ground-truth world: drive kinematics, ball contact, detection-level sensors
//! - [`localize`] — Hough-transform self-localization from line-transition pixels
//! - [`fusion`] — Bayesian ball-position fusion within and across robots
//! - [`nav`] — modified potential-fields guidance with a dribbling constraint
//! - [`behavior`] — blackboard, micro-agent scheduler, operator FSAs, team coordination
//! - [`des`] — stochastic discrete-event game model and dynamic-programming policies
//! - [`config`], [`matchlog`], [`runner`], [`experiments`] — harness: seeded matches,
//!   line-delimited logs, replay, and per-module experiment suites
//!
//! Everything is deterministic given a master seed: all randomness flows through
//! named sub-streams (see [`rng`]), so single sensors can be replayed in isolation.

pub mod behavior;
pub mod config;
pub mod des;
pub mod experiments;
pub mod field;
pub mod fusion;
pub mod geom;
pub mod localize;
pub mod matchlog;
pub mod nav;
pub mod rng;
pub mod runner;
pub mod sim;

pub use field::{FieldModel, Pose, TransitionPixel};
pub use fusion::GaussianEstimate;
pub use localize::PoseEstimate;
pub use nav::NavCommand;

/// Robot identifier, unique within a match (both teams share the id space).
pub type RobotId = u8;
