//! Safety shields for continuous-state MDPs.
//!
//! The pipeline partitions a model's state space into a rectangular
//! [`grid`], approximates the cell transition system by simulation, solves
//! the safety game on it ([`synthesis`]), and compacts the resulting
//! per-cell action sets into a small decision tree ([`caap`]). [`eval`]
//! runs strategies under a shield and learns a cost-efficient policy
//! within it.

pub mod caap;
pub mod eval;
pub mod grid;
pub mod model;
pub mod models;
pub mod seeding;
pub mod shield;
pub mod synthesis;

pub use grid::{Axis, AxisKind, CellIndex, GridSpec, SamplePlan, StateMap};
pub use model::{ActionId, ActionSet, DecisionStepOutcome, Model, ModelDescriptor, ModelError, SimRng, State};
pub use shield::{Shield, ShieldGrid};
