//! Echo-index analysis of input-driven recurrent networks.

pub mod contraction;
pub mod dynamics;
pub mod echo_index;
pub mod error;
pub mod input;
pub mod linalg;
pub mod rng;
pub mod systems;
pub mod training;

pub use dynamics::{DrivenSystem, RnnParams, State, Trajectory};
pub use error::{Error, Result};
pub use input::InputSequence;
