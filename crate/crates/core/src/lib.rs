//! Backpropagation and synthetic-gradient propagation on layered graphs.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: layered DAGs, forward traces and local Jacobians;
//! - [`propagation`]: backprop, mixed synthetic-gradient propagation and exact
//!   oracles on enumerable problems;
//! - [`estimation`]: MSE decompositions and optimal mixing weights;
//! - [`expert`]: the finite-partition expert simulation;
//! - [`sparsenet`], [`envs`], [`training`]: slot-routed sparse networks and the
//!   bandit/labyrinth experiments built on them.

pub mod envs;
pub mod error;
pub mod estimation;
pub mod expert;
pub mod graph;
pub mod linalg;
pub mod propagation;
pub mod rng;
pub mod slot;
pub mod sparsenet;
pub mod training;

pub use error::{Error, Result};
