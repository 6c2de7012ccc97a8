//! Active preference learning of constraint weights for path planning.
//!
//! A scenario is a directed multigraph with per-edge traversal times plus a
//! set of constraints, each an edge subset with an unknown per-violation
//! weight. The learner samples the weight box into equivalence regions, keeps
//! a discrete posterior over them and asks pairwise path comparisons chosen
//! greedily.

pub mod bayes;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod problem;
pub mod regions;
pub mod scenario;
pub mod scenarios;
pub mod select;
pub mod session;
pub mod users;

pub use error::{Error, Result};
