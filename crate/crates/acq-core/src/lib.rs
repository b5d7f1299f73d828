//! Creative-quota prediction and allocation.
//!
//! The crate has three pillars:
//!
//! * a cost model — an unbalanced binary tree over a heavily zero-inflated
//!   cost label ([`tree`]) plus a small neural predictor with
//!   shape-constrained output heads ([`predictor`], [`learning`]);
//! * a budgeted allocator — a Lagrangian-dual bisection solver for the
//!   multiple-choice knapsack that assigns one quota per item under a global
//!   capacity ([`allocator`]), checked against independent exact solvers
//!   ([`oracle`]);
//! * a synthetic workload generator used for end-to-end evaluation
//!   ([`datagen`]).

pub mod allocator;
pub mod datagen;
pub mod error;
mod hash;
pub mod learning;
pub mod oracle;
pub mod predictor;
pub mod tree;

pub use error::{AcqError, Result};
