//! Constrained lasso estimators, cross-validated tuning-parameter selection
//! and exact excess-risk simulation for linear models with random design.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(doctest)]
mod book;
pub mod diagnostics;
pub mod error;
pub mod risk;
pub mod rng;
pub mod selection;
pub mod simulate;
pub mod solvers;
pub mod report;
pub mod types;

pub use error::{Error, Result};
