//! Overhead-line conductor temperature simulation built on closed-form
//! solutions of the conductor heat-balance equation.

// Negated comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod batch;
pub mod cli;
pub mod cluster;
pub mod conductor;
pub mod environment;
pub mod format;
pub mod geo;
pub mod oracle;
pub mod physics;
pub mod risk;
pub mod synthetic;
pub mod weather;
