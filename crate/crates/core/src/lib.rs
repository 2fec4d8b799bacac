//! Per-instance solver selection for ground answer set programs.
//!
//! A ground program is parsed ([`ground`]), checked for whether it can be
//! evaluated without a solver ([`strat`]), and otherwise reduced to ten
//! syntactic ratios ([`features`]) that a trained classifier ([`classify`])
//! maps to a solver from a pool ([`selector`]). [`runner`] executes the
//! chosen solver under time and memory limits; [`dataset`] and [`harness`]
//! cover training data and offline evaluation.

pub mod classify;
pub mod dataset;
pub mod features;
pub mod ground;
pub mod harness;
pub mod strat;
pub mod selector;
#[cfg(unix)]
pub mod runner;
