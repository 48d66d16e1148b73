//! Rank-once, test-many hypothesis testing for overlapping A/B experiments.
//!
//! A population is ranked a single time ([`rankcore`]); every experiment is
//! then tested from rank lookups alone with the global-rank-sum statistic,
//! next to the classic rank-sum and t-test baselines ([`hypotest`]).
//! [`simlab`] reproduces calibration, power and timing studies on log-normal
//! populations, and [`platform`] ingests files and drives the CLI.

pub mod cli;
pub mod error;
pub mod hypotest;
pub mod platform;
pub mod rankcore;
pub mod simlab;

pub use error::{Error, Result};
