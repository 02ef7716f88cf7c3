//! Config-driven experiment runner around `cocycle_lab`.

pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod run;
