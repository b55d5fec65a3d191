//! Transfer-function analysis and time-domain simulation of multichannel,
//! multi-tone active noise equalizers.

pub mod cli;
pub mod equalizer;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod poles;
pub mod scenario;
pub mod scenario_io;
pub mod signal_model;
pub mod tf;
pub mod validation;

pub use error::{Error, Result, Violation};
pub use exec::Execution;
pub use scenario::{Scenario, Strategy};
