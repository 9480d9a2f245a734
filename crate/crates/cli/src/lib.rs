//! Config-driven experiment runners over the visit-statistics library:
//! entry/return sweeps against the compound Poisson limit laws, the
//! alternating-block oscillation construction, hypothesis checks on
//! concrete systems, and error-bound profiles.

pub mod bound_profile;
pub mod conditions;
pub mod config;
pub mod error;
pub mod oscillate;
pub mod output;
pub mod sweep;

pub use error::{CliError, CliResult};
