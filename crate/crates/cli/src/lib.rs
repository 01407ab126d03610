//! Command implementations behind the `splatlift` binary, split out as a
//! library so integration tests can drive scenes and trainings in-process.

pub mod config;
pub mod eval;
pub mod perturb;
pub mod render;
pub mod scene;
pub mod synth;
pub mod train;

use std::fmt;

/// Error class that maps to exit code 1 (bad invocation) rather than 2
/// (bad data). Constructed for flag-level problems the parser can't catch.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}
