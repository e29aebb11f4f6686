//! Command-line front end: scenario configs, runs, archives, checks and CSV series.

pub mod commands;
pub mod config;
pub mod report;

use cmaf_core::Error;

/// All checks passed.
pub const EXIT_OK: u8 = 0;
/// Bad invocation, invalid configuration or unmet preconditions.
pub const EXIT_USAGE: u8 = 2;
/// A numeric failure or a failed check.
pub const EXIT_NUMERIC: u8 = 3;

/// Exit status for an error: engine failures are numeric, everything else is usage.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidGrid(_)
                | Error::GridMismatch(_)
                | Error::InvalidArgument(_)
                | Error::MissingTimes(_)
                | Error::PreconditionFailed(_)
                | Error::Io(_)
                | Error::Json(_) => EXIT_USAGE,
                _ => EXIT_NUMERIC,
            };
        }
    }
    EXIT_USAGE
}
