pub mod analyze;
pub mod decode;
pub mod generate;
pub mod percolate;
pub mod sweep;
pub mod verify;

use eavesdrop_core::batch::{default_workers, with_workers};

use crate::error::{CliError, CliResult};

/// Runs `f` on `workers` threads (default from the environment).
pub fn pooled<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    with_workers(workers.unwrap_or_else(default_workers), f).map_err(|e| CliError::io(e.to_string()))
}

/// Comma-separated list parser.
pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| CliError::usage(format!("bad {what} `{t}`: {e}"))))
        .collect()
}
