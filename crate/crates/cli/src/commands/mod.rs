pub mod avoid;
pub mod eval;
pub mod fit;
pub mod grid;
pub mod plan;

use std::path::PathBuf;

use crate::{CliError, CliResult};

/// First of flag, config value, default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

pub fn require_path(
    flag: Option<PathBuf>,
    config: Option<PathBuf>,
    name: &str,
) -> CliResult<PathBuf> {
    flag.or(config)
        .ok_or_else(|| CliError::Validation(format!("--{name} is required (flag or config file)")))
}

/// A comma-separated list given as one flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct NumList(pub Vec<f64>);

/// Parses `a,b,c` into numbers.
pub fn parse_list(s: &str) -> Result<NumList, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()
        .map(NumList)
}

/// Fixed-width CSV header `prefix_0, …, prefix_{n-1}`.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}_{i}")).collect()
}
