use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Serialize};

use crate::{CliError, CliResult, Common};

pub const MANIFEST_FILE: &str = "manifest.json";

/// What produced the files in an output directory; rerunning with the same
/// values reproduces them. The directory itself is left out so runs into
/// different directories compare equal.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a, T: Serialize> {
    pub command: &'a str,
    pub config: Option<String>,
    pub seed: u64,
    pub tool_version: &'a str,
    /// Every option after merging flags, config file and defaults.
    pub options: &'a T,
    pub outputs: Vec<String>,
}

/// Output directory from the flag, then `LINKFIELD_OUT`, then `./out`.
pub fn out_dir(common: &Common) -> CliResult<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os("LINKFIELD_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Validation(format!("creating {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Reads the `--config` file, or an empty set of options.
pub fn load_config<T: DeserializeOwned + Default>(common: &Common) -> CliResult<T> {
    match &common.config {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))
        }
    }
}

pub fn write_manifest<T: Serialize>(
    dir: &Path,
    command: &str,
    common: &Common,
    seed: u64,
    options: &T,
    outputs: &[&str],
) -> CliResult<()> {
    let m = RunManifest {
        command,
        config: common.config.as_ref().map(|p| p.display().to_string()),
        seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        options,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let mut text =
        serde_json::to_string_pretty(&m).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

pub fn elapsed_ms(start: std::time::Instant, common: &Common) -> f64 {
    if common.no_timing {
        0.0
    } else {
        start.elapsed().as_secs_f64() * 1e3
    }
}
