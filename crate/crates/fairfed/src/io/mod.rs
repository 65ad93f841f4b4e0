//! File formats: datasets, adapter checkpoints, reports, prediction dumps
//! and round logs.

pub mod checkpoint;
pub mod dataset;
pub mod predictions;
pub mod report;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, Result};

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

/// One compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| CliError::runtime(format!("cannot serialize {}: {e}", path.display())))?;
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}
