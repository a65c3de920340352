use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::run::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct WriteError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, WriteError> {
    fs::write(&path, text).map_err(|source| WriteError { path: path.clone(), source })?;
    Ok(path)
}

/// Writes `report.json` and `timings.json` for [`Format::Json`] and one
/// file per point dump for [`Format::Csv`]. Returns the paths written.
pub fn write_report(report: &Report, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>, WriteError> {
    fs::create_dir_all(dir).map_err(|source| WriteError {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    if formats.contains(&Format::Json) {
        out.push(write(dir.join("report.json"), &to_json(&report.body))?);
        let timings = serde_json::to_value(&report.timings).expect("timings serialize");
        out.push(write(dir.join("timings.json"), &to_json(&timings))?);
    }
    if formats.contains(&Format::Csv) {
        for (name, text) in &report.csv {
            out.push(write(dir.join(name), text)?);
        }
    }
    Ok(out)
}
