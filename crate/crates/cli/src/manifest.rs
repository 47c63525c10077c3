use std::path::PathBuf;

use serde::Serialize;

/// Written next to every command's outputs; `argv` re-runs the command.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub parameters: serde_json::Value,
    pub version: String,
    pub wall_time_seconds: f64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
