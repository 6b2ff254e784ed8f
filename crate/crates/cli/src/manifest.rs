//! Every run writes its outputs through this collector and finishes with a
//! single manifest naming the command, the resolved configuration, the seed,
//! and every file produced. Re-running the same command with the same seed
//! reproduces the data files byte for byte.

use std::path::{Path, PathBuf};
use std::time::Instant;

use stoshield_core::error::Error;

pub struct ManifestWriter {
    started: Instant,
    outputs: Vec<PathBuf>,
}

impl ManifestWriter {
    pub fn start() -> Self {
        Self { started: Instant::now(), outputs: Vec::new() }
    }

    pub fn write_text(&mut self, path: &Path, text: &str) -> Result<(), Error> {
        std::fs::write(path, text).map_err(|e| Error::SchemaError {
            context: format!("cannot write {}: {e}", path.display()),
        })?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    pub fn write_json(&mut self, path: &Path, value: &serde_json::Value) -> Result<(), Error> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write_text(path, &text)
    }

    /// Write `<primary>.manifest.json` describing the whole run.
    pub fn finish(
        self,
        primary: &Path,
        config: serde_json::Value,
        seed: u64,
    ) -> Result<(), Error> {
        let manifest_path = primary.with_extension("manifest.json");
        let argv: Vec<String> = std::env::args().collect();
        let value = serde_json::json!({
            "command_line": argv,
            "config": config,
            "seed": seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "outputs": self.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        });
        let mut text = serde_json::to_string_pretty(&value).expect("serializable");
        text.push('\n');
        std::fs::write(&manifest_path, text).map_err(|e| Error::SchemaError {
            context: format!("cannot write {}: {e}", manifest_path.display()),
        })
    }
}
