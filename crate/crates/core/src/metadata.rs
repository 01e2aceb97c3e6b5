//! Run metadata: every artifact-producing command drops a flat
//! `run_metadata.txt` beside its outputs with enough context to
//! re-execute it (command line, config snapshot, seeds, input digests).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const METADATA_FILE: &str = "run_metadata.txt";

#[derive(Clone, Debug, Default)]
pub struct RunMetadata {
    entries: Vec<(String, String)>,
}

impl RunMetadata {
    /// Start a metadata record for one command, capturing the full
    /// command line and tool version.
    pub fn for_command(command: &str) -> Self {
        let argv: Vec<String> = std::env::args().collect();
        let mut md = RunMetadata::default();
        md.push("tool_version", TOOL_VERSION);
        md.push("command", command);
        md.push("command_line", argv.join(" "));
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        md.push("timestamp_unix", now.to_string());
        md
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    /// SHA-256 of a file's bytes, recorded as `input_digest.<name>`.
    pub fn push_input_digest(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path)
            .map_err(|e| Error::io(format!("digesting '{}'", path.display()), e))?;
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for b in digest {
            let _ = write!(hex, "{b:02x}");
        }
        self.push(&format!("input_digest.{name}"), hex);
        Ok(())
    }

    /// Snapshot a multi-line config under a key prefix.
    pub fn push_config(&mut self, prefix: &str, config_text: &str) {
        for line in config_text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.push(&format!("{prefix}.{k}"), v.to_string());
            }
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Write `run_metadata.txt` into the output directory.
    pub fn write_into(&self, dir: &Path) -> Result<()> {
        let path = dir.join(METADATA_FILE);
        fs::write(&path, self.render())
            .map_err(|e| Error::io(format!("writing '{}'", path.display()), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("input.csv");
        fs::write(&file, b"image_id,path,label\n").unwrap();
        let mut a = RunMetadata::default();
        a.push_input_digest("manifest", &file).unwrap();
        let mut b = RunMetadata::default();
        b.push_input_digest("manifest", &file).unwrap();
        assert_eq!(a.render(), b.render());
        assert!(a.render().starts_with("input_digest.manifest="));
    }

    #[test]
    fn render_is_flat_key_value() {
        let mut md = RunMetadata::default();
        md.push("master_seed", "42");
        md.push_config("augment", "scale_min=0.7\nscale_max=1.3\n");
        let text = md.render();
        assert!(text.contains("master_seed=42\n"));
        assert!(text.contains("augment.scale_min=0.7\n"));
    }
}
