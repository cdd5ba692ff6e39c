//! Run manifest: the resolved configuration plus what the run produced.

use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// First 16 hex digits of the SHA-256 of the canonical configuration text.
pub fn run_id(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub run_id: String,
    pub version: String,
    /// Canonical configuration text.
    pub config: String,
    pub files: Vec<PathBuf>,
    /// Wall-clock seconds of each step, in order.
    pub step_seconds: Vec<f64>,
}

impl RunManifest {
    pub fn new(config: String) -> Self {
        Self {
            run_id: run_id(&config),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            files: Vec::new(),
            step_seconds: Vec::new(),
        }
    }

    /// Metadata as comment lines followed by the configuration, so the
    /// manifest itself is a valid configuration file for the same run.
    pub fn to_text(&self) -> String {
        let mut out = format!("# run_id: {}\n# version: {}\n", self.run_id, self.version);
        for f in &self.files {
            out.push_str(&format!("# file: {}\n", f.display()));
        }
        let total: f64 = self.step_seconds.iter().sum();
        out.push_str(&format!("# total_seconds: {total:.6}\n"));
        for (i, s) in self.step_seconds.iter().enumerate() {
            out.push_str(&format!("# step {}: {s:.6} s\n", i + 1));
        }
        out.push_str(&self.config);
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_text())
    }
}
