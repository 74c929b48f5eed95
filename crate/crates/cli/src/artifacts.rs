//! Output files are assembled in memory and written only once a run has
//! succeeded, followed by a manifest with their digests.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use cutoff_lab_core::rng::RNG_ID;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn write(&self, cfg: &RunConfig, started: SystemTime) -> std::io::Result<()> {
        let dir: &Path = &cfg.out;
        std::fs::create_dir_all(dir)?;
        let mut digests = Vec::new();
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
            digests.push(json!({
                "name": name,
                "bytes": bytes.len(),
                "sha256": hex::encode(Sha256::digest(bytes)),
            }));
        }
        let config: serde_json::Map<String, serde_json::Value> = cfg
            .raw
            .0
            .iter()
            .map(|(s, keys)| (s.clone(), json!(keys)))
            .collect();
        let elapsed = started.elapsed().map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let manifest = json!({
            "tool": "cutoff-lab",
            "version": env!("CARGO_PKG_VERSION"),
            "rng": RNG_ID,
            "subcommand": cfg.subcommand.name(),
            "config": config,
            "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            "wall_clock_seconds": elapsed,
            "files": digests,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("manifest.json"), text + "\n")
    }
}
