//! Run manifest: config snapshot, per-stage seeds, artifact inventory
//! with content hashes, and stage timings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::io::sha256_hex;

pub const RUN_MANIFEST_VERSION: u32 = 1;
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config: ExperimentConfig,
    /// Stage name -> derived seed.
    pub stage_seeds: BTreeMap<String, u64>,
    /// Path relative to the run directory -> sha256.
    pub artifacts: BTreeMap<String, String>,
    /// Stage name -> wall-clock seconds.
    pub timings_s: BTreeMap<String, f64>,
    /// PNG file -> (window min, window max) used at export.
    pub render_windows: BTreeMap<String, (f64, f64)>,
}

impl RunManifest {
    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join(RUN_MANIFEST_FILE)
    }

    pub fn new(config: &ExperimentConfig) -> Self {
        RunManifest {
            format_version: RUN_MANIFEST_VERSION,
            config: config.clone(),
            stage_seeds: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            timings_s: BTreeMap::new(),
            render_windows: BTreeMap::new(),
        }
    }

    /// Loads the manifest of `dir`, or starts a fresh one. An existing
    /// manifest must carry the same config; a changed config invalidates
    /// the run directory.
    pub fn load_or_create(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        let path = Self::path_in(dir);
        if !path.exists() {
            return Ok(Self::new(config));
        }
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let manifest: RunManifest = serde_json::from_str(&text)?;
        if manifest.format_version != RUN_MANIFEST_VERSION {
            bail!(
                "unsupported run manifest version {}",
                manifest.format_version
            );
        }
        if &manifest.config != config {
            bail!(
                "config mismatch with existing run manifest {}; \
                 use a fresh output directory for a changed config",
                path.display()
            );
        }
        Ok(manifest)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self)?;
        fs::write(Self::path_in(dir), text + "\n")?;
        Ok(())
    }

    /// Hashes and records an artifact; `path` must live under `dir`.
    pub fn record_artifact(&mut self, dir: &Path, path: &Path) -> Result<()> {
        let rel = path
            .strip_prefix(dir)
            .with_context(|| format!("{} is outside the run directory", path.display()))?;
        let hash = sha256_hex(path)?;
        self.artifacts
            .insert(rel.to_string_lossy().into_owned(), hash);
        Ok(())
    }

    /// Re-hashes a recorded artifact and fails on any mismatch.
    pub fn verify_artifact(&self, dir: &Path, rel: &str) -> Result<()> {
        let expected = self
            .artifacts
            .get(rel)
            .with_context(|| format!("artifact {rel} not recorded in the run manifest"))?;
        let actual = sha256_hex(&dir.join(rel))?;
        if &actual != expected {
            bail!("artifact {rel} changed since it was recorded ({expected} -> {actual})");
        }
        Ok(())
    }
}
