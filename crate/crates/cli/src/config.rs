//! Declarative run configuration. TOML is the native format; JSON bodies
//! are accepted too (by extension, with a content-sniff fallback).

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Deserialize;

use rhino_core::ingest::ColumnMapping;
use rhino_core::llm_client::RetryPolicy;
use rhino_core::preprocess::PreprocessParams;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Single seed feeding every stochastic stage.
    pub seed: u64,
    pub input: InputConfig,
    pub preprocess: PreprocessConfig,
    pub partition: PartitionConfig,
    pub backend: BackendConfig,
    pub templates: TemplateConfig,
    pub kb: KbConfig,
    pub strategy: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// "zeek" or "csv".
    pub format: String,
    /// Column mapping for the csv format.
    pub mapping: ColumnMapping,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            format: "zeek".to_string(),
            mapping: ColumnMapping::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub scan_threshold: usize,
    pub psi: usize,
    pub trees: usize,
    pub score_threshold: f64,
    pub keep_fraction: f64,
    pub field_cap: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        let d = PreprocessParams::default();
        Self {
            scan_threshold: d.scan_threshold,
            psi: d.psi,
            trees: d.trees,
            score_threshold: d.score_threshold,
            keep_fraction: d.keep_fraction,
            field_cap: d.field_cap,
        }
    }
}

impl PreprocessConfig {
    pub fn params(&self, seed: u64) -> PreprocessParams {
        PreprocessParams {
            scan_threshold: self.scan_threshold,
            psi: self.psi.max(2),
            trees: self.trees.max(1),
            score_threshold: self.score_threshold,
            keep_fraction: self.keep_fraction.clamp(0.0, 1.0),
            field_cap: self.field_cap.max(1),
            seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    /// Optional explicit 5-group tactic partition.
    pub groups: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// "mock" or "http".
    pub kind: String,
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub tot_temperature: f64,
    pub max_tokens: u32,
    pub max_in_flight: usize,
    /// Empty string disables the response cache.
    pub cache_dir: String,
    /// Mock fixture directory (digest files and/or rules.json).
    pub fixtures_dir: String,
    pub timeout_s: u64,
    pub retry_base_ms: u64,
    pub retry_factor: f64,
    pub retry_max_attempts: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: "mock".to_string(),
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-4o".to_string(),
            temperature: 0.0,
            tot_temperature: 0.7,
            max_tokens: 1024,
            max_in_flight: 4,
            cache_dir: String::new(),
            fixtures_dir: String::new(),
            timeout_s: 120,
            retry_base_ms: 1000,
            retry_factor: 2.0,
            retry_max_attempts: 5,
        }
    }
}

impl BackendConfig {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            base: Duration::from_millis(self.retry_base_ms),
            factor: self.retry_factor,
            max_attempts: self.retry_max_attempts,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateConfig {
    /// Directory of stage template overrides; empty uses the defaults.
    pub dir: String,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct KbConfig {
    /// CSV catalog snapshot path; empty uses the bundled snapshot.
    pub catalog: String,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let parsed = if is_json {
            serde_json::from_str(&raw).map_err(anyhow::Error::from)
        } else {
            toml::from_str(&raw)
                .map_err(anyhow::Error::from)
                .or_else(|toml_err| serde_json::from_str(&raw).map_err(|_| toml_err))
        };
        parsed.with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Where a command's artifact metadata lives next to its output file.
pub fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}
