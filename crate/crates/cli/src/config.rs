use std::path::Path;

use ahakit_collector::CollectConfig;
use ahakit_core::collapse::CollapseConfig;
use ahakit_core::lingstats::default_stoplist;
use ahakit_core::puzzlegen::{CountdownConfig, KkGrammar};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Tool options read from a TOML file. Every table and key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub kk: KkGrammar,
    pub countdown: CountdownConfig,
    pub collect: CollectConfig,
    pub tokens: TokensConfig,
    pub uncertainty: UncertaintyConfig,
    pub collapse: CollapseConfig,
    pub rasm: RasmConfig,
    pub latent: LatentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokensConfig {
    pub stoplist: Vec<String>,
    pub think_only: bool,
}

impl Default for TokensConfig {
    fn default() -> Self {
        Self { stoplist: default_stoplist(), think_only: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub think_only: bool,
    /// Pool tokens instead of averaging sentence means.
    pub token_level: bool,
    /// Geometric instead of arithmetic per-sentence mean.
    pub geometric: bool,
    pub top_k: usize,
    pub dedupe: bool,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self { think_only: false, token_level: false, geometric: false, top_k: 5, dedupe: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasmConfig {
    /// Fixed KDE grid size; adaptive when unset.
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentConfig {
    /// One PCA over all tasks instead of one per task.
    pub joint: bool,
}

impl ToolConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.collapse.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}
