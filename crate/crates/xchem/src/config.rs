//! Pipeline configuration, loaded from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use xchem_core::dialogue::{DialogueConfig, SelectorMode};
use xchem_core::encoder::EncoderConfig;
use xchem_core::fusion::FusionConfig;
use xchem_core::model::{ModelConfig, Variant};
use xchem_core::train::TrainConfig;
use xchem_core::TargetProperty;

pub const EMBEDDING_URL_ENV: &str = "XCHEM_EMBEDDING_URL";
pub const CHAT_URL_ENV: &str = "XCHEM_CHAT_URL";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of `.xyz` records.
    pub xyz_dir: PathBuf,
    /// JSON Lines descriptor metadata.
    pub metadata: PathBuf,
    /// Canonical dataset written by `ingest`.
    pub dataset: PathBuf,
    pub cache: PathBuf,
    pub transcripts: PathBuf,
    pub reports: PathBuf,
    /// Optional rule registry (TOML or JSON); the built-in table is used otherwise.
    pub registry: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            xyz_dir: "data/xyz".into(),
            metadata: "data/metadata.jsonl".into(),
            dataset: "work/dataset.jsonl".into(),
            cache: "work/cache".into(),
            transcripts: "work/transcripts.jsonl".into(),
            reports: "reports".into(),
            registry: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Stub,
    Http,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StubSelector {
    /// Top three descriptors of the selection prior, every time.
    Top,
    /// Random subsets drawn from the selection prior.
    #[default]
    Sampled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StubValidator {
    #[default]
    AcceptAll,
    RejectAll,
    RejectThenAccept,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    pub embedding: BackendKind,
    pub embedding_url: Option<String>,
    pub embedding_model: String,
    pub chat: BackendKind,
    pub chat_url: Option<String>,
    pub chat_model: String,
    pub temperature: f64,
    pub retries: u32,
    pub timeout_secs: u64,
    pub stub_selector: StubSelector,
    pub stub_validator: StubValidator,
}

impl Default for Backends {
    fn default() -> Self {
        Self {
            embedding: BackendKind::Stub,
            embedding_url: None,
            embedding_model: "clip-vit-large-patch14".into(),
            chat: BackendKind::Stub,
            chat_url: None,
            chat_model: "llama3".into(),
            temperature: 0.0,
            retries: 3,
            timeout_secs: 120,
            stub_selector: StubSelector::Sampled,
            stub_validator: StubValidator::AcceptAll,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DialogueSettings {
    pub max_rounds: usize,
    pub selector_mode: SelectorMode,
}

impl Default for DialogueSettings {
    fn default() -> Self {
        let d = DialogueConfig::default();
        Self { max_rounds: d.max_rounds, selector_mode: d.selector_mode }
    }
}

impl DialogueSettings {
    pub fn to_config(&self) -> DialogueConfig {
        DialogueConfig { max_rounds: self.max_rounds, selector_mode: self.selector_mode }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub targets: Vec<TargetProperty>,
    /// Label for the geometric backbone in reports.
    pub backbone: String,
    pub seed: u64,
    pub deterministic: bool,
    /// Worker threads for dialogues, embeddings and gradients; 0 means all cores.
    pub jobs: usize,
    pub paths: Paths,
    pub backends: Backends,
    pub dialogue: DialogueSettings,
    pub encoder: EncoderConfig,
    pub fusion: FusionConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            targets: vec![TargetProperty::Homo],
            backbone: "SchNet".into(),
            seed: 0,
            deterministic: true,
            jobs: 0,
            paths: Paths::default(),
            backends: Backends::default(),
            dialogue: DialogueSettings::default(),
            encoder: EncoderConfig::default(),
            fusion: FusionConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    /// Endpoint URLs from the environment take precedence over the file.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(EMBEDDING_URL_ENV) {
            self.backends.embedding_url = Some(url);
        }
        if let Ok(url) = std::env::var(CHAT_URL_ENV) {
            self.backends.chat_url = Some(url);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            bail!("no targets configured");
        }
        self.encoder.validate()?;
        self.train.validate()?;
        if self.dialogue.max_rounds == 0 {
            bail!("dialogue.max_rounds must be at least 1");
        }
        if self.backends.embedding == BackendKind::Http && self.backends.embedding_url.is_none() {
            bail!("embedding backend is http but no embedding_url is set (or {EMBEDDING_URL_ENV})");
        }
        if self.backends.chat == BackendKind::Http && self.backends.chat_url.is_none() {
            bail!("chat backend is http but no chat_url is set (or {CHAT_URL_ENV})");
        }
        Ok(())
    }

    pub fn model_config(&self, variant: Variant) -> ModelConfig {
        ModelConfig { encoder: self.encoder.clone(), fusion: self.fusion.clone(), variant }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}

/// A config plus the directory its relative paths are anchored to.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub config: PipelineConfig,
    pub base: PathBuf,
}

impl Workspace {
    pub fn new(config: PipelineConfig, base: impl Into<PathBuf>) -> Self {
        Self { config, base: base.into() }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn xyz_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.xyz_dir)
    }
    pub fn metadata(&self) -> PathBuf {
        self.resolve(&self.config.paths.metadata)
    }
    pub fn dataset(&self) -> PathBuf {
        self.resolve(&self.config.paths.dataset)
    }
    pub fn cache(&self) -> PathBuf {
        self.resolve(&self.config.paths.cache)
    }
    pub fn transcripts(&self) -> PathBuf {
        self.resolve(&self.config.paths.transcripts)
    }
    pub fn reports(&self) -> PathBuf {
        self.resolve(&self.config.paths.reports)
    }
    pub fn selections(&self) -> PathBuf {
        self.cache().join("selections.jsonl")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.cache().join("embeddings")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.resolve(&self.config.paths.reports).join("checkpoints")
    }
    pub fn metrics(&self) -> PathBuf {
        self.reports().join("metrics.json")
    }
    pub fn registry(&self) -> Option<PathBuf> {
        self.config.paths.registry.as_deref().map(|p| self.resolve(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: PipelineConfig = toml::from_str(
            "targets = [\"homo\", \"mu\"]\n[encoder]\nblocks = 3\nhidden = 64\n[train]\nloss = \"mse\"\n",
        )
        .unwrap();
        assert_eq!(cfg.targets, vec![TargetProperty::Homo, TargetProperty::Mu]);
        assert_eq!(cfg.encoder.blocks, 3);
        assert_eq!(cfg.encoder.n_radial, 50);
        assert_eq!(cfg.train.batch_size, 64);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<PipelineConfig>("colour = 3\n").is_err());
    }

    #[test]
    fn http_backend_needs_url() {
        let mut cfg = PipelineConfig::default();
        cfg.backends.chat = BackendKind::Http;
        assert!(cfg.validate().is_err());
        cfg.backends.chat_url = Some("http://localhost:1".into());
        cfg.validate().unwrap();
    }
}
