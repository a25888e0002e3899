//! Run configuration. One TOML file drives every pipeline stage; every field
//! has a default so an empty file is a valid offline configuration. The
//! fully-resolved config is materialized into the output directory at run
//! time so results stay auditable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::caption::TemplateThresholds;
use crate::error::{Error, Result};
use crate::matching::Weights;
use crate::remote::RemoteEndpoint;
use crate::select::SelectionConfig;
use crate::tracker::TrackerConfig;

/// Coarse switch selecting hermetic or remote backends for both the
/// captioner and the matcher at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Offline,
    Remote,
}

impl std::str::FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<RunMode> {
        match s {
            "offline" => Ok(RunMode::Offline),
            "remote" => Ok(RunMode::Remote),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}, expected offline or remote"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Directory holding detections.csv and friends.
    pub sequence_dir: PathBuf,
    /// Where stage artifacts are written.
    pub output_dir: PathBuf,
    /// Remote response caches live here; defaults to output_dir/cache.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorConfig {
    /// Trailing window length in frames.
    pub window: u64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig { window: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionMode {
    Template,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptionerConfig {
    pub mode: CaptionMode,
    /// Captions are recomputed every this many frames per track and carried
    /// forward in between.
    pub throttle_frames: u64,
    pub tau_move: f64,
    pub tau_turn: f64,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    pub concurrency: usize,
    pub prompt_template_path: Option<PathBuf>,
}

impl Default for CaptionerConfig {
    fn default() -> Self {
        CaptionerConfig {
            mode: CaptionMode::Template,
            throttle_frames: 5,
            tau_move: TemplateThresholds::default().tau_move,
            tau_turn: TemplateThresholds::default().tau_turn,
            endpoint: String::new(),
            model: String::new(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 3,
            backoff_ms: 200,
            timeout_s: 60,
            concurrency: 4,
            prompt_template_path: None,
        }
    }
}

impl CaptionerConfig {
    pub fn thresholds(&self) -> TemplateThresholds {
        TemplateThresholds {
            tau_move: self.tau_move,
            tau_turn: self.tau_turn,
        }
    }

    pub fn remote_endpoint(&self) -> RemoteEndpoint {
        RemoteEndpoint {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            max_retries: self.max_retries,
            backoff_ms: self.backoff_ms,
            timeout_s: self.timeout_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Offline,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    pub encoder: EncoderKind,
    pub weight_embed: f64,
    pub weight_fuzzy: f64,
    pub normalize_fuzzy: bool,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    /// Bucket count of the offline hashed encoder.
    pub hash_dim: usize,
    pub hash_seed: u64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            encoder: EncoderKind::Offline,
            weight_embed: 1.0,
            weight_fuzzy: 1.0,
            normalize_fuzzy: false,
            endpoint: String::new(),
            model: String::new(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 3,
            backoff_ms: 200,
            timeout_s: 60,
            hash_dim: crate::matching::DEFAULT_EMBED_DIM,
            hash_seed: crate::matching::DEFAULT_HASH_SEED,
        }
    }
}

impl MatcherConfig {
    pub fn weights(&self) -> Weights {
        Weights {
            embed: self.weight_embed,
            fuzzy: self.weight_fuzzy,
            normalize_fuzzy: self.normalize_fuzzy,
        }
    }

    pub fn remote_endpoint(&self) -> RemoteEndpoint {
        RemoteEndpoint {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            max_retries: self.max_retries,
            backoff_ms: self.backoff_ms,
            timeout_s: self.timeout_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub enabled: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { enabled: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub tracker: TrackerConfig,
    pub descriptor: DescriptorConfig,
    pub captioner: CaptionerConfig,
    pub matcher: MatcherConfig,
    pub selection: SelectionConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Force both pluggable backends to one side.
    pub fn apply_mode(&mut self, mode: RunMode) {
        match mode {
            RunMode::Offline => {
                self.captioner.mode = CaptionMode::Template;
                self.matcher.encoder = EncoderKind::Offline;
            }
            RunMode::Remote => {
                self.captioner.mode = CaptionMode::Remote;
                self.matcher.encoder = EncoderKind::Remote;
            }
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.paths
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("cache"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.sequence_dir.as_os_str().is_empty() {
            return Err(Error::Config("paths.sequence_dir is not set".into()));
        }
        if self.paths.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("paths.output_dir is not set".into()));
        }
        if self.descriptor.window == 0 {
            return Err(Error::Config("descriptor.window must be at least 1".into()));
        }
        if self.captioner.throttle_frames == 0 {
            return Err(Error::Config(
                "captioner.throttle_frames must be at least 1".into(),
            ));
        }
        if self.captioner.tau_move <= 0.0 || self.captioner.tau_turn <= 0.0 {
            return Err(Error::Config(
                "captioner thresholds must be positive".into(),
            ));
        }
        if self.matcher.weight_embed < 0.0 || self.matcher.weight_fuzzy < 0.0 {
            return Err(Error::Config("matcher weights must be non-negative".into()));
        }
        if self.matcher.weight_embed == 0.0 && self.matcher.weight_fuzzy == 0.0 {
            return Err(Error::Config(
                "at least one matcher weight must be positive".into(),
            ));
        }
        if self.matcher.hash_dim == 0 {
            return Err(Error::Config("matcher.hash_dim must be at least 1".into()));
        }
        if self.selection.min_spread <= 0.0 {
            return Err(Error::Config(
                "selection.min_spread must be positive".into(),
            ));
        }
        if !self.selection.threshold.is_finite() {
            return Err(Error::Config("selection.threshold must be finite".into()));
        }
        if self.captioner.mode == CaptionMode::Remote {
            self.captioner.remote_endpoint().validate()?;
        }
        if self.matcher.encoder == EncoderKind::Remote {
            self.matcher.remote_endpoint().validate()?;
        }
        Ok(())
    }

    /// Write the fully-resolved configuration next to the run's artifacts.
    pub fn materialize(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("serializing config: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
