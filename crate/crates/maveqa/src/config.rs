//! Model and training hyperparameters, presets and the flat `key = value` config format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    /// Global/long attention with per-source local windows.
    #[default]
    Structured,
    /// Long tokens attend to every long token regardless of source.
    Flat,
}

impl FromStr for EncoderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" => Ok(EncoderMode::Structured),
            "flat" => Ok(EncoderMode::Flat),
            other => Err(format!("unknown encoder mode {other:?} (expected structured or flat)")),
        }
    }
}

impl fmt::Display for EncoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderMode::Structured => "structured",
            EncoderMode::Flat => "flat",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Local attention radius between long tokens of one source.
    pub r: usize,
    pub max_long: usize,
    /// Also the number of segment slots in the source and global embedding tables.
    pub max_global: usize,
    pub vocab_size: usize,
    pub encoder_mode: EncoderMode,
    /// Width of the source embedding; the word embedding gets `d - d_source`.
    pub d_source: usize,
    pub d_ff: usize,
    pub init_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub batch_size: usize,
    pub threshold: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ModelConfig {
    /// Full-size settings.
    pub fn full() -> Self {
        ModelConfig {
            d: 768,
            n_layers: 12,
            n_heads: 12,
            r: 84,
            max_long: 1024,
            max_global: 64,
            vocab_size: 30522,
            encoder_mode: EncoderMode::Structured,
            d_source: 192,
            d_ff: 3072,
            init_std: 0.02,
        }
    }

    /// Desk-scale settings; `vocab_size` is normally replaced by the loaded vocabulary's size.
    pub fn desk() -> Self {
        ModelConfig {
            d: 64,
            n_layers: 2,
            n_heads: 4,
            r: 4,
            max_long: 128,
            max_global: 8,
            vocab_size: 30522,
            encoder_mode: EncoderMode::Structured,
            d_source: 16,
            d_ff: 256,
            init_std: 0.1,
        }
    }

    pub fn d_word(&self) -> usize {
        self.d - self.d_source
    }

    pub fn d_head(&self) -> usize {
        self.d / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field, reason: &str| Err(ConfigError::Invalid { field, reason: reason.to_string() });
        if self.d == 0 || self.n_heads == 0 || self.d % self.n_heads != 0 {
            return bad("n_heads", "d must be a positive multiple of n_heads");
        }
        if self.d_source >= self.d {
            return bad("d_source", "must be smaller than d");
        }
        if self.max_global < 3 {
            return bad("max_global", "needs room for category, attribute and one source");
        }
        if self.max_long == 0 || self.vocab_size == 0 || self.d_ff == 0 {
            return bad("max_long", "max_long, vocab_size and d_ff must be positive");
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return bad("init_std", "must be positive");
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn full() -> Self {
        TrainConfig { lr: 3e-5, warmup_steps: 10_000, total_steps: 200_000, batch_size: 32, threshold: 0.5 }
    }

    pub fn desk() -> Self {
        TrainConfig { lr: 2e-3, warmup_steps: 100, total_steps: 1200, batch_size: 32, threshold: 0.5 }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field, reason: &str| Err(ConfigError::Invalid { field, reason: reason.to_string() });
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr", "must be positive");
        }
        if self.total_steps == 0 || self.warmup_steps > self.total_steps {
            return bad("warmup_steps", "need 0 < total_steps and warmup_steps <= total_steps");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold", "must lie in (0, 1)");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Both halves of a config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| ConfigError::Syntax { line, reason: format!("bad value for {key}: {e}") })
}

impl RunConfig {
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(RunConfig { model: ModelConfig::full(), train: TrainConfig::full() }),
            "desk" => Some(RunConfig { model: ModelConfig::desk(), train: TrainConfig::desk() }),
            _ => None,
        }
    }

    /// Parses `key = value` lines; `#` starts a comment. A `preset` key must come first
    /// and selects the starting values; other keys override single fields.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen_other = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line, reason: format!("expected key = value, got {content:?}") });
            };
            let (key, value) = (key.trim(), value.trim());
            let m = &mut cfg.model;
            let t = &mut cfg.train;
            match key {
                "preset" => {
                    if seen_other {
                        return Err(ConfigError::Syntax { line, reason: "preset must precede other keys".into() });
                    }
                    cfg = RunConfig::preset(value)
                        .ok_or_else(|| ConfigError::Syntax { line, reason: format!("unknown preset {value:?}") })?;
                    continue;
                }
                "d" => m.d = parse_value(line, key, value)?,
                "n_layers" => m.n_layers = parse_value(line, key, value)?,
                "n_heads" => m.n_heads = parse_value(line, key, value)?,
                "r" => m.r = parse_value(line, key, value)?,
                "max_long" => m.max_long = parse_value(line, key, value)?,
                "max_global" => m.max_global = parse_value(line, key, value)?,
                "vocab_size" => m.vocab_size = parse_value(line, key, value)?,
                "encoder_mode" => m.encoder_mode = parse_value(line, key, value)?,
                "d_source" => m.d_source = parse_value(line, key, value)?,
                "d_ff" => m.d_ff = parse_value(line, key, value)?,
                "init_std" => m.init_std = parse_value(line, key, value)?,
                "lr" => t.lr = parse_value(line, key, value)?,
                "warmup_steps" => t.warmup_steps = parse_value(line, key, value)?,
                "total_steps" => t.total_steps = parse_value(line, key, value)?,
                "batch_size" => t.batch_size = parse_value(line, key, value)?,
                "threshold" => t.threshold = parse_value(line, key, value)?,
                other => return Err(ConfigError::Syntax { line, reason: format!("unknown key {other:?}") }),
            }
            seen_other = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        Ok(Self::parse(&std::fs::read_to_string(path)?)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        self.train.validate()
    }

    /// Renders every field so that `parse(render())` reproduces `self`.
    pub fn render(&self) -> String {
        let (m, t) = (&self.model, &self.train);
        format!(
            "d = {}\nn_layers = {}\nn_heads = {}\nr = {}\nmax_long = {}\nmax_global = {}\nvocab_size = {}\n\
             encoder_mode = {}\nd_source = {}\nd_ff = {}\ninit_std = {:?}\nlr = {:?}\nwarmup_steps = {}\n\
             total_steps = {}\nbatch_size = {}\nthreshold = {:?}\n",
            m.d,
            m.n_layers,
            m.n_heads,
            m.r,
            m.max_long,
            m.max_global,
            m.vocab_size,
            m.encoder_mode,
            m.d_source,
            m.d_ff,
            m.init_std,
            t.lr,
            t.warmup_steps,
            t.total_steps,
            t.batch_size,
            t.threshold
        )
    }
}
