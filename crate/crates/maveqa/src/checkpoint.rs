//! Checkpoint directory: `manifest.json` (format version, model config, tensor table),
//! `params.bin` (all tensors as little-endian f32 in table order) and `vocab.txt`.

use std::io;
use std::path::Path;

use mave_core::tokenize::{Vocab, VocabError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ModelConfig;
use crate::params::{Parameters, TensorSpec};

pub const FORMAT: &str = "mave-qa-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("vocabulary: {0}")]
    Vocab(#[from] VocabError),
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dtype: String,
    config: ModelConfig,
    tensors: Vec<TensorSpec>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.display().to_string(), source }
}

pub fn save(dir: &Path, config: &ModelConfig, params: &Parameters, vocab: &Vocab) -> Result<(), CheckpointError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        dtype: "f32le".into(),
        config: config.clone(),
        tensors: params.specs().to_vec(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(io_err(&path))?;
    let bytes: Vec<u8> = params.values().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    let path = dir.join("params.bin");
    std::fs::write(&path, bytes).map_err(io_err(&path))?;
    let path = dir.join("vocab.txt");
    let text: String = vocab.entries().iter().map(|e| format!("{e}\n")).collect();
    std::fs::write(&path, text).map_err(io_err(&path))
}

pub fn load(dir: &Path) -> Result<(ModelConfig, Parameters, Vocab), CheckpointError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let bad = |reason: String| CheckpointError::Format { path: path.display().to_string(), reason };
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if manifest.format != FORMAT || manifest.version != VERSION || manifest.dtype != "f32le" {
        return Err(bad(format!("unsupported checkpoint {} v{} ({})", manifest.format, manifest.version, manifest.dtype)));
    }
    manifest.config.validate().map_err(|e| bad(e.to_string()))?;
    let bin = dir.join("params.bin");
    let bytes = std::fs::read(&bin).map_err(io_err(&bin))?;
    if bytes.len() % 4 != 0 {
        return Err(bad("params.bin length is not a multiple of 4".into()));
    }
    let values: Vec<f64> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let params = Parameters::from_parts(&manifest.config, manifest.tensors, values).map_err(bad)?;
    let vocab = Vocab::load(&dir.join("vocab.txt"))?;
    if vocab.len() != manifest.config.vocab_size {
        return Err(bad(format!("vocab.txt has {} entries, config says {}", vocab.len(), manifest.config.vocab_size)));
    }
    Ok((manifest.config, params, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::init_params;

    fn vocab(n: usize) -> Vocab {
        let mut e: Vec<String> = vec!["[UNK]".into()];
        e.extend((1..n).map(|i| format!("w{i}")));
        Vocab::from_entries(e).unwrap()
    }

    #[test]
    fn round_trip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig { vocab_size: 12, d: 16, n_heads: 2, d_source: 4, d_ff: 32, ..ModelConfig::desk() };
        let p = init_params(&cfg, 3);
        save(dir.path(), &cfg, &p, &vocab(12)).unwrap();
        let (cfg2, p2, v2) = load(dir.path()).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(v2.len(), 12);
        for (a, b) in p.values().iter().zip(p2.values()) {
            assert_eq!(*a as f32, *b as f32);
        }
        let first = std::fs::read(dir.path().join("params.bin")).unwrap();
        save(dir.path(), &cfg2, &p2, &v2).unwrap();
        assert_eq!(std::fs::read(dir.path().join("params.bin")).unwrap(), first);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig { vocab_size: 12, d: 16, n_heads: 2, d_source: 4, d_ff: 32, ..ModelConfig::desk() };
        save(dir.path(), &cfg, &init_params(&cfg, 3), &vocab(12)).unwrap();
        let bin = dir.path().join("params.bin");
        let mut bytes = std::fs::read(&bin).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&bin, &bytes).unwrap();
        assert!(matches!(load(dir.path()), Err(CheckpointError::Format { .. })));
        assert!(matches!(load(&dir.path().join("missing")), Err(CheckpointError::Io { .. })));
    }
}
