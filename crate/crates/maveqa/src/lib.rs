//! Question-answering style attribute extractor over multi-source product profiles.
//!
//! Every product source is its own long-token segment with one global token; the
//! category and attribute are two more segments in front. Attention follows four
//! patterns (global-global, global-own-source, long-global, long-local) realized as a
//! single masked attention. Each long token and each source gets a sigmoid score for
//! "belongs to / contains the value".
//!
//! - [`config`]: hyperparameters, presets, config files
//! - [`encode`]: examples to model inputs and targets
//! - [`layout`]: the attention masks
//! - [`params`]: parameter store and initialization
//! - [`model`]: forward, loss, backward
//! - [`train`]: Adam, learning-rate schedule, training loop
//! - [`decode`]: probabilities to spans
//! - [`checkpoint`]: on-disk format

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod encode;
pub mod layout;
pub mod model;
pub mod params;
pub mod train;

use std::sync::Arc;

use mave_core::evalkit::{Evaluator, LengthBuckets};
use mave_core::tokenize::{Vocab, WordpieceTokenizer};
use mave_core::{AttributeExample, Span};

pub use config::{EncoderMode, ModelConfig, RunConfig, TrainConfig};
pub use decode::predict_spans;
pub use encode::{encode_example, EncodedInput};
pub use layout::{build_attention_layout, AttentionLayout};
pub use model::{forward, loss, ModelError};
pub use params::{init_params, Parameters};
pub use train::{train_step, Schedule, TrainState};

/// Config, parameters and tokenizer bundled for inference.
#[derive(Debug, Clone)]
pub struct QaModel {
    pub config: ModelConfig,
    pub params: Parameters,
    pub tokenizer: WordpieceTokenizer,
}

impl QaModel {
    pub fn new(config: ModelConfig, params: Parameters, vocab: Arc<Vocab>) -> Self {
        QaModel { config, params, tokenizer: WordpieceTokenizer::new(vocab) }
    }

    pub fn load(dir: &std::path::Path) -> Result<Self, checkpoint::CheckpointError> {
        let (config, params, vocab) = checkpoint::load(dir)?;
        Ok(Self::new(config, params, Arc::new(vocab)))
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<(), checkpoint::CheckpointError> {
        checkpoint::save(dir, &self.config, &self.params, self.tokenizer.vocab())
    }

    pub fn encode(&self, ex: &AttributeExample) -> EncodedInput {
        encode_example(ex, &self.tokenizer, &self.config)
    }

    /// Encodes a dataset, logging how much was cut to fit the model.
    pub fn encode_all<'a>(&self, examples: impl IntoIterator<Item = &'a AttributeExample>) -> Vec<EncodedInput> {
        let encoded: Vec<EncodedInput> = examples.into_iter().map(|ex| self.encode(ex)).collect();
        let dropped: usize = encoded.iter().map(|e| e.dropped_sources).sum();
        let cut: usize = encoded.iter().map(|e| e.truncated_tokens).sum();
        if dropped > 0 || cut > 0 {
            log::warn!("encoding dropped {dropped} sources and {cut} tokens to fit the model limits");
        }
        encoded
    }

    pub fn predict(&self, ex: &AttributeExample, threshold: f64) -> Result<Vec<Span>, ModelError> {
        let enc = self.encode(ex);
        let out = forward(&enc, &self.params, &self.config)?;
        Ok(predict_spans(&out.long_probs, &enc, &ex.profile, threshold))
    }
}

/// Predicts every example and tallies outcomes.
pub fn evaluate<'a>(
    model: &QaModel,
    examples: impl IntoIterator<Item = &'a AttributeExample>,
    threshold: f64,
    buckets: LengthBuckets,
) -> Result<Evaluator, ModelError> {
    let mut ev = Evaluator::new(buckets);
    for ex in examples {
        let spans = model.predict(ex, threshold)?;
        ev.add(ex, &spans);
    }
    Ok(ev)
}

#[cfg(test)]
pub(crate) mod tests_support {
    use std::collections::BTreeSet;
    use std::sync::Arc;

    use mave_core::tokenize::{basic_tokenize, Vocab, WordpieceTokenizer, UNK};

    pub use mave_core::model::fixtures::beanie_example;

    /// Whole-word vocabulary covering the reference product.
    pub fn beanie_tokenizer() -> WordpieceTokenizer {
        let ex = beanie_example();
        let mut words: BTreeSet<String> = BTreeSet::new();
        let texts = ex.profile.sources.iter().map(|s| s.text.as_str()).chain([ex.category.as_str(), ex.attribute.as_str()]);
        for t in texts {
            words.extend(basic_tokenize(t).into_iter().map(|t| t.text.to_lowercase()));
        }
        let mut entries = vec![UNK.to_string()];
        entries.extend(words);
        WordpieceTokenizer::new(Arc::new(Vocab::from_entries(entries).unwrap()))
    }
}
