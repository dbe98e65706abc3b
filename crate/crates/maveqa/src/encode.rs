//! Turning an annotated example into model inputs and token-level targets.

use mave_core::tokenize::WordpieceTokenizer;
use mave_core::AttributeExample;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::layout::positions_in_segment;

/// Segments 0 and 1 hold the category and attribute texts; they are never scored.
pub const QUERY_SEGMENTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub long_ids: Vec<u32>,
    /// Segment of each long token; segments are contiguous and dense.
    pub segment_of: Vec<usize>,
    /// Position of each long token inside its segment.
    pub position: Vec<usize>,
    /// One global token per segment.
    pub global_ids: Vec<u32>,
    pub long_labels: Vec<f64>,
    pub global_labels: Vec<f64>,
    /// Character offsets of each long token within its text.
    pub offsets: Vec<(usize, usize)>,
    /// Profile source index of each segment (`None` for category and attribute).
    pub segment_pid: Vec<Option<usize>>,
    /// Sources dropped because there were more segments than global slots.
    pub dropped_sources: usize,
    /// Long tokens removed to respect `max_long`.
    pub truncated_tokens: usize,
}

impl EncodedInput {
    pub fn n_long(&self) -> usize {
        self.long_ids.len()
    }

    pub fn n_global(&self) -> usize {
        self.global_ids.len()
    }

    pub fn long_scored(&self, t: usize) -> bool {
        self.segment_of[t] >= QUERY_SEGMENTS
    }

    pub fn global_scored(&self, s: usize) -> bool {
        s >= QUERY_SEGMENTS
    }

    /// Number of positions that contribute to the loss.
    pub fn scored_count(&self) -> usize {
        (0..self.n_long()).filter(|&t| self.long_scored(t)).count()
            + (0..self.n_global()).filter(|&s| self.global_scored(s)).count()
    }

    /// Input with unlabeled, unscored segments, for tests and synthetic probes.
    pub fn from_segments(long_ids: Vec<u32>, segment_of: Vec<usize>) -> Self {
        let n_seg = segment_of.iter().max().map_or(0, |m| m + 1);
        let n = long_ids.len();
        EncodedInput {
            position: positions_in_segment(&segment_of),
            global_ids: (0..n_seg as u32).collect(),
            long_labels: vec![0.0; n],
            global_labels: vec![0.0; n_seg],
            offsets: vec![(0, 0); n],
            segment_pid: vec![None; n_seg],
            long_ids,
            segment_of,
            dropped_sources: 0,
            truncated_tokens: 0,
        }
    }
}

/// Encodes one example: category, attribute, then each product source as its own
/// segment. Trailing sources beyond the global slots are dropped; long tokens beyond
/// `max_long` are cut from the end. A long token is labeled 1 iff its character
/// interval overlaps an evidence span of the same source.
pub fn encode_example(ex: &AttributeExample, tokenizer: &WordpieceTokenizer, config: &ModelConfig) -> EncodedInput {
    let mut texts: Vec<(&str, Option<usize>)> = vec![(&ex.category, None), (&ex.attribute, None)];
    texts.extend(ex.profile.sources.iter().map(|s| (s.text.as_str(), Some(s.pid))));
    let dropped_sources = texts.len().saturating_sub(config.max_global);
    texts.truncate(config.max_global);

    let mut enc = EncodedInput::from_segments(vec![], vec![]);
    enc.dropped_sources = dropped_sources;
    let mut budget = config.max_long;
    for (seg, (text, pid)) in texts.iter().enumerate() {
        if budget == 0 && seg >= QUERY_SEGMENTS {
            enc.truncated_tokens += tokenizer.tokenize(text).len();
            enc.dropped_sources += 1;
            continue;
        }
        let mut tokens = tokenizer.tokenize(text);
        if tokens.len() > budget {
            enc.truncated_tokens += tokens.len() - budget;
            tokens.truncate(budget);
        }
        budget -= tokens.len();
        let ids = tokenizer.ids(&tokens);
        let mut any = false;
        for (tok, id) in tokens.iter().zip(ids) {
            let label = pid.is_some_and(|pid| {
                ex.evidences.iter().any(|e| e.pid == pid && tok.begin < e.end && e.begin < tok.end)
            });
            any |= label;
            enc.long_ids.push(id);
            enc.segment_of.push(seg);
            enc.offsets.push((tok.begin, tok.end));
            enc.long_labels.push(if label { 1.0 } else { 0.0 });
        }
        enc.global_ids.push(seg as u32);
        enc.global_labels.push(if any { 1.0 } else { 0.0 });
        enc.segment_pid.push(*pid);
    }
    enc.position = positions_in_segment(&enc.segment_of);
    enc
}
