//! From token probabilities back to character spans.

use mave_core::{ProductProfile, Span};

use crate::encode::EncodedInput;

/// Maximal runs `[start, end)` of consecutive tokens with `p >= threshold` that stay
/// inside one segment.
pub fn decode_runs(probs: &[f64], segment_of: &[usize], threshold: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for (t, &p) in probs.iter().enumerate() {
        let above = p >= threshold;
        if let Some(s) = start {
            if !above || segment_of[t] != segment_of[s] {
                runs.push((s, t));
                start = None;
            }
        }
        if above && start.is_none() {
            start = Some(t);
        }
    }
    if let Some(s) = start {
        runs.push((s, probs.len()));
    }
    runs
}

/// Predicted evidence spans for the scored segments. Each run becomes the character
/// interval from its first token's begin to its last token's end.
pub fn predict_spans(long_probs: &[f64], enc: &EncodedInput, profile: &ProductProfile, threshold: f64) -> Vec<Span> {
    decode_runs(long_probs, &enc.segment_of, threshold)
        .into_iter()
        .filter(|&(s, _)| enc.long_scored(s))
        .filter_map(|(s, e)| {
            let pid = enc.segment_pid[enc.segment_of[s]]?;
            Span::from_profile(profile, pid, enc.offsets[s].0, enc.offsets[e - 1].1)
        })
        .collect()
}
