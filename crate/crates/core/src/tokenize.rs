//! Whitespace and WordPiece tokenization that keeps character offsets into the
//! original text.
//!
//! The WordPiece path follows the usual uncased BERT pre-processing: control
//! characters are dropped, CJK ideographs become single-character words, words are
//! lowercased and stripped of accents, punctuation is split off, and each word is
//! segmented greedily longest-match-first with `##` continuation pieces.

use std::collections::HashMap;
use std::io::{self, BufRead};
use std::path::Path;

use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

pub const UNK: &str = "[UNK]";
pub const CONTINUATION_PREFIX: &str = "##";
pub const DEFAULT_MAX_WORD_LEN: usize = 100;
/// Vocabulary size of the English uncased WordPiece vocabulary.
pub const REFERENCE_VOCAB_SIZE: usize = 30522;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Character offsets into the original text, half-open.
    pub begin: usize,
    pub end: usize,
    pub is_continuation: bool,
}

impl Token {
    /// Token text without the continuation marker.
    pub fn surface(&self) -> &str {
        if self.is_continuation {
            &self.text[CONTINUATION_PREFIX.len()..]
        } else {
            &self.text
        }
    }
}

/// Maximal runs of non-whitespace characters.
pub fn whitespace_tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, String)> = None;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if let Some((begin, s)) = current.take() {
                tokens.push(Token { text: s, begin, end: i, is_continuation: false });
            }
        } else {
            current.get_or_insert_with(|| (i, String::new())).1.push(c);
        }
    }
    if let Some((begin, s)) = current {
        let end = begin + s.chars().count();
        tokens.push(Token { text: s, begin, end, is_continuation: false });
    }
    tokens
}

fn is_bert_whitespace(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r') || get_general_category(c) == GeneralCategory::SpaceSeparator
}

fn is_bert_control(c: char) -> bool {
    if matches!(c, '\t' | '\n' | '\r') {
        return false;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::Control
            | GeneralCategory::Format
            | GeneralCategory::Unassigned
            | GeneralCategory::PrivateUse
            | GeneralCategory::Surrogate
    )
}

fn is_bert_punctuation(c: char) -> bool {
    let cp = c as u32;
    if (33..=47).contains(&cp) || (58..=64).contains(&cp) || (91..=96).contains(&cp) || (123..=126).contains(&cp) {
        return true;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

fn is_cjk(c: char) -> bool {
    let cp = c as u32;
    (0x4E00..=0x9FFF).contains(&cp)
        || (0x3400..=0x4DBF).contains(&cp)
        || (0x20000..=0x2A6DF).contains(&cp)
        || (0x2A700..=0x2B73F).contains(&cp)
        || (0x2B740..=0x2B81F).contains(&cp)
        || (0x2B820..=0x2CEAF).contains(&cp)
        || (0xF900..=0xFAFF).contains(&cp)
        || (0x2F800..=0x2FA1F).contains(&cp)
}

/// A normalized character remembering which original character produced it.
#[derive(Debug, Clone, Copy)]
struct NormChar {
    ch: char,
    orig: usize,
}

/// Basic pre-tokenization into words of normalized characters.
fn basic_words(text: &str, uncased: bool) -> Vec<Vec<NormChar>> {
    let mut words: Vec<Vec<NormChar>> = Vec::new();
    let mut current: Vec<NormChar> = Vec::new();
    let flush = |current: &mut Vec<NormChar>, words: &mut Vec<Vec<NormChar>>| {
        if !current.is_empty() {
            words.push(std::mem::take(current));
        }
    };
    let mut normalized = Vec::with_capacity(4);
    for (i, c) in text.chars().enumerate() {
        if c == '\0' || c == '\u{FFFD}' || is_bert_control(c) {
            continue;
        }
        if is_bert_whitespace(c) {
            flush(&mut current, &mut words);
            continue;
        }
        if is_cjk(c) {
            flush(&mut current, &mut words);
            words.push(vec![NormChar { ch: c, orig: i }]);
            continue;
        }
        normalized.clear();
        if uncased {
            normalized.extend(
                c.to_lowercase()
                    .nfd()
                    .filter(|&n| get_general_category(n) != GeneralCategory::NonspacingMark),
            );
        } else {
            normalized.push(c);
        }
        for &n in &normalized {
            if is_bert_punctuation(n) {
                flush(&mut current, &mut words);
                words.push(vec![NormChar { ch: n, orig: i }]);
            } else {
                current.push(NormChar { ch: n, orig: i });
            }
        }
    }
    flush(&mut current, &mut words);
    words
}

fn word_token(chars: &[NormChar], text: String, is_continuation: bool) -> Token {
    Token {
        text,
        begin: chars[0].orig,
        end: chars[chars.len() - 1].orig + 1,
        is_continuation,
    }
}

/// Case-preserving split on whitespace and punctuation. Used for rule-level token
/// spans, where surfaces must stay verbatim.
pub fn basic_tokenize(text: &str) -> Vec<Token> {
    basic_words(text, false)
        .into_iter()
        .map(|w| {
            let s: String = w.iter().map(|n| n.ch).collect();
            word_token(&w, s, false)
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary is empty")]
    Empty,
    #[error("line {line}: duplicate entry {entry:?}")]
    Duplicate { line: usize, entry: String },
    #[error("vocabulary has no {UNK} entry")]
    MissingUnk,
    #[error("reading vocabulary: {0}")]
    Io(#[from] io::Error),
}

/// Subword vocabulary; the id of an entry is its 0-based position.
#[derive(Debug, Clone)]
pub struct Vocab {
    entries: Vec<String>,
    index: HashMap<String, u32>,
    unk_id: u32,
}

impl Vocab {
    pub fn from_entries(entries: Vec<String>) -> Result<Self, VocabError> {
        if entries.is_empty() {
            return Err(VocabError::Empty);
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.clone(), i as u32).is_some() {
                return Err(VocabError::Duplicate { line: i + 1, entry: e.clone() });
            }
        }
        let unk_id = *index.get(UNK).ok_or(VocabError::MissingUnk)?;
        Ok(Vocab { entries, index, unk_id })
    }

    /// One entry per line; trailing `\r` is ignored.
    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let file = std::fs::File::open(path)?;
        let entries = io::BufReader::new(file)
            .lines()
            .map(|l| l.map(|s| s.trim_end_matches('\r').to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, entry: &str) -> Option<u32> {
        self.index.get(entry).copied()
    }

    /// Id of `entry`, falling back to `[UNK]`.
    pub fn id_or_unk(&self, entry: &str) -> u32 {
        self.id(entry).unwrap_or(self.unk_id)
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn entry(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }
}

/// Uncased WordPiece tokenization.
pub fn wordpiece_tokenize(text: &str, vocab: &Vocab, max_word_len: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut buf = String::new();
    for word in basic_words(text, true) {
        if word.len() > max_word_len {
            tokens.push(word_token(&word, UNK.to_string(), false));
            continue;
        }
        let pieces_before = tokens.len();
        let mut start = 0;
        let mut bad = false;
        while start < word.len() {
            let mut end = word.len();
            let mut found = None;
            while start < end {
                buf.clear();
                if start > 0 {
                    buf.push_str(CONTINUATION_PREFIX);
                }
                buf.extend(word[start..end].iter().map(|n| n.ch));
                if vocab.id(&buf).is_some() {
                    found = Some(buf.clone());
                    break;
                }
                end -= 1;
            }
            match found {
                Some(piece) => {
                    tokens.push(word_token(&word[start..end], piece, start > 0));
                    start = end;
                }
                None => {
                    bad = true;
                    break;
                }
            }
        }
        if bad {
            tokens.truncate(pieces_before);
            tokens.push(word_token(&word, UNK.to_string(), false));
        }
    }
    tokens
}

/// Tokenizer bound to a vocabulary.
#[derive(Debug, Clone)]
pub struct WordpieceTokenizer {
    vocab: std::sync::Arc<Vocab>,
    max_word_len: usize,
}

impl WordpieceTokenizer {
    pub fn new(vocab: std::sync::Arc<Vocab>) -> Self {
        WordpieceTokenizer { vocab, max_word_len: DEFAULT_MAX_WORD_LEN }
    }

    pub fn with_max_word_len(mut self, max_word_len: usize) -> Self {
        self.max_word_len = max_word_len;
        self
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        wordpiece_tokenize(text, &self.vocab, self.max_word_len)
    }

    pub fn ids(&self, tokens: &[Token]) -> Vec<u32> {
        tokens.iter().map(|t| self.vocab.id_or_unk(&t.text)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::char_slice;
    use proptest::prelude::*;

    fn vocab(entries: &[&str]) -> Vocab {
        Vocab::from_entries(entries.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn spans(tokens: &[Token]) -> Vec<(&str, usize, usize)> {
        tokens.iter().map(|t| (t.text.as_str(), t.begin, t.end)).collect()
    }

    #[test]
    fn whitespace_offsets() {
        let toks = whitespace_tokenize("Ty Beanie Baby");
        assert_eq!(spans(&toks), vec![("Ty", 0, 2), ("Beanie", 3, 9), ("Baby", 10, 14)]);
        assert!(whitespace_tokenize("").is_empty());
        assert!(whitespace_tokenize("   ").is_empty());
    }

    #[test]
    fn greedy_longest_match() {
        let v = vocab(&["play", "##ing", UNK]);
        let toks = wordpiece_tokenize("Playing", &v, DEFAULT_MAX_WORD_LEN);
        assert_eq!(spans(&toks), vec![("play", 0, 4), ("##ing", 4, 7)]);
        assert!(toks[1].is_continuation);
        assert_eq!(toks[1].surface(), "ing");
    }

    #[test]
    fn unmatched_word_is_unk() {
        let v = vocab(&["a", UNK]);
        let toks = wordpiece_tokenize("xyz", &v, DEFAULT_MAX_WORD_LEN);
        assert_eq!(spans(&toks), vec![(UNK, 0, 3)]);
    }

    #[test]
    fn partial_match_falls_back_to_single_unk() {
        let v = vocab(&["play", UNK]);
        let toks = wordpiece_tokenize("a playx", &v, DEFAULT_MAX_WORD_LEN);
        assert_eq!(spans(&toks), vec![(UNK, 0, 1), (UNK, 2, 7)]);
    }

    #[test]
    fn long_word_is_unk() {
        let v = vocab(&["a", "##a", UNK]);
        let toks = wordpiece_tokenize("aaaaa", &v, 4);
        assert_eq!(spans(&toks), vec![(UNK, 0, 5)]);
        let toks = wordpiece_tokenize("aaaa", &v, 4);
        assert_eq!(toks.len(), 4);
    }

    #[test]
    fn punctuation_accents_and_cjk() {
        let v = vocab(&["cafe", "8", "\"", "long", "-", "中", "文", UNK]);
        let toks = wordpiece_tokenize("Café 8\" long-中文", &v, DEFAULT_MAX_WORD_LEN);
        assert_eq!(
            spans(&toks),
            vec![("cafe", 0, 4), ("8", 5, 6), ("\"", 6, 7), ("long", 8, 12), ("-", 12, 13), ("中", 13, 14), ("文", 14, 15)]
        );
    }

    #[test]
    fn control_chars_are_dropped_inside_words() {
        let v = vocab(&["ab", UNK]);
        let toks = wordpiece_tokenize("a\u{200b}b", &v, DEFAULT_MAX_WORD_LEN);
        assert_eq!(spans(&toks), vec![("ab", 0, 3)]);
    }

    #[test]
    fn basic_tokenize_keeps_case() {
        let toks = basic_tokenize("Ty Beanie Babies, 8\"");
        assert_eq!(
            spans(&toks),
            vec![("Ty", 0, 2), ("Beanie", 3, 9), ("Babies", 10, 16), (",", 16, 17), ("8", 18, 19), ("\"", 19, 20)]
        );
    }

    #[test]
    fn vocab_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        std::fs::write(&p, "[UNK]\nplay\n##ing\n").unwrap();
        let v = Vocab::load(&p).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("[UNK]"), Some(0));
        assert_eq!(v.id("##ing"), Some(2));

        std::fs::write(&p, "[UNK]\nplay\nplay\n").unwrap();
        match Vocab::load(&p).unwrap_err() {
            VocabError::Duplicate { line, entry } => {
                assert_eq!(line, 3);
                assert_eq!(entry, "play");
            }
            other => panic!("unexpected {other}"),
        }

        std::fs::write(&p, "").unwrap();
        assert!(matches!(Vocab::load(&p).unwrap_err(), VocabError::Empty));
        std::fs::write(&p, "play\n").unwrap();
        assert!(matches!(Vocab::load(&p).unwrap_err(), VocabError::MissingUnk));
    }

    fn sanitized_string() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                "[a-zA-Z0-9]{1,8}",
                "[.,!?\"'()-]{1,2}",
                "[éüÀß中]{1,3}",
            ],
            0..12,
        )
        .prop_map(|words| words.join(" "))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn whitespace_offsets_are_sound(s in sanitized_string()) {
            let toks = whitespace_tokenize(&s);
            for t in &toks {
                prop_assert_eq!(char_slice(&s, t.begin, t.end).unwrap(), t.text.as_str());
            }
            let rejoined: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
            prop_assert_eq!(rejoined.join(" "), s);
        }

        #[test]
        fn wordpiece_offsets_are_sound(s in sanitized_string()) {
            let v = vocab(&["a", "b", "##a", "##b", "##c", "e", "##e", "1", "##1", ".", ",", "!", "?", "\"", "'", "(", ")", "-", "中", "ss", "##ss", UNK]);
            for t in wordpiece_tokenize(&s, &v, DEFAULT_MAX_WORD_LEN) {
                let slice = char_slice(&s, t.begin, t.end).unwrap();
                if t.text != UNK {
                    let normalized: String = slice
                        .chars()
                        .flat_map(char::to_lowercase)
                        .nfd()
                        .filter(|&n| get_general_category(n) != GeneralCategory::NonspacingMark)
                        .collect();
                    prop_assert_eq!(normalized, t.surface());
                }
            }
        }
    }
}
