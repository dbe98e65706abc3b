//! Turning product profiles into positive and negative examples.
//!
//! For each profile a category classifier is consulted and low-confidence
//! predictions are gated out. For every attribute defined for the predicted
//! category, five extractors run independently; their token-level spans are mapped
//! to character spans and normalized through the attribute's rules. The example is
//! positive when all five agree on the normalized value, negative when every
//! extractor and the rules themselves find nothing, and discarded otherwise.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::seeded_hash;
use crate::model::{AttributeExample, Dataset, ProductProfile, Span};
use crate::text::{byte_to_char_table, normalize_value};
use crate::tokenize::{basic_tokenize, Token};

pub const ENSEMBLE_SIZE: usize = 5;
pub const DEFAULT_CATEGORY_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NEGATIVE_CAP: usize = 5000;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("rule for ({category}, {attribute}): invalid pattern: {source}")]
    Pattern {
        category: String,
        attribute: String,
        #[source]
        source: regex::Error,
    },
    #[error("rule for ({category}, {attribute}): {reason}")]
    Rule { category: String, attribute: String, reason: String },
    #[error("token span {span:?} out of range for source {pid} with {len} tokens")]
    TokenSpan { span: TokenSpan, pid: usize, len: usize },
    #[error("expected exactly {ENSEMBLE_SIZE} extractor outputs, got {0}")]
    EnsembleSize(usize),
}

/// Rule as stored in rule files (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRule {
    pub category: String,
    pub attribute: String,
    pub pattern: String,
    /// Matched surface form to normalized value. Keys are compared after lowercasing and
    /// whitespace collapse.
    pub normalization: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub rule: ExtractionRule,
    regex: Regex,
    normalization: HashMap<String, String>,
}

impl CompiledRule {
    pub fn compile(rule: ExtractionRule) -> Result<Self, AnnotateError> {
        let regex = RegexBuilder::new(&rule.pattern).case_insensitive(true).build().map_err(|source| {
            AnnotateError::Pattern { category: rule.category.clone(), attribute: rule.attribute.clone(), source }
        })?;
        let mut normalization = HashMap::new();
        for (surface, value) in &rule.normalization {
            if value.trim().is_empty() {
                return Err(AnnotateError::Rule {
                    category: rule.category.clone(),
                    attribute: rule.attribute.clone(),
                    reason: format!("empty normalized value for {surface:?}"),
                });
            }
            normalization.insert(normalize_value(surface), value.clone());
        }
        Ok(CompiledRule { rule, regex, normalization })
    }

    pub fn normalize(&self, surface: &str) -> Option<&str> {
        self.normalization.get(&normalize_value(surface)).map(String::as_str)
    }
}

/// All rules, indexed by (category, attribute).
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    by_pair: BTreeMap<(String, String), Vec<CompiledRule>>,
}

impl RuleSet {
    pub fn new(rules: impl IntoIterator<Item = ExtractionRule>) -> Result<Self, AnnotateError> {
        let mut by_pair: BTreeMap<(String, String), Vec<CompiledRule>> = BTreeMap::new();
        for rule in rules {
            let key = (rule.category.clone(), rule.attribute.clone());
            by_pair.entry(key).or_default().push(CompiledRule::compile(rule)?);
        }
        Ok(RuleSet { by_pair })
    }

    pub fn rules_for(&self, category: &str, attribute: &str) -> &[CompiledRule] {
        self.by_pair
            .get(&(category.to_string(), attribute.to_string()))
            .map_or(&[], Vec::as_slice)
    }

    /// Attributes defined for `category`, sorted.
    pub fn attributes_for(&self, category: &str) -> Vec<&str> {
        self.by_pair
            .keys()
            .filter(|(c, _)| c == category)
            .map(|(_, a)| a.as_str())
            .collect()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.by_pair.keys().map(|(c, a)| (c.as_str(), a.as_str()))
    }
}

/// One rule hit: the character span and its normalized value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleMatch {
    pub span: Span,
    pub normalized: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleOutput {
    pub matches: Vec<RuleMatch>,
}

impl RuleOutput {
    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn spans(&self) -> Vec<Span> {
        self.matches.iter().map(|m| m.span.clone()).collect()
    }

    /// The normalized value when every match agrees on it (under comparison
    /// normalization); `None` for no matches or conflicting values.
    pub fn normalized_value(&self) -> Option<&str> {
        let first = self.matches.first()?;
        let key = normalize_value(&first.normalized);
        self.matches
            .iter()
            .all(|m| normalize_value(&m.normalized) == key)
            .then_some(first.normalized.as_str())
    }
}

/// Runs `rules` over every source. Matches without a normalization entry are dropped;
/// overlapping hits from different rules are resolved by [`resolve_overlaps`].
pub fn apply_rules(profile: &ProductProfile, rules: &[CompiledRule]) -> RuleOutput {
    let mut found: Vec<RuleMatch> = Vec::new();
    for source in &profile.sources {
        let table = byte_to_char_table(&source.text);
        for rule in rules {
            for m in rule.regex.find_iter(&source.text) {
                if m.is_empty() {
                    continue;
                }
                let Some(norm) = rule.normalize(m.as_str()) else { continue };
                found.push(RuleMatch {
                    span: Span { pid: source.pid, begin: table[m.start()], end: table[m.end()], value: m.as_str().into() },
                    normalized: norm.to_string(),
                });
            }
        }
    }
    let kept = resolve_overlaps(found.iter().map(|m| m.span.clone()).collect());
    let mut matches = Vec::with_capacity(kept.len());
    for span in kept {
        let m = found.iter().find(|m| m.span == span).expect("kept span comes from found");
        matches.push(m.clone());
    }
    RuleOutput { matches }
}

/// Keeps, per source, the span with the smallest begin among overlapping ones
/// (ties broken by the smaller end). Output is sorted by (pid, begin).
pub fn resolve_overlaps(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort_by(|a, b| (a.pid, a.begin, a.end).cmp(&(b.pid, b.begin, b.end)));
    let mut kept: Vec<Span> = Vec::with_capacity(spans.len());
    for s in spans {
        // Sorted by begin within a pid, so only the last kept span of the same pid can overlap.
        match kept.last() {
            Some(last) if last.pid == s.pid && s.begin < last.end => {}
            _ => kept.push(s),
        }
    }
    kept
}

/// Token-level span `[start, end)` over the tokens of source `pid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSpan {
    pub pid: usize,
    pub start: usize,
    pub end: usize,
}

/// Character span from the first token's begin to the last token's end.
pub fn map_token_spans_to_char(
    token_spans: &[TokenSpan],
    tokens: &[Vec<Token>],
    profile: &ProductProfile,
) -> Result<Vec<Span>, AnnotateError> {
    token_spans
        .iter()
        .map(|ts| {
            let toks = tokens.get(ts.pid);
            let len = toks.map_or(0, Vec::len);
            let err = || AnnotateError::TokenSpan { span: *ts, pid: ts.pid, len };
            let toks = toks.ok_or_else(err)?;
            if ts.start >= ts.end || ts.end > toks.len() {
                return Err(err());
            }
            Span::from_profile(profile, ts.pid, toks[ts.start].begin, toks[ts.end - 1].end).ok_or_else(err)
        })
        .collect()
}

/// Smallest token span covering a character span, or `None` if no token intersects it.
pub fn char_span_to_tokens(span: &Span, tokens: &[Token]) -> Option<TokenSpan> {
    let start = tokens.iter().position(|t| t.end > span.begin && t.begin < span.end)?;
    let last = tokens.iter().rposition(|t| t.end > span.begin && t.begin < span.end)?;
    Some(TokenSpan { pid: span.pid, start, end: last + 1 })
}

/// Rule-level tokenization of every source, indexed by pid.
pub fn tokenize_profile(profile: &ProductProfile) -> Vec<Vec<Token>> {
    profile.sources.iter().map(|s| basic_tokenize(&s.text)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryPrediction {
    pub category: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Keep,
    Drop,
}

/// Drops predictions strictly below `threshold`.
pub fn gate_category(pred: &CategoryPrediction, threshold: f64) -> Gate {
    if pred.probability < threshold {
        Gate::Drop
    } else {
        Gate::Keep
    }
}

pub trait CategoryClassifier: Send + Sync {
    fn predict(&self, profile: &ProductProfile) -> Option<CategoryPrediction>;
}

/// Keyword definition for [`KeywordClassifier`], one JSON object per line in files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryKeywords {
    pub category: String,
    pub keywords: Vec<String>,
}

/// Toy classifier: counts case-insensitive whole-token keyword hits per category over
/// all sources; probability is the winning category's share of all hits.
#[derive(Debug, Clone)]
pub struct KeywordClassifier {
    categories: Vec<(String, BTreeSet<String>)>,
}

impl KeywordClassifier {
    pub fn new(defs: impl IntoIterator<Item = CategoryKeywords>) -> Self {
        let mut categories: Vec<(String, BTreeSet<String>)> = defs
            .into_iter()
            .map(|d| (d.category, d.keywords.iter().map(|k| k.to_lowercase()).collect()))
            .collect();
        categories.sort_by(|a, b| a.0.cmp(&b.0));
        KeywordClassifier { categories }
    }
}

impl CategoryClassifier for KeywordClassifier {
    fn predict(&self, profile: &ProductProfile) -> Option<CategoryPrediction> {
        let words: Vec<String> = profile
            .sources
            .iter()
            .flat_map(|s| basic_tokenize(&s.text))
            .map(|t| t.text.to_lowercase())
            .collect();
        let counts: Vec<usize> = self
            .categories
            .iter()
            .map(|(_, kw)| words.iter().filter(|w| kw.contains(w.as_str())).count())
            .collect();
        let total: usize = counts.iter().sum();
        if total == 0 {
            return None;
        }
        // First maximum in name order, so ties resolve deterministically.
        let (best, &hits) = counts.iter().enumerate().rev().max_by_key(|(_, &c)| c)?;
        Some(CategoryPrediction { category: self.categories[best].0.clone(), probability: hits as f64 / total as f64 })
    }
}

/// Output of one ensemble member for one (profile, attribute).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelExtraction {
    pub extractor_id: usize,
    pub token_spans: Vec<TokenSpan>,
    pub normalized_value: Option<String>,
}

impl ModelExtraction {
    pub fn is_empty(&self) -> bool {
        self.token_spans.is_empty()
    }
}

pub struct ExtractionInput<'a> {
    pub profile: &'a ProductProfile,
    /// Rule-level tokens per source (see [`tokenize_profile`]).
    pub tokens: &'a [Vec<Token>],
    pub category: &'a str,
    pub attribute: &'a str,
}

/// An ensemble member. Implementations must be deterministic.
pub trait Extractor: Send + Sync {
    fn id(&self) -> usize;
    fn extract(&self, input: &ExtractionInput<'_>) -> ModelExtraction;
}

fn extraction_from_matches(id: usize, matches: &[RuleMatch], tokens: &[Vec<Token>]) -> ModelExtraction {
    let mut token_spans: Vec<TokenSpan> = matches
        .iter()
        .filter_map(|m| char_span_to_tokens(&m.span, tokens.get(m.span.pid)?))
        .collect();
    token_spans.sort();
    token_spans.dedup();
    let out = RuleOutput { matches: matches.to_vec() };
    ModelExtraction { extractor_id: id, token_spans, normalized_value: out.normalized_value().map(str::to_string) }
}

/// The rule engine used as an extractor: rule hits become token spans and the
/// normalized value is the rules' agreed value.
#[derive(Debug, Clone)]
pub struct RuleExtractor {
    id: usize,
    rules: std::sync::Arc<RuleSet>,
}

impl RuleExtractor {
    pub fn new(id: usize, rules: std::sync::Arc<RuleSet>) -> Self {
        RuleExtractor { id, rules }
    }
}

impl Extractor for RuleExtractor {
    fn id(&self) -> usize {
        self.id
    }

    fn extract(&self, input: &ExtractionInput<'_>) -> ModelExtraction {
        let out = apply_rules(input.profile, self.rules.rules_for(input.category, input.attribute));
        extraction_from_matches(self.id, &out.matches, input.tokens)
    }
}

/// Rule extractor that, with hash-decided probability, misses individual hits or
/// reports a corrupted normalized value. Useful to exercise disagreement paths.
#[derive(Debug, Clone)]
pub struct NoisyRuleExtractor {
    inner: RuleExtractor,
    seed: u64,
    miss_rate: f64,
    corrupt_rate: f64,
}

impl NoisyRuleExtractor {
    pub fn new(id: usize, rules: std::sync::Arc<RuleSet>, seed: u64, miss_rate: f64, corrupt_rate: f64) -> Self {
        NoisyRuleExtractor { inner: RuleExtractor::new(id, rules), seed, miss_rate, corrupt_rate }
    }

    fn coin(&self, parts: &[&str], rate: f64) -> bool {
        let h = seeded_hash(self.seed ^ (self.inner.id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), parts);
        (h as f64 / u64::MAX as f64) < rate
    }
}

impl Extractor for NoisyRuleExtractor {
    fn id(&self) -> usize {
        self.inner.id
    }

    fn extract(&self, input: &ExtractionInput<'_>) -> ModelExtraction {
        let out = apply_rules(input.profile, self.inner.rules.rules_for(input.category, input.attribute));
        let kept: Vec<RuleMatch> = out
            .matches
            .into_iter()
            .filter(|m| {
                let key = format!("{}:{}", m.span.pid, m.span.begin);
                !self.coin(&["miss", &input.profile.id, input.attribute, &key], self.miss_rate)
            })
            .collect();
        let mut ex = extraction_from_matches(self.inner.id, &kept, input.tokens);
        if ex.normalized_value.is_some() && self.coin(&["corrupt", &input.profile.id, input.attribute], self.corrupt_rate) {
            ex.normalized_value = ex.normalized_value.map(|v| format!("{v} (variant {})", self.inner.id));
        }
        ex
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeTag {
    Positive,
    Negative,
    Discard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationOutcome {
    pub tag: OutcomeTag,
    pub example: Option<AttributeExample>,
    /// Why an example was discarded.
    pub detail: Option<String>,
}

/// Combines exactly five extractor outputs with the rule output.
pub fn aggregate_ensemble(
    outputs: &[ModelExtraction],
    rule_output: &RuleOutput,
    tokens: &[Vec<Token>],
    profile: &ProductProfile,
    category: &str,
    attribute: &str,
) -> Result<AggregationOutcome, AnnotateError> {
    if outputs.len() != ENSEMBLE_SIZE {
        return Err(AnnotateError::EnsembleSize(outputs.len()));
    }
    let make = |normalized_value: Option<String>, evidences: Vec<Span>| AttributeExample {
        profile: profile.clone(),
        category: category.to_string(),
        attribute: attribute.to_string(),
        normalized_value,
        evidences,
    };

    if outputs.iter().all(ModelExtraction::is_empty) && rule_output.is_empty() {
        return Ok(AggregationOutcome { tag: OutcomeTag::Negative, example: Some(make(None, vec![])), detail: None });
    }

    let values: Vec<Option<&str>> = outputs.iter().map(|o| o.normalized_value.as_deref()).collect();
    let all_present = outputs.iter().all(|o| !o.is_empty()) && values.iter().all(Option::is_some);
    let keys: BTreeSet<String> = values.iter().flatten().map(|v| normalize_value(v)).collect();
    if all_present && keys.len() == 1 {
        let mut union = Vec::new();
        for o in outputs {
            union.extend(map_token_spans_to_char(&o.token_spans, tokens, profile)?);
        }
        let evidences = resolve_overlaps(union);
        // Smallest surface spelling, so the choice does not depend on member order.
        let value = values.iter().flatten().min().map(|v| v.to_string());
        return Ok(AggregationOutcome { tag: OutcomeTag::Positive, example: Some(make(value, evidences)), detail: None });
    }

    let detail = if !all_present {
        let missing: Vec<String> = outputs
            .iter()
            .filter(|o| o.is_empty() || o.normalized_value.is_none())
            .map(|o| o.extractor_id.to_string())
            .collect();
        if outputs.iter().all(ModelExtraction::is_empty) {
            "no extractor found a value but the rules matched".to_string()
        } else {
            format!("extractors [{}] produced no normalized value", missing.join(","))
        }
    } else {
        format!("extractors disagree: {}", keys.into_iter().collect::<Vec<_>>().join(" | "))
    };
    Ok(AggregationOutcome { tag: OutcomeTag::Discard, example: None, detail: Some(detail) })
}

/// Per-profile driver combining classifier, gate, extractors and rules.
pub struct Annotator {
    pub rules: std::sync::Arc<RuleSet>,
    pub classifier: Box<dyn CategoryClassifier>,
    pub extractors: Vec<Box<dyn Extractor>>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discard {
    pub id: String,
    pub category: String,
    pub attribute: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileAnnotation {
    /// `None` when the classifier abstained or the prediction was gated out.
    pub category: Option<CategoryPrediction>,
    pub positives: Vec<AttributeExample>,
    pub negatives: Vec<AttributeExample>,
    pub discards: Vec<Discard>,
}

impl Annotator {
    /// Five plain rule extractors.
    pub fn with_rule_ensemble(rules: RuleSet, classifier: Box<dyn CategoryClassifier>) -> Self {
        let rules = std::sync::Arc::new(rules);
        let extractors = (0..ENSEMBLE_SIZE)
            .map(|id| Box::new(RuleExtractor::new(id, rules.clone())) as Box<dyn Extractor>)
            .collect();
        Annotator { rules, classifier, extractors, threshold: DEFAULT_CATEGORY_THRESHOLD }
    }

    /// Five noisy rule extractors with distinct noise streams.
    pub fn with_noisy_ensemble(
        rules: RuleSet,
        classifier: Box<dyn CategoryClassifier>,
        seed: u64,
        miss_rate: f64,
        corrupt_rate: f64,
    ) -> Self {
        let rules = std::sync::Arc::new(rules);
        let extractors = (0..ENSEMBLE_SIZE)
            .map(|id| {
                Box::new(NoisyRuleExtractor::new(id, rules.clone(), seed, miss_rate, corrupt_rate)) as Box<dyn Extractor>
            })
            .collect();
        Annotator { rules, classifier, extractors, threshold: DEFAULT_CATEGORY_THRESHOLD }
    }

    pub fn annotate(&self, profile: &ProductProfile) -> Result<ProfileAnnotation, AnnotateError> {
        let mut result = ProfileAnnotation::default();
        let Some(pred) = self.classifier.predict(profile) else { return Ok(result) };
        if gate_category(&pred, self.threshold) == Gate::Drop {
            return Ok(result);
        }
        let tokens = tokenize_profile(profile);
        for attribute in self.rules.attributes_for(&pred.category) {
            let input = ExtractionInput { profile, tokens: &tokens, category: &pred.category, attribute };
            let outputs: Vec<ModelExtraction> = self.extractors.iter().map(|e| e.extract(&input)).collect();
            let rule_output = apply_rules(profile, self.rules.rules_for(&pred.category, attribute));
            let outcome = aggregate_ensemble(&outputs, &rule_output, &tokens, profile, &pred.category, attribute)?;
            match outcome.tag {
                OutcomeTag::Positive => result.positives.extend(outcome.example),
                OutcomeTag::Negative => result.negatives.extend(outcome.example),
                OutcomeTag::Discard => result.discards.push(Discard {
                    id: profile.id.clone(),
                    category: pred.category.clone(),
                    attribute: attribute.to_string(),
                    detail: outcome.detail.unwrap_or_default(),
                }),
            }
        }
        result.category = Some(pred);
        Ok(result)
    }
}

/// Retention key of a negative example under `seed`.
pub fn retention_hash(seed: u64, category: &str, attribute: &str, id: &str) -> u64 {
    seeded_hash(seed, &[category, attribute, id])
}

/// Streaming planner for negative downsampling: per (category, attribute) it keeps the
/// `cap` lowest retention hashes seen. Planners built over shards can be merged.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    cap: usize,
    seed: u64,
    heaps: HashMap<(String, String), BinaryHeap<(u64, String)>>,
}

impl NegativeSampler {
    pub fn new(cap: usize, seed: u64) -> Self {
        assert!(cap > 0, "negative cap must be positive");
        NegativeSampler { cap, seed, heaps: HashMap::new() }
    }

    fn push(&mut self, category: &str, attribute: &str, key: (u64, String)) {
        let heap = self.heaps.entry((category.to_string(), attribute.to_string())).or_default();
        if heap.len() < self.cap {
            heap.push(key);
        } else if heap.peek().is_some_and(|top| key < *top) {
            heap.pop();
            heap.push(key);
        }
    }

    pub fn observe(&mut self, ex: &AttributeExample) {
        let h = retention_hash(self.seed, &ex.category, &ex.attribute, ex.id());
        self.push(&ex.category, &ex.attribute, (h, ex.id().to_string()));
    }

    pub fn merge(&mut self, other: NegativeSampler) {
        assert_eq!((self.cap, self.seed), (other.cap, other.seed), "merging samplers with different settings");
        for ((c, a), heap) in other.heaps {
            for key in heap {
                self.push(&c, &a, key);
            }
        }
    }

    pub fn finish(self) -> RetentionPlan {
        let keep = self
            .heaps
            .into_iter()
            .map(|(pair, heap)| (pair, heap.into_iter().map(|(_, id)| id).collect()))
            .collect();
        RetentionPlan { keep }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RetentionPlan {
    keep: HashMap<(String, String), BTreeSet<String>>,
}

impl RetentionPlan {
    pub fn retains(&self, ex: &AttributeExample) -> bool {
        self.keep
            .get(&(ex.category.clone(), ex.attribute.clone()))
            .is_some_and(|ids| ids.contains(ex.id()))
    }
}

/// Caps negatives at `cap` per (category, attribute), keeping the lowest retention
/// hashes. Positives and input order are untouched.
pub fn downsample_negatives(dataset: Dataset, cap: usize, seed: u64) -> Dataset {
    let mut sampler = NegativeSampler::new(cap, seed);
    for ex in &dataset.negatives {
        sampler.observe(ex);
    }
    let plan = sampler.finish();
    Dataset {
        positives: dataset.positives,
        negatives: dataset.negatives.into_iter().filter(|ex| plan.retains(ex)).collect(),
    }
}
