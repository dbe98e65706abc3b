//! Evaluation protocol: outcome classes, precision/recall/F1, sequence-length
//! buckets, dataset statistics, and the random / zero-shot / few-shot splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::seeded_hash;
use crate::model::{AttributeExample, Span};
use crate::text::normalize_value;
use crate::tokenize::whitespace_tokenize;

pub const FEW_SHOT_POOL: usize = 100;
pub const FEW_SHOT_KS: [usize; 7] = [1, 2, 3, 5, 10, 50, 100];
pub const DEFAULT_LENGTH_EDGES: [u64; 5] = [0, 128, 256, 512, 1024];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("invalid split ratios {0:?}")]
    Ratios(String),
    #[error("few-shot k must be one of {FEW_SHOT_KS:?}, got {0}")]
    FewShotK(usize),
    #[error("attribute {attribute:?} has {available} examples, few-shot sampling needs {FEW_SHOT_POOL}")]
    PoolTooSmall { attribute: String, available: usize },
    #[error("bucket edges must be strictly increasing")]
    Edges,
    #[error("holdout attribute list is empty")]
    EmptyHoldout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    /// Gold has no value; prediction has none.
    NN,
    /// Gold has no value; something was predicted.
    NV,
    /// Gold has a value; nothing was predicted.
    VN,
    /// Gold has a value; the predicted values are correct.
    VC,
    /// Gold has a value; the predicted values are wrong.
    VW,
}

/// Gold value set: normalized surface forms of the evidences.
pub fn gold_values(gold: &AttributeExample) -> BTreeSet<String> {
    gold.evidences.iter().map(|s| normalize_value(&s.value)).collect()
}

/// Classifies a prediction against gold. A prediction is correct when every
/// predicted value (span text, lowercased and whitespace-collapsed) is one of the
/// gold evidence values.
pub fn classify_outcome(gold: &AttributeExample, predicted: &[Span]) -> Outcome {
    let pred: BTreeSet<String> = predicted.iter().map(|s| normalize_value(&s.value)).collect();
    match (gold.is_positive(), pred.is_empty()) {
        (false, true) => Outcome::NN,
        (false, false) => Outcome::NV,
        (true, true) => Outcome::VN,
        (true, false) => {
            if pred.is_subset(&gold_values(gold)) {
                Outcome::VC
            } else {
                Outcome::VW
            }
        }
    }
}

/// Outcome counters. Counts from different shards merge by addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsCounts {
    pub nn: u64,
    pub nv: u64,
    pub vn: u64,
    pub vc: u64,
    pub vw: u64,
}

impl MetricsCounts {
    pub fn record(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::NN => self.nn += 1,
            Outcome::NV => self.nv += 1,
            Outcome::VN => self.vn += 1,
            Outcome::VC => self.vc += 1,
            Outcome::VW => self.vw += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.nn + self.nv + self.vn + self.vc + self.vw
    }
}

impl Add for MetricsCounts {
    type Output = MetricsCounts;

    fn add(self, o: MetricsCounts) -> MetricsCounts {
        MetricsCounts { nn: self.nn + o.nn, nv: self.nv + o.nv, vn: self.vn + o.vn, vc: self.vc + o.vc, vw: self.vw + o.vw }
    }
}

impl AddAssign for MetricsCounts {
    fn add_assign(&mut self, o: MetricsCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for MetricsCounts {
    fn sum<I: Iterator<Item = MetricsCounts>>(iter: I) -> Self {
        iter.fold(MetricsCounts::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: MetricsCounts,
    /// Set when a denominator was zero and the affected metric was reported as 0.
    pub degenerate: bool,
}

/// P = VC / (NV + VC + VW), R = VC / (VN + VC + VW), F1 = 2PR / (P + R).
pub fn compute_metrics(counts: MetricsCounts) -> MetricsReport {
    let vc = counts.vc as f64;
    let p_den = (counts.nv + counts.vc + counts.vw) as f64;
    let r_den = (counts.vn + counts.vc + counts.vw) as f64;
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            degenerate = true;
            0.0
        } else {
            num / den
        }
    };
    let precision = ratio(vc, p_den);
    let recall = ratio(vc, r_den);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    MetricsReport { precision, recall, f1, counts, degenerate }
}

/// Half-open word-count bucket `[lo, hi)`; `hi == None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LengthBucket {
    pub lo: u64,
    pub hi: Option<u64>,
}

impl fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(hi) => write!(f, "[{},{})", self.lo, hi),
            None => write!(f, "[{},inf)", self.lo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthBuckets {
    edges: Vec<u64>,
}

impl Default for LengthBuckets {
    fn default() -> Self {
        LengthBuckets { edges: DEFAULT_LENGTH_EDGES.to_vec() }
    }
}

impl LengthBuckets {
    /// `edges` are the lower bounds; the last bucket is open-ended.
    pub fn new(edges: Vec<u64>) -> Result<Self, EvalError> {
        if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::Edges);
        }
        Ok(LengthBuckets { edges })
    }

    /// Bucket of a word count. Counts below the first edge fall into the first bucket.
    pub fn bucket(&self, words: u64) -> LengthBucket {
        let idx = self.edges.partition_point(|&e| e <= words).saturating_sub(1);
        LengthBucket { lo: self.edges[idx], hi: self.edges.get(idx + 1).copied() }
    }

    pub fn all(&self) -> Vec<LengthBucket> {
        (0..self.edges.len())
            .map(|i| LengthBucket { lo: self.edges[i], hi: self.edges.get(i + 1).copied() })
            .collect()
    }
}

/// Total whitespace word count across all sources.
pub fn example_length(ex: &AttributeExample) -> u64 {
    ex.profile.sources.iter().map(|s| whitespace_tokenize(&s.text).len() as u64).sum()
}

pub fn bucket_by_length<'a>(
    items: impl IntoIterator<Item = (&'a AttributeExample, Outcome)>,
    buckets: &LengthBuckets,
) -> BTreeMap<LengthBucket, MetricsCounts> {
    let mut out: BTreeMap<LengthBucket, MetricsCounts> = BTreeMap::new();
    for (ex, outcome) in items {
        out.entry(buckets.bucket(example_length(ex))).or_default().record(outcome);
    }
    out
}

/// Accumulates outcomes overall and per attribute, category and length bucket.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    buckets: LengthBuckets,
    overall: MetricsCounts,
    by_attribute: BTreeMap<String, MetricsCounts>,
    by_category: BTreeMap<String, MetricsCounts>,
    by_bucket: BTreeMap<LengthBucket, MetricsCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: MetricsReport,
    pub by_attribute: BTreeMap<String, MetricsReport>,
    pub by_category: BTreeMap<String, MetricsReport>,
    pub by_bucket: BTreeMap<String, MetricsReport>,
}

impl Evaluator {
    pub fn new(buckets: LengthBuckets) -> Self {
        Evaluator { buckets, ..Default::default() }
    }

    pub fn add(&mut self, gold: &AttributeExample, predicted: &[Span]) -> Outcome {
        let outcome = classify_outcome(gold, predicted);
        self.overall.record(outcome);
        self.by_attribute.entry(gold.attribute.clone()).or_default().record(outcome);
        self.by_category.entry(gold.category.clone()).or_default().record(outcome);
        let bucket = self.buckets.bucket(example_length(gold));
        self.by_bucket.entry(bucket).or_default().record(outcome);
        outcome
    }

    pub fn counts(&self) -> MetricsCounts {
        self.overall
    }

    pub fn report(&self) -> EvalReport {
        let map = |m: &BTreeMap<String, MetricsCounts>| m.iter().map(|(k, c)| (k.clone(), compute_metrics(*c))).collect();
        EvalReport {
            overall: compute_metrics(self.overall),
            by_attribute: map(&self.by_attribute),
            by_category: map(&self.by_category),
            by_bucket: self.by_bucket.iter().map(|(b, c)| (b.to_string(), compute_metrics(*c))).collect(),
        }
    }
}

impl EvalReport {
    /// Aligned plain-text table. `groups` selects breakdowns among
    /// `attribute`, `category` and `bucket`.
    pub fn to_table(&self, groups: &[&str]) -> String {
        let mut rows: Vec<(String, &MetricsReport)> = vec![("overall".into(), &self.overall)];
        for g in groups {
            let map = match *g {
                "attribute" => &self.by_attribute,
                "category" => &self.by_category,
                "bucket" => &self.by_bucket,
                _ => continue,
            };
            rows.extend(map.iter().map(|(k, r)| (format!("{g}={k}"), r)));
        }
        render_metric_rows(&rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,key,precision,recall,f1,nn,nv,vn,vc,vw\n");
        let mut push = |group: &str, key: &str, r: &MetricsReport| {
            let c = r.counts;
            let _ = writeln!(
                out,
                "{group},{},{:.6},{:.6},{:.6},{},{},{},{},{}",
                csv_field(key), r.precision, r.recall, r.f1, c.nn, c.nv, c.vn, c.vc, c.vw
            );
        };
        push("overall", "all", &self.overall);
        for (k, r) in &self.by_attribute {
            push("attribute", k, r);
        }
        for (k, r) in &self.by_category {
            push("category", k, r);
        }
        for (k, r) in &self.by_bucket {
            push("bucket", k, r);
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_metric_rows(rows: &[(String, &MetricsReport)]) -> String {
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}\n",
        "group", "precision", "recall", "f1", "NN", "NV", "VN", "VC", "VW"
    );
    for (k, r) in rows {
        let c = r.counts;
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}",
            k, r.precision, r.recall, r.f1, c.nn, c.nv, c.vn, c.vc, c.vw
        );
    }
    out
}

/// Train/eval/test proportions and the seed for hash-based assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    ratios: [f64; 3],
    pub seed: u64,
    pub holdout: Option<Vec<String>>,
    pub few_shot_k: Option<usize>,
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<Self, EvalError> {
        if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(EvalError::Ratios(format!("{ratios:?}")));
        }
        let total: f64 = ratios.iter().sum();
        Ok(SplitSpec { ratios: ratios.map(|r| r / total), seed, holdout: None, few_shot_k: None })
    }

    /// Parses `a:b:c`.
    pub fn parse_ratios(s: &str, seed: u64) -> Result<Self, EvalError> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| EvalError::Ratios(s.to_string()))?;
        let ratios: [f64; 3] = parts.try_into().map_err(|_| EvalError::Ratios(s.to_string()))?;
        Self::new(ratios, seed)
    }

    pub fn with_few_shot(mut self, k: usize) -> Result<Self, EvalError> {
        if !FEW_SHOT_KS.contains(&k) {
            return Err(EvalError::FewShotK(k));
        }
        self.few_shot_k = Some(k);
        Ok(self)
    }

    pub fn ratios(&self) -> [f64; 3] {
        self.ratios
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new([8.0, 1.0, 1.0], 0).expect("valid default ratios")
    }
}

/// Stable identity of an example for splitting: product id and attribute.
pub fn example_key(ex: &AttributeExample) -> String {
    format!("{}\u{1f}{}", ex.id(), ex.attribute)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RandomSplit {
    pub train: Vec<AttributeExample>,
    pub eval: Vec<AttributeExample>,
    pub test: Vec<AttributeExample>,
}

/// Part sizes for `n` items under `ratios` by largest-remainder rounding.
fn quota(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact = ratios.map(|r| r * n as f64);
    let mut sizes = exact.map(|x| x.floor() as usize);
    let mut rest = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    sizes
}

/// Ranks examples by a seeded hash of their key and cuts the ranking at the ratio
/// quotas. Deterministic, disjoint and exhaustive; input order is kept within each part.
pub fn split_random(examples: Vec<AttributeExample>, spec: &SplitSpec) -> RandomSplit {
    let mut ranked: Vec<(u64, String, usize)> = examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let key = example_key(ex);
            (seeded_hash(spec.seed, &["split", &key]), key, i)
        })
        .collect();
    ranked.sort();
    let [n_train, n_eval, _] = quota(examples.len(), spec.ratios);
    let mut part = vec![0u8; examples.len()];
    for (rank, (_, _, i)) in ranked.iter().enumerate() {
        part[*i] = if rank < n_train {
            0
        } else if rank < n_train + n_eval {
            1
        } else {
            2
        };
    }
    let mut out = RandomSplit::default();
    for (ex, p) in examples.into_iter().zip(part) {
        match p {
            0 => out.train.push(ex),
            1 => out.eval.push(ex),
            _ => out.test.push(ex),
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ZeroShotSplit {
    pub train: Vec<AttributeExample>,
    pub eval: Vec<AttributeExample>,
    /// Holdout attributes that never occurred in the data.
    pub missing: Vec<String>,
}

pub fn split_zero_shot(examples: Vec<AttributeExample>, holdout: &[String]) -> Result<ZeroShotSplit, EvalError> {
    if holdout.is_empty() {
        return Err(EvalError::EmptyHoldout);
    }
    let held: BTreeSet<&str> = holdout.iter().map(String::as_str).collect();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out = ZeroShotSplit::default();
    for ex in examples {
        if held.contains(ex.attribute.as_str()) {
            seen.insert(ex.attribute.clone());
            out.eval.push(ex);
        } else {
            out.train.push(ex);
        }
    }
    out.missing = held.iter().filter(|a| !seen.contains(**a)).map(|a| a.to_string()).collect();
    for a in &out.missing {
        log::warn!("holdout attribute {a:?} does not occur in the dataset");
    }
    Ok(out)
}

/// Per attribute: the 100 examples with the lowest pool hash form the pool, and the
/// `k` pool members with the lowest shot hash are selected. Selections for smaller
/// `k` are therefore subsets of those for larger `k`. Output follows input order.
pub fn sample_few_shot(pool: &[AttributeExample], k: usize, seed: u64) -> Result<Vec<AttributeExample>, EvalError> {
    if !FEW_SHOT_KS.contains(&k) {
        return Err(EvalError::FewShotK(k));
    }
    let mut by_attr: BTreeMap<&str, Vec<(u64, String, usize)>> = BTreeMap::new();
    for (i, ex) in pool.iter().enumerate() {
        let key = example_key(ex);
        by_attr.entry(&ex.attribute).or_default().push((seeded_hash(seed, &["pool", &key]), key, i));
    }
    let mut chosen = Vec::new();
    for (attr, mut members) in by_attr {
        if members.len() < FEW_SHOT_POOL {
            return Err(EvalError::PoolTooSmall { attribute: attr.to_string(), available: members.len() });
        }
        members.sort();
        members.truncate(FEW_SHOT_POOL);
        let mut shots: Vec<(u64, String, usize)> = members
            .into_iter()
            .map(|(_, key, i)| (seeded_hash(seed, &["shot", &key]), key, i))
            .collect();
        shots.sort();
        chosen.extend(shots.into_iter().take(k).map(|(_, _, i)| i));
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| pool[i].clone()).collect())
}

/// Counters for one example set (positives or negatives).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetStats {
    pub products: u64,
    pub product_attribute_pairs: u64,
    pub products_with_1_2_attributes: u64,
    pub products_with_3_5_attributes: u64,
    pub products_with_6_plus_attributes: u64,
    pub unique_categories: u64,
    pub unique_attributes: u64,
    pub unique_category_attribute_pairs: u64,
    /// Number of sources per product to number of products.
    pub sources_histogram: BTreeMap<usize, u64>,
    /// Word-count bucket to number of products.
    pub words_histogram: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub positives: SetStats,
    pub negatives: SetStats,
}

#[derive(Debug, Default)]
struct SetAccumulator {
    pairs: u64,
    products: HashMap<String, ProductTally>,
    categories: BTreeSet<String>,
    attributes: BTreeSet<String>,
    category_attributes: BTreeSet<(String, String)>,
}

#[derive(Debug)]
struct ProductTally {
    attributes: BTreeSet<String>,
    sources: usize,
    words: u64,
}

impl SetAccumulator {
    fn add(&mut self, ex: &AttributeExample) {
        self.pairs += 1;
        let tally = self.products.entry(ex.id().to_string()).or_insert_with(|| ProductTally {
            attributes: BTreeSet::new(),
            sources: ex.profile.sources.len(),
            words: example_length(ex),
        });
        tally.attributes.insert(ex.attribute.clone());
        self.categories.insert(ex.category.clone());
        self.attributes.insert(ex.attribute.clone());
        self.category_attributes.insert((ex.category.clone(), ex.attribute.clone()));
    }

    fn finish(self, buckets: &LengthBuckets) -> SetStats {
        let mut s = SetStats {
            products: self.products.len() as u64,
            product_attribute_pairs: self.pairs,
            unique_categories: self.categories.len() as u64,
            unique_attributes: self.attributes.len() as u64,
            unique_category_attribute_pairs: self.category_attributes.len() as u64,
            ..Default::default()
        };
        for b in buckets.all() {
            s.words_histogram.insert(b.to_string(), 0);
        }
        for t in self.products.values() {
            match t.attributes.len() {
                0..=2 => s.products_with_1_2_attributes += 1,
                3..=5 => s.products_with_3_5_attributes += 1,
                _ => s.products_with_6_plus_attributes += 1,
            }
            *s.sources_histogram.entry(t.sources).or_default() += 1;
            *s.words_histogram.entry(buckets.bucket(t.words).to_string()).or_default() += 1;
        }
        s
    }
}

/// Streaming statistics; examples with evidences count as positives.
#[derive(Debug, Default)]
pub struct StatsCollector {
    positives: SetAccumulator,
    negatives: SetAccumulator,
}

impl StatsCollector {
    pub fn add(&mut self, ex: &AttributeExample) {
        if ex.is_positive() {
            self.positives.add(ex);
        } else {
            self.negatives.add(ex);
        }
    }

    pub fn finish(self, buckets: &LengthBuckets) -> StatsReport {
        StatsReport { positives: self.positives.finish(buckets), negatives: self.negatives.finish(buckets) }
    }
}

pub fn dataset_stats<'a>(examples: impl IntoIterator<Item = &'a AttributeExample>) -> StatsReport {
    let mut c = StatsCollector::default();
    for ex in examples {
        c.add(ex);
    }
    c.finish(&LengthBuckets::default())
}

impl StatsReport {
    /// Plain-text table shaped like the usual dataset overview: one row per counter,
    /// positives and negatives side by side.
    pub fn to_table(&self) -> String {
        let (p, n) = (&self.positives, &self.negatives);
        let mut rows: Vec<(String, String, String)> = vec![
            ("# products".into(), p.products.to_string(), n.products.to_string()),
            ("# product-attribute pairs".into(), p.product_attribute_pairs.to_string(), n.product_attribute_pairs.to_string()),
            ("# products with 1-2 attributes".into(), p.products_with_1_2_attributes.to_string(), n.products_with_1_2_attributes.to_string()),
            ("# products with 3-5 attributes".into(), p.products_with_3_5_attributes.to_string(), n.products_with_3_5_attributes.to_string()),
            ("# products with >=6 attributes".into(),p.products_with_6_plus_attributes.to_string(), n.products_with_6_plus_attributes.to_string()),
            ("# unique categories".into(), p.unique_categories.to_string(), n.unique_categories.to_string()),
            ("# unique attributes".into(), p.unique_attributes.to_string(), n.unique_attributes.to_string()),
            ("# unique category-attribute pairs".into(), p.unique_category_attribute_pairs.to_string(), n.unique_category_attribute_pairs.to_string()),
        ];
        let source_counts: BTreeSet<usize> = p.sources_histogram.keys().chain(n.sources_histogram.keys()).copied().collect();
        for k in source_counts {
            let get = |s: &SetStats| s.sources_histogram.get(&k).copied().unwrap_or(0).to_string();
            rows.push((format!("# products with {k} sources"), get(p), get(n)));
        }
        let mut word_keys: Vec<&String> = p.words_histogram.keys().chain(n.words_histogram.keys()).collect();
        word_keys.sort_by_key(|k| k.trim_start_matches('[').split(',').next().and_then(|x| x.parse::<u64>().ok()));
        word_keys.dedup();
        for k in word_keys {
            let get = |s: &SetStats| s.words_histogram.get(k).copied().unwrap_or(0).to_string();
            rows.push((format!("# products with words in {k}"), get(p), get(n)));
        }
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("Counts".len());
        let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max("Positives".len());
        let w2 = rows.iter().map(|r| r.2.len()).max().unwrap_or(0).max("Negatives".len());
        let mut out = format!("{:<w0$}  {:>w1$}  {:>w2$}\n", "Counts", "Positives", "Negatives");
        for (a, b, c) in rows {
            let _ = writeln!(out, "{a:<w0$}  {b:>w1$}  {c:>w2$}");
        }
        out
    }
}
