//! Seeded synthetic corpus: raw product records with planted attribute values,
//! the matching extraction rules, category keywords and a small whole-word vocabulary.
//!
//! Value words of different attributes are disjoint and never occur in filler text,
//! so the rules recover exactly the planted values.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::{CategoryKeywords, ExtractionRule};
use crate::ingest::RawProduct;
use crate::tokenize::{basic_tokenize, CONTINUATION_PREFIX, UNK};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub products: usize,
    pub seed: u64,
    /// Chance that a given attribute is planted in a product.
    pub presence: f64,
    /// Share of products whose title mixes keywords of every category.
    pub ambiguous: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { products: 500, seed: 0, presence: 0.55, ambiguous: 0.02 }
    }
}

struct CategoryDef {
    name: &'static str,
    nouns: &'static [&'static str],
}

const CATEGORIES: [CategoryDef; 3] = [
    CategoryDef { name: "Backpacks", nouns: &["backpack", "rucksack", "daypack"] },
    CategoryDef { name: "Desk Lamps", nouns: &["lamp", "lantern", "sconce"] },
    CategoryDef { name: "Headphones", nouns: &["headphones", "earbuds", "headset"] },
];

/// Attribute name and its canonical values; value words are unique across attributes.
const ATTRIBUTES: [(&str, &[&str]); 5] = [
    ("Color", &["Crimson", "Teal", "Ivory", "Charcoal", "Amber", "Lilac", "Sky Blue", "Olive"]),
    ("Material", &["Leather", "Bamboo", "Canvas", "Nylon", "Walnut", "Ceramic", "Titanium", "Linen"]),
    ("Size", &["Compact", "Oversized", "Petite", "Jumbo", "Midsize", "Slim", "Extra Tall", "Mini"]),
    ("Pattern", &["Striped", "Plaid", "Floral", "Checkered", "Dotted", "Paisley", "Camo", "Herringbone"]),
    ("Finish", &["Matte", "Glossy", "Satin", "Brushed", "Polished", "Frosted", "Lacquered", "Textured"]),
];

const BRANDS: [&str; 6] = ["Acme", "Northwind", "Zephyr", "Orbit", "Kestrel", "Lumen"];

const FILLER: [&str; 60] = [
    "this", "item", "is", "a", "great", "choice", "for", "daily", "use", "and", "travel", "the", "design", "feels",
    "sturdy", "while", "staying", "light", "it", "ships", "with", "simple", "instructions", "easy", "to", "clean",
    "store", "our", "team", "tested", "every", "unit", "before", "shipping", "you", "will", "love", "how", "well",
    "fits", "into", "any", "room", "or", "bag", "comfortable", "reliable", "quality", "perfect", "gift", "friends",
    "family", "built", "last", "years", "warranty", "included", "customer", "support", "ready",
];

/// Phrases introducing a planted value; `{}` is the value.
const TEMPLATES: [&str; 5] = ["featuring {} details", "now in {}", "with a {} look", "{} edition", "offered in {}"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedValue {
    pub attribute: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthProduct {
    pub raw: RawProduct,
    /// Intended category; ambiguous products still record the one they were built from.
    pub category: String,
    pub planted: Vec<PlantedValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub products: Vec<SynthProduct>,
    pub rules: Vec<ExtractionRule>,
    pub categories: Vec<CategoryKeywords>,
    pub vocab: Vec<String>,
}

pub fn attribute_names() -> Vec<&'static str> {
    ATTRIBUTES.iter().map(|(a, _)| *a).collect()
}

pub fn category_names() -> Vec<&'static str> {
    CATEGORIES.iter().map(|c| c.name).collect()
}

fn filler(rng: &mut ChaCha8Rng, words: std::ops::Range<usize>) -> String {
    let n = rng.random_range(words);
    (0..n).map(|_| *FILLER.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

fn surface(rng: &mut ChaCha8Rng, value: &str) -> String {
    match rng.random_range(0..3) {
        0 => value.to_lowercase(),
        1 => value.to_uppercase(),
        _ => value.to_string(),
    }
}

fn planted_phrase(rng: &mut ChaCha8Rng, value: &str) -> String {
    TEMPLATES.choose(rng).expect("non-empty").replace("{}", &surface(rng, value))
}

/// Where a planted value goes.
#[derive(Clone, Copy)]
enum Slot {
    Title,
    Description,
    Feature,
}

fn build_product(rng: &mut ChaCha8Rng, idx: usize, cfg: &SynthConfig) -> SynthProduct {
    let cat = &CATEGORIES[rng.random_range(0..CATEGORIES.len())];
    let noun = *cat.nouns.choose(rng).expect("non-empty");
    let brand = *BRANDS.choose(rng).expect("non-empty");
    let mut title_parts = vec![brand.to_string()];
    let mut desc_a = vec![filler(rng, 8..14)];
    let mut desc_b = vec![filler(rng, 6..10)];
    let mut features: Vec<String> = Vec::new();
    for _ in 0..rng.random_range(1..3) {
        features.push(filler(rng, 4..7));
    }
    let mut planted = Vec::new();
    for (attribute, values) in ATTRIBUTES {
        if !rng.random_bool(cfg.presence) {
            continue;
        }
        let value = *values.choose(rng).expect("non-empty");
        planted.push(PlantedValue { attribute: attribute.to_string(), value: value.to_string() });
        let mut slots = [Slot::Title, Slot::Description, Slot::Feature];
        slots.shuffle(rng);
        for slot in &slots[..rng.random_range(1..3)] {
            match slot {
                Slot::Title => title_parts.push(surface(rng, value)),
                Slot::Description => {
                    let p = planted_phrase(rng, value);
                    if rng.random_bool(0.5) {
                        desc_a.push(p)
                    } else {
                        desc_b.push(p)
                    }
                }
                Slot::Feature => {
                    let p = planted_phrase(rng, value);
                    let i = rng.random_range(0..features.len());
                    features[i] = format!("{} {p}", features[i]);
                }
            }
        }
    }
    title_parts.push(noun.to_string());
    if rng.random_bool(cfg.ambiguous) {
        for other in CATEGORIES.iter().filter(|c| c.name != cat.name) {
            title_parts.push(format!("and {}", other.nouns[0]));
        }
    }
    let sentence = |parts: Vec<String>| {
        let mut s = parts.join(", ");
        s.push('.');
        s
    };
    let raw = RawProduct {
        id: format!("SYN{idx:05}"),
        title: Some(title_parts.join(" ")),
        descriptions: vec![format!("<p>{}</p>", sentence(desc_a)), format!("<div>{} &amp; more</div>", sentence(desc_b))],
        features,
        price: Some(format!("${}.{:02}", rng.random_range(5..200), rng.random_range(0..100))),
        brand: Some(brand.to_string()),
    };
    SynthProduct { raw, category: cat.name.to_string(), planted }
}

fn rules() -> Vec<ExtractionRule> {
    let mut out = Vec::new();
    for cat in &CATEGORIES {
        for (attribute, values) in ATTRIBUTES {
            let alternation: Vec<String> = values.iter().map(|v| v.to_lowercase().replace(' ', r"\s+")).collect();
            let normalization: BTreeMap<String, String> = values.iter().map(|v| (v.to_lowercase(), v.to_string())).collect();
            out.push(ExtractionRule {
                category: cat.name.to_string(),
                attribute: attribute.to_string(),
                pattern: format!(r"\b(?:{})\b", alternation.join("|")),
                normalization,
            });
        }
    }
    out
}

fn category_keywords() -> Vec<CategoryKeywords> {
    CATEGORIES
        .iter()
        .map(|c| CategoryKeywords { category: c.name.to_string(), keywords: c.nouns.iter().map(|s| s.to_string()).collect() })
        .collect()
}

/// Whole-word vocabulary covering every token the generator can emit, plus
/// specials and digit continuations. Order is deterministic.
fn vocab() -> Vec<String> {
    let mut words: BTreeSet<String> = BTreeSet::new();
    let mut add_text = |t: &str| {
        for tok in basic_tokenize(t) {
            words.insert(tok.text.to_lowercase());
        }
    };
    for c in &CATEGORIES {
        add_text(c.name);
        c.nouns.iter().for_each(|n| add_text(n));
    }
    for (a, values) in ATTRIBUTES {
        add_text(a);
        values.iter().for_each(|v| add_text(v));
    }
    BRANDS.iter().chain(FILLER.iter()).chain(TEMPLATES.iter()).for_each(|t| add_text(&t.replace("{}", " ")));
    add_text("and & more , . $");
    let mut out: Vec<String> = ["[PAD]", UNK, "[CLS]", "[SEP]", "[MASK]"].iter().map(|s| s.to_string()).collect();
    out.extend(words);
    for d in 0..10 {
        out.push(d.to_string());
    }
    for d in 0..10 {
        out.push(format!("{CONTINUATION_PREFIX}{d}"));
    }
    out.dedup();
    out
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let products = (0..cfg.products).map(|i| build_product(&mut rng, i, cfg)).collect();
    SynthCorpus { products, rules: rules(), categories: category_keywords(), vocab: vocab() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{Annotator, KeywordClassifier, RuleSet};
    use crate::ingest::build_profile;
    use crate::tokenize::{Vocab, WordpieceTokenizer};
    use std::sync::Arc;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate(&SynthConfig::default());
        let b = generate(&SynthConfig::default());
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 1, ..Default::default() });
        assert_ne!(a.products, c.products);
        assert_eq!(a.products.len(), 500);
    }

    #[test]
    fn vocab_is_small_and_covers_corpus() {
        let corpus = generate(&SynthConfig::default());
        assert!((150..=260).contains(&corpus.vocab.len()), "vocab size {}", corpus.vocab.len());
        let vocab = Arc::new(Vocab::from_entries(corpus.vocab.clone()).unwrap());
        let tok = WordpieceTokenizer::new(vocab.clone());
        for p in &corpus.products {
            let profile = build_profile(&p.raw).expect("synthetic products pass ingest");
            for s in &profile.sources {
                assert!(tok.tokenize(&s.text).iter().all(|t| t.text != UNK), "unknown token in {:?}", s.text);
            }
        }
        for name in attribute_names().into_iter().chain(category_names()) {
            assert!(tok.tokenize(name).iter().all(|t| t.text != UNK));
        }
    }

    #[test]
    fn rules_recover_planted_values() {
        let corpus = generate(&SynthConfig { ambiguous: 0.0, ..Default::default() });
        let rules = RuleSet::new(corpus.rules.clone()).unwrap();
        let annotator = Annotator::with_rule_ensemble(rules, Box::new(KeywordClassifier::new(corpus.categories.clone())));
        let mut positives = 0;
        for p in &corpus.products {
            let profile = build_profile(&p.raw).unwrap();
            let ann = annotator.annotate(&profile).unwrap();
            assert_eq!(ann.category.as_ref().unwrap().category, p.category);
            assert!(ann.discards.is_empty());
            let got: BTreeSet<(String, String)> = ann
                .positives
                .iter()
                .map(|e| (e.attribute.clone(), e.normalized_value.clone().unwrap()))
                .collect();
            let want: BTreeSet<(String, String)> = p.planted.iter().map(|v| (v.attribute.clone(), v.value.clone())).collect();
            assert_eq!(got, want, "product {}", p.raw.id);
            assert_eq!(ann.positives.len() + ann.negatives.len(), ATTRIBUTES.len());
            positives += ann.positives.len();
        }
        assert!(positives > 1000);
    }

    #[test]
    fn ambiguous_products_are_gated_out() {
        let corpus = generate(&SynthConfig { ambiguous: 1.0, products: 20, ..Default::default() });
        let annotator = Annotator::with_rule_ensemble(
            RuleSet::new(corpus.rules.clone()).unwrap(),
            Box::new(KeywordClassifier::new(corpus.categories.clone())),
        );
        for p in &corpus.products {
            let ann = annotator.annotate(&build_profile(&p.raw).unwrap()).unwrap();
            assert!(ann.category.is_none());
        }
    }
}
