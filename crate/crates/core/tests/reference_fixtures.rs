use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use mave_core::evalkit::dataset_stats;
use mave_core::jsonl::read_examples;
use mave_core::tokenize::{Vocab, WordpieceTokenizer, REFERENCE_VOCAB_SIZE};
use mave_core::SpanEnd;
use serde::Deserialize;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Deserialize)]
struct Case {
    text: String,
    tokens: Vec<String>,
    ids: Vec<u32>,
    offsets: Vec<(usize, usize)>,
}

#[test]
fn wordpiece_matches_reference_tokenizer() {
    let vocab = Vocab::load(&fixture("wordpiece_vocab.txt")).unwrap();
    assert_eq!(vocab.len(), REFERENCE_VOCAB_SIZE);
    let tok = WordpieceTokenizer::new(Arc::new(vocab));
    let cases: Vec<Case> = std::fs::read_to_string(fixture("wordpiece_cases.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(cases.len(), 50);
    for case in &cases {
        let tokens = tok.tokenize(&case.text);
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, case.tokens, "tokens for {:?}", case.text);
        assert_eq!(tok.ids(&tokens), case.ids, "ids for {:?}", case.text);
        let offsets: Vec<(usize, usize)> = tokens.iter().map(|t| (t.begin, t.end)).collect();
        assert_eq!(offsets, case.offsets, "offsets for {:?}", case.text);
    }
}

#[test]
fn five_product_statistics() {
    let examples = read_examples(&fixture("stats_five.jsonl"), SpanEnd::Exclusive).unwrap();
    assert_eq!(examples.len(), 19);
    let r = dataset_stats(&examples);
    let p = &r.positives;
    assert_eq!(p.products, 4);
    assert_eq!(p.product_attribute_pairs, 13);
    assert_eq!(p.products_with_1_2_attributes, 2);
    assert_eq!(p.products_with_3_5_attributes, 1);
    assert_eq!(p.products_with_6_plus_attributes, 1);
    assert_eq!(p.unique_categories, 2);
    assert_eq!(p.unique_attributes, 6);
    assert_eq!(p.unique_category_attribute_pairs, 10);
    assert_eq!(p.sources_histogram, BTreeMap::from([(1, 1), (2, 2), (3, 1)]));
    let words = |pairs: [(&str, u64); 5]| pairs.map(|(k, v)| (k.to_string(), v)).into_iter().collect::<BTreeMap<_, _>>();
    assert_eq!(
        p.words_histogram,
        words([("[0,128)", 2), ("[128,256)", 1), ("[256,512)", 0), ("[512,1024)", 1), ("[1024,inf)", 0)])
    );

    let n = &r.negatives;
    assert_eq!(n.products, 3);
    assert_eq!(n.product_attribute_pairs, 6);
    assert_eq!(n.products_with_1_2_attributes, 2);
    assert_eq!(n.products_with_3_5_attributes, 1);
    assert_eq!(n.products_with_6_plus_attributes, 0);
    assert_eq!(n.unique_categories, 2);
    assert_eq!(n.unique_attributes, 5);
    assert_eq!(n.unique_category_attribute_pairs, 5);
    assert_eq!(n.sources_histogram, BTreeMap::from([(1, 1), (2, 1), (3, 1)]));
    assert_eq!(
        n.words_histogram,
        words([("[0,128)", 2), ("[128,256)", 1), ("[256,512)", 0), ("[512,1024)", 0), ("[1024,inf)", 0)])
    );

    let table = r.to_table();
    assert!(table.lines().next().unwrap().contains("Positives"));
    assert!(table.contains("# product-attribute pairs"));
}
