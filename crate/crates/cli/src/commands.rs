use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use mave_core::annotate::{Annotator, CategoryKeywords, ExtractionRule, KeywordClassifier, NegativeSampler, RuleSet};
use mave_core::evalkit::{self, LengthBuckets, SplitSpec, StatsCollector};
use mave_core::hashing::seeded_hash;
use mave_core::ingest::{build_profile, RawProduct};
use mave_core::model::{deserialize_line, deserialize_profile, serialize_example, serialize_profile};
use mave_core::synth::{self, SynthConfig};
use mave_core::text::normalize_value;
use mave_core::tokenize::{Vocab, WordpieceTokenizer};
use mave_core::{jsonl, AttributeExample, Dataset, SpanEnd};
use mave_qa::train::{fit, TrainState};
use mave_qa::{encode_example, init_params, QaModel, RunConfig, Schedule};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::util::{map_lines, parent_dir, read_all, record_run, write_text, Out};

pub fn clean(a: &CleanArgs) -> Result<()> {
    let mut out = Out::create(&a.out)?;
    let mut rejects = Out::create(&a.rejects)?;
    let (mut kept, mut rejected) = (0u64, 0u64);
    map_lines(
        &a.input,
        |no, line| {
            let raw: RawProduct =
                serde_json::from_str(line).with_context(|| format!("{}:{no}: bad product record", a.input.display()))?;
            Ok(build_profile(&raw).map_err(|r| (raw.id, no, r)))
        },
        |res| match res {
            Ok(profile) => {
                kept += 1;
                out.line(&serialize_profile(&profile))
            }
            Err((id, no, reason)) => {
                rejected += 1;
                rejects.line(&json!({"id": id, "line": no, "code": reason.code, "detail": reason.detail}).to_string())
            }
        },
    )?;
    out.finish()?;
    rejects.finish()?;
    log::info!("clean: kept {kept}, rejected {rejected}");
    record_run(parent_dir(&a.out), "clean", a, json!({"kept": kept, "rejected": rejected}))
}

fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for item in jsonl::Lines::open(path)? {
        let (no, line) = item?;
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{no}: bad record", path.display()))?);
    }
    Ok(out)
}

fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Out::create(path)?;
    for item in items {
        out.line(&serde_json::to_string(item)?)?;
    }
    out.finish()
}

pub fn annotate(a: &AnnotateArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) || !(0.0..=1.0).contains(&a.noise) {
        bail!("--threshold and --noise must lie in [0, 1]");
    }
    if a.cap == 0 {
        bail!("--cap must be positive");
    }
    let span_end: SpanEnd = a.span_end.span_end.into();
    let rules = RuleSet::new(read_json_lines::<ExtractionRule>(&a.rules)?)?;
    let classifier = Box::new(KeywordClassifier::new(read_json_lines::<CategoryKeywords>(&a.categories)?));
    let mut annotator = if a.noise > 0.0 {
        Annotator::with_noisy_ensemble(rules, classifier, seeded_hash(a.seed, &["ensemble"]), a.noise, a.noise)
    } else {
        Annotator::with_rule_ensemble(rules, classifier)
    };
    annotator.threshold = a.threshold;

    // Pass 1: annotate, write positives and discards, park negatives.
    let parked = a.out_neg.with_file_name(format!(
        "{}.unsampled.tmp",
        a.out_neg.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    let mut pos = Out::create(&a.out_pos)?;
    let mut discard = Out::create(&a.out_discard)?;
    let mut neg = Out::create(&parked)?;
    let mut sampler = NegativeSampler::new(a.cap, a.seed);
    let mut summary: BTreeMap<&str, u64> = BTreeMap::new();
    map_lines(
        &a.profiles,
        |no, line| {
            let profile = deserialize_profile(line, no).with_context(|| a.profiles.display().to_string())?;
            Ok(annotator.annotate(&profile)?)
        },
        |ann| {
            *summary.entry("profiles").or_default() += 1;
            if ann.category.is_none() {
                *summary.entry("gated_out").or_default() += 1;
            }
            for ex in &ann.positives {
                pos.line(&serialize_example(ex, span_end))?;
            }
            for ex in &ann.negatives {
                sampler.observe(ex);
                neg.line(&serialize_example(ex, span_end))?;
            }
            for d in &ann.discards {
                discard.line(
                    &json!({"id": d.id, "category": d.category, "attribute": d.attribute, "detail": d.detail}).to_string(),
                )?;
            }
            *summary.entry("positives").or_default() += ann.positives.len() as u64;
            *summary.entry("negatives_before_cap").or_default() += ann.negatives.len() as u64;
            *summary.entry("discards").or_default() += ann.discards.len() as u64;
            Ok(())
        },
    )?;
    pos.finish()?;
    discard.finish()?;
    neg.finish()?;

    // Pass 2: keep the capped negatives in their original order.
    let plan = sampler.finish();
    let mut out_neg = Out::create(&a.out_neg)?;
    let mut kept = 0u64;
    for item in jsonl::Lines::open(&parked)? {
        let (no, line) = item?;
        let ex = mave_core::model::deserialize_example(&line, no, span_end)?;
        if plan.retains(&ex) {
            kept += 1;
            out_neg.line(&line)?;
        }
    }
    out_neg.finish()?;
    std::fs::remove_file(&parked).with_context(|| format!("removing {}", parked.display()))?;
    summary.insert("negatives", kept);
    log::info!("annotate: {summary:?}");
    record_run(parent_dir(&a.out_pos), "annotate", a, summary)
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let span_end: SpanEnd = a.span_end.span_end.into();
    let examples = read_all(&a.input, span_end)?;
    let total = examples.len();
    let write = |name: &str, part: &[AttributeExample]| {
        jsonl::write_examples(&a.out_dir.join(name), part, span_end).map_err(anyhow::Error::from)
    };
    let summary = if a.holdout.is_empty() {
        let spec = SplitSpec::parse_ratios(&a.ratios, a.seed)?;
        let parts = evalkit::split_random(examples, &spec);
        write("train.jsonl", &parts.train)?;
        write("eval.jsonl", &parts.eval)?;
        write("test.jsonl", &parts.test)?;
        json!({"examples": total, "train": parts.train.len(), "eval": parts.eval.len(), "test": parts.test.len()})
    } else {
        let parts = evalkit::split_zero_shot(examples, &a.holdout)?;
        write("train.jsonl", &parts.train)?;
        write("eval.jsonl", &parts.eval)?;
        json!({"examples": total, "train": parts.train.len(), "eval": parts.eval.len(), "missing_holdout": parts.missing})
    };
    record_run(&a.out_dir, "split", a, summary)
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    let span_end: SpanEnd = a.span_end.span_end.into();
    let mut collector = StatsCollector::default();
    for path in &a.input {
        map_lines(
            path,
            |no, line| Ok(deserialize_line(line, no, span_end).with_context(|| path.display().to_string())?),
            |exs| {
                exs.iter().for_each(|ex| collector.add(ex));
                Ok(())
            },
        )?;
    }
    let buckets = LengthBuckets::new(evalkit::DEFAULT_LENGTH_EDGES.to_vec())?;
    let report = collector.finish(&buckets);
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        write_text(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
        record_run(parent_dir(out), "stats", a, json!({}))?;
    }
    Ok(())
}

fn load_run_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut text = match &a.config {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => "preset = desk\n".to_string(),
    };
    for o in &a.overrides {
        if !o.contains('=') {
            bail!("--set expects KEY=VALUE, got {o:?}");
        }
        text.push('\n');
        text.push_str(o);
    }
    Ok(RunConfig::parse(&text)?)
}

/// Keeps the `cap` examples with the lowest seeded hash, in input order.
fn cap_examples(examples: Vec<AttributeExample>, cap: usize, seed: u64) -> Vec<AttributeExample> {
    if examples.len() <= cap {
        return examples;
    }
    let mut ranked: Vec<(u64, usize)> = examples
        .iter()
        .enumerate()
        .map(|(i, ex)| (seeded_hash(seed, &["cap", &evalkit::example_key(ex)]), i))
        .collect();
    ranked.sort_unstable();
    let mut keep = vec![false; examples.len()];
    ranked.iter().take(cap).for_each(|&(_, i)| keep[i] = true);
    examples.into_iter().zip(keep).filter_map(|(ex, k)| k.then_some(ex)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = load_run_config(a)?;
    let vocab = Arc::new(Vocab::load(&a.vocab).with_context(|| format!("loading {}", a.vocab.display()))?);
    if cfg.model.vocab_size != vocab.len() {
        log::info!("vocab_size set to {} from {}", vocab.len(), a.vocab.display());
        cfg.model.vocab_size = vocab.len();
    }
    cfg.validate()?;
    let span_end: SpanEnd = a.span_end.span_end.into();
    let mut examples = read_all(&a.train, span_end)?;
    if let Some(cap) = a.max_examples {
        examples = cap_examples(examples, cap, a.seed);
    }
    if examples.is_empty() {
        bail!("no training examples");
    }
    let tokenizer = WordpieceTokenizer::new(vocab.clone());
    let encoded: Vec<_> = examples.par_iter().map(|ex| encode_example(ex, &tokenizer, &cfg.model)).collect();
    let dropped: usize = encoded.iter().map(|e| e.dropped_sources).sum();
    let cut: usize = encoded.iter().map(|e| e.truncated_tokens).sum();
    if dropped + cut > 0 {
        log::warn!("truncation dropped {dropped} sources and {cut} tokens");
    }

    let mut state = TrainState::new(init_params(&cfg.model, seeded_hash(a.seed, &["init"])));
    let schedule = Schedule::from_config(&cfg.train);
    let mut log_lines = String::from("step\tlr\tloss\n");
    fit(&mut state, &encoded, &cfg.model, &cfg.train, seeded_hash(a.seed, &["order"]), |step, loss| {
        log_lines.push_str(&format!("{step}\t{:e}\t{loss:.6}\n", schedule.lr(step - 1)));
        if step % 100 == 0 || step == cfg.train.total_steps {
            log::info!("step {step}: loss {loss:.4}");
        }
    })?;

    let model = QaModel::new(cfg.model.clone(), state.params, vocab);
    model.save(&a.out)?;
    write_text(&a.out.join("loss.tsv"), &log_lines)?;
    write_text(&a.out.join("config.txt"), &cfg.render())?;
    let h = &state.loss_history;
    let window = (h.len() / 10).max(1);
    let summary = json!({
        "examples": encoded.len(),
        "parameters": model.params.len(),
        "steps": state.step,
        "initial_loss": mean(&h[..window.min(h.len())]),
        "final_loss": mean(&h[h.len().saturating_sub(window)..]),
    });
    record_run(&a.out, "train", a, summary)
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        bail!("--threshold must lie in (0, 1)");
    }
    let span_end: SpanEnd = a.span_end.span_end.into();
    let model = QaModel::load(&a.checkpoint)?;
    let mut out = Out::create(&a.out)?;
    let (mut n, mut with_value) = (0u64, 0u64);
    map_lines(
        &a.input,
        |no, line| {
            let exs = deserialize_line(line, no, span_end).with_context(|| a.input.display().to_string())?;
            exs.into_iter()
                .map(|ex| {
                    let spans = model.predict(&ex, a.threshold)?;
                    let normalized_value = spans.first().map(|s| normalize_value(&s.value));
                    Ok(AttributeExample { evidences: spans, normalized_value, ..ex })
                })
                .collect::<Result<Vec<_>>>()
        },
        |preds| {
            for p in preds {
                n += 1;
                with_value += u64::from(p.is_positive());
                out.line(&serialize_example(&p, span_end))?;
            }
            Ok(())
        },
    )?;
    out.finish()?;
    record_run(parent_dir(&a.out), "predict", a, json!({"examples": n, "predicted_values": with_value}))
}

type Key = (String, String, String);

fn key_of(ex: &AttributeExample) -> Key {
    (ex.id().to_string(), ex.category.clone(), ex.attribute.clone())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    for g in &a.by {
        if !["attribute", "category", "bucket"].contains(&g.as_str()) {
            bail!("--by accepts attribute, category, bucket; got {g:?}");
        }
    }
    let span_end: SpanEnd = a.span_end.span_end.into();
    let buckets = LengthBuckets::new(a.edges.clone())?;
    let gold = jsonl::read_examples(&a.gold, span_end)?;
    let mut preds: HashMap<Key, AttributeExample> = HashMap::new();
    for p in jsonl::read_examples(&a.pred, span_end)? {
        let key = key_of(&p);
        if preds.insert(key.clone(), p).is_some() {
            bail!("{}: duplicate prediction for {key:?}", a.pred.display());
        }
    }
    let mut ev = evalkit::Evaluator::new(buckets);
    let mut missing = 0u64;
    for g in &gold {
        let spans = match preds.get(&key_of(g)) {
            Some(p) => p.evidences.as_slice(),
            None => {
                missing += 1;
                &[]
            }
        };
        ev.add(g, spans);
    }
    if missing > 0 {
        log::warn!("{missing} gold examples have no prediction and count as predicting nothing");
    }
    let report = ev.report();
    let groups: Vec<&str> = a.by.iter().map(String::as_str).collect();
    print!("{}", report.to_table(&groups));
    if let Some(dir) = &a.out_dir {
        write_text(&dir.join("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
        write_text(&dir.join("report.csv"), &report.to_csv())?;
        record_run(dir, "eval", a, json!({"gold": gold.len(), "missing_predictions": missing}))?;
    }
    Ok(())
}

pub fn few_shot(a: &FewShotArgs) -> Result<()> {
    let span_end: SpanEnd = a.span_end.span_end.into();
    let pool = jsonl::read_examples(&a.pool, span_end)?;
    let shots = evalkit::sample_few_shot(&pool, a.k, a.seed)?;
    jsonl::write_examples(&a.out, &shots, span_end)?;
    let d = Dataset::from_examples(shots.iter().cloned());
    record_run(
        parent_dir(&a.out),
        "few-shot",
        a,
        json!({"pool": pool.len(), "selected": shots.len(), "positives": d.positives.len()}),
    )
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.presence) || !(0.0..=1.0).contains(&a.ambiguous) {
        bail!("--presence and --ambiguous must lie in [0, 1]");
    }
    let cfg = SynthConfig { products: a.products, seed: a.seed, presence: a.presence, ambiguous: a.ambiguous };
    let corpus = synth::generate(&cfg);
    let raws: Vec<&RawProduct> = corpus.products.iter().map(|p| &p.raw).collect();
    write_json_lines(&a.out_dir.join("raw.jsonl"), &raws)?;
    let planted: Vec<_> = corpus
        .products
        .iter()
        .map(|p| json!({"id": p.raw.id, "category": p.category, "planted": p.planted}))
        .collect();
    write_json_lines(&a.out_dir.join("planted.jsonl"), &planted)?;
    write_json_lines(&a.out_dir.join("rules.jsonl"), &corpus.rules)?;
    write_json_lines(&a.out_dir.join("categories.jsonl"), &corpus.categories)?;
    write_text(&a.out_dir.join("vocab.txt"), &corpus.vocab.iter().map(|v| format!("{v}\n")).collect::<String>())?;
    record_run(&a.out_dir, "synth", a, json!({"products": corpus.products.len(), "vocab": corpus.vocab.len()}))
}
