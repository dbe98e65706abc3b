use std::path::Path;
use std::process::{Command, Output};

fn mave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mave"))
        .args(args)
        .current_dir(dir)
        .env("MAVE_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mave(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/../core/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn corpus(dir: &Path) {
    ok(dir, &["synth", "--products", "60", "--seed", "3", "--out-dir", "corpus"]);
    ok(dir, &["clean", "--in", "corpus/raw.jsonl", "--out", "profiles.jsonl", "--rejects", "rejects.jsonl"]);
    ok(
        dir,
        &[
            "annotate", "--profiles", "profiles.jsonl", "--rules", "corpus/rules.jsonl", "--categories",
            "corpus/categories.jsonl", "--seed", "3", "--out-pos", "pos.jsonl", "--out-neg", "neg.jsonl",
            "--out-discard", "discard.jsonl",
        ],
    );
}

#[test]
fn unknown_flag_prints_usage_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = mave(dir.path(), &["stats", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = mave(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_input_exits_2_and_bad_values_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = mave(dir.path(), &["stats", "--in", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("x.jsonl"), "{not json\n").unwrap();
    assert_eq!(mave(dir.path(), &["stats", "--in", "x.jsonl"]).status.code(), Some(1));
    let stats = fixture("stats_five.jsonl");
    let out = mave(dir.path(), &["split", "--in", &stats, "--out-dir", "s", "--ratios", "8:0:x"]);
    assert_eq!(out.status.code(), Some(1));
    let out = mave(dir.path(), &["few-shot", "--pool", &stats, "--k", "4", "--out", "shots.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stats_prints_the_counts_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["stats", "--in", &fixture("stats_five.jsonl"), "--out", "stats.json"]);
    let row = |label: &str| -> Vec<String> {
        let line = text.lines().find(|l| l.starts_with(label)).unwrap_or_else(|| panic!("no row {label}"));
        line[label.len()..].split_whitespace().map(str::to_string).collect()
    };
    assert!(text.starts_with("Counts"));
    assert_eq!(row("# products "), ["4", "3"]);
    assert_eq!(row("# product-attribute pairs"), ["13", "6"]);
    assert_eq!(row("# unique category-attribute pairs"), ["10", "5"]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("stats.json")).unwrap()).unwrap();
    assert_eq!(json["positives"]["products"], 4);
    assert!(dir.path().join("stats.run.json").exists());
}

#[test]
fn split_is_reproducible_and_records_the_run() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    for out in ["a", "b"] {
        ok(dir.path(), &["split", "--in", "pos.jsonl,neg.jsonl", "--ratios", "8:1:1", "--seed", "7", "--out-dir", out]);
    }
    for f in ["train.jsonl", "eval.jsonl", "test.jsonl"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/split.run.json")).unwrap()).unwrap();
    assert_eq!(run["args"]["seed"], 7);
    let n = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap().lines().count();
    assert_eq!(n("a/train.jsonl") + n("a/eval.jsonl") + n("a/test.jsonl"), n("pos.jsonl") + n("neg.jsonl"));

    ok(dir.path(), &["split", "--in", "pos.jsonl,neg.jsonl", "--holdout", "Color", "--out-dir", "z"]);
    let eval = std::fs::read_to_string(dir.path().join("z/eval.jsonl")).unwrap();
    assert!(eval.lines().all(|l| l.contains("\"key\":\"Color\"")));
    let train = std::fs::read_to_string(dir.path().join("z/train.jsonl")).unwrap();
    assert!(!train.contains("\"key\":\"Color\""));
}

#[test]
fn train_lowers_loss_and_eval_reads_predictions() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    std::fs::write(dir.path().join("toy.cfg"), "preset = desk\nd = 32\nd_source = 8\nd_ff = 128\ntotal_steps = 60\nwarmup_steps = 5\nbatch_size = 4\n").unwrap();
    ok(
        dir.path(),
        &[
            "train", "--config", "toy.cfg", "--train", "pos.jsonl,neg.jsonl", "--vocab", "corpus/vocab.txt", "--seed",
            "1", "--out", "ckpt",
        ],
    );
    for f in ["manifest.json", "params.bin", "vocab.txt", "loss.tsv", "config.txt", "train.run.json"] {
        assert!(dir.path().join("ckpt").join(f).exists(), "{f}");
    }
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ckpt/train.run.json")).unwrap()).unwrap();
    let (first, last) = (run["summary"]["initial_loss"].as_f64().unwrap(), run["summary"]["final_loss"].as_f64().unwrap());
    assert!(last < first, "{first} -> {last}");
    assert_eq!(std::fs::read_to_string(dir.path().join("ckpt/loss.tsv")).unwrap().lines().count(), 61);

    ok(dir.path(), &["predict", "--checkpoint", "ckpt", "--in", "pos.jsonl", "--out", "preds.jsonl"]);
    let table = ok(
        dir.path(),
        &["eval", "--gold", "pos.jsonl", "--pred", "preds.jsonl", "--by", "attribute,bucket", "--out-dir", "report"],
    );
    assert!(table.lines().next().unwrap().starts_with("group"));
    assert!(table.contains("attribute=Color"));
    assert!(table.contains("bucket=[0,128)"));
    let csv = std::fs::read_to_string(dir.path().join("report/report.csv")).unwrap();
    assert!(csv.starts_with("group,key,precision"));

    // Gold scored against itself is perfect.
    let table = ok(dir.path(), &["eval", "--gold", "pos.jsonl", "--pred", "pos.jsonl"]);
    let overall: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(&overall[..4], ["overall", "1.0000", "1.0000", "1.0000"]);
}
