use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use mave_core::jsonl::{self, Lines};
use mave_core::{AttributeExample, SpanEnd};
use rayon::prelude::*;
use serde::Serialize;

/// Lines handed to the worker pool at once.
pub const CHUNK: usize = 2048;

/// Exit code for an error: 2 when any cause is an I/O failure, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) {
        2
    } else {
        1
    }
}

/// Maps every non-empty line of `path` on the worker pool and feeds the results to
/// `sink` in input order.
pub fn map_lines<T, F, S>(path: &Path, f: F, mut sink: S) -> Result<()>
where
    T: Send,
    F: Fn(usize, &str) -> Result<T> + Sync,
    S: FnMut(T) -> Result<()>,
{
    let mut lines = Lines::open(path)?;
    loop {
        let chunk: Vec<(usize, String)> = lines.by_ref().take(CHUNK).collect::<Result<_, _>>()?;
        if chunk.is_empty() {
            return Ok(());
        }
        let mapped: Vec<Result<T>> = chunk.par_iter().map(|(no, line)| f(*no, line)).collect();
        for item in mapped {
            sink(item?)?;
        }
    }
}

/// Line writer that names its file in errors.
pub struct Out {
    inner: Box<dyn Write>,
    path: String,
}

impl Out {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Out { inner: jsonl::create_writer(path)?, path: path.display().to_string() })
    }

    pub fn line(&mut self, s: &str) -> Result<()> {
        self.inner
            .write_all(s.as_bytes())
            .and_then(|_| self.inner.write_all(b"\n"))
            .with_context(|| format!("writing {}", self.path))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().with_context(|| format!("writing {}", self.path))
    }
}

pub fn read_all(paths: &[impl AsRef<Path>], span_end: SpanEnd) -> Result<Vec<AttributeExample>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(jsonl::read_examples(p.as_ref(), span_end)?);
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct RunRecord<'a, A: Serialize, S: Serialize> {
    subcommand: &'a str,
    version: &'a str,
    args: &'a A,
    summary: S,
}

/// Writes `<dir>/<subcommand>.run.json` with the resolved arguments and a summary.
pub fn record_run<A: Serialize, S: Serialize>(dir: &Path, subcommand: &str, args: &A, summary: S) -> Result<()> {
    let record = RunRecord { subcommand, version: env!("CARGO_PKG_VERSION"), args, summary };
    let json = serde_json::to_string_pretty(&record).context("serializing run record")?;
    write_text(&dir.join(format!("{subcommand}.run.json")), &(json + "\n"))
}

/// Directory holding `path`, `.` for bare file names.
pub fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}
