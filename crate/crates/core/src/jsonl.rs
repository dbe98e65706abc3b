//! Line-oriented file IO. Paths ending in `.gz` are transparently (de)compressed.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

use crate::model::{self, AttributeExample, FormatError, ProductProfile, SpanEnd};

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> JsonlError + '_ {
    move |source| JsonlError::Io { path: path.display().to_string(), source }
}

pub fn open_reader(path: &Path) -> Result<Box<dyn BufRead>, JsonlError> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(if is_gz(path) {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    })
}

pub fn create_writer(path: &Path) -> Result<Box<dyn Write>, JsonlError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    Ok(if is_gz(path) {
        Box::new(GzEncoder::new(BufWriter::new(file), Compression::default()))
    } else {
        Box::new(BufWriter::new(file))
    })
}

/// Streams non-empty lines with their 1-based line numbers.
pub struct Lines {
    inner: Box<dyn BufRead>,
    path: String,
    line_no: usize,
}

impl Lines {
    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        Ok(Lines { inner: open_reader(path)?, path: path.display().to_string(), line_no: 0 })
    }

    pub fn path(&self) -> &str {
        &self.path
    }
}

impl Iterator for Lines {
    type Item = Result<(usize, String), JsonlError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let mut buf = Vec::new();
            self.line_no += 1;
            match self.inner.read_until(b'\n', &mut buf) {
                Ok(0) => return None,
                Ok(_) => {
                    // Invalid UTF-8 becomes U+FFFD, which sanitation later removes.
                    let line = String::from_utf8_lossy(&buf);
                    let line = line.trim_end_matches(['\n', '\r']);
                    if line.trim().is_empty() {
                        continue;
                    }
                    return Some(Ok((self.line_no, line.to_string())));
                }
                Err(source) => return Some(Err(JsonlError::Io { path: self.path.clone(), source })),
            }
        }
    }
}

/// Reads every example of a file; multi-attribute lines are expanded.
pub fn read_examples(path: &Path, span_end: SpanEnd) -> Result<Vec<AttributeExample>, JsonlError> {
    let mut out = Vec::new();
    let lines = Lines::open(path)?;
    let p = lines.path().to_string();
    for item in lines {
        let (no, line) = item?;
        let exs = model::deserialize_line(&line, no, span_end)
            .map_err(|source| JsonlError::Format { path: p.clone(), source })?;
        out.extend(exs);
    }
    Ok(out)
}

pub fn read_profiles(path: &Path) -> Result<Vec<ProductProfile>, JsonlError> {
    let lines = Lines::open(path)?;
    let p = lines.path().to_string();
    lines
        .map(|item| {
            let (no, line) = item?;
            model::deserialize_profile(&line, no).map_err(|source| JsonlError::Format { path: p.clone(), source })
        })
        .collect()
}

pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<(), JsonlError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut w = create_writer(path)?;
    for line in lines {
        w.write_all(line.as_ref().as_bytes()).map_err(io_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_examples<'a>(
    path: &Path,
    examples: impl IntoIterator<Item = &'a AttributeExample>,
    span_end: SpanEnd,
) -> Result<(), JsonlError> {
    write_lines(path, examples.into_iter().map(|ex| model::serialize_example(ex, span_end)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::beanie_example;

    #[test]
    fn gz_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ex = beanie_example();
        for name in ["a.jsonl", "a.jsonl.gz"] {
            let path = dir.path().join(name);
            write_examples(&path, [&ex, &ex], SpanEnd::Exclusive).unwrap();
            let back = read_examples(&path, SpanEnd::Exclusive).unwrap();
            assert_eq!(back, vec![ex.clone(), ex.clone()]);
        }
        let raw = std::fs::read(dir.path().join("a.jsonl.gz")).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
    }

    #[test]
    fn format_error_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = model::serialize_example(&beanie_example(), SpanEnd::Exclusive);
        std::fs::write(&path, format!("{good}\n\n{{oops\n")).unwrap();
        let err = read_examples(&path, SpanEnd::Exclusive).unwrap_err();
        match err {
            JsonlError::Format { source, .. } => assert_eq!(source.line(), 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_examples(Path::new("/nonexistent/x.jsonl"), SpanEnd::Exclusive).unwrap_err();
        assert!(matches!(err, JsonlError::Io { .. }));
    }
}
