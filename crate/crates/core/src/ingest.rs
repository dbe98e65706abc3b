//! Cleaning raw product records into [`ProductProfile`]s.
//!
//! Markup removal is a closed rule set:
//!
//! 1. `<!-- ... -->` comments are removed.
//! 2. `<script>` and `<style>` elements are removed together with their contents.
//! 3. Any other tag (`<` followed by a letter, `/`, `!` or `?`, up to the next `>`) is
//!    removed; block-level tags (`p`, `div`, `br`, `li`, `tr`, `td`, headings, ...)
//!    become a single space, inline tags vanish.
//! 4. A tag opener with no closing `>` loses its `<` only.
//! 5. Entities `&amp; &lt; &gt; &quot; &apos; &nbsp; &#NN; &#xHH;` are decoded
//!    (`&nbsp;` to a plain space); unknown entities are kept verbatim.
//! 6. Steps 1-4 run once more on the decoded text, which catches entity-escaped markup.
//! 7. Any run of literal `<` left directly in front of a letter, `/`, `!` or `?` is
//!    dropped, so the output never contains tag-like text.

use serde::{Deserialize, Serialize};

use crate::model::{ProductProfile, SourceKind};
use crate::tokenize::whitespace_tokenize;

pub const MIN_WORDS: usize = 20;

/// Raw record as found in product metadata dumps. Accepts the field names of the
/// public review-dataset metadata (`asin`, `description`, `feature`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawProduct {
    #[serde(alias = "asin")]
    pub id: String,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default, alias = "description", deserialize_with = "one_or_many")]
    pub descriptions: Vec<String>,
    #[serde(default, alias = "feature", deserialize_with = "one_or_many")]
    pub features: Vec<String>,
    #[serde(default)]
    pub price: Option<String>,
    #[serde(default)]
    pub brand: Option<String>,
}

fn one_or_many<'de, D>(de: D) -> Result<Vec<String>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
        Null(()),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
        OneOrMany::Null(()) => vec![],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionCode {
    NoTitle,
    TooFewWords,
    EmptyAfterCleaning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReason {
    pub code: RejectionCode,
    pub detail: String,
}

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "br", "caption", "dd", "div", "dl", "dt", "fieldset",
    "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr", "li",
    "main", "nav", "ol", "p", "pre", "section", "table", "tbody", "td", "tfoot", "th", "thead", "tr", "ul",
];

fn find_ci(haystack: &str, from: usize, needle: &str) -> Option<usize> {
    let hay = haystack.as_bytes();
    let nee = needle.as_bytes();
    if nee.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - nee.len()).find(|&i| hay[i..i + nee.len()].eq_ignore_ascii_case(nee))
}

fn strip_tags(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    let mut text_start = 0;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            i += 1;
            continue;
        }
        let next = bytes.get(i + 1).copied();
        let tag_like = matches!(next, Some(c) if c.is_ascii_alphabetic() || c == b'/' || c == b'!' || c == b'?');
        if !tag_like {
            i += 1;
            continue;
        }
        out.push_str(&s[text_start..i]);
        if s[i..].starts_with("<!--") {
            i = s[i + 4..].find("-->").map_or(bytes.len(), |p| i + 4 + p + 3);
            text_start = i;
            continue;
        }
        let Some(close) = s[i..].find('>').map(|p| i + p) else {
            // Unterminated opener: drop the '<' and keep the rest as text.
            i += 1;
            text_start = i;
            continue;
        };
        let closing = next == Some(b'/');
        let name_start = i + 1 + usize::from(closing);
        let name_end = s[name_start..close]
            .find(|c: char| !c.is_ascii_alphanumeric())
            .map_or(close, |p| name_start + p);
        let name = s[name_start..name_end].to_ascii_lowercase();
        i = close + 1;
        if !closing && (name == "script" || name == "style") {
            let end_tag = format!("</{name}");
            i = match find_ci(s, i, &end_tag) {
                Some(p) => s[p..].find('>').map_or(bytes.len(), |q| p + q + 1),
                None => bytes.len(),
            };
        } else if BLOCK_TAGS.contains(&name.as_str()) {
            out.push(' ');
        }
        text_start = i;
    }
    out.push_str(&s[text_start.min(s.len())..]);
    out
}

fn decode_entity(name: &str) -> Option<char> {
    let c = match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        _ => {
            let num = name.strip_prefix('#')?;
            let code = match num.strip_prefix(['x', 'X']) {
                Some(hex) => u32::from_str_radix(hex, 16).ok()?,
                None => num.parse().ok()?,
            };
            match char::from_u32(code)? {
                '\u{a0}' => ' ',
                c => c,
            }
        }
    };
    Some(c)
}

fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let after = &rest[amp + 1..];
        let decoded = after
            .find(';')
            .filter(|&semi| semi > 0 && semi <= 10)
            .and_then(|semi| decode_entity(&after[..semi]).map(|c| (c, semi)));
        match decoded {
            Some((c, semi)) => {
                out.push(c);
                rest = &after[semi + 1..];
            }
            None => {
                out.push('&');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn drop_tag_openers(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending = 0usize;
    for c in s.chars() {
        if c == '<' {
            pending += 1;
            continue;
        }
        if pending > 0 && !(c.is_ascii_alphabetic() || matches!(c, '/' | '!' | '?')) {
            out.extend(std::iter::repeat_n('<', pending));
        }
        pending = 0;
        out.push(c);
    }
    out.extend(std::iter::repeat_n('<', pending));
    out
}

/// Removes markup per the rule set in the module docs. Never fails.
pub fn strip_markup(raw: &str) -> String {
    drop_tag_openers(&strip_tags(&decode_entities(&strip_tags(raw))))
}

fn is_invalid_char(c: char) -> bool {
    let cp = c as u32;
    c.is_control()
        || c == '\u{FFFD}'
        || c == '\u{FEFF}'
        || matches!(cp, 0x200B..=0x200D | 0x2060)
        || (0xFDD0..=0xFDEF).contains(&cp)
        || cp & 0xFFFE == 0xFFFE
}

/// Drops control and invalid characters, collapses whitespace runs (newlines and
/// tabs included) to one space and trims.
pub fn sanitize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if c.is_whitespace() {
            pending_space = true;
            continue;
        }
        if is_invalid_char(c) {
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(c);
    }
    out
}

fn clean(raw: &str) -> String {
    sanitize_text(&strip_markup(raw))
}

/// Cleans every field and assembles the profile in source order title, descriptions,
/// features, price, brand. Empty fields are dropped.
pub fn build_profile(raw: &RawProduct) -> Result<ProductProfile, RejectionReason> {
    let title = raw.title.as_deref().map(clean).unwrap_or_default();
    let mut sources: Vec<(SourceKind, String)> = Vec::new();
    sources.push((SourceKind::Title, title));
    sources.extend(raw.descriptions.iter().map(|d| (SourceKind::Description, clean(d))));
    sources.extend(raw.features.iter().map(|f| (SourceKind::Feature, clean(f))));
    sources.extend(raw.price.iter().map(|p| (SourceKind::Price, clean(p))));
    sources.extend(raw.brand.iter().map(|b| (SourceKind::Brand, clean(b))));

    let had_content = raw.title.iter().chain(&raw.descriptions).chain(&raw.features).chain(&raw.price).chain(&raw.brand)
        .any(|s| !s.trim().is_empty());
    sources.retain(|(_, t)| !t.is_empty());

    if sources.is_empty() && had_content {
        return Err(RejectionReason {
            code: RejectionCode::EmptyAfterCleaning,
            detail: "every field is empty after cleaning".into(),
        });
    }
    if sources.first().is_none_or(|(k, _)| *k != SourceKind::Title) {
        return Err(RejectionReason { code: RejectionCode::NoTitle, detail: "missing or empty title".into() });
    }
    let words: usize = sources.iter().map(|(_, t)| whitespace_tokenize(t).len()).sum();
    if words < MIN_WORDS {
        return Err(RejectionReason {
            code: RejectionCode::TooFewWords,
            detail: format!("{words} words, minimum {MIN_WORDS}"),
        });
    }
    Ok(ProductProfile::new(raw.id.clone(), sources))
}
