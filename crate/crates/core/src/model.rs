//! Canonical data types and the JSONL wire format.
//!
//! One JSONL line holds one example:
//!
//! ```json
//! {"id":"B0001","category":"Toys","paragraphs":[{"text":"...","source":"title"}],
//!  "attributes":[{"key":"Toy Maker","normalized_value":"Beanie Baby",
//!                 "evidences":[{"value":"Beanie Baby","pid":0,"begin":3,"end":14}]}]}
//! ```
//!
//! Spans are half-open character intervals internally. Files may carry inclusive
//! ends instead; [`SpanEnd`] selects the convention at the file boundary.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{char_len, char_slice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Title,
    Description,
    Feature,
    Price,
    Brand,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Title => "title",
            SourceKind::Description => "description",
            SourceKind::Feature => "feature",
            SourceKind::Price => "price",
            SourceKind::Brand => "brand",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Source {
    pub pid: usize,
    pub kind: SourceKind,
    pub text: String,
}

/// Ordered multi-source product record. Repeated kinds (two descriptions, three
/// features) are separate sources distinguished by `pid`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductProfile {
    pub id: String,
    pub sources: Vec<Source>,
}

impl ProductProfile {
    /// Builds a profile assigning dense pids in the given order. No validation.
    pub fn new(id: impl Into<String>, sources: impl IntoIterator<Item = (SourceKind, String)>) -> Self {
        let sources = sources
            .into_iter()
            .enumerate()
            .map(|(pid, (kind, text))| Source { pid, kind, text })
            .collect();
        ProductProfile { id: id.into(), sources }
    }

    pub fn source(&self, pid: usize) -> Option<&Source> {
        self.sources.get(pid)
    }

    /// Whitespace word count summed over all sources.
    pub fn word_count(&self) -> usize {
        self.sources.iter().map(|s| s.text.split_whitespace().count()).sum()
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.id.is_empty() {
            return Err(ValidationError::new("id", "empty product id"));
        }
        if !self.sources.iter().any(|s| s.kind == SourceKind::Title) {
            return Err(ValidationError::new("paragraphs", "no title source"));
        }
        for (i, s) in self.sources.iter().enumerate() {
            let field = format!("paragraphs[{i}]");
            if s.pid != i {
                return Err(ValidationError::new(field, format!("pid {} at position {i}", s.pid)));
            }
            if s.text.is_empty() {
                return Err(ValidationError::new(field, "empty text"));
            }
            if s.text.chars().any(char::is_control) {
                return Err(ValidationError::new(field, "control character in text"));
            }
            if s.text.contains("  ") {
                return Err(ValidationError::new(field, "run of multiple spaces in text"));
            }
        }
        Ok(())
    }
}

/// Half-open character interval `[begin, end)` within source `pid`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Span {
    pub pid: usize,
    pub begin: usize,
    pub end: usize,
    pub value: String,
}

impl Span {
    /// Builds a span whose `value` is read from the profile. `None` when out of bounds or empty.
    pub fn from_profile(profile: &ProductProfile, pid: usize, begin: usize, end: usize) -> Option<Span> {
        if begin >= end {
            return None;
        }
        let text = &profile.source(pid)?.text;
        let value = char_slice(text, begin, end)?.to_string();
        Some(Span { pid, begin, end, value })
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.pid == other.pid && self.begin < other.end && other.begin < self.end
    }

    pub fn validate(&self, profile: &ProductProfile) -> Result<(), ValidationError> {
        let source = profile
            .source(self.pid)
            .ok_or_else(|| ValidationError::new("evidences.pid", format!("no source with pid {}", self.pid)))?;
        if self.begin >= self.end {
            return Err(ValidationError::new(
                "evidences.begin",
                format!("empty or inverted span [{}, {})", self.begin, self.end),
            ));
        }
        let len = char_len(&source.text);
        if self.end > len {
            return Err(ValidationError::new(
                "evidences.end",
                format!("end {} beyond source length {len}", self.end),
            ));
        }
        let slice = char_slice(&source.text, self.begin, self.end).unwrap_or_default();
        if slice != self.value {
            return Err(ValidationError::new(
                "evidences.value",
                format!("{:?} does not match source text {:?}", self.value, slice),
            ));
        }
        Ok(())
    }
}

/// A (product, category, attribute) tuple with its evidence spans. No evidences means
/// a verified negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeExample {
    pub profile: ProductProfile,
    pub category: String,
    pub attribute: String,
    pub normalized_value: Option<String>,
    pub evidences: Vec<Span>,
}

impl AttributeExample {
    pub fn is_positive(&self) -> bool {
        !self.evidences.is_empty()
    }

    pub fn id(&self) -> &str {
        &self.profile.id
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.profile.validate()?;
        if self.category.is_empty() {
            return Err(ValidationError::new("category", "empty category"));
        }
        if self.attribute.is_empty() {
            return Err(ValidationError::new("attributes.key", "empty attribute"));
        }
        match (&self.normalized_value, self.evidences.is_empty()) {
            (Some(_), true) => {
                return Err(ValidationError::new(
                    "attributes.normalized_value",
                    "normalized value on an example without evidences",
                ))
            }
            (None, false) => {
                return Err(ValidationError::new(
                    "attributes.normalized_value",
                    "evidences present but normalized value missing",
                ))
            }
            (Some(v), false) if v.is_empty() => {
                return Err(ValidationError::new("attributes.normalized_value", "empty normalized value"))
            }
            _ => {}
        }
        for span in &self.evidences {
            span.validate(&self.profile)?;
        }
        for pair in self.evidences.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if (a.pid, a.begin) >= (b.pid, b.begin) {
                return Err(ValidationError::new("evidences", "evidences not sorted by (pid, begin)"));
            }
            if a.overlaps(b) {
                return Err(ValidationError::new("evidences", "overlapping evidences"));
            }
        }
        Ok(())
    }
}

/// Positive and negative example sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub positives: Vec<AttributeExample>,
    pub negatives: Vec<AttributeExample>,
}

impl Dataset {
    /// Splits a mixed list by evidence presence.
    pub fn from_examples(examples: impl IntoIterator<Item = AttributeExample>) -> Self {
        let (positives, negatives) = examples.into_iter().partition(AttributeExample::is_positive);
        Dataset { positives, negatives }
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &AttributeExample> {
        self.positives.iter().chain(self.negatives.iter())
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let pos: std::collections::HashSet<(&str, &str)> =
            self.positives.iter().map(|e| (e.id(), e.attribute.as_str())).collect();
        for n in &self.negatives {
            if pos.contains(&(n.id(), n.attribute.as_str())) {
                return Err(ValidationError::new(
                    "negatives",
                    format!("({}, {}) is both positive and negative", n.id(), n.attribute),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {field}: {reason}")]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ValidationError { field: field.into(), reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {error}")]
    Invalid { line: usize, error: ValidationError },
}

impl FormatError {
    pub fn line(&self) -> usize {
        match self {
            FormatError::Json { line, .. } | FormatError::Invalid { line, .. } => *line,
        }
    }
}

/// How span ends are written in files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum SpanEnd {
    #[default]
    Exclusive,
    Inclusive,
}

impl FromStr for SpanEnd {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exclusive" => Ok(SpanEnd::Exclusive),
            "inclusive" => Ok(SpanEnd::Inclusive),
            other => Err(format!("unknown span end convention {other:?} (expected inclusive|exclusive)")),
        }
    }
}

impl fmt::Display for SpanEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpanEnd::Exclusive => "exclusive",
            SpanEnd::Inclusive => "inclusive",
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WireParagraph {
    text: String,
    source: SourceKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireEvidence {
    value: String,
    pid: usize,
    begin: usize,
    end: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireAttribute {
    key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalized_value: Option<String>,
    evidences: Vec<WireEvidence>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireExample {
    id: String,
    category: String,
    paragraphs: Vec<WireParagraph>,
    attributes: Vec<WireAttribute>,
}

/// Profile-only record written by the cleaning stage and read by annotation.
#[derive(Debug, Serialize, Deserialize)]
struct WireProfile {
    id: String,
    paragraphs: Vec<WireParagraph>,
}

fn paragraphs_of(profile: &ProductProfile) -> Vec<WireParagraph> {
    profile
        .sources
        .iter()
        .map(|s| WireParagraph { text: s.text.clone(), source: s.kind })
        .collect()
}

fn profile_from_wire(id: String, paragraphs: Vec<WireParagraph>) -> ProductProfile {
    ProductProfile::new(id, paragraphs.into_iter().map(|p| (p.source, p.text)))
}

fn wire_attribute(ex: &AttributeExample, span_end: SpanEnd) -> WireAttribute {
    let shift = usize::from(span_end == SpanEnd::Inclusive);
    WireAttribute {
        key: ex.attribute.clone(),
        normalized_value: ex.normalized_value.clone(),
        evidences: ex
            .evidences
            .iter()
            .map(|s| WireEvidence { value: s.value.clone(), pid: s.pid, begin: s.begin, end: s.end - shift })
            .collect(),
    }
}

/// Serializes one example to a single JSON line (no trailing newline).
pub fn serialize_example(ex: &AttributeExample, span_end: SpanEnd) -> String {
    let wire = WireExample {
        id: ex.profile.id.clone(),
        category: ex.category.clone(),
        paragraphs: paragraphs_of(&ex.profile),
        attributes: vec![wire_attribute(ex, span_end)],
    };
    serde_json::to_string(&wire).expect("wire structs always serialize")
}

fn parse_wire(line: &str, line_no: usize) -> Result<WireExample, FormatError> {
    serde_json::from_str(line).map_err(|source| FormatError::Json { line: line_no, source })
}

fn example_from_wire(
    profile: &ProductProfile,
    category: &str,
    attr: WireAttribute,
    span_end: SpanEnd,
    line_no: usize,
) -> Result<AttributeExample, FormatError> {
    let shift = usize::from(span_end == SpanEnd::Inclusive);
    let evidences = attr
        .evidences
        .into_iter()
        .map(|e| Span { pid: e.pid, begin: e.begin, end: e.end + shift, value: e.value })
        .collect();
    let ex = AttributeExample {
        profile: profile.clone(),
        category: category.to_string(),
        attribute: attr.key,
        normalized_value: attr.normalized_value,
        evidences,
    };
    ex.validate().map_err(|error| FormatError::Invalid { line: line_no, error })?;
    Ok(ex)
}

/// Parses one line holding exactly one attribute.
pub fn deserialize_example(line: &str, line_no: usize, span_end: SpanEnd) -> Result<AttributeExample, FormatError> {
    let wire = parse_wire(line, line_no)?;
    if wire.attributes.len() != 1 {
        return Err(FormatError::Invalid {
            line: line_no,
            error: ValidationError::new(
                "attributes",
                format!("expected exactly one attribute, found {}", wire.attributes.len()),
            ),
        });
    }
    let profile = profile_from_wire(wire.id, wire.paragraphs);
    let attr = wire.attributes.into_iter().next().expect("length checked");
    example_from_wire(&profile, &wire.category, attr, span_end, line_no)
}

/// Parses a line that may list several attributes of the same product, one example each.
pub fn deserialize_line(line: &str, line_no: usize, span_end: SpanEnd) -> Result<Vec<AttributeExample>, FormatError> {
    let wire = parse_wire(line, line_no)?;
    let profile = profile_from_wire(wire.id, wire.paragraphs);
    wire.attributes
        .into_iter()
        .map(|attr| example_from_wire(&profile, &wire.category, attr, span_end, line_no))
        .collect()
}

pub fn serialize_profile(profile: &ProductProfile) -> String {
    let wire = WireProfile { id: profile.id.clone(), paragraphs: paragraphs_of(profile) };
    serde_json::to_string(&wire).expect("wire structs always serialize")
}

pub fn deserialize_profile(line: &str, line_no: usize) -> Result<ProductProfile, FormatError> {
    let wire: WireProfile = serde_json::from_str(line).map_err(|source| FormatError::Json { line: line_no, source })?;
    let profile = profile_from_wire(wire.id, wire.paragraphs);
    profile.validate().map_err(|error| FormatError::Invalid { line: line_no, error })?;
    Ok(profile)
}

/// A worked reference product (eight sources, four mentions of one value) shared by
/// tests across the workspace.
pub mod fixtures {
    use super::*;

    pub const BEANIE_TITLE: &str = "Ty Beanie Baby Ants the Anteater";

    /// The eight-source product used throughout the tests.
    pub fn beanie_profile() -> ProductProfile {
        ProductProfile::new(
            "B00000JTSD",
            [
                (SourceKind::Title, BEANIE_TITLE),
                (
                    SourceKind::Description,
                    "Ty Beanie Babies Ants the Anteater. Approximately 8\" long, 4\" tall. Birthday: November 7, 1997 Poem: Most anteaters love to eat bugs But this little fellow gives big hugs. He'd rather dine on apple pie Than eat an ant or harm a fly.",
                ),
                (
                    SourceKind::Description,
                    "This most unusual Beanie Baby is brimming with personality. Ants was born November 7, 1997. His poem reads: Most anteaters love to eat bugs But this little fellow gives big hugs He'd rather dine on apple pie Than eat an ant or harm a fly! This long-snouted guy, balancing on his long tail, is just adorable. His head and tail are gray; his middle is three stripes white, black, and white; and he has sweet black button eyes. His tiny gray felt ears really give this guy some charm. Surface wash only.",
                ),
                (SourceKind::Feature, "Ty beanie baby - Ants the anteater"),
                (SourceKind::Feature, "Birthday: November 7, 1997"),
                (SourceKind::Feature, "Approx 8\" long"),
                (SourceKind::Price, "$6.06"),
                (SourceKind::Brand, "TY"),
            ]
            .map(|(k, t)| (k, t.to_string())),
        )
    }

    pub fn beanie_example() -> AttributeExample {
        let profile = beanie_profile();
        let evidences = [(0, 3, 14), (1, 3, 16), (2, 18, 29), (3, 3, 14)]
            .into_iter()
            .map(|(pid, b, e)| Span::from_profile(&profile, pid, b, e).unwrap())
            .collect();
        AttributeExample {
            profile,
            category: "Stuffed Animals & Plush Toys".into(),
            attribute: "Toy Maker".into(),
            normalized_value: Some("Beanie Baby".into()),
            evidences,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn beanie_title_span_serializes_with_both_conventions() {
        let ex = beanie_example();
        let line = serialize_example(&ex, SpanEnd::Exclusive);
        assert!(line.contains(r#"{"value":"Beanie Baby","pid":0,"begin":3,"end":14}"#), "{line}");
        let line = serialize_example(&ex, SpanEnd::Inclusive);
        assert!(line.contains(r#"{"value":"Beanie Baby","pid":0,"begin":3,"end":13}"#), "{line}");
        assert!(line.contains(r#"{"value":"Beanie Babies","pid":1,"begin":3,"end":15}"#));
        assert!(line.contains(r#"{"value":"Beanie Baby","pid":2,"begin":18,"end":28}"#));
        assert!(line.contains(r#"{"value":"beanie baby","pid":3,"begin":3,"end":13}"#));
    }

    #[test]
    fn beanie_round_trips() {
        let ex = beanie_example();
        for conv in [SpanEnd::Exclusive, SpanEnd::Inclusive] {
            let back = deserialize_example(&serialize_example(&ex, conv), 1, conv).unwrap();
            assert_eq!(back, ex);
        }
    }

    #[test]
    fn negative_serializes_with_empty_evidences() {
        let ex = AttributeExample {
            normalized_value: None,
            evidences: vec![],
            ..beanie_example()
        };
        let line = serialize_example(&ex, SpanEnd::Exclusive);
        assert!(line.ends_with(r#""attributes":[{"key":"Toy Maker","evidences":[]}]}"#), "{line}");
        assert_eq!(deserialize_example(&line, 1, SpanEnd::Exclusive).unwrap(), ex);
    }

    #[test]
    fn empty_span_rejected() {
        let line = serialize_example(&beanie_example(), SpanEnd::Exclusive)
            .replace(r#""begin":3,"end":14"#, r#""begin":3,"end":3"#);
        let err = deserialize_example(&line, 4, SpanEnd::Exclusive).unwrap_err();
        match err {
            FormatError::Invalid { line, error } => {
                assert_eq!(line, 4);
                assert_eq!(error.field, "evidences.begin");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn mutated_value_rejected() {
        let line = serialize_example(&beanie_example(), SpanEnd::Exclusive)
            .replacen(r#""value":"Beanie Baby""#, r#""value":"Beanie Bab7""#, 1);
        let err = deserialize_example(&line, 1, SpanEnd::Exclusive).unwrap_err();
        assert!(matches!(err, FormatError::Invalid { ref error, .. } if error.field == "evidences.value"), "{err}");
    }

    #[test]
    fn out_of_bounds_span_rejected() {
        let line = serialize_example(&beanie_example(), SpanEnd::Exclusive)
            .replace(r#""pid":0,"begin":3,"end":14"#, r#""pid":0,"begin":3,"end":99"#);
        let err = deserialize_example(&line, 1, SpanEnd::Exclusive).unwrap_err();
        assert!(matches!(err, FormatError::Invalid { ref error, .. } if error.field == "evidences.end"), "{err}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = deserialize_example("{not json", 17, SpanEnd::Exclusive).unwrap_err();
        assert!(matches!(err, FormatError::Json { line: 17, .. }));
        assert!(err.to_string().starts_with("line 17"));
    }

    #[test]
    fn missing_title_rejected() {
        let mut ex = beanie_example();
        ex.profile.sources[0].kind = SourceKind::Feature;
        assert_eq!(ex.validate().unwrap_err().field, "paragraphs");
    }

    #[test]
    fn overlapping_evidences_rejected() {
        let mut ex = beanie_example();
        let extra = Span::from_profile(&ex.profile, 0, 10, 18).unwrap();
        ex.evidences.insert(1, extra);
        assert_eq!(ex.validate().unwrap_err().field, "evidences");
    }

    #[test]
    fn multi_attribute_line_expands() {
        let ex = beanie_example();
        let mut wire: serde_json::Value = serde_json::from_str(&serialize_example(&ex, SpanEnd::Exclusive)).unwrap();
        let attrs = wire["attributes"].as_array_mut().unwrap();
        attrs.push(serde_json::json!({"key": "Color", "evidences": []}));
        let line = wire.to_string();
        assert!(deserialize_example(&line, 1, SpanEnd::Exclusive).is_err());
        let all = deserialize_line(&line, 1, SpanEnd::Exclusive).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[1].attribute, "Color");
        assert!(!all[1].is_positive());
    }

    #[test]
    fn dataset_rejects_conflicting_labels() {
        let pos = beanie_example();
        let neg = AttributeExample { normalized_value: None, evidences: vec![], ..pos.clone() };
        let ds = Dataset { positives: vec![pos], negatives: vec![neg] };
        assert!(ds.validate().is_err());
    }
}
