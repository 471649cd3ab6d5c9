//! Pre-tokenized NER corpora: column (BIO) ingestion, JSONL persistence and
//! seeded subsampling.
//!
//! Every sentence is validated on construction, so downstream stages can rely
//! on sorted, non-overlapping, in-bounds spans.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CorpusError, Result};

/// A half-open token interval `[start, end)` carrying a type label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub type_label: String,
}

impl EntitySpan {
    /// Builds a span whose surface is read off `tokens`.
    pub fn from_tokens(tokens: &[String], start: usize, end: usize, type_label: &str) -> Self {
        EntitySpan {
            start,
            end,
            surface: tokens[start..end].join(" "),
            type_label: type_label.to_string(),
        }
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub id: String,
    pub domain: String,
    pub tokens: Vec<String>,
    pub entities: Vec<EntitySpan>,
}

impl AnnotatedSentence {
    /// Validates and normalizes a sentence. Entities are sorted by
    /// `(start, end)`; duplicates and overlaps are rejected.
    pub fn new(
        id: impl Into<String>,
        domain: impl Into<String>,
        tokens: Vec<String>,
        mut entities: Vec<EntitySpan>,
    ) -> Result<Self> {
        let id = id.into();
        entities.sort_by_key(|e| (e.start, e.end));
        let sentence = AnnotatedSentence {
            id,
            domain: domain.into(),
            tokens,
            entities,
        };
        sentence.validate()?;
        Ok(sentence)
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| CorpusError::InvalidSentence {
            id: self.id.clone(),
            reason,
        };
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(invalid(format!("token {i} is empty or contains whitespace")).into());
            }
        }
        let mut prev_end = 0usize;
        let mut prev: Option<(usize, usize)> = None;
        for span in &self.entities {
            if span.start >= span.end || span.end > self.tokens.len() {
                return Err(invalid(format!(
                    "span ({}, {}) out of bounds for {} tokens",
                    span.start,
                    span.end,
                    self.tokens.len()
                ))
                .into());
            }
            if span.type_label.is_empty() {
                return Err(invalid(format!("span ({}, {}) has an empty type", span.start, span.end)).into());
            }
            let expected = self.tokens[span.start..span.end].join(" ");
            if span.surface != expected {
                return Err(invalid(format!(
                    "span ({}, {}) surface {:?} does not match tokens {:?}",
                    span.start, span.end, span.surface, expected
                ))
                .into());
            }
            if let Some(p) = prev {
                if p > (span.start, span.end) {
                    return Err(invalid("entities are not sorted".into()).into());
                }
                if p == (span.start, span.end) {
                    return Err(invalid(format!("duplicate span ({}, {})", span.start, span.end)).into());
                }
                if span.start < prev_end {
                    return Err(invalid(format!("overlapping span ({}, {})", span.start, span.end)).into());
                }
            }
            prev = Some((span.start, span.end));
            prev_end = span.end;
        }
        Ok(())
    }

    /// BIO (IOB2) tags for this sentence.
    pub fn bio_tags(&self) -> Vec<String> {
        let mut tags = vec!["O".to_string(); self.tokens.len()];
        for span in &self.entities {
            tags[span.start] = format!("B-{}", span.type_label);
            for tag in &mut tags[span.start + 1..span.end] {
                *tag = format!("I-{}", span.type_label);
            }
        }
        tags
    }
}

/// Which column carries the tag in a column-format file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnFormat {
    /// `token tag`, exactly two columns.
    TwoCol,
    /// Token is the first column, tag the last (CoNLL03 style).
    LastCol,
    /// `tag token`, exactly two columns (MIT-Movie / MIT-Restaurant style).
    TagFirst,
    /// Two columns → `TwoCol`, three or more → `LastCol`.
    #[default]
    Auto,
}

impl std::str::FromStr for ColumnFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "two_col" | "two-col" => Ok(ColumnFormat::TwoCol),
            "last_col" | "last-col" => Ok(ColumnFormat::LastCol),
            "tag_first" | "tag-first" => Ok(ColumnFormat::TagFirst),
            "auto" => Ok(ColumnFormat::Auto),
            other => Err(format!("unknown column format {other:?}")),
        }
    }
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str) -> Option<Tag<'_>> {
    if tag == "O" {
        return Some(Tag::Outside);
    }
    let (prefix, label) = tag.split_at_checked(2)?;
    if label.is_empty() {
        return None;
    }
    match prefix {
        "B-" => Some(Tag::Begin(label)),
        "I-" => Some(Tag::Inside(label)),
        _ => None,
    }
}

struct SentenceBuilder {
    tokens: Vec<String>,
    entities: Vec<EntitySpan>,
    open: Option<(usize, String)>,
    first_line: usize,
}

impl SentenceBuilder {
    fn new(first_line: usize) -> Self {
        SentenceBuilder {
            tokens: Vec::new(),
            entities: Vec::new(),
            open: None,
            first_line,
        }
    }

    fn close(&mut self) {
        if let Some((start, label)) = self.open.take() {
            let end = self.tokens.len();
            self.entities
                .push(EntitySpan::from_tokens(&self.tokens, start, end, &label));
        }
    }

    fn push(&mut self, token: &str, tag: Tag<'_>) {
        let idx = self.tokens.len();
        match tag {
            Tag::Outside => self.close(),
            Tag::Begin(label) => {
                self.close();
                self.open = Some((idx, label.to_string()));
            }
            Tag::Inside(label) => {
                let continues = matches!(&self.open, Some((_, open)) if open == label);
                if !continues {
                    self.close();
                    self.open = Some((idx, label.to_string()));
                }
            }
        }
        self.tokens.push(token.to_string());
    }
}

/// Parses a column-format file into sentences with ids `"{split}:{ordinal}"`.
///
/// Accepts IOB1 input: an `I-X` that does not continue an open `X` span starts
/// a new one.
pub fn parse_column_file(
    bytes: &[u8],
    format: ColumnFormat,
    split: &str,
    domain: &str,
) -> Result<Vec<AnnotatedSentence>> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::Encoding {
        offset: e.valid_up_to(),
    })?;
    let mut sentences = Vec::new();
    let mut current: Option<SentenceBuilder> = None;

    let finish = |builder: Option<SentenceBuilder>, sentences: &mut Vec<AnnotatedSentence>| -> Result<()> {
        if let Some(mut b) = builder {
            b.close();
            if !b.tokens.is_empty() {
                let id = format!("{split}:{}", sentences.len());
                let sentence = AnnotatedSentence::new(id, domain, b.tokens, b.entities).map_err(|e| {
                    CorpusError::Parse {
                        line: b.first_line,
                        reason: e.to_string(),
                    }
                })?;
                sentences.push(sentence);
            }
        }
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            finish(current.take(), &mut sentences)?;
            continue;
        }
        if line.starts_with("-DOCSTART-") {
            finish(current.take(), &mut sentences)?;
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let (token_col, tag_col) = match (format, cols.len()) {
            (_, 0 | 1) => {
                return Err(CorpusError::Parse {
                    line: line_no,
                    reason: "expected at least a token and a tag column".into(),
                }
                .into())
            }
            (ColumnFormat::TwoCol, 2) => (0, 1),
            (ColumnFormat::TagFirst, 2) => (1, 0),
            (ColumnFormat::TwoCol | ColumnFormat::TagFirst, n) => {
                return Err(CorpusError::Parse {
                    line: line_no,
                    reason: format!("expected 2 columns, found {n}"),
                }
                .into())
            }
            (ColumnFormat::LastCol | ColumnFormat::Auto, n) => (0, n - 1),
        };
        let tag = parse_tag(cols[tag_col]).ok_or_else(|| CorpusError::Parse {
            line: line_no,
            reason: format!("malformed tag {:?}", cols[tag_col]),
        })?;
        current
            .get_or_insert_with(|| SentenceBuilder::new(line_no))
            .push(cols[token_col], tag);
    }
    finish(current.take(), &mut sentences)?;
    Ok(sentences)
}

/// Renders sentences back to two-column BIO text.
pub fn write_column_file(sentences: &[AnnotatedSentence]) -> String {
    let mut out = String::new();
    for (n, s) in sentences.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        for (tok, tag) in s.tokens.iter().zip(s.bio_tags()) {
            out.push_str(tok);
            out.push(' ');
            out.push_str(&tag);
            out.push('\n');
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct JsonlEntity {
    start: usize,
    end: usize,
    #[serde(rename = "type")]
    type_label: String,
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    id: String,
    domain: String,
    tokens: Vec<String>,
    entities: Vec<JsonlEntity>,
}

pub fn write_jsonl(sentences: &[AnnotatedSentence]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in sentences {
        let record = JsonlRecord {
            id: s.id.clone(),
            domain: s.domain.clone(),
            tokens: s.tokens.clone(),
            entities: s
                .entities
                .iter()
                .map(|e| JsonlEntity {
                    start: e.start,
                    end: e.end,
                    type_label: e.type_label.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record).expect("in-memory serialization");
        out.push(b'\n');
    }
    out
}

pub fn read_jsonl(bytes: &[u8]) -> Result<Vec<AnnotatedSentence>> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::Encoding {
        offset: e.valid_up_to(),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let mut entities = Vec::with_capacity(record.entities.len());
        for e in &record.entities {
            if e.start >= e.end || e.end > record.tokens.len() {
                return Err(CorpusError::InvalidSentence {
                    id: record.id,
                    reason: format!(
                        "span ({}, {}) out of bounds for {} tokens",
                        e.start,
                        e.end,
                        record.tokens.len()
                    ),
                }
                .into());
            }
            entities.push(EntitySpan::from_tokens(&record.tokens, e.start, e.end, &e.type_label));
        }
        out.push(AnnotatedSentence::new(record.id, record.domain, record.tokens, entities)?);
    }
    Ok(out)
}

/// Deterministic seeded subsample of `max(1, round_half_up(fraction * n))`
/// sentences, kept in their original relative order.
pub fn sample_fraction(
    split: &[AnnotatedSentence],
    fraction: f64,
    seed: u64,
) -> Result<Vec<AnnotatedSentence>> {
    let idx = sample_indices(split.len(), fraction, seed)?;
    Ok(idx.into_iter().map(|i| split[i].clone()).collect())
}

pub fn sample_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 + 0.5).floor() as usize).clamp(1, n.max(1))
}

pub fn sample_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(CorpusError::EmptySplit.into());
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::InvalidFraction(fraction).into());
    }
    let k = sample_size(n, fraction);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// Type names that would make the label grammar ambiguous are rejected.
pub fn validate_type_name(name: &str) -> Result<()> {
    let bad = name.is_empty()
        || name.trim() != name
        || name.contains('\n')
        || name.contains(" : ")
        || name.contains(" => ")
        || name.ends_with(" :")
        || name.starts_with("=> ");
    if bad {
        return Err(CorpusError::InvalidTypeName(name.to_string()).into());
    }
    Ok(())
}

/// An ordered, duplicate-free list of entity type names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TypeInventory(Vec<String>);

impl TypeInventory {
    pub fn new<I, S>(types: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let types: Vec<String> = types.into_iter().map(Into::into).collect();
        if types.is_empty() {
            return Err(CorpusError::EmptyInventory.into());
        }
        let mut seen = HashSet::new();
        for t in &types {
            validate_type_name(t)?;
            if !seen.insert(t.as_str()) {
                return Err(CorpusError::DuplicateType(t.clone()).into());
            }
        }
        Ok(TypeInventory(types))
    }

    /// Inventory of every type observed in `sentences`, sorted.
    pub fn observed(sentences: &[AnnotatedSentence]) -> Result<Self> {
        let set: BTreeSet<&str> = sentences
            .iter()
            .flat_map(|s| s.entities.iter().map(|e| e.type_label.as_str()))
            .collect();
        Self::new(set)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.iter().any(|t| t == name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl TryFrom<Vec<String>> for TypeInventory {
    type Error = crate::Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        TypeInventory::new(v)
    }
}

impl From<TypeInventory> for Vec<String> {
    fn from(inv: TypeInventory) -> Self {
        inv.0
    }
}

impl fmt::Display for TypeInventory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub name: String,
    pub sentences: Vec<AnnotatedSentence>,
}

/// A named corpus with a closed type inventory and train/dev/test splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub types: TypeInventory,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, types: TypeInventory, splits: Vec<Split>) -> Result<Self> {
        let name = name.into();
        let mut split_names = HashSet::new();
        for split in &splits {
            if !split_names.insert(split.name.as_str()) {
                return Err(CorpusError::DuplicateSplit(split.name.clone()).into());
            }
            let mut ids = HashSet::new();
            for s in &split.sentences {
                if !ids.insert(s.id.as_str()) {
                    return Err(CorpusError::DuplicateId {
                        split: split.name.clone(),
                        id: s.id.clone(),
                    }
                    .into());
                }
                if let Some(e) = s.entities.iter().find(|e| !types.contains(&e.type_label)) {
                    return Err(CorpusError::UnknownType {
                        id: s.id.clone(),
                        type_label: e.type_label.clone(),
                    }
                    .into());
                }
            }
        }
        Ok(Dataset { name, types, splits })
    }

    pub fn split(&self, name: &str) -> Option<&[AnnotatedSentence]> {
        self.splits
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.sentences.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn decodes_single_entity() {
        let out = parse_column_file(b"EU B-ORG\nrejects O\n", ColumnFormat::Auto, "train", "d").unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "train:0");
        assert_eq!(
            out[0].entities,
            vec![EntitySpan {
                start: 0,
                end: 1,
                surface: "EU".into(),
                type_label: "ORG".into()
            }]
        );
    }

    #[test]
    fn blank_only_file_is_empty() {
        let out = parse_column_file(b"\n\n   \n\n", ColumnFormat::Auto, "train", "d").unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn iob1_inside_starts_span() {
        let text = "Peter I-PER\nBlackburn I-PER\nin O\nBonn I-LOC\nParis B-LOC\n";
        let out = parse_column_file(text.as_bytes(), ColumnFormat::TwoCol, "t", "d").unwrap();
        let spans: Vec<_> = out[0].entities.iter().map(|e| (e.start, e.end, e.type_label.as_str())).collect();
        assert_eq!(spans, vec![(0, 2, "PER"), (3, 4, "LOC"), (4, 5, "LOC")]);
    }

    #[test]
    fn inside_of_other_type_splits() {
        let text = "a B-PER\nb I-LOC\n";
        let out = parse_column_file(text.as_bytes(), ColumnFormat::TwoCol, "t", "d").unwrap();
        let spans: Vec<_> = out[0].entities.iter().map(|e| (e.start, e.end, e.type_label.as_str())).collect();
        assert_eq!(spans, vec![(0, 1, "PER"), (1, 2, "LOC")]);
    }

    #[test]
    fn last_column_and_docstart() {
        let text = "-DOCSTART- -X- -X- O\n\nEU NNP B-NP B-ORG\nrejects VBZ B-VP O\n\nPeter NNP B-NP B-PER\n";
        let out = parse_column_file(text.as_bytes(), ColumnFormat::Auto, "train", "conll").unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].id, "train:1");
        assert_eq!(out[1].entities[0].type_label, "PER");
    }

    #[test]
    fn malformed_tag_reports_line() {
        let err = parse_column_file(b"EU B-ORG\nrejects X-FOO\n", ColumnFormat::Auto, "t", "d").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_column_file(b"EU B-\n", ColumnFormat::Auto, "t", "d").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn two_col_rejects_extra_columns() {
        assert!(parse_column_file(b"EU NNP B-ORG\n", ColumnFormat::TwoCol, "t", "d").is_err());
    }

    #[test]
    fn tag_first_columns() {
        let text = "B-ACTOR tom\nI-ACTOR hanks\nO in\nB-TITLE big\n";
        let s = parse_column_file(text.as_bytes(), "tag_first".parse().unwrap(), "train", "movie").unwrap();
        assert_eq!(s[0].tokens, toks("tom hanks in big"));
        assert_eq!(s[0].entities[0], EntitySpan::from_tokens(&s[0].tokens, 0, 2, "ACTOR"));
        assert_eq!(s[0].entities[1].surface, "big");
    }

    #[test]
    fn non_utf8_is_encoding_error() {
        let err = parse_column_file(b"EU \xff\xfe B-ORG\n", ColumnFormat::Auto, "t", "d").unwrap_err();
        assert!(matches!(err, crate::Error::Corpus(CorpusError::Encoding { .. })));
    }

    #[test]
    fn jsonl_rejects_out_of_bounds() {
        let line = br#"{"id":"s1","domain":"d","tokens":["a","b"],"entities":[{"start":1,"end":3,"type":"X"}]}"#;
        let err = read_jsonl(line).unwrap_err();
        assert!(err.to_string().contains("s1"), "{err}");
    }

    #[test]
    fn overlapping_gold_is_rejected() {
        let t = toks("a b c");
        let spans = vec![EntitySpan::from_tokens(&t, 0, 2, "X"), EntitySpan::from_tokens(&t, 1, 3, "Y")];
        assert!(AnnotatedSentence::new("s", "d", t, spans).is_err());
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(sample_size(7816, 0.01), 78);
        assert_eq!(sample_size(100, 0.2), 20);
        assert_eq!(sample_size(10, 0.01), 1);
        assert_eq!(sample_size(10, 0.05), 1);
        assert_eq!(sample_size(10, 0.25), 3);
        assert_eq!(sample_size(200, 0.1), 20);
    }

    #[test]
    fn sample_full_and_deterministic() {
        let split: Vec<_> = (0..50)
            .map(|i| AnnotatedSentence::new(format!("s{i}"), "d", toks("x y"), vec![]).unwrap())
            .collect();
        assert_eq!(sample_fraction(&split, 1.0, 3).unwrap(), split);
        let a = sample_fraction(&split, 0.3, 9).unwrap();
        let b = sample_fraction(&split, 0.3, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
        let pos: Vec<usize> = a.iter().map(|s| s.id[1..].parse().unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_fraction(&[], 0.5, 1).is_err());
        assert!(sample_fraction(&split, 0.0, 1).is_err());
        assert!(sample_fraction(&split, 1.5, 1).is_err());
    }

    #[test]
    fn inventory_rules() {
        assert!(TypeInventory::new(["PER", "PER"]).is_err());
        assert!(TypeInventory::new(Vec::<String>::new()).is_err());
        assert!(TypeInventory::new(["a : b"]).is_err());
        assert!(TypeInventory::new(["a => b"]).is_err());
        assert!(TypeInventory::new(["a :"]).is_err());
        assert!(TypeInventory::new(["=> a"]).is_err());
        assert!(TypeInventory::new(["programming language"]).is_ok());
    }

    #[test]
    fn dataset_rejects_unknown_type() {
        let t = toks("EU rejects");
        let s = AnnotatedSentence::new("train:0", "d", t.clone(), vec![EntitySpan::from_tokens(&t, 0, 1, "ORG")]).unwrap();
        let inv = TypeInventory::new(["PER"]).unwrap();
        let split = Split { name: "train".into(), sentences: vec![s] };
        assert!(Dataset::new("d", inv, vec![split]).is_err());
    }
}
