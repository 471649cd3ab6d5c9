//! Linearized label text exchanged with the seq2seq tagger.
//!
//! Grammar, one prediction per line, lines joined by `\n`:
//!
//! ```text
//! line := type " : " surface
//!       | type " : " surface " => " type
//!       | "none"
//! ```
//!
//! Type names never contain `" : "` or `" => "` (enforced by
//! [`TypeInventory`](crate::corpus::TypeInventory)), so plain lines split at
//! the first `" : "` and reassignment lines additionally split at the last
//! `" => "`. Surfaces may contain either separator.

use serde::{Deserialize, Serialize};

use crate::alignment::TypeMapping;
use crate::corpus::{EntitySpan, TypeInventory};
use crate::error::{CodecError, Result};

pub const NONE_SENTINEL: &str = "none";
const TYPE_SEP: &str = " : ";
const REASSIGN_SEP: &str = " => ";
const INSTRUCTION_PREAMBLE: &str = "Extract named entities from the following sentence. Entity types: ";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelLine {
    /// The leading type: the only type in plain lines, `Y_s` in reassignment lines.
    pub type_label: String,
    pub surface: String,
    /// `Y_t`, present only in reassignment lines.
    pub target_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedLabels {
    pub lines: Vec<LabelLine>,
    pub malformed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub types: Vec<String>,
}

pub fn build_instruction(types: &TypeInventory) -> Instruction {
    let list = types.as_slice().join(", ");
    Instruction {
        text: format!("{INSTRUCTION_PREAMBLE}{list}"),
        types: types.as_slice().to_vec(),
    }
}

fn join_lines(lines: Vec<String>) -> String {
    if lines.is_empty() {
        NONE_SENTINEL.to_string()
    } else {
        lines.join("\n")
    }
}

pub fn emit_plain(entities: &[EntitySpan]) -> String {
    join_lines(
        entities
            .iter()
            .map(|e| format!("{}{TYPE_SEP}{}", e.type_label, e.surface))
            .collect(),
    )
}

/// Emits `Y_s : surface => Y_t` where each entity's `type_label` is `Y_t`.
pub fn emit_reassign(entities: &[EntitySpan], mapping: &TypeMapping) -> Result<String> {
    let mut lines = Vec::with_capacity(entities.len());
    for e in entities {
        let source = mapping
            .source_of(&e.type_label)
            .ok_or_else(|| CodecError::UnmappedType(e.type_label.clone()))?;
        lines.push(format!(
            "{source}{TYPE_SEP}{}{REASSIGN_SEP}{}",
            e.surface, e.type_label
        ));
    }
    Ok(join_lines(lines))
}

fn valid_type(t: &str) -> bool {
    !t.is_empty() && t.trim() == t
}

fn valid_surface(s: &str) -> bool {
    !s.is_empty() && s.trim() == s
}

fn parse_plain_line(line: &str) -> Option<LabelLine> {
    let (ty, surface) = line.split_once(TYPE_SEP)?;
    (valid_type(ty) && valid_surface(surface)).then(|| LabelLine {
        type_label: ty.to_string(),
        surface: surface.to_string(),
        target_type: None,
    })
}

fn parse_reassign_line(line: &str) -> Option<LabelLine> {
    let (ty, rest) = line.split_once(TYPE_SEP)?;
    let (surface, target) = rest.rsplit_once(REASSIGN_SEP)?;
    (valid_type(ty) && valid_surface(surface) && valid_type(target)).then(|| LabelLine {
        type_label: ty.to_string(),
        surface: surface.to_string(),
        target_type: Some(target.to_string()),
    })
}

fn parse_with(text: &str, parse_line: fn(&str) -> Option<LabelLine>) -> ParsedLabels {
    let mut parsed = ParsedLabels::default();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim() == NONE_SENTINEL {
            continue;
        }
        match parse_line(line) {
            Some(l) => parsed.lines.push(l),
            None => parsed.malformed += 1,
        }
    }
    parsed
}

pub fn parse_plain(text: &str) -> ParsedLabels {
    parse_with(text, parse_plain_line)
}

pub fn parse_reassign(text: &str) -> ParsedLabels {
    parse_with(text, parse_reassign_line)
}

/// A label line located in the sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedLine {
    pub start: usize,
    pub end: usize,
    pub line: LabelLine,
}

impl GroundedLine {
    /// The span typed with the line's leading type.
    pub fn to_span(&self, tokens: &[String]) -> EntitySpan {
        EntitySpan::from_tokens(tokens, self.start, self.end, &self.line.type_label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Grounding {
    /// In label-line order.
    pub grounded: Vec<GroundedLine>,
    pub dropped: usize,
}

impl Grounding {
    /// Spans typed with each line's leading type, sorted by position.
    pub fn spans(&self, tokens: &[String]) -> Vec<EntitySpan> {
        let mut spans: Vec<EntitySpan> = self.grounded.iter().map(|g| g.to_span(tokens)).collect();
        spans.sort_by_key(|s| (s.start, s.end));
        spans
    }
}

/// Locates each line's surface at the leftmost whole-token occurrence that
/// does not touch tokens consumed by earlier lines. Lines with no such
/// occurrence are dropped.
pub fn ground_spans(lines: &[LabelLine], tokens: &[String]) -> Grounding {
    let mut consumed = vec![false; tokens.len()];
    let mut out = Grounding::default();
    for line in lines {
        let needle: Vec<&str> = line.surface.split_whitespace().collect();
        let n = needle.len();
        let hit = (n > 0 && n <= tokens.len())
            .then(|| {
                (0..=tokens.len() - n).find(|&start| {
                    !consumed[start..start + n].iter().any(|&c| c)
                        && tokens[start..start + n].iter().zip(&needle).all(|(t, w)| t == w)
                })
            })
            .flatten();
        match hit {
            Some(start) => {
                consumed[start..start + n].iter_mut().for_each(|c| *c = true);
                out.grounded.push(GroundedLine {
                    start,
                    end: start + n,
                    line: line.clone(),
                });
            }
            None => out.dropped += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::TypeMapping;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn instruction_template() {
        let inv = TypeInventory::new(["PER", "LOC", "ORG", "MISC"]).unwrap();
        let ins = build_instruction(&inv);
        assert_eq!(
            ins.text,
            "Extract named entities from the following sentence. Entity types: PER, LOC, ORG, MISC"
        );
        assert_eq!(ins, build_instruction(&inv));
        let single = build_instruction(&TypeInventory::new(["X"]).unwrap());
        assert_eq!(single.text, format!("{INSTRUCTION_PREAMBLE}X"));
    }

    #[test]
    fn plain_emit() {
        let t = toks("EU rejects German call");
        assert_eq!(emit_plain(&[EntitySpan::from_tokens(&t, 0, 1, "ORG")]), "ORG : EU");
        assert_eq!(emit_plain(&[]), "none");
        assert_eq!(parse_plain("none"), ParsedLabels::default());
    }

    #[test]
    fn reassign_emit_uses_mapping() {
        let mapping = TypeMapping::from_pairs([("musician", "person")], "miscellaneous");
        let t = toks("Bob Dylan sang");
        let out = emit_reassign(&[EntitySpan::from_tokens(&t, 0, 2, "musician")], &mapping).unwrap();
        assert_eq!(out, "person : Bob Dylan => musician");
        let err = emit_reassign(&[EntitySpan::from_tokens(&t, 0, 2, "band")], &mapping).unwrap_err();
        assert!(err.to_string().contains("band"));
        assert_eq!(emit_reassign(&[], &mapping).unwrap(), "none");
    }

    #[test]
    fn malformed_lines_are_counted() {
        let p = parse_plain("ORG : EU\ngarbage\nPER :  x\n : y");
        assert_eq!(p.lines.len(), 1);
        assert_eq!(p.malformed, 3);
        let r = parse_reassign("person : Obama => politician\nperson : Obama");
        assert_eq!(r.lines.len(), 1);
        assert_eq!(r.malformed, 1);
        assert_eq!(r.lines[0].target_type.as_deref(), Some("politician"));
    }

    #[test]
    fn separators_inside_surface() {
        let r = parse_reassign("misc : a => b => award");
        assert_eq!(r.lines[0].surface, "a => b");
        assert_eq!(r.lines[0].target_type.as_deref(), Some("award"));
        let p = parse_plain("MISC : x : y");
        assert_eq!(p.lines[0].surface, "x : y");
    }

    #[test]
    fn ground_unique() {
        let t = toks("EU rejects German call");
        let g = ground_spans(&parse_plain("ORG : EU").lines, &t);
        assert_eq!((g.grounded[0].start, g.grounded[0].end), (0, 1));
        assert_eq!(g.dropped, 0);
    }

    #[test]
    fn ground_repeated_surface_left_to_right() {
        let t = toks("Paris and Paris Hilton in Paris");
        let g = ground_spans(&parse_plain("LOC : Paris\nLOC : Paris").lines, &t);
        let b: Vec<_> = g.grounded.iter().map(|x| (x.start, x.end)).collect();
        assert_eq!(b, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn ground_skips_consumed_overlap() {
        let t = toks("New York New York");
        let g = ground_spans(&parse_plain("LOC : York New\nLOC : New York").lines, &t);
        let b: Vec<_> = g.grounded.iter().map(|x| (x.start, x.end)).collect();
        assert_eq!(b, vec![(1, 3)]);
        assert_eq!(g.dropped, 1);
    }

    #[test]
    fn ground_absent_surface_dropped() {
        let t = toks("EU rejects German call");
        let g = ground_spans(&parse_plain("LOC : Berlin").lines, &t);
        assert!(g.grounded.is_empty());
        assert_eq!(g.dropped, 1);
    }
}
