//! From tagger output to typed predictions.
//!
//! Direct inference trusts the refinement `Y_t` written by the target model.
//! Enhanced inference replaces that refinement with a multiple-choice question
//! to a chat model, where the choices are the target types aligned to the
//! predicted source type. The chat model never proposes or moves spans.

use std::collections::{BTreeSet, HashMap};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::alignment::TypeMapping;
use crate::corpus::{sample_fraction, AnnotatedSentence, TypeInventory};
use crate::label_codec::{build_instruction, ground_spans, parse_plain, parse_reassign, Instruction};
use crate::llm::{ChatRequest, LlmClient, Message};
use crate::tagger::{tag_batch, DecodeReport, TagMode, TagRequest, Tagger};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSource {
    Direct,
    Enhanced,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub source_type: String,
    pub target_type: String,
    pub provenance: PredictionSource,
}

/// One record of a prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePredictions {
    pub id: String,
    pub predictions: Vec<Prediction>,
}

pub fn write_predictions(records: &[SentencePredictions]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("in-memory serialization");
        out.push(b'\n');
    }
    out
}

pub fn read_predictions(bytes: &[u8]) -> Result<Vec<SentencePredictions>> {
    let text = String::from_utf8_lossy(bytes);
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        out.push(serde_json::from_str(line)?);
    }
    Ok(out)
}

fn decode_reassign(label_text: &str, sentence: &AnnotatedSentence, mapping: &TypeMapping, report: &mut DecodeReport) -> Vec<Prediction> {
    let parsed = parse_reassign(label_text);
    let grounding = ground_spans(&parsed.lines, &sentence.tokens);
    report.malformed += parsed.malformed;
    report.dropped += grounding.dropped;
    grounding
        .grounded
        .into_iter()
        .map(|g| {
            let raw_target = g.line.target_type.unwrap_or_default();
            let (target_type, provenance) = if mapping.is_target(&raw_target) {
                (raw_target, PredictionSource::Direct)
            } else {
                (mapping.misc_label.clone(), PredictionSource::Fallback)
            };
            Prediction {
                start: g.start,
                end: g.end,
                surface: g.line.surface,
                source_type: g.line.type_label,
                target_type,
                provenance,
            }
        })
        .collect()
}

/// Runs the target model in reassignment mode over `sentences`.
pub async fn direct_infer(
    sentences: &[AnnotatedSentence],
    tagger: &dyn Tagger,
    mapping: &TypeMapping,
    instruction: &Instruction,
    parallelism: usize,
) -> (Vec<SentencePredictions>, DecodeReport) {
    let requests: Vec<TagRequest> = sentences
        .iter()
        .map(|s| TagRequest::for_sentence(s, instruction, TagMode::Reassign))
        .collect();
    let responses = tag_batch(tagger, &requests, parallelism).await;
    let mut report = DecodeReport::default();
    let records = sentences
        .iter()
        .zip(responses)
        .map(|(s, r)| {
            let predictions = match r {
                Ok(r) => decode_reassign(&r.label_text, s, mapping, &mut report),
                Err(e) => {
                    tracing::warn!(id = %s.id, error = %e, "tagger request failed");
                    report.errors += 1;
                    Vec::new()
                }
            };
            SentencePredictions {
                id: s.id.clone(),
                predictions,
            }
        })
        .collect();
    (records, report)
}

/// Shown before every question. Carries only the answer format, no domain
/// knowledge.
pub const DEMONSTRATION: &str = "Sentence: Maria Lopez thanked the volunteers after the charity run.\n\
Entity: Maria Lopez\n\
Which type fits best?\n\
A) person\n\
B) organization\n\
Answer with one letter.\n\
Answer: A";

const LETTERS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McQuestion {
    pub sentence: String,
    pub surface: String,
    /// Candidate target types; choice `i` is labelled `LETTERS[i]`.
    pub choices: Vec<String>,
}

impl McQuestion {
    pub fn letter(i: usize) -> char {
        LETTERS[i] as char
    }

    pub fn question(&self) -> String {
        let mut q = format!(
            "Sentence: {}\nEntity: {}\nWhich type fits best?\n",
            self.sentence, self.surface
        );
        for (i, c) in self.choices.iter().enumerate() {
            q.push_str(&format!("{}) {}\n", Self::letter(i), c));
        }
        q.push_str("Answer with one letter.");
        q
    }

    pub fn prompt(&self) -> String {
        format!("{DEMONSTRATION}\n\n{}", self.question())
    }

    /// Index of the chosen candidate: the first standalone choice letter,
    /// otherwise a case-insensitive type-name match.
    pub fn parse_answer(&self, answer: &str) -> Option<usize> {
        let n = self.choices.len();
        for word in answer.split(|c: char| !c.is_alphanumeric()) {
            let mut chars = word.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                if let Some(i) = LETTERS[..n].iter().position(|&l| l as char == c) {
                    return Some(i);
                }
            }
        }
        let normalized = answer
            .trim()
            .trim_end_matches(|c: char| c.is_ascii_punctuation())
            .trim()
            .to_lowercase();
        if let Some(i) = self.choices.iter().position(|c| c.to_lowercase() == normalized) {
            return Some(i);
        }
        let lower = answer.to_lowercase();
        let mentioned: Vec<usize> = self
            .choices
            .iter()
            .enumerate()
            .filter(|(_, c)| contains_phrase(&lower, &c.to_lowercase()))
            .map(|(i, _)| i)
            .collect();
        match mentioned.as_slice() {
            [i] => Some(*i),
            _ => None,
        }
    }
}

fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    if phrase.is_empty() {
        return false;
    }
    let boundary = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
    haystack.match_indices(phrase).any(|(at, m)| {
        boundary(haystack[..at].chars().next_back()) && boundary(haystack[at + m.len()..].chars().next())
    })
}

/// A question over the target types aligned to `source_type`, or `None` when
/// there is nothing to choose between.
pub fn build_mcq(sentence: &str, surface: &str, source_type: &str, mapping: &TypeMapping) -> Option<McQuestion> {
    let mut choices = mapping.candidates(source_type);
    if choices.len() <= 1 {
        return None;
    }
    choices.truncate(LETTERS.len());
    Some(McQuestion {
        sentence: sentence.to_string(),
        surface: surface.to_string(),
        choices,
    })
}

#[derive(Debug, Clone)]
pub struct EnhanceOptions {
    pub model: String,
    /// Restrict questions to predictions whose candidate set meets this list.
    pub only_types: Option<BTreeSet<String>>,
    pub parallelism: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhanceReport {
    pub asked: usize,
    pub changed: usize,
    pub unparsed: usize,
    pub errors: usize,
}

/// Re-types predictions by multiple-choice questions. Spans and source types
/// are never modified; on any failure the direct prediction is kept.
pub async fn enhance(
    records: &[SentencePredictions],
    sentences: &[AnnotatedSentence],
    mapping: &TypeMapping,
    llm: &LlmClient,
    options: &EnhanceOptions,
) -> Result<(Vec<SentencePredictions>, EnhanceReport)> {
    let text_by_id: HashMap<&str, String> = sentences.iter().map(|s| (s.id.as_str(), s.text())).collect();
    let mut jobs = Vec::new();
    for (ri, record) in records.iter().enumerate() {
        let Some(text) = text_by_id.get(record.id.as_str()) else {
            return Err(crate::error::EvalError::IdMismatch(record.id.clone()).into());
        };
        for (pi, p) in record.predictions.iter().enumerate() {
            let Some(q) = build_mcq(text, &p.surface, &p.source_type, mapping) else {
                continue;
            };
            let wanted = options
                .only_types
                .as_ref()
                .is_none_or(|only| q.choices.iter().any(|c| only.contains(c)));
            if wanted {
                jobs.push((ri, pi, q));
            }
        }
    }

    let answers: Vec<_> = stream::iter(&jobs)
        .map(|(_, _, q)| {
            let request = ChatRequest::new(options.model.clone(), vec![Message::user(q.prompt())]);
            async move { llm.chat(&request).await }
        })
        .buffered(options.parallelism.max(1))
        .collect()
        .await;

    let mut out = records.to_vec();
    let mut report = EnhanceReport {
        asked: jobs.len(),
        ..EnhanceReport::default()
    };
    for ((ri, pi, q), answer) in jobs.iter().zip(answers) {
        let answer = match answer {
            Ok(a) => a,
            Err(e) => {
                tracing::warn!(error = %e, "chat request failed; keeping direct type");
                report.errors += 1;
                continue;
            }
        };
        let Some(choice) = q.parse_answer(&answer.content) else {
            report.unparsed += 1;
            continue;
        };
        let p = &mut out[*ri].predictions[*pi];
        if p.target_type != q.choices[choice] {
            report.changed += 1;
        }
        p.target_type = q.choices[choice].clone();
        p.provenance = PredictionSource::Enhanced;
    }
    Ok((out, report))
}

pub fn annotation_prompt(instruction: &Instruction, sentence: &str) -> String {
    format!(
        "{}\nAnswer with one line per entity in the form \"<type> : <entity text>\", \
         or the single word \"none\" if there is no entity.\nSentence: {}",
        instruction.text, sentence
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    /// Target-typed annotations for the sampled sentences that parsed cleanly.
    pub synthetic: Vec<AnnotatedSentence>,
    pub prompted: usize,
    pub excluded: usize,
    pub dropped: usize,
    pub errors: usize,
}

#[derive(Debug, Clone)]
pub struct AugmentOptions {
    pub fraction: f64,
    pub seed: u64,
    pub model: String,
    pub parallelism: usize,
}

/// Labels a seeded sample of the target split with the chat model. A sentence
/// whose reply contains a malformed line or a type outside the inventory is
/// excluded.
pub async fn zero_shot_augment(
    split: &[AnnotatedSentence],
    types: &TypeInventory,
    llm: &LlmClient,
    options: &AugmentOptions,
) -> Result<AugmentOutcome> {
    let sample = sample_fraction(split, options.fraction, options.seed)?;
    let instruction = build_instruction(types);
    let replies: Vec<_> = stream::iter(&sample)
        .map(|s| {
            let request = ChatRequest::new(
                options.model.clone(),
                vec![Message::user(annotation_prompt(&instruction, &s.text()))],
            );
            async move { llm.chat(&request).await }
        })
        .buffered(options.parallelism.max(1))
        .collect()
        .await;

    let mut outcome = AugmentOutcome {
        synthetic: Vec::new(),
        prompted: sample.len(),
        excluded: 0,
        dropped: 0,
        errors: 0,
    };
    for (s, reply) in sample.iter().zip(replies) {
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!(id = %s.id, error = %e, "annotation request failed");
                outcome.errors += 1;
                outcome.excluded += 1;
                continue;
            }
        };
        let parsed = parse_plain(&reply.content);
        if parsed.malformed > 0 || parsed.lines.iter().any(|l| !types.contains(&l.type_label)) {
            outcome.excluded += 1;
            continue;
        }
        let grounding = ground_spans(&parsed.lines, &s.tokens);
        outcome.dropped += grounding.dropped;
        outcome.synthetic.push(AnnotatedSentence::new(
            s.id.clone(),
            s.domain.clone(),
            s.tokens.clone(),
            grounding.spans(&s.tokens),
        )?);
    }
    Ok(outcome)
}
