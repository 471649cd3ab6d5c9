#![allow(dead_code)]

use std::path::PathBuf;

use lar_core::corpus::{AnnotatedSentence, EntitySpan};
use lar_core::inference::{Prediction, PredictionSource, SentencePredictions};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tokens chosen to stress the label grammar.
pub const WORDS: &[&str] = &[
    "Obama", "Paris", "the", "of", "New", "York", ":", "=>", "none", "-", "a:b", "x=>y", "Zürich", "東京",
    "O'Neil", "(", ")", "1990", "U.S.", "none:", "::", "==>",
];

/// Includes spaces, punctuation and non-ASCII; all pass type-name validation.
pub const TYPES: &[&str] = &[
    "PER", "LOC", "ORG", "MISC", "person", "programming language", "a:b", "x=>y?", ":", "=>", "Straße", "none",
    "music genre", "=>x", "x =>", ": a",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn toks(text: &str) -> Vec<String> {
    text.split_whitespace().map(String::from).collect()
}

pub fn random_tokens(rng: &mut impl Rng, max_len: usize) -> Vec<String> {
    let n = rng.random_range(1..=max_len);
    (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect()
}

/// Non-overlapping spans with types drawn from `types`.
pub fn random_spans(rng: &mut impl Rng, tokens: &[String], types: &[&str]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if rng.random_bool(0.35) {
            let len = rng.random_range(1..=3.min(tokens.len() - i));
            let ty = types.choose(rng).unwrap();
            spans.push(EntitySpan::from_tokens(tokens, i, i + len, ty));
            i += len;
        } else {
            i += 1;
        }
    }
    spans
}

pub fn random_sentence(rng: &mut impl Rng, id: &str, types: &[&str], max_len: usize) -> AnnotatedSentence {
    let tokens = random_tokens(rng, max_len);
    let spans = random_spans(rng, &tokens, types);
    AnnotatedSentence::new(id, "synthetic", tokens, spans).unwrap()
}

pub fn random_corpus(rng: &mut impl Rng, n: usize, types: &[&str]) -> Vec<AnnotatedSentence> {
    (0..n).map(|i| random_sentence(rng, &format!("s{i}"), types, 12)).collect()
}

fn prediction(tokens: &[String], start: usize, end: usize, ty: &str) -> Prediction {
    Prediction {
        start,
        end,
        surface: tokens[start..end].join(" "),
        source_type: "src".into(),
        target_type: ty.to_string(),
        provenance: PredictionSource::Direct,
    }
}

/// Predictions derived from gold by keeping, retyping, shifting, duplicating
/// and inventing spans; may overlap.
pub fn perturb(rng: &mut impl Rng, gold: &[AnnotatedSentence], types: &[&str]) -> Vec<SentencePredictions> {
    gold.iter()
        .map(|g| {
            let n = g.tokens.len();
            let mut preds = Vec::new();
            for e in &g.entities {
                match rng.random_range(0..6) {
                    0 | 1 => preds.push(prediction(&g.tokens, e.start, e.end, &e.type_label)),
                    2 => preds.push(prediction(&g.tokens, e.start, e.end, types.choose(rng).unwrap())),
                    3 if e.end < n => preds.push(prediction(&g.tokens, e.start, e.end + 1, &e.type_label)),
                    4 => {
                        preds.push(prediction(&g.tokens, e.start, e.end, &e.type_label));
                        preds.push(prediction(&g.tokens, e.start, e.end, &e.type_label));
                    }
                    _ => {}
                }
            }
            for _ in 0..rng.random_range(0..2) {
                let s = rng.random_range(0..n);
                let e = rng.random_range(s + 1..=n);
                preds.push(prediction(&g.tokens, s, e, types.choose(rng).unwrap()));
            }
            SentencePredictions { id: g.id.clone(), predictions: preds }
        })
        .collect()
}

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}
