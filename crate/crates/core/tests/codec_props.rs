mod common;

use common::*;
use lar_core::alignment::{TypeMapping, DEFAULT_MISC_LABEL};
use lar_core::corpus::{
    parse_column_file, read_jsonl, write_column_file, write_jsonl, AnnotatedSentence, ColumnFormat, TypeInventory,
};
use lar_core::label_codec::{emit_plain, emit_reassign, ground_spans, parse_plain, parse_reassign, LabelLine};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::Rng;

fn all_types_valid() -> bool {
    TypeInventory::new(TYPES.iter().copied()).is_ok()
}

#[test]
fn generator_types_are_legal() {
    assert!(all_types_valid());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn plain_round_trip(seed in any::<u64>()) {
        let s = random_sentence(&mut rng(seed), "s", TYPES, 12);
        let parsed = parse_plain(&emit_plain(&s.entities));
        prop_assert_eq!(parsed.malformed, 0);
        let want: Vec<LabelLine> = s.entities.iter().map(|e| LabelLine {
            type_label: e.type_label.clone(),
            surface: e.surface.clone(),
            target_type: None,
        }).collect();
        prop_assert_eq!(parsed.lines, want);
    }

    #[test]
    fn reassign_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_sentence(&mut r, "s", TYPES, 12);
        let pairs: Vec<(&str, &str)> = TYPES.iter().map(|t| (*t, *TYPES.choose(&mut r).unwrap())).collect();
        let mapping = TypeMapping::from_pairs(pairs, DEFAULT_MISC_LABEL);
        let parsed = parse_reassign(&emit_reassign(&s.entities, &mapping).unwrap());
        prop_assert_eq!(parsed.malformed, 0);
        let want: Vec<LabelLine> = s.entities.iter().map(|e| LabelLine {
            type_label: mapping.source_of(&e.type_label).unwrap().to_string(),
            surface: e.surface.clone(),
            target_type: Some(e.type_label.clone()),
        }).collect();
        prop_assert_eq!(parsed.lines, want);
    }

    #[test]
    fn grounding_is_valid_and_disjoint(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_sentence(&mut r, "s", TYPES, 10);
        // Lines from this sentence, from another one, and shuffled.
        let other = random_sentence(&mut r, "o", TYPES, 10);
        let mut lines = parse_plain(&emit_plain(&s.entities)).lines;
        lines.extend(parse_plain(&emit_plain(&other.entities)).lines);
        if r.random_bool(0.5) {
            lines.reverse();
        }
        let g = ground_spans(&lines, &s.tokens);
        prop_assert_eq!(g.grounded.len() + g.dropped, lines.len());
        let spans = g.spans(&s.tokens);
        for w in spans.windows(2) {
            prop_assert!(w[0].end <= w[1].start, "overlap {:?}", w);
        }
        for sp in &spans {
            prop_assert!(sp.start < sp.end && sp.end <= s.tokens.len());
            prop_assert_eq!(&sp.surface, &s.tokens[sp.start..sp.end].join(" "));
        }
        prop_assert!(AnnotatedSentence::new("s", "d", s.tokens.clone(), spans).is_ok());
    }

    #[test]
    fn grounding_recovers_spans_over_distinct_tokens(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..15);
        let tokens: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let spans = random_spans(&mut r, &tokens, TYPES);
        let g = ground_spans(&parse_plain(&emit_plain(&spans)).lines, &tokens);
        prop_assert_eq!(g.dropped, 0);
        prop_assert_eq!(g.spans(&tokens), spans);
    }

    #[test]
    fn bio_round_trip(seed in any::<u64>()) {
        let types = ["PER", "LOC", "ORG", "MISC", "a:b", "Straße"];
        let mut r = rng(seed);
        let n = r.random_range(1..6);
        let sents: Vec<AnnotatedSentence> = (0..n)
            .map(|i| random_sentence(&mut r, &format!("train:{i}"), &types, 12))
            .map(|s| AnnotatedSentence { domain: "d".into(), ..s })
            .collect();
        let text = write_column_file(&sents);
        let back = parse_column_file(text.as_bytes(), ColumnFormat::TwoCol, "train", "d").unwrap();
        prop_assert_eq!(back, sents);
    }

    #[test]
    fn jsonl_round_trip(seed in any::<u64>()) {
        let sents = random_corpus(&mut rng(seed), 5, TYPES);
        prop_assert_eq!(read_jsonl(&write_jsonl(&sents)).unwrap(), sents);
    }
}
