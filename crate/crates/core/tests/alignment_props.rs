mod common;

use std::collections::BTreeMap;

use common::*;
use lar_core::alignment::{
    build_mapping, load_mapping, save_mapping, tally_votes, AlignParams, MatchMode, Provenance, TypeMapping,
    VoteMatrix,
};
use lar_core::corpus::{read_jsonl, AnnotatedSentence, EntitySpan, TypeInventory};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::Rng;

const TARGETS: &[&str] = &["politician", "person", "country", "city", "party", "election", "ideology", "band"];
const SOURCES: &[&str] = &["PER", "LOC", "ORG", "MISC"];

/// Pseudo labels over gold tokens: each gold entity is kept with its exact
/// bounds, trimmed, or dropped; the source type is usually the target's
/// "preferred" source.
fn pseudo_for(r: &mut impl Rng, gold: &[AnnotatedSentence], prefer: &BTreeMap<&str, &str>) -> Vec<AnnotatedSentence> {
    gold.iter()
        .map(|g| {
            let mut spans = Vec::new();
            for e in &g.entities {
                let src = if r.random_bool(0.8) { prefer[e.type_label.as_str()] } else { SOURCES.choose(r).unwrap() };
                match r.random_range(0..10) {
                    0..=5 => spans.push(EntitySpan::from_tokens(&g.tokens, e.start, e.end, src)),
                    6 if e.len() > 1 => spans.push(EntitySpan::from_tokens(&g.tokens, e.start, e.end - 1, src)),
                    _ => {}
                }
            }
            AnnotatedSentence::new(g.id.clone(), "src", g.tokens.clone(), spans).unwrap()
        })
        .collect()
}

/// Independent exact-match oracle: enumerate every gold/pseudo pair.
fn oracle(pseudo: &[AnnotatedSentence], gold: &[AnnotatedSentence], tau: f64) -> BTreeMap<String, String> {
    let mut votes: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut total: BTreeMap<String, u64> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pseudo) {
        assert_eq!(g.id, p.id);
        for ge in &g.entities {
            *total.entry(ge.type_label.clone()).or_default() += 1;
            for pe in &p.entities {
                if (pe.start, pe.end) == (ge.start, ge.end) {
                    *votes.entry(ge.type_label.clone()).or_default().entry(pe.type_label.clone()).or_default() += 1;
                }
            }
        }
    }
    let mut global: BTreeMap<String, u64> = BTreeMap::new();
    for row in votes.values() {
        for (s, n) in row {
            *global.entry(s.clone()).or_default() += n;
        }
    }
    total
        .iter()
        .map(|(t, &n)| {
            let row = votes.get(t).cloned().unwrap_or_default();
            let matched: u64 = row.values().sum();
            let mut cands: Vec<(&String, &u64)> = row.iter().filter(|(_, c)| **c > 0).collect();
            cands.sort_by(|a, b| b.1.cmp(a.1).then(global[b.0].cmp(&global[a.0])).then(a.0.cmp(b.0)));
            let coverage = matched as f64 / n as f64;
            let src = match cands.first() {
                Some((s, _)) if coverage >= tau => s.to_string(),
                _ => "miscellaneous".to_string(),
            };
            (t.clone(), src)
        })
        .collect()
}

fn owned(m: &TypeMapping) -> BTreeMap<String, String> {
    m.pairs().into_iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

fn sources() -> TypeInventory {
    TypeInventory::new(SOURCES.iter().copied()).unwrap()
}

fn random_case(seed: u64) -> (Vec<AnnotatedSentence>, Vec<AnnotatedSentence>) {
    let mut r = rng(seed);
    let prefer: BTreeMap<&str, &str> = TARGETS.iter().map(|t| (*t, *SOURCES.choose(&mut r).unwrap())).collect();
    let n = r.random_range(5..60);
    let gold = random_corpus(&mut r, n, TARGETS);
    let pseudo = pseudo_for(&mut r, &gold, &prefer);
    (pseudo, gold)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_mapping_matches_pairwise_oracle(seed in any::<u64>(), tau in prop::sample::select(vec![0.0, 0.2, 0.5, 1.0])) {
        let (pseudo, gold) = random_case(seed);
        let votes = tally_votes(&pseudo, &gold, MatchMode::Exact).unwrap();
        prop_assume!(votes.targets().any(|t| votes.total(t) > 0));
        let params = AlignParams { tau, ..AlignParams::default() };
        let m = build_mapping(&votes, &sources(), &params).unwrap();
        prop_assert_eq!(owned(&m), oracle(&pseudo, &gold, tau));
        prop_assert!(m.validate().is_ok());
    }

    #[test]
    fn scaling_votes_preserves_mapping(seed in any::<u64>(), k in prop::sample::select(vec![2u64, 10, 1000])) {
        let (pseudo, gold) = random_case(seed);
        for mode in [MatchMode::Exact, MatchMode::Overlap] {
            let votes = tally_votes(&pseudo, &gold, mode).unwrap();
            prop_assume!(votes.targets().any(|t| votes.total(t) > 0));
            let a = build_mapping(&votes, &sources(), &AlignParams::default()).unwrap();
            let b = build_mapping(&votes.scaled(k), &sources(), &AlignParams::default()).unwrap();
            prop_assert_eq!(a.pairs(), b.pairs());
            for (x, y) in a.entries.iter().zip(&b.entries) {
                prop_assert_eq!(x.coverage, y.coverage);
            }
        }
    }

    #[test]
    fn identity_alignment_is_a_fixpoint(seed in any::<u64>()) {
        let gold = random_corpus(&mut rng(seed), 40, SOURCES);
        let votes = tally_votes(&gold, &gold, MatchMode::Exact).unwrap();
        prop_assume!(votes.targets().any(|t| votes.total(t) > 0));
        let m = build_mapping(&votes, &sources(), &AlignParams::default()).unwrap();
        for e in &m.entries {
            prop_assert_eq!(&e.target, &e.source);
            prop_assert_eq!(e.coverage, 1.0);
        }
    }

    #[test]
    fn overlap_never_matches_less_than_exact(seed in any::<u64>()) {
        let (pseudo, gold) = random_case(seed);
        let exact = tally_votes(&pseudo, &gold, MatchMode::Exact).unwrap();
        let overlap = tally_votes(&pseudo, &gold, MatchMode::Overlap).unwrap();
        for t in exact.targets() {
            prop_assert!(overlap.matched(t) >= exact.matched(t));
            prop_assert_eq!(overlap.total(t), exact.total(t));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mapping_file_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut votes = VoteMatrix::default();
        for t in TARGETS {
            for _ in 0..r.random_range(1..30) {
                if r.random_bool(0.3) {
                    votes.miss(t);
                } else {
                    votes.vote(t, SOURCES.choose(&mut r).unwrap());
                }
            }
        }
        let params = AlignParams {
            tau: r.random_range(0.0..=1.0),
            misc_label: "other".into(),
            match_mode: if r.random_bool(0.5) { MatchMode::Exact } else { MatchMode::Overlap },
            provenance: if r.random_bool(0.5) { Provenance::Gold } else { Provenance::Synthetic },
        };
        let m = build_mapping(&votes, &sources(), &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mapping.json");
        save_mapping(&m, &path).unwrap();
        let back = load_mapping(&path).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_json(), std::fs::read_to_string(&path).unwrap());
    }
}

#[test]
fn alignment_fixture() {
    let gold = read_jsonl(&std::fs::read(fixture("alignment/gold.jsonl")).unwrap()).unwrap();
    let pseudo = read_jsonl(&std::fs::read(fixture("alignment/pseudo.jsonl")).unwrap()).unwrap();
    let src = TypeInventory::new(["person", "location", "organization", "miscellaneous"]).unwrap();

    let exact = tally_votes(&pseudo, &gold, MatchMode::Exact).unwrap();
    let m = build_mapping(&exact, &src, &AlignParams::default()).unwrap();
    assert_eq!(owned(&m), oracle(&pseudo, &gold, 0.2));
    assert_eq!(m.source_of("politician"), Some("person"));
    assert_eq!(m.source_of("ideology"), Some("miscellaneous"));
    let p = m.entry("politician").unwrap();
    assert_eq!((p.votes["person"], p.votes["organization"], p.unmatched), (3, 1, 1));
    assert_eq!(p.coverage, 0.8);

    let overlap = tally_votes(&pseudo, &gold, MatchMode::Overlap).unwrap();
    assert!(overlap.matched("election") > exact.matched("election"));
}
