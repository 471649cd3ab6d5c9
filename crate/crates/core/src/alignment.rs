//! Target→source type alignment by voting.
//!
//! Each gold target-domain entity looks for a co-located pseudo entity
//! predicted by the source model; the pseudo entity's source type receives
//! one vote. Every target type is then mapped to the source type with the most
//! votes, or to the miscellaneous label when too few of its entities were
//! recognized at all.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedSentence, EntitySpan, TypeInventory};
use crate::error::{AlignmentError, Result};

pub const DEFAULT_MISC_LABEL: &str = "miscellaneous";
pub const DEFAULT_TAU: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    #[default]
    Exact,
    /// Token-interval IoU ≥ 0.5.
    Overlap,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Exact => "exact",
            MatchMode::Overlap => "overlap",
        })
    }
}

impl FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exact" => Ok(MatchMode::Exact),
            "overlap" => Ok(MatchMode::Overlap),
            other => Err(format!("unknown match mode {other:?} (expected exact|overlap)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Gold,
    Synthetic,
}

/// Vote counts keyed by target type, then source type.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VoteMatrix {
    pub counts: BTreeMap<String, BTreeMap<String, u64>>,
    pub unmatched: BTreeMap<String, u64>,
}

impl VoteMatrix {
    pub fn vote(&mut self, target: &str, source: &str) {
        *self
            .counts
            .entry(target.to_string())
            .or_default()
            .entry(source.to_string())
            .or_default() += 1;
        self.unmatched.entry(target.to_string()).or_default();
    }

    pub fn miss(&mut self, target: &str) {
        self.counts.entry(target.to_string()).or_default();
        *self.unmatched.entry(target.to_string()).or_default() += 1;
    }

    pub fn count(&self, target: &str, source: &str) -> u64 {
        self.counts
            .get(target)
            .and_then(|row| row.get(source))
            .copied()
            .unwrap_or(0)
    }

    pub fn matched(&self, target: &str) -> u64 {
        self.counts.get(target).map_or(0, |row| row.values().sum())
    }

    /// Gold entity count of `target`.
    pub fn total(&self, target: &str) -> u64 {
        self.matched(target) + self.unmatched.get(target).copied().unwrap_or(0)
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    /// Adds `other` into `self`; merging is commutative.
    pub fn merge(&mut self, other: &VoteMatrix) {
        for (t, row) in &other.counts {
            let mine = self.counts.entry(t.clone()).or_default();
            for (s, n) in row {
                *mine.entry(s.clone()).or_default() += n;
            }
        }
        for (t, n) in &other.unmatched {
            *self.unmatched.entry(t.clone()).or_default() += n;
        }
    }

    pub fn scaled(&self, k: u64) -> VoteMatrix {
        VoteMatrix {
            counts: self
                .counts
                .iter()
                .map(|(t, row)| (t.clone(), row.iter().map(|(s, n)| (s.clone(), n * k)).collect()))
                .collect(),
            unmatched: self.unmatched.iter().map(|(t, n)| (t.clone(), n * k)).collect(),
        }
    }
}

fn overlaps_enough(gold: &EntitySpan, pseudo: &EntitySpan) -> Option<(usize, usize)> {
    let inter = gold.end.min(pseudo.end).saturating_sub(gold.start.max(pseudo.start));
    let union = gold.len() + pseudo.len() - inter;
    (inter > 0 && 2 * inter >= union).then_some((inter, union))
}

fn tally_sentence(gold: &AnnotatedSentence, pseudo: &AnnotatedSentence, mode: MatchMode, votes: &mut VoteMatrix) {
    let mut used = vec![false; pseudo.entities.len()];
    for g in &gold.entities {
        let pick = match mode {
            MatchMode::Exact => pseudo
                .entities
                .iter()
                .enumerate()
                .find(|(i, p)| !used[*i] && p.bounds() == g.bounds())
                .map(|(i, _)| i),
            MatchMode::Overlap => {
                let mut best: Option<(usize, (usize, usize))> = None;
                for (i, p) in pseudo.entities.iter().enumerate() {
                    if used[i] {
                        continue;
                    }
                    let Some((inter, union)) = overlaps_enough(g, p) else {
                        continue;
                    };
                    let better = match best {
                        None => true,
                        Some((j, (bi, bu))) => {
                            let lhs = inter * bu;
                            let rhs = bi * union;
                            lhs > rhs || (lhs == rhs && p.bounds() < pseudo.entities[j].bounds())
                        }
                    };
                    if better {
                        best = Some((i, (inter, union)));
                    }
                }
                best.map(|(i, _)| i)
            }
        };
        match pick {
            Some(i) => {
                used[i] = true;
                votes.vote(&g.type_label, &pseudo.entities[i].type_label);
            }
            None => votes.miss(&g.type_label),
        }
    }
}

/// Counts, for every gold entity, the source type of the pseudo entity it
/// matches. Each pseudo entity votes at most once per sentence; gold entities
/// claim matches in order.
pub fn tally_votes(
    pseudo: &[AnnotatedSentence],
    gold: &[AnnotatedSentence],
    mode: MatchMode,
) -> Result<VoteMatrix> {
    let by_id: HashMap<&str, &AnnotatedSentence> = pseudo.iter().map(|s| (s.id.as_str(), s)).collect();
    let gold_ids: HashSet<&str> = gold.iter().map(|s| s.id.as_str()).collect();
    if let Some(extra) = by_id.keys().find(|id| !gold_ids.contains(*id)) {
        return Err(AlignmentError::IdMismatch(extra.to_string()).into());
    }
    let mut votes = VoteMatrix::default();
    for g in gold {
        let p = by_id
            .get(g.id.as_str())
            .ok_or_else(|| AlignmentError::IdMismatch(g.id.clone()))?;
        tally_sentence(g, p, mode, &mut votes);
    }
    Ok(votes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub target: String,
    pub source: String,
    pub coverage: f64,
    pub votes: BTreeMap<String, u64>,
    pub unmatched: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignParams {
    pub tau: f64,
    pub misc_label: String,
    pub match_mode: MatchMode,
    pub provenance: Provenance,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams {
            tau: DEFAULT_TAU,
            misc_label: DEFAULT_MISC_LABEL.to_string(),
            match_mode: MatchMode::Exact,
            provenance: Provenance::Gold,
        }
    }
}

/// One source type (or the miscellaneous label) per target type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMapping {
    pub source_types: Vec<String>,
    pub misc_label: String,
    /// Sorted by target type.
    pub entries: Vec<MappingEntry>,
    pub provenance: Provenance,
    pub tau: f64,
    pub match_mode: MatchMode,
}

pub fn build_mapping(votes: &VoteMatrix, sources: &TypeInventory, params: &AlignParams) -> Result<TypeMapping> {
    if !(0.0..=1.0).contains(&params.tau) {
        return Err(AlignmentError::InvalidTau(params.tau).into());
    }
    if votes.targets().all(|t| votes.total(t) == 0) {
        return Err(AlignmentError::NoVotes.into());
    }
    let mut global: BTreeMap<&str, u64> = BTreeMap::new();
    for row in votes.counts.values() {
        for (s, n) in row {
            *global.entry(s.as_str()).or_default() += n;
        }
    }
    let mut entries = Vec::new();
    for target in votes.targets() {
        let total = votes.total(target);
        if total == 0 {
            continue;
        }
        let matched = votes.matched(target);
        let coverage = matched as f64 / total as f64;
        let row = &votes.counts[target];
        let argmax = row
            .iter()
            .filter(|(s, n)| **n > 0 && sources.contains(s))
            .max_by(|(sa, na), (sb, nb)| {
                na.cmp(nb)
                    .then_with(|| global[sa.as_str()].cmp(&global[sb.as_str()]))
                    .then_with(|| sb.cmp(sa))
            })
            .map(|(s, _)| s.clone());
        let source = match argmax {
            Some(s) if coverage >= params.tau => s,
            _ => params.misc_label.clone(),
        };
        entries.push(MappingEntry {
            target: target.to_string(),
            source,
            coverage,
            votes: row.clone(),
            unmatched: votes.unmatched.get(target).copied().unwrap_or(0),
        });
    }
    Ok(TypeMapping {
        source_types: sources.as_slice().to_vec(),
        misc_label: params.misc_label.clone(),
        entries,
        provenance: params.provenance,
        tau: params.tau,
        match_mode: params.match_mode,
    })
}

impl TypeMapping {
    /// A mapping with full coverage and no vote record; mostly for tests and
    /// hand-written mappings.
    pub fn from_pairs<'a, I>(pairs: I, misc_label: &str) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut entries: Vec<MappingEntry> = pairs
            .into_iter()
            .map(|(t, s)| MappingEntry {
                target: t.to_string(),
                source: s.to_string(),
                coverage: 1.0,
                votes: BTreeMap::new(),
                unmatched: 0,
            })
            .collect();
        entries.sort_by(|a, b| a.target.cmp(&b.target));
        let mut source_types: Vec<String> = entries
            .iter()
            .map(|e| e.source.clone())
            .filter(|s| s != misc_label)
            .collect();
        source_types.sort();
        source_types.dedup();
        TypeMapping {
            source_types,
            misc_label: misc_label.to_string(),
            entries,
            provenance: Provenance::Gold,
            tau: DEFAULT_TAU,
            match_mode: MatchMode::Exact,
        }
    }

    pub fn entry(&self, target: &str) -> Option<&MappingEntry> {
        self.entries.iter().find(|e| e.target == target)
    }

    pub fn source_of(&self, target: &str) -> Option<&str> {
        self.entry(target).map(|e| e.source.as_str())
    }

    pub fn is_target(&self, name: &str) -> bool {
        self.entry(name).is_some()
    }

    /// Target → source pairs in target order.
    pub fn pairs(&self) -> BTreeMap<&str, &str> {
        self.entries
            .iter()
            .map(|e| (e.target.as_str(), e.source.as_str()))
            .collect()
    }

    /// Target types mapped to `source`, by descending coverage then name.
    pub fn candidates(&self, source: &str) -> Vec<String> {
        let mut pre: Vec<&MappingEntry> = self.entries.iter().filter(|e| e.source == source).collect();
        pre.sort_by(|a, b| {
            b.coverage
                .total_cmp(&a.coverage)
                .then_with(|| a.target.cmp(&b.target))
        });
        pre.into_iter().map(|e| e.target.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| AlignmentError::InvalidMapping(m);
        if self.misc_label.is_empty() {
            return Err(bad("misc_label is empty".into()).into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(bad(format!("tau {} outside [0, 1]", self.tau)).into());
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.target.as_str()) {
                return Err(bad(format!("target type {:?} has more than one entry", e.target)).into());
            }
            if e.source != self.misc_label && !self.source_types.contains(&e.source) {
                return Err(bad(format!(
                    "target {:?} maps to {:?}, which is neither a source type nor {:?}",
                    e.target, e.source, self.misc_label
                ))
                .into());
            }
            if !(0.0..=1.0).contains(&e.coverage) {
                return Err(bad(format!("coverage {} for {:?} outside [0, 1]", e.coverage, e.target)).into());
            }
        }
        Ok(())
    }

    /// Pretty JSON with a trailing newline; byte-stable for identical mappings.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("in-memory serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut mapping: TypeMapping =
            serde_json::from_str(text).map_err(|e| AlignmentError::InvalidMapping(e.to_string()))?;
        mapping.validate()?;
        mapping.entries.sort_by(|a, b| a.target.cmp(&b.target));
        Ok(mapping)
    }
}

pub fn save_mapping(mapping: &TypeMapping, path: &std::path::Path) -> Result<()> {
    mapping.validate()?;
    std::fs::write(path, mapping.to_json())?;
    Ok(())
}

pub fn load_mapping(path: &std::path::Path) -> Result<TypeMapping> {
    TypeMapping::from_json(&std::fs::read_to_string(path)?)
}
