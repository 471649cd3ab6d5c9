//! Exact-match span metrics and the derived type-wise / continual reports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedSentence;
use crate::error::{EvalError, Result};
use crate::inference::{Prediction, PredictionSource, SentencePredictions};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold entities of this type.
    pub support: u64,
    #[serde(flatten)]
    pub counts: Counts,
}

impl From<Counts> for TypeScores {
    fn from(c: Counts) -> Self {
        TypeScores {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            support: c.tp + c.fn_,
            counts: c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_type: BTreeMap<String, TypeScores>,
    #[serde(flatten)]
    pub counts: Counts,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("in-memory serialization");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let width = self
            .per_type
            .keys()
            .map(|k| k.chars().count())
            .chain(["micro".len(), "type".len()])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}",
            "type", "precision", "recall", "f1", "support"
        );
        for (t, s) in &self.per_type {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                t, s.precision, s.recall, s.f1, s.support
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
            "micro",
            self.precision,
            self.recall,
            self.f1,
            self.counts.tp + self.counts.fn_
        );
        out
    }
}

type Triple = (usize, usize, String);

fn check_ids<'a>(pred: impl Iterator<Item = &'a str>, gold: impl Iterator<Item = &'a str>) -> Result<()> {
    let p: HashSet<&str> = pred.collect();
    let g: HashSet<&str> = gold.collect();
    if let Some(id) = p.symmetric_difference(&g).min() {
        return Err(EvalError::IdMismatch(id.to_string()).into());
    }
    Ok(())
}

/// Micro precision/recall/F1 with a per-type breakdown. A prediction is a
/// true positive iff `(start, end, target_type)` equals a gold entity not
/// already claimed by an earlier prediction.
pub fn span_f1(predictions: &[SentencePredictions], gold: &[AnnotatedSentence]) -> Result<EvalReport> {
    check_ids(
        predictions.iter().map(|p| p.id.as_str()),
        gold.iter().map(|g| g.id.as_str()),
    )?;
    let preds: HashMap<&str, &[Prediction]> = predictions
        .iter()
        .map(|p| (p.id.as_str(), p.predictions.as_slice()))
        .collect();
    let mut total = Counts::default();
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    for g in gold {
        let mut unclaimed: Vec<Option<Triple>> = g
            .entities
            .iter()
            .map(|e| Some((e.start, e.end, e.type_label.clone())))
            .collect();
        for p in preds.get(g.id.as_str()).copied().unwrap_or_default() {
            let key = (p.start, p.end, p.target_type.clone());
            let hit = unclaimed.iter_mut().find(|u| u.as_ref() == Some(&key));
            let counts = per_type.entry(p.target_type.clone()).or_default();
            match hit {
                Some(slot) => {
                    *slot = None;
                    counts.tp += 1;
                    total.tp += 1;
                }
                None => {
                    counts.fp += 1;
                    total.fp += 1;
                }
            }
        }
        for (_, _, t) in unclaimed.into_iter().flatten() {
            per_type.entry(t).or_default().fn_ += 1;
            total.fn_ += 1;
        }
    }
    Ok(EvalReport {
        precision: total.precision(),
        recall: total.recall(),
        f1: total.f1(),
        per_type: per_type.into_iter().map(|(t, c)| (t, c.into())).collect(),
        counts: total,
    })
}

/// Gold sentences viewed as a prediction set, e.g. to score pseudo or
/// synthetic labels.
pub fn as_predictions(sentences: &[AnnotatedSentence]) -> Vec<SentencePredictions> {
    sentences
        .iter()
        .map(|s| SentencePredictions {
            id: s.id.clone(),
            predictions: s
                .entities
                .iter()
                .map(|e| Prediction {
                    start: e.start,
                    end: e.end,
                    surface: e.surface.clone(),
                    source_type: e.type_label.clone(),
                    target_type: e.type_label.clone(),
                    provenance: PredictionSource::Direct,
                })
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAccuracy {
    /// `None` when no gold entity of the type was recognized as a span.
    pub direct: Option<f64>,
    pub enhanced: Option<f64>,
    pub delta: Option<f64>,
    /// Gold entities of the type.
    pub support: u64,
    pub direct_recognized: u64,
    pub enhanced_recognized: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypewiseReport {
    pub types: BTreeMap<String, TypeAccuracy>,
}

fn span_types(records: &[SentencePredictions]) -> HashMap<(&str, usize, usize), &str> {
    let mut out = HashMap::new();
    for r in records {
        for p in &r.predictions {
            out.entry((r.id.as_str(), p.start, p.end))
                .or_insert(p.target_type.as_str());
        }
    }
    out
}

/// Type accuracy over gold entities whose span was recognized, for direct
/// and enhanced predictions separately.
pub fn typewise_accuracy(
    direct: &[SentencePredictions],
    enhanced: &[SentencePredictions],
    gold: &[AnnotatedSentence],
) -> Result<TypewiseReport> {
    check_ids(direct.iter().map(|p| p.id.as_str()), gold.iter().map(|g| g.id.as_str()))?;
    check_ids(enhanced.iter().map(|p| p.id.as_str()), gold.iter().map(|g| g.id.as_str()))?;
    let d = span_types(direct);
    let e = span_types(enhanced);
    // (support, direct hits, direct denom, enhanced hits, enhanced denom)
    let mut acc: BTreeMap<&str, [u64; 5]> = BTreeMap::new();
    for g in gold {
        for ent in &g.entities {
            let row = acc.entry(ent.type_label.as_str()).or_default();
            row[0] += 1;
            let key = (g.id.as_str(), ent.start, ent.end);
            if let Some(t) = d.get(&key) {
                row[2] += 1;
                row[1] += u64::from(*t == ent.type_label);
            }
            if let Some(t) = e.get(&key) {
                row[4] += 1;
                row[3] += u64::from(*t == ent.type_label);
            }
        }
    }
    let types = acc
        .into_iter()
        .map(|(t, [support, dh, dd, eh, ed])| {
            let direct = (dd > 0).then(|| dh as f64 / dd as f64);
            let enhanced = (ed > 0).then(|| eh as f64 / ed as f64);
            let delta = direct.zip(enhanced).map(|(a, b)| b - a);
            (
                t.to_string(),
                TypeAccuracy {
                    direct,
                    enhanced,
                    delta,
                    support,
                    direct_recognized: dd,
                    enhanced_recognized: ed,
                },
            )
        })
        .collect();
    Ok(TypewiseReport { types })
}

impl TypewiseReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("in-memory serialization");
        s.push('\n');
        s
    }

    /// Percentages with two decimals, delta in parentheses.
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v));
        let width = self
            .types
            .keys()
            .map(|k| k.chars().count())
            .chain(["type".len()])
            .max()
            .unwrap_or(4);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>18}  {:>7}", "type", "direct", "enhanced", "support");
        for (t, a) in &self.types {
            let enhanced = match a.delta {
                Some(d) => format!("{} ({:+.2})", pct(a.enhanced), 100.0 * d),
                None => pct(a.enhanced),
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>18}  {:>7}",
                t,
                pct(a.direct),
                enhanced,
                a.support
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub report: EvalReport,
}

/// Scores of successive model snapshots on one fixed test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCurve {
    pub stages: Vec<Stage>,
}

pub fn continual_curve(snapshots: &[(String, Vec<SentencePredictions>)], gold: &[AnnotatedSentence]) -> Result<StageCurve> {
    if snapshots.len() < 2 {
        return Err(EvalError::TooFewStages(snapshots.len()).into());
    }
    let mut seen = HashSet::new();
    let mut stages = Vec::with_capacity(snapshots.len());
    for (name, preds) in snapshots {
        if !seen.insert(name.as_str()) {
            return Err(EvalError::DuplicateStage(name.clone()).into());
        }
        let report = span_f1(preds, gold).map_err(|e| match e {
            crate::Error::Eval(inner) => crate::Error::Eval(EvalError::Stage {
                stage: name.clone(),
                source: Box::new(inner),
            }),
            other => other,
        })?;
        stages.push(Stage {
            name: name.clone(),
            report,
        });
    }
    Ok(StageCurve { stages })
}

impl StageCurve {
    /// `stage,precision,recall,f1`, values printed at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,precision,recall,f1\n");
        for s in &self.stages {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                s.name, s.report.precision, s.report.recall, s.report.f1
            );
        }
        out
    }

    pub fn f1_column(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.report.f1).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntitySpan;

    fn gold(id: &str, n_tokens: usize, spans: &[(usize, usize, &str)]) -> AnnotatedSentence {
        let tokens: Vec<String> = (0..n_tokens).map(|i| format!("w{i}")).collect();
        let entities = spans
            .iter()
            .map(|&(s, e, t)| EntitySpan::from_tokens(&tokens, s, e, t))
            .collect();
        AnnotatedSentence::new(id, "d", tokens, entities).unwrap()
    }

    fn pred(id: &str, spans: &[(usize, usize, &str)]) -> SentencePredictions {
        SentencePredictions {
            id: id.into(),
            predictions: spans
                .iter()
                .map(|&(s, e, t)| Prediction {
                    start: s,
                    end: e,
                    surface: String::new(),
                    source_type: t.into(),
                    target_type: t.into(),
                    provenance: PredictionSource::Direct,
                })
                .collect(),
        }
    }

    #[test]
    fn hand_case() {
        let g = vec![gold("s", 10, &[(0, 1, "a"), (2, 3, "b"), (4, 5, "a"), (6, 7, "c")])];
        let p = vec![pred("s", &[(0, 1, "a"), (2, 3, "b"), (8, 9, "a")])];
        let r = span_f1(&p, &g).unwrap();
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 0.5).abs() < 1e-12);
        assert!((r.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(r.per_type["a"].counts, Counts { tp: 1, fp: 1, fn_: 1 });
        assert_eq!(r.per_type["c"].support, 1);
    }

    #[test]
    fn perfect_and_empty() {
        let g = vec![gold("s", 4, &[(0, 2, "a")]), gold("t", 3, &[])];
        let r = span_f1(&as_predictions(&g), &g).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = span_f1(&[pred("s", &[]), pred("t", &[])], &g).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn duplicates_are_false_positives() {
        let g = vec![gold("s", 4, &[(0, 2, "a")])];
        let r = span_f1(&[pred("s", &[(0, 2, "a"), (0, 2, "a")])], &g).unwrap();
        assert_eq!(r.counts, Counts { tp: 1, fp: 1, fn_: 0 });
    }

    #[test]
    fn id_mismatch() {
        let g = vec![gold("s", 2, &[])];
        assert!(span_f1(&[pred("t", &[])], &g).is_err());
        assert!(span_f1(&[], &g).is_err());
    }

    #[test]
    fn typewise_undefined_and_delta() {
        let g = vec![gold("s", 6, &[(0, 1, "politician"), (2, 3, "person"), (4, 5, "country")])];
        let d = vec![pred("s", &[(0, 1, "person"), (2, 3, "person")])];
        let e = vec![pred("s", &[(0, 1, "politician"), (2, 3, "person")])];
        let r = typewise_accuracy(&d, &e, &g).unwrap();
        assert_eq!(r.types["politician"].direct, Some(0.0));
        assert_eq!(r.types["politician"].enhanced, Some(1.0));
        assert_eq!(r.types["politician"].delta, Some(1.0));
        assert_eq!(r.types["country"].direct, None);
        assert_eq!(r.types["country"].support, 1);
        assert!(r.to_table().contains("n/a"));
        let same = typewise_accuracy(&d, &d, &g).unwrap();
        assert!(same.types.values().all(|a| a.delta.is_none_or(|x| x == 0.0)));
    }

    #[test]
    fn typewise_table_matches_reported_layout() {
        let mut types = BTreeMap::new();
        types.insert(
            "instrument".to_string(),
            TypeAccuracy {
                direct: Some(17.0 / 22.0),
                enhanced: Some(21.0 / 22.0),
                delta: Some(4.0 / 22.0),
                support: 22,
                direct_recognized: 22,
                enhanced_recognized: 22,
            },
        );
        let table = TypewiseReport { types }.to_table();
        assert!(table.contains("77.27"), "{table}");
        assert!(table.contains("95.45 (+18.18)"), "{table}");
    }

    #[test]
    fn curve_requires_two_unique_stages() {
        let g = vec![gold("s", 2, &[(0, 1, "a")])];
        let one = vec![("x".to_string(), as_predictions(&g))];
        assert!(continual_curve(&one, &g).is_err());
        let dup = vec![("x".to_string(), as_predictions(&g)), ("x".to_string(), as_predictions(&g))];
        assert!(continual_curve(&dup, &g).is_err());
        let bad = vec![("x".to_string(), as_predictions(&g)), ("y".to_string(), vec![])];
        let err = continual_curve(&bad, &g).unwrap_err();
        assert!(err.to_string().contains("stage y"), "{err}");
        let ok = vec![("x".to_string(), as_predictions(&g)), ("y".to_string(), as_predictions(&g))];
        let c = continual_curve(&ok, &g).unwrap();
        assert_eq!(c.to_csv(), "stage,precision,recall,f1\nx,1,1,1\ny,1,1,1\n");
    }
}
