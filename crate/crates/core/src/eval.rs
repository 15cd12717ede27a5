//! Trigger/argument identification and classification scores, plus the
//! few-shot and leave-one-out protocols.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::engine::extract_document;
use crate::error::{Error, Result};
use crate::model::ArgSelector;
use crate::ontology::Ontology;
use crate::tags::Span;
use crate::training::generate_examples;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Metric {
    /// Precision is 0 when nothing was predicted; F1 is 0 when P+R=0.
    pub fn from_counts(matched: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            matched,
            predicted,
            gold,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub trigger_id: Metric,
    pub trigger_cls: Metric,
    pub arg_id: Metric,
    pub arg_cls: Metric,
}

impl ScoreReport {
    pub fn metrics(&self) -> [(&'static str, &Metric); 4] {
        [
            ("trigger-id", &self.trigger_id),
            ("trigger-cls", &self.trigger_cls),
            ("arg-id", &self.arg_id),
            ("arg-cls", &self.arg_cls),
        ]
    }

    pub fn min_f1(&self) -> f64 {
        self.metrics().iter().map(|(_, m)| m.f1).fold(f64::INFINITY, f64::min)
    }
}

type Bag<K> = BTreeMap<K, usize>;

fn multiset_match<K: Ord>(pred: &Bag<K>, gold: &Bag<K>) -> usize {
    pred.iter().map(|(k, &n)| n.min(gold.get(k).copied().unwrap_or(0))).sum()
}

#[derive(Default)]
struct Tuples<'a> {
    trig_id: Bag<(&'a str, Span)>,
    trig_cls: Bag<(&'a str, Span, &'a str)>,
    arg_id: Bag<(&'a str, Span, &'a str)>,
    arg_cls: Bag<(&'a str, Span, &'a str, &'a str)>,
}

impl<'a> Tuples<'a> {
    fn collect(docs: &'a [Document], which: &str) -> Result<Self> {
        let mut t = Tuples::default();
        for d in docs {
            let id = d.doc_id.as_str();
            let m = d.tokens.len();
            let check = |s: &Span| {
                if s.within(m) {
                    Ok(())
                } else {
                    Err(Error::data(format!("{which} document {id}"), format!("span {s} out of bounds")))
                }
            };
            for ev in &d.events {
                check(&ev.trigger)?;
                let ty = ev.event_type.as_str();
                *t.trig_id.entry((id, ev.trigger)).or_default() += 1;
                *t.trig_cls.entry((id, ev.trigger, ty)).or_default() += 1;
                for (role, spans) in &ev.arguments {
                    for &s in spans {
                        check(&s)?;
                        *t.arg_id.entry((id, s, ty)).or_default() += 1;
                        *t.arg_cls.entry((id, s, ty, role.as_str())).or_default() += 1;
                    }
                }
            }
        }
        Ok(t)
    }
}

fn total<K>(b: &Bag<K>) -> usize {
    b.values().sum()
}

fn metric<K: Ord>(p: &Bag<K>, g: &Bag<K>) -> Metric {
    Metric::from_counts(multiset_match(p, g), total(p), total(g))
}

/// Exact-match scores. Each argument span is one item; duplicates match at most once.
pub fn score(predictions: &[Document], gold: &[Document]) -> Result<ScoreReport> {
    let ids = |docs: &[Document]| docs.iter().map(|d| d.doc_id.clone()).collect::<BTreeSet<_>>();
    if ids(predictions) != ids(gold) {
        return Err(Error::data("score", "prediction and gold document ids differ"));
    }
    let p = Tuples::collect(predictions, "predicted")?;
    let g = Tuples::collect(gold, "gold")?;
    Ok(ScoreReport {
        trigger_id: metric(&p.trig_id, &g.trig_id),
        trigger_cls: metric(&p.trig_cls, &g.trig_cls),
        arg_id: metric(&p.arg_id, &g.arg_id),
        arg_cls: metric(&p.arg_cls, &g.arg_cls),
    })
}

/// Documents with only the events of `event_type`.
pub fn restrict_to_type(docs: &[Document], event_type: &str) -> Vec<Document> {
    docs.iter()
        .map(|d| {
            let mut d = d.clone();
            d.events.retain(|e| e.event_type == event_type);
            d
        })
        .collect()
}

/// Per-type scores over the types present in the ontology.
pub fn score_by_type(predictions: &[Document], gold: &[Document], ontology: &Ontology) -> Result<Vec<(String, ScoreReport)>> {
    ontology
        .event_types()
        .map(|t| Ok((t.to_string(), score(&restrict_to_type(predictions, t), &restrict_to_type(gold, t))?)))
        .collect()
}

/// Unweighted mean of P, R and F1 per metric; counts are summed.
pub fn macro_average(reports: &[ScoreReport]) -> Result<ScoreReport> {
    if reports.is_empty() {
        return Err(Error::data("macro_average", "no reports"));
    }
    let n = reports.len() as f64;
    let avg = |f: fn(&ScoreReport) -> &Metric| {
        let mut m = Metric::default();
        for r in reports {
            let x = f(r);
            m.precision += x.precision / n;
            m.recall += x.recall / n;
            m.f1 += x.f1 / n;
            m.matched += x.matched;
            m.predicted += x.predicted;
            m.gold += x.gold;
        }
        m
    };
    Ok(ScoreReport {
        trigger_id: avg(|r| &r.trigger_id),
        trigger_cls: avg(|r| &r.trigger_cls),
        arg_id: avg(|r| &r.arg_id),
        arg_cls: avg(|r| &r.arg_cls),
    })
}

/// Runs extraction over documents in parallel; output order follows input order.
pub fn extract_corpus<S: ArgSelector + Sync + ?Sized>(selector: &S, ontology: &Ontology, docs: &[Document]) -> Vec<Document> {
    docs.par_iter().map(|d| extract_document(selector, ontology, d)).collect()
}

/// The first `n` training documents, for few-shot sweeps.
pub fn truncate_docs(docs: &[Document], n: usize) -> &[Document] {
    &docs[..n.min(docs.len())]
}

/// One row per `(document count, metric)` for plotting.
pub fn curve_csv(points: &[(usize, ScoreReport)]) -> String {
    let mut s = String::from("docs,metric,precision,recall,f1\n");
    for (n, r) in points {
        for (name, m) in r.metrics() {
            let _ = writeln!(s, "{n},{name},{:.6},{:.6},{:.6}", m.precision, m.recall, m.f1);
        }
    }
    s
}

/// Aligned text table: one row per labelled report, P/R/F1 per metric.
pub fn format_table(rows: &[(String, ScoreReport)]) -> String {
    let w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut s = format!("{:w$}", "");
    for name in ["trigger-id", "trigger-cls", "arg-id", "arg-cls"] {
        let _ = write!(s, " | {name:^20}");
    }
    s.push('\n');
    let _ = write!(s, "{:w$}", "");
    for _ in 0..4 {
        let _ = write!(s, " | {:>6} {:>6} {:>6}", "P", "R", "F1");
    }
    s.push('\n');
    for (label, r) in rows {
        let _ = write!(s, "{label:w$}");
        for (_, m) in r.metrics() {
            let _ = write!(s, " | {:>6.1} {:>6.1} {:>6.1}", 100.0 * m.precision, 100.0 * m.recall, 100.0 * m.f1);
        }
        s.push('\n');
    }
    s
}

/// Training view for holding out `event_type`: its events removed, documents kept,
/// and the ontology without it.
pub fn held_out_split(docs: &[Document], ontology: &Ontology, event_type: &str) -> (Ontology, Vec<Document>) {
    let train = docs
        .iter()
        .map(|d| {
            let mut d = d.clone();
            d.events.retain(|e| e.event_type != event_type);
            d
        })
        .collect();
    (ontology.filter(|t| t != event_type), train)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOut {
    pub per_type: Vec<(String, ScoreReport)>,
    pub macro_avg: ScoreReport,
}

impl LeaveOneOut {
    pub fn table(&self) -> String {
        let mut rows = self.per_type.clone();
        rows.push(("macro".into(), self.macro_avg));
        format_table(&rows)
    }
}

/// For each type: train on the others, extract it from `docs` with only its
/// statement, and score against its gold events.
pub fn leave_one_out<S, F>(docs: &[Document], ontology: &Ontology, mut train_fn: F) -> Result<LeaveOneOut>
where
    S: ArgSelector + Sync,
    F: FnMut(&str, &Ontology, &[Document]) -> Result<S>,
{
    if ontology.len() < 2 {
        return Err(Error::data("leave_one_out", "needs at least two event types"));
    }
    let mut per_type = Vec::new();
    for held in ontology.event_types() {
        let (train_onto, train_docs) = held_out_split(docs, ontology, held);
        if generate_examples(&train_onto, &train_docs)?
            .iter()
            .any(|e| e.event_type.as_deref() == Some(held))
        {
            return Err(Error::data("leave_one_out", format!("{held} leaked into its training examples")));
        }
        let model = train_fn(held, &train_onto, &train_docs)?;
        let test_onto = ontology.filter(|t| t == held);
        let pred = extract_corpus(&model, &test_onto, docs);
        let r = score(&pred, &restrict_to_type(docs, held))?;
        info!("held out {held}: trigger-id F1 {:.3}, arg-cls F1 {:.3}", r.trigger_id.f1, r.arg_cls.f1);
        per_type.push((held.to_string(), r));
    }
    let reports: Vec<ScoreReport> = per_type.iter().map(|(_, r)| *r).collect();
    Ok(LeaveOneOut {
        macro_avg: macro_average(&reports)?,
        per_type,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EventRecord;
    use crate::tags::SpanSet;

    fn doc(id: &str, events: Vec<EventRecord>) -> Document {
        let mut d = Document::new(id, "a b c d e f g h");
        d.events = events;
        d
    }

    fn ev(ty: &str, t: (usize, usize), args: &[(&str, (usize, usize))]) -> EventRecord {
        let mut arguments = BTreeMap::new();
        for (r, s) in args {
            arguments.insert(r.to_string(), SpanSet::single((*s).into()));
        }
        EventRecord {
            event_type: ty.into(),
            trigger: t.into(),
            arguments,
        }
    }

    #[test]
    fn perfect_and_empty() {
        let g = vec![doc("1", vec![ev("A", (1, 2), &[("x", (3, 4))])])];
        let r = score(&g, &g).unwrap();
        assert!(r.metrics().iter().all(|(_, m)| m.f1 == 1.0 && m.precision == 1.0));
        let r = score(&[doc("1", vec![])], &g).unwrap();
        assert_eq!((r.trigger_id.precision, r.trigger_id.recall, r.trigger_id.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn one_right_one_spurious() {
        let g = vec![doc("1", vec![ev("A", (1, 2), &[]), ev("A", (5, 6), &[])])];
        let p = vec![doc("1", vec![ev("A", (1, 2), &[]), ev("A", (7, 8), &[])])];
        let r = score(&p, &g).unwrap();
        assert_eq!((r.trigger_id.precision, r.trigger_id.recall, r.trigger_id.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn classification_is_stricter() {
        let g = vec![doc("1", vec![ev("A", (1, 2), &[("x", (3, 4))])])];
        let p = vec![doc("1", vec![ev("A", (1, 2), &[("y", (3, 4))]), ev("B", (5, 6), &[("x", (3, 4))])])];
        let r = score(&p, &g).unwrap();
        assert_eq!(r.trigger_id.matched, 1);
        assert_eq!(r.arg_id.matched, 1);
        assert_eq!(r.arg_cls.matched, 0);
        assert_eq!(r.arg_id.predicted, 2);
    }

    #[test]
    fn duplicates_do_not_double_count() {
        let g = vec![doc("1", vec![ev("A", (1, 2), &[])])];
        let p = vec![doc("1", vec![ev("A", (1, 2), &[]), ev("A", (1, 2), &[])])];
        let r = score(&p, &g).unwrap();
        assert_eq!((r.trigger_cls.matched, r.trigger_cls.predicted), (1, 2));
    }

    #[test]
    fn errors() {
        let g = vec![doc("1", vec![])];
        assert!(score(&[doc("2", vec![])], &g).is_err());
        assert!(score(&[doc("1", vec![ev("A", (8, 10), &[])])], &g).is_err());
        assert!(macro_average(&[]).is_err());
    }

    #[test]
    fn macro_is_unweighted() {
        let mut a = ScoreReport::default();
        a.trigger_id.f1 = 0.2;
        let mut b = ScoreReport::default();
        b.trigger_id.f1 = 0.6;
        let m = macro_average(&[a, b]).unwrap();
        assert!((m.trigger_id.f1 - 0.4).abs() < 1e-15);
        assert_eq!(macro_average(&[a, a]).unwrap(), a);
    }

    #[test]
    fn held_out_split_keeps_documents() {
        let docs = vec![doc("1", vec![ev("A", (1, 2), &[]), ev("B", (3, 4), &[])])];
        let onto = crate::ontology::parse_ontology("A :: [x|someone] a\nB :: [x|someone] b\n").unwrap();
        let (o, d) = held_out_split(&docs, &onto, "A");
        assert_eq!(o.event_types().collect::<Vec<_>>(), ["B"]);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].event_types().collect::<Vec<_>>(), ["B"]);
    }

    #[test]
    fn table_and_csv() {
        let rows = vec![("all".to_string(), ScoreReport::default())];
        let t = format_table(&rows);
        assert_eq!(t.lines().count(), 3);
        let c = curve_csv(&[(5, ScoreReport::default())]);
        assert_eq!(c.lines().count(), 5);
    }
}
