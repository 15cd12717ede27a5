//! Teacher-forced example generation, negative sampling and the optimisation loop.

use std::collections::{BTreeMap, BTreeSet};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Grads;
use crate::corpus::{Document, EventRecord};
use crate::encoder::Vocab;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Query};
use crate::ontology::{fill_tokens, render_with_fills, trigger_index_set, Ontology, CONJUNCTION};
use crate::tags::{Span, SpanSet, TagSequence};
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleKind {
    Trigger,
    Argument,
    NegativeTrigger,
    /// Recast question-answering pair.
    Cloze,
}

/// One `(statement, focus, text)` triple with its gold tagging.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub statement: Vec<String>,
    /// 1-based statement positions of the focused placeholder.
    pub focus: Vec<usize>,
    pub text: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<Span>,
    pub gold: TagSequence,
    pub kind: ExampleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl TrainingExample {
    pub fn query(&self) -> Query<'_> {
        Query {
            statement: &self.statement,
            focus: &self.focus,
            text: &self.text,
            trigger: self.trigger,
            sentences: None,
        }
    }
}

/// A single-sentence slice of a document with its events in local coordinates.
struct Context<'a> {
    doc_id: &'a str,
    text: &'a [String],
    events: Vec<EventRecord>,
}

fn contexts(doc: &Document) -> Result<Vec<Context<'_>>> {
    let spans = doc.contexts();
    let mut out: Vec<Context<'_>> = spans
        .iter()
        .map(|s| Context {
            doc_id: &doc.doc_id,
            text: &doc.tokens[s.range()],
            events: Vec::new(),
        })
        .collect();
    for ev in &doc.events {
        let k = spans
            .iter()
            .position(|s| s.contains(&ev.trigger))
            .ok_or_else(|| Error::data(format!("document {}", doc.doc_id), format!("trigger {} crosses a sentence boundary", ev.trigger)))?;
        let by = 1 - spans[k].start as isize;
        let mut local = ev.clone();
        local.trigger = ev.trigger.shift(by);
        for (role, set) in local.arguments.iter_mut() {
            let moved: Vec<Span> = set.iter().map(|s| s.shift(by)).collect();
            if moved.iter().any(|s| !s.within(out[k].text.len())) {
                return Err(Error::data(
                    format!("document {}", doc.doc_id),
                    format!("argument {role} of the {} event leaves its sentence", ev.event_type),
                ));
            }
            *set = SpanSet::new(moved)?;
        }
        out[k].events.push(local);
    }
    Ok(out)
}

/// Trigger and teacher-forced argument examples for every gold event.
///
/// Per `(sentence, event type)` one trigger example marks all triggers of that
/// type; per event, one argument example per role in fill order, with earlier
/// roles replaced by their gold spans.
pub fn generate_examples(ontology: &Ontology, docs: &[Document]) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for doc in docs {
        doc.validate()?;
        for ctx in contexts(doc)? {
            generate_in_context(ontology, &ctx, &mut out)?;
        }
    }
    Ok(out)
}

fn generate_in_context(ontology: &Ontology, ctx: &Context<'_>, out: &mut Vec<TrainingExample>) -> Result<()> {
    let where_ = || format!("document {}", ctx.doc_id);
    let m = ctx.text.len();
    let mut trigger_done = BTreeSet::new();
    for ev in &ctx.events {
        let stmt = ontology
            .get(&ev.event_type)
            .ok_or_else(|| Error::data(where_(), format!("unknown event type {:?}", ev.event_type)))?;
        if !ev.trigger.within(m) {
            return Err(Error::data(where_(), format!("trigger {} out of bounds", ev.trigger)));
        }
        for role in ev.arguments.keys() {
            if stmt.slot(role).is_none() {
                return Err(Error::data(where_(), format!("role {role:?} not in {} statement", ev.event_type)));
            }
        }

        if trigger_done.insert(ev.event_type.as_str()) {
            let triggers: BTreeSet<Span> = ctx
                .events
                .iter()
                .filter(|e| e.event_type == ev.event_type)
                .map(|e| e.trigger)
                .collect();
            let gold = SpanSet::new(triggers.into_iter().collect())
                .map_err(|e| Error::data(where_(), e.to_string()))?
                .to_tags(m)?;
            out.push(TrainingExample {
                statement: stmt.tokens.clone(),
                focus: trigger_index_set(stmt)?,
                text: ctx.text.to_vec(),
                trigger: None,
                gold,
                kind: ExampleKind::Trigger,
                event_type: Some(ev.event_type.clone()),
                role: None,
            });
        }

        let mut fills: Vec<Option<Vec<String>>> = vec![None; stmt.placeholders.len()];
        for (k, slot) in stmt.placeholders.iter().enumerate() {
            let layout = render_with_fills(stmt, &fills);
            let focus: Vec<usize> = (layout.slots[k].start..layout.slots[k].end).collect();
            let gold_spans = ev.arguments.get(&slot.role).cloned().unwrap_or_default();
            out.push(TrainingExample {
                statement: layout.tokens,
                focus,
                text: ctx.text.to_vec(),
                trigger: Some(ev.trigger),
                gold: gold_spans.to_tags(m)?,
                kind: ExampleKind::Argument,
                event_type: Some(ev.event_type.clone()),
                role: Some(slot.role.clone()),
            });
            if !gold_spans.is_empty() {
                fills[k] = Some(fill_tokens(&gold_spans, ctx.text));
            }
        }
    }
    Ok(())
}

/// `⌈rate/100 · available⌉`, with `rate` in percent.
pub fn negative_count(rate: f64, available: usize) -> usize {
    let x = rate * available as f64 / 100.0;
    (x - 1e-9).ceil().max(0.0) as usize
}

/// All-O trigger examples for event types absent from each event's sentence.
pub fn sample_negatives<R: rand::Rng>(
    docs: &[Document],
    ontology: &Ontology,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<TrainingExample>> {
    if !(0.0..=100.0).contains(&rate) {
        return Err(Error::data("negative sampling", format!("rate {rate} outside [0, 100]")));
    }
    let mut out = Vec::new();
    for doc in docs {
        for ctx in contexts(doc)? {
            let present: BTreeSet<&str> = ctx.events.iter().map(|e| e.event_type.as_str()).collect();
            let absent: Vec<_> = ontology
                .statements()
                .iter()
                .filter(|s| !present.contains(s.event_type.as_str()))
                .collect();
            let k = negative_count(rate, absent.len());
            for _ in &ctx.events {
                for stmt in absent.choose_multiple(rng, k) {
                    out.push(TrainingExample {
                        statement: stmt.tokens.clone(),
                        focus: trigger_index_set(stmt)?,
                        text: ctx.text.to_vec(),
                        trigger: None,
                        gold: TagSequence::all_outside(ctx.text.len()),
                        kind: ExampleKind::NegativeTrigger,
                        event_type: Some(stmt.event_type.clone()),
                        role: None,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Vocabulary over the ontology, the corpus texts and the conjunction token.
pub fn build_vocab(ontology: &Ontology, docs: &[Document], lowercase: bool) -> Vocab {
    let mut v = Vocab::new(lowercase);
    v.extend([CONJUNCTION]);
    for s in ontology.statements() {
        v.extend(s.tokens.iter().map(String::as_str));
    }
    for d in docs {
        v.extend(d.tokens.iter().map(String::as_str));
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub clip_norm: f64,
    /// Negative sampling rate in percent.
    pub negative_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::finetune()
    }
}

impl TrainConfig {
    /// Settings used when pre-training on recast QA data.
    pub fn pretrain() -> Self {
        Self {
            learning_rate: 3e-5,
            epochs: 3,
            clip_norm: 1.0,
            negative_rate: 0.0,
            batch_size: 32,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }

    /// Settings used when fine-tuning on event data.
    pub fn finetune() -> Self {
        Self {
            learning_rate: 1e-5,
            epochs: 8,
            negative_rate: 30.0,
            ..Self::pretrain()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::data("train config", m));
        if !(0.0..=100.0).contains(&self.negative_rate) {
            return bad(format!("negative rate {} outside [0, 100]", self.negative_rate));
        }
        if self.clip_norm.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return bad(format!("clip norm {} must be positive", self.clip_norm));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        Ok(())
    }
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut Grads<f64>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Mat<f64>>,
    v: Vec<Mat<f64>>,
}

impl Adam {
    pub fn new(model: &Model, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Mat<f64>> = model.store.iter().map(|(_, _, p)| Mat::zeros(p.rows, p.cols)).collect();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, model: &mut Model, grads: &Grads<f64>) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            let Some(g) = grads.get(id) else { continue };
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let p = model.store.get_mut(id);
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = m.data[k] / c1;
                let vhat = v.data[k] / c2;
                p.data[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean NLL per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Mean loss and gradient over a batch; per-example work may run in parallel,
/// the reduction is always in batch order.
pub fn batch_gradient(model: &Model, batch: &[&TrainingExample]) -> Result<(f64, Grads<f64>)> {
    let results: Vec<Result<(f64, Grads<f64>)>> =
        batch.par_iter().map(|ex| model.nll_loss(&ex.query(), &ex.gold)).collect();
    let mut total = 0.0;
    let mut grads = Grads::zeros_like(&model.store);
    for (k, r) in results.into_iter().enumerate() {
        let (loss, g) = r?;
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss {loss} on batch item {k} ({:?} example, type {:?})",
                batch[k].kind, batch[k].event_type
            )));
        }
        total += loss;
        grads.accumulate(&g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}

/// Minibatch Adam over `examples` plus, each epoch, whatever `extra` returns.
pub fn train_with(
    model: &mut Model,
    examples: &[TrainingExample],
    config: &TrainConfig,
    mut extra: impl FnMut(usize) -> Result<Vec<TrainingExample>>,
) -> Result<TrainReport> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::data("train", "no training examples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Adam::new(model, config);
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(config.epochs),
        steps: 0,
    };
    for epoch in 0..config.epochs {
        let added = extra(epoch)?;
        let mut pool: Vec<&TrainingExample> = examples.iter().chain(&added).collect();
        pool.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in pool.chunks(config.batch_size) {
            let (loss, mut grads) = batch_gradient(model, batch)?;
            clip_grad_norm(&mut grads, config.clip_norm);
            opt.update(model, &grads);
            if !model.store.is_finite() {
                return Err(Error::Training(format!("parameters became non-finite at step {}", report.steps)));
            }
            sum += loss * batch.len() as f64;
            report.steps += 1;
        }
        let mean = sum / pool.len() as f64;
        info!("epoch {} mean nll {mean:.6} over {} examples", epoch + 1, pool.len());
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

pub fn train(model: &mut Model, examples: &[TrainingExample], config: &TrainConfig) -> Result<TrainReport> {
    train_with(model, examples, config, |_| Ok(Vec::new()))
}

/// Trains on gold events, drawing fresh negatives from `docs` every epoch.
pub fn train_on_corpus(
    model: &mut Model,
    ontology: &Ontology,
    docs: &[Document],
    config: &TrainConfig,
) -> Result<TrainReport> {
    let examples = generate_examples(ontology, docs)?;
    let seed = config.seed;
    let rate = config.negative_rate;
    train_with(model, &examples, config, |epoch| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(epoch as u64 + 1));
        sample_negatives(docs, ontology, rate, &mut rng)
    })
}

/// Builds a model over the vocabulary of `ontology` and `docs` and trains it.
/// Initialisation draws from `config.seed`.
pub fn fit(
    model_config: ModelConfig,
    ontology: &Ontology,
    docs: &[Document],
    config: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let vocab = build_vocab(ontology, docs, model_config.encoder.lowercase);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::new(model_config, vocab, &mut rng)?;
    let report = train_on_corpus(&mut model, ontology, docs, config)?;
    Ok((model, report))
}

/// Example counts per kind, for logs.
pub fn summarize(examples: &[TrainingExample]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for e in examples {
        *m.entry(format!("{:?}", e.kind)).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::parse_ontology;

    const ONTO: &str = "\
Life:Die :: [agent|someone] killed [victim|someone else] with [instrument|something] in [place|some place] at [time|some time]
Life:Marry :: [person|some people] married in [place|some location] at [time|some time]
";

    fn checkpoint_doc() -> Document {
        serde_json::from_str(
            r#"{"doc_id":"fig","tokens":["On","Saturday",",","coalition","forces","killed","a","man","at","a","checkpoint","."],
               "events":[{"type":"Life:Die","trigger":[6,7],"args":{"agent":[[4,6]],"victim":[[7,9]],"place":[[10,12]],"time":[[2,3]]}}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn checkpoint_event_yields_trigger_plus_one_example_per_role() {
        let o = parse_ontology(ONTO).unwrap();
        let ex = generate_examples(&o, &[checkpoint_doc()]).unwrap();
        assert_eq!(ex.len(), 6);
        assert_eq!(ex[0].kind, ExampleKind::Trigger);
        assert_eq!(ex[0].focus, vec![2, 5, 7, 10]);
        assert_eq!(decode(&ex[0]), vec![Span::new(6, 7)]);
        let roles: Vec<_> = ex[1..].iter().map(|e| e.role.clone().unwrap()).collect();
        assert_eq!(roles, ["agent", "victim", "instrument", "place", "time"]);
        let all_o: Vec<_> = ex[1..].iter().filter(|e| e.gold.is_all_outside()).collect();
        assert_eq!(all_o.len(), 1);
        assert_eq!(all_o[0].role.as_deref(), Some("instrument"));

        // Statements seen by each round, with earlier gold arguments forced in.
        let stmts: Vec<String> = ex[1..].iter().map(|e| e.statement.join(" ")).collect();
        assert_eq!(stmts[0], "someone killed someone else with something in some place at some time");
        assert_eq!(stmts[1], "coalition forces killed someone else with something in some place at some time");
        assert_eq!(stmts[2], "coalition forces killed a man with something in some place at some time");
        assert_eq!(stmts[3], "coalition forces killed a man with something in some place at some time");
        assert_eq!(stmts[4], "coalition forces killed a man with something in a checkpoint at some time");
        let focus_words: Vec<String> = ex[1..]
            .iter()
            .map(|e| e.focus.iter().map(|&i| e.statement[i - 1].clone()).collect::<Vec<_>>().join(" "))
            .collect();
        assert_eq!(focus_words, ["someone", "someone else", "something", "some place", "some time"]);
        assert!(ex[1..].iter().all(|e| e.trigger == Some(Span::new(6, 7))));
    }

    fn decode(e: &TrainingExample) -> Vec<Span> {
        crate::tags::decode_spans(&e.gold).spans().to_vec()
    }

    #[test]
    fn event_without_arguments() {
        let o = parse_ontology(ONTO).unwrap();
        let mut d = checkpoint_doc();
        d.events[0].arguments.clear();
        let ex = generate_examples(&o, &[d]).unwrap();
        assert_eq!(ex.len(), 6);
        assert!(ex[1..].iter().all(|e| e.gold.is_all_outside()));
    }

    #[test]
    fn multi_span_role_is_joined_and_tagged() {
        let o = parse_ontology(ONTO).unwrap();
        let d: Document = serde_json::from_str(
            r#"{"doc_id":"m","tokens":["Kim","and","Pat","married","Sunday"],
               "events":[{"type":"Life:Marry","trigger":[4,5],"args":{"person":[[3,4],[1,2]],"time":[[5,6]]}}]}"#,
        )
        .unwrap();
        let ex = generate_examples(&o, &[d]).unwrap();
        assert_eq!(decode(&ex[1]), vec![Span::new(1, 2), Span::new(3, 4)]);
        assert_eq!(ex[2].statement.join(" "), "Kim and Pat married in some location at some time");
    }

    #[test]
    fn unknown_type_and_bad_spans_are_errors() {
        let o = parse_ontology(ONTO).unwrap();
        let mut d = checkpoint_doc();
        d.events[0].event_type = "Nope".into();
        assert!(generate_examples(&o, &[d]).is_err());
        let mut d = checkpoint_doc();
        d.events[0].trigger = Span::new(12, 14);
        assert!(generate_examples(&o, &[d]).is_err());
        let mut d = checkpoint_doc();
        d.events[0].arguments.insert("weapon".into(), SpanSet::single(Span::new(1, 2)));
        assert!(generate_examples(&o, &[d]).is_err());
    }

    fn ten_type_ontology() -> Ontology {
        let src: String = (0..10).map(|k| format!("T{k} :: [a|someone] did{k} it\n")).collect();
        parse_ontology(&src).unwrap()
    }

    fn one_event_doc(ty: &str) -> Document {
        let mut d = Document::new("d", "x did0 it");
        d.events.push(EventRecord {
            event_type: ty.into(),
            trigger: Span::new(2, 3),
            arguments: BTreeMap::new(),
        });
        d
    }

    #[test]
    fn negative_counts() {
        let o = ten_type_ontology();
        let docs = [one_event_doc("T0")];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_negatives(&docs, &o, 0.0, &mut rng).unwrap().is_empty());
        let all = sample_negatives(&docs, &o, 100.0, &mut rng).unwrap();
        let types: BTreeSet<_> = all.iter().map(|e| e.event_type.clone().unwrap()).collect();
        assert_eq!((all.len(), types.len()), (9, 9));
        let thirty = sample_negatives(&docs, &o, 30.0, &mut rng).unwrap();
        assert_eq!(thirty.len(), 3);
        assert!(thirty.iter().all(|e| e.gold.is_all_outside() && e.kind == ExampleKind::NegativeTrigger));
        assert!(thirty.iter().all(|e| e.event_type.as_deref() != Some("T0")));
        assert_eq!(negative_count(30.0, 9), 3);
        assert_eq!(negative_count(10.0, 10), 1);
        assert_eq!(negative_count(30.0, 0), 0);
        assert!(sample_negatives(&docs, &o, 101.0, &mut rng).is_err());
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = Grads {
            by_param: vec![Some(Mat::from_vec(1, 2, vec![3.0, 4.0])), None],
        };
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!(g.global_norm() <= 1.0 + 1e-9);
    }

    #[test]
    fn presets() {
        let p = TrainConfig::pretrain();
        assert_eq!((p.learning_rate, p.epochs, p.clip_norm), (3e-5, 3, 1.0));
        let f = TrainConfig::finetune();
        assert_eq!((f.learning_rate, f.epochs, f.clip_norm, f.negative_rate), (1e-5, 8, 1.0, 30.0));
        let mut bad = f.clone();
        bad.clip_norm = 0.0;
        assert!(bad.validate().is_err());
    }
}
