//! Incremental statement refinement (argument extraction) and the per-type,
//! per-trigger event extraction loop built on top of it.

use std::collections::BTreeMap;

use log::{debug, warn};
use serde::Serialize;

use crate::corpus::{Document, EventRecord};
use crate::error::{Error, Result};
use crate::model::{ArgSelector, Query};
use crate::ontology::{fill_tokens, render_with_fills, trigger_index_set, BleachedStatement, Ontology, Rendered};
use crate::tags::{Span, SpanSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotStatus {
    Unvisited,
    Filled(SpanSet),
    Skipped,
}

/// A statement part-way through refinement.
///
/// The rendered tokens and current slot positions are always derived from the
/// base statement plus the recorded fills.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementState {
    base: BleachedStatement,
    text: Vec<String>,
    order: Vec<usize>,
    status: Vec<SlotStatus>,
    round: usize,
}

impl RefinementState {
    pub fn new(base: &BleachedStatement, text: &[String]) -> Self {
        Self::with_order(base, text, (0..base.placeholders.len()).collect())
            .expect("identity order is a permutation")
    }

    /// Visits placeholders in `order` (a permutation of slot indices).
    pub fn with_order(base: &BleachedStatement, text: &[String], order: Vec<usize>) -> Result<Self> {
        let k = base.placeholders.len();
        let mut seen = vec![false; k];
        for &i in &order {
            if i >= k || std::mem::replace(&mut seen[i], true) {
                return Err(Error::data("fill order", format!("{order:?} is not a permutation of 0..{k}")));
            }
        }
        if order.len() != k {
            return Err(Error::data("fill order", format!("{order:?} is not a permutation of 0..{k}")));
        }
        Ok(Self {
            base: base.clone(),
            text: text.to_vec(),
            order,
            status: vec![SlotStatus::Unvisited; k],
            round: 1,
        })
    }

    pub fn base(&self) -> &BleachedStatement {
        &self.base
    }

    /// 1-based round counter; `placeholders + 1` once every role was visited.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn status(&self) -> &[SlotStatus] {
        &self.status
    }

    /// Slot index focused in the current round.
    pub fn focus_slot(&self) -> Option<usize> {
        self.order.get(self.round - 1).copied()
    }

    pub fn is_done(&self) -> bool {
        self.focus_slot().is_none()
    }

    pub fn layout(&self) -> Rendered {
        let fills: Vec<Option<Vec<String>>> = self
            .status
            .iter()
            .map(|s| match s {
                SlotStatus::Filled(spans) => Some(fill_tokens(spans, &self.text)),
                _ => None,
            })
            .collect();
        render_with_fills(&self.base, &fills)
    }

    pub fn rendered(&self) -> Vec<String> {
        self.layout().tokens
    }

    /// Current positions of the focused placeholder.
    pub fn focus_indices(&self) -> Option<Vec<usize>> {
        let k = self.focus_slot()?;
        let span = self.layout().slots[k];
        Some((span.start..span.end).collect())
    }

    /// Records the answer for the focused role and moves to the next one.
    pub fn advance(&mut self, answer: SpanSet) {
        let k = self.focus_slot().expect("advance past the last role");
        self.status[k] = if answer.is_empty() {
            SlotStatus::Skipped
        } else {
            SlotStatus::Filled(answer)
        };
        self.round += 1;
    }

    /// Role → answer for every filled role.
    pub fn arguments(&self) -> BTreeMap<String, SpanSet> {
        self.base
            .placeholders
            .iter()
            .zip(&self.status)
            .filter_map(|(slot, st)| match st {
                SlotStatus::Filled(s) => Some((slot.role.clone(), s.clone())),
                _ => None,
            })
            .collect()
    }
}

/// One refinement round, for logging and inspection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundTrace {
    pub round: usize,
    pub role: String,
    pub statement: Vec<String>,
    pub focus: Vec<usize>,
    pub answer: SpanSet,
}

/// Text plus an optional trigger the encoder should mark.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub text: &'a [String],
    pub trigger: Option<Span>,
    pub sentences: Option<&'a [Span]>,
}

impl<'a> Context<'a> {
    pub fn new(text: &'a [String]) -> Self {
        Self {
            text,
            trigger: None,
            sentences: None,
        }
    }
}

/// Fills the statement's placeholders left to right; empty answers skip the role.
pub fn extract_args<S: ArgSelector + ?Sized>(
    selector: &S,
    stmt: &BleachedStatement,
    ctx: Context<'_>,
) -> Result<BTreeMap<String, SpanSet>> {
    Ok(extract_args_traced(selector, RefinementState::new(stmt, ctx.text), ctx)?.0)
}

/// Runs refinement from `state`, returning the extracted arguments and a per-round trace.
pub fn extract_args_traced<S: ArgSelector + ?Sized>(
    selector: &S,
    mut state: RefinementState,
    ctx: Context<'_>,
) -> Result<(BTreeMap<String, SpanSet>, Vec<RoundTrace>)> {
    if ctx.text.is_empty() {
        return Err(Error::data("extract_args", "empty text"));
    }
    let mut trace = Vec::with_capacity(state.base.placeholders.len());
    while let Some(k) = state.focus_slot() {
        let statement = state.rendered();
        let focus = state.focus_indices().expect("focus exists while not done");
        let answer = selector.get_args(&Query {
            statement: &statement,
            focus: &focus,
            text: ctx.text,
            trigger: ctx.trigger,
            sentences: ctx.sentences,
        })?;
        if let Some(bad) = answer.iter().find(|s| !s.within(ctx.text.len())) {
            return Err(Error::InvalidSpan(format!("selector returned {bad} outside the text")));
        }
        let rt = RoundTrace {
            round: state.round(),
            role: state.base.placeholders[k].role.clone(),
            statement,
            focus,
            answer: answer.clone(),
        };
        debug!(target: "refinement", "{}", serde_json::to_string(&rt).unwrap_or_default());
        trace.push(rt);
        state.advance(answer);
    }
    Ok((state.arguments(), trace))
}

/// Candidate trigger spans: the selector focused on every non-placeholder statement token.
pub fn identify_triggers<S: ArgSelector + ?Sized>(
    selector: &S,
    stmt: &BleachedStatement,
    text: &[String],
    sentences: Option<&[Span]>,
) -> Result<SpanSet> {
    let focus = trigger_index_set(stmt)?;
    selector.get_args(&Query {
        statement: &stmt.tokens,
        focus: &focus,
        text,
        trigger: None,
        sentences,
    })
}

/// Statement plus the trigger occurrence subsequent queries condition on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anchored<'a> {
    pub statement: &'a BleachedStatement,
    pub trigger: Span,
}

/// Binds a statement to a trigger occurrence; the statement tokens are left as they are.
pub fn anchor_trigger(stmt: &BleachedStatement, trigger: Span, text_len: usize) -> Result<Anchored<'_>> {
    if !trigger.within(text_len) {
        return Err(Error::InvalidSpan(format!("trigger {trigger} outside text of length {text_len}")));
    }
    Ok(Anchored {
        statement: stmt,
        trigger,
    })
}

/// Full extraction for one document, processed sentence by sentence when boundaries are given.
///
/// Output order: ontology order, then trigger start. Failures for one event type
/// or trigger are logged and skipped.
pub fn extract_events<S: ArgSelector + ?Sized>(
    selector: &S,
    ontology: &Ontology,
    doc: &Document,
) -> Vec<EventRecord> {
    let mut per_type: Vec<Vec<EventRecord>> = vec![Vec::new(); ontology.len()];
    for ctx_span in doc.contexts() {
        let text = &doc.tokens[ctx_span.range()];
        let offset = ctx_span.start as isize - 1;
        for (k, stmt) in ontology.statements().iter().enumerate() {
            for ev in extract_events_in(selector, stmt, text, &doc.doc_id) {
                per_type[k].push(shift_event(ev, offset));
            }
        }
    }
    per_type
        .into_iter()
        .flat_map(|mut evs| {
            evs.sort_by_key(|e| e.trigger);
            evs
        })
        .collect()
}

fn extract_events_in<S: ArgSelector + ?Sized>(
    selector: &S,
    stmt: &BleachedStatement,
    text: &[String],
    doc_id: &str,
) -> Vec<EventRecord> {
    let triggers = match identify_triggers(selector, stmt, text, None) {
        Ok(t) => t,
        Err(e) => {
            warn!("{doc_id}: trigger identification for {} failed: {e}", stmt.event_type);
            return Vec::new();
        }
    };
    let mut out = Vec::new();
    for &t in triggers.iter() {
        let result = anchor_trigger(stmt, t, text.len()).and_then(|anchored| {
            let ctx = Context {
                text,
                trigger: Some(anchored.trigger),
                sentences: None,
            };
            extract_args(selector, anchored.statement, ctx)
        });
        match result {
            Ok(arguments) => out.push(EventRecord {
                event_type: stmt.event_type.clone(),
                trigger: t,
                arguments,
            }),
            Err(e) => warn!("{doc_id}: {} event at {t} skipped: {e}", stmt.event_type),
        }
    }
    out
}

fn shift_event(mut ev: EventRecord, by: isize) -> EventRecord {
    if by == 0 {
        return ev;
    }
    ev.trigger = ev.trigger.shift(by);
    for spans in ev.arguments.values_mut() {
        *spans = SpanSet::new(spans.iter().map(|s| s.shift(by)).collect()).expect("shift preserves validity");
    }
    ev
}

/// Extraction output document: the input text with predicted events.
pub fn extract_document<S: ArgSelector + ?Sized>(selector: &S, ontology: &Ontology, doc: &Document) -> Document {
    Document {
        doc_id: doc.doc_id.clone(),
        tokens: doc.tokens.clone(),
        events: extract_events(selector, ontology, doc),
        sentences: doc.sentences.clone(),
    }
}
