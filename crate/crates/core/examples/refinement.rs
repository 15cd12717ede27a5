//! Walk through incremental refinement with a hand-written selector, printing
//! the statement seen in every round.
//!
//!     cargo run --example refinement

use bleached::engine::{anchor_trigger, extract_args_traced, identify_triggers, Context, RefinementState};
use bleached::model::{ArgSelector, Query};
use bleached::{parse_ontology, Span, SpanSet};

/// Answers by looking up the focused placeholder words in a fixed table.
struct Lookup(Vec<(&'static str, Vec<Span>)>);

impl ArgSelector for Lookup {
    fn get_args(&self, q: &Query<'_>) -> bleached::Result<SpanSet> {
        let key: Vec<&str> = q.focus.iter().map(|&i| q.statement[i - 1].as_str()).collect();
        let key = key.join(" ");
        let spans = self.0.iter().find(|(k, _)| *k == key).map(|(_, s)| s.clone()).unwrap_or_default();
        SpanSet::new(spans)
    }
}

fn main() -> bleached::Result<()> {
    let ontology = parse_ontology(
        "Life:Die :: [agent|someone] killed [victim|someone else] with [instrument|something] in [place|some place] at [time|some time]",
    )?;
    let stmt = &ontology.statements()[0];
    let text: Vec<String> = "On Saturday , coalition forces killed a man at a checkpoint ."
        .split_whitespace()
        .map(String::from)
        .collect();
    let selector = Lookup(vec![
        ("killed with in at", vec![Span::new(6, 7)]),
        ("someone", vec![Span::new(4, 6)]),
        ("someone else", vec![Span::new(7, 9)]),
        ("some place", vec![Span::new(10, 12)]),
        ("some time", vec![Span::new(2, 3)]),
    ]);

    let triggers = identify_triggers(&selector, stmt, &text, None)?;
    for &t in triggers.iter() {
        println!("trigger {:?} at {t}", t.text(&text).join(" "));
        let anchored = anchor_trigger(stmt, t, text.len())?;
        let ctx = Context {
            text: &text,
            trigger: Some(anchored.trigger),
            sentences: None,
        };
        let (args, trace) = extract_args_traced(&selector, RefinementState::new(stmt, &text), ctx)?;
        for r in &trace {
            let answer: Vec<String> = r.answer.iter().map(|s| s.text(&text).join(" ")).collect();
            println!("  round {} {:<10} | {} -> {:?}", r.round, r.role, r.statement.join(" "), answer);
        }
        for (role, spans) in &args {
            let words: Vec<String> = spans.iter().map(|s| s.text(&text).join(" ")).collect();
            println!("  {role}: {}", words.join(" and "));
        }
    }
    Ok(())
}
