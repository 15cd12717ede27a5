//! Score predicted events against gold ones and average per-type results.
//!
//!     cargo run --example scoring

use std::collections::BTreeMap;

use bleached::eval::{curve_csv, format_table, macro_average, score, score_by_type};
use bleached::{synthetic, Document, EventRecord, Span, SpanSet};

fn main() -> bleached::Result<()> {
    let (ontology, gold) = synthetic::fixture();
    let gold: Vec<Document> = gold.into_iter().take(6).collect();
    // Perturb the gold events: drop one event, mislabel one role, add one spurious trigger.
    let mut pred = gold.clone();
    pred[0].events.clear();
    if let Some(ev) = pred[1].events.first_mut() {
        if let Some((role, spans)) = ev.arguments.pop_first() {
            ev.arguments.insert(format!("{role}-x"), spans);
        }
    }
    pred[2].events.push(EventRecord {
        event_type: "Contact:Meet".into(),
        trigger: Span::new(1, 2),
        arguments: BTreeMap::from([("place".to_string(), SpanSet::single(Span::new(2, 3)))]),
    });

    let overall = score(&pred, &gold)?;
    let per_type: Vec<_> = score_by_type(&pred, &gold, &ontology)?
        .into_iter()
        .filter(|(_, r)| r.trigger_id.gold + r.trigger_id.predicted > 0)
        .collect();
    let m = macro_average(&per_type.iter().map(|(_, r)| *r).collect::<Vec<_>>())?;
    let mut rows = vec![("all".to_string(), overall)];
    rows.extend(per_type);
    rows.push(("macro".into(), m));
    print!("{}", format_table(&rows));
    println!("{}", serde_json::to_string(&overall)?);
    print!("{}", curve_csv(&[(6, overall)]));
    Ok(())
}
