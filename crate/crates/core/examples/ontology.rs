//! Parse bleached statements, inspect their trigger words and render partial fills.
//!
//!     cargo run --example ontology -- [ontology.txt]

use bleached::ontology::{render_with_fills, trigger_index_set};
use bleached::parse_ontology;

const DEFAULT: &str = "\
# type :: statement with [role|placeholder words]
Life:Die :: [agent|someone] killed [victim|someone else] with [instrument|something] in [place|some place] at [time|some time]
Contact:Phone-Write :: [entity|someone] called or wrote to [other|someone else] about \\[something\\]
";

fn main() -> bleached::Result<()> {
    let src = match std::env::args().nth(1) {
        Some(p) => std::fs::read_to_string(p)?,
        None => DEFAULT.to_string(),
    };
    let ontology = parse_ontology(&src)?;
    for stmt in ontology.statements() {
        let trig = trigger_index_set(stmt)?;
        let words: Vec<&str> = trig.iter().map(|&i| stmt.tokens[i - 1].as_str()).collect();
        println!("{}", stmt.event_type);
        println!("  statement: {}", stmt.tokens.join(" "));
        println!("  trigger words: {}", words.join(" "));
        for slot in &stmt.placeholders {
            println!("  {:<12} {:?} at {}", slot.role, slot.span.text(&stmt.tokens).join(" "), slot.span);
        }

        let mut fills = vec![None; stmt.placeholders.len()];
        fills[0] = Some(vec!["Kim".to_string(), "and".into(), "Pat".into()]);
        let r = render_with_fills(stmt, &fills);
        println!("  first role filled: {}", r.tokens.join(" "));
        println!("  serialised: {}", stmt.to_line());
    }
    Ok(())
}
