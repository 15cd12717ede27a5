//! Recast parsed questions into cloze statements and report what was discarded.
//!
//!     cargo run --example recast_questions -- [questions.jsonl]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use bleached::recast::recast_corpus;

fn main() -> bleached::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/recast_fixture.jsonl"));
    let summary = recast_corpus(BufReader::new(File::open(&path)?), |r| {
        let e = &r.example;
        let phrase: Vec<&str> = e.focus.iter().map(|&i| e.statement[i - 1].as_str()).collect();
        let answer = if e.gold.is_all_outside() { "(no answer)".to_string() } else {
            bleached::tags::decode_spans(&e.gold).iter().map(|s| s.text(&e.text).join(" ")).collect::<Vec<_>>().join(" | ")
        };
        println!("{:<8} [{}] {} -> {}", r.id, phrase.join(" "), e.statement.join(" "), answer);
        Ok(())
    })?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
