//! Write the synthetic ten-type fixture (ontology, corpus, training config) to a directory.
//!
//!     cargo run --example write_fixture -- crates/core/data

use std::fs;
use std::path::PathBuf;

use bleached::corpus::write_jsonl;
use bleached::synthetic;
use bleached::training::TrainConfig;
use serde_json::json;

fn main() -> bleached::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixture".into()));
    fs::create_dir_all(&dir)?;
    let (ontology, docs) = synthetic::fixture();
    fs::write(dir.join("fixture_ontology.txt"), synthetic::ONTOLOGY)?;
    write_jsonl(&dir.join("fixture_corpus.jsonl"), &docs)?;
    let config = json!({
        "train": synthetic::fixture_train_config(),
        "pretrain": TrainConfig { epochs: 3, negative_rate: 0.0, ..synthetic::fixture_train_config() },
    });
    fs::write(dir.join("fixture_config.json"), serde_json::to_string_pretty(&config)? + "\n")?;
    let events: usize = docs.iter().map(|d| d.events.len()).sum();
    println!("{} types, {} documents, {events} events -> {}", ontology.len(), docs.len(), dir.display());
    Ok(())
}
