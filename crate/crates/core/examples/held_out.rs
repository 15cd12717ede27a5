//! Train on the first 40 fixture documents and score the remaining 10.
//!
//!     cargo run --release --example held_out -- [seed]

use bleached::eval::{extract_corpus, format_table, score};
use bleached::synthetic;
use bleached::training::{fit, TrainConfig};
use bleached::ModelConfig;

fn main() -> bleached::Result<()> {
    env_logger::init();
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let (ontology, docs) = synthetic::fixture();
    let (train, test) = docs.split_at(40);
    let cfg = TrainConfig {
        seed,
        ..synthetic::fixture_train_config()
    };
    let (model, _) = fit(ModelConfig::default(), &ontology, train, &cfg)?;
    let rows = vec![
        ("train".to_string(), score(&extract_corpus(&model, &ontology, train), train)?),
        ("held-out".to_string(), score(&extract_corpus(&model, &ontology, test), test)?),
    ];
    print!("{}", format_table(&rows));
    Ok(())
}
