//! Train on the bundled synthetic corpus and score on the training documents.
//!
//!     cargo run --release --example train_fixture -- [epochs] [learning-rate] [batch-size]

use std::time::Instant;

use bleached::eval::{extract_corpus, format_table, score};
use bleached::synthetic;
use bleached::training::fit;
use bleached::ModelConfig;

fn main() -> bleached::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (ontology, docs) = synthetic::fixture();
    let mut cfg = synthetic::fixture_train_config();
    if let Some(e) = args.first() {
        cfg.epochs = e.parse().expect("epochs");
    }
    if let Some(lr) = args.get(1) {
        cfg.learning_rate = lr.parse().expect("learning rate");
    }
    if let Some(b) = args.get(2) {
        cfg.batch_size = b.parse().expect("batch size");
    }
    let t0 = Instant::now();
    let (model, report) = fit(ModelConfig::default(), &ontology, &docs, &cfg)?;
    println!("trained in {:.1?}; epoch losses {:?}", t0.elapsed(), report.epoch_losses);
    let pred = extract_corpus(&model, &ontology, &docs);
    let r = score(&pred, &docs)?;
    print!("{}", format_table(&[("train".into(), r)]));
    println!("total {:.1?}", t0.elapsed());
    Ok(())
}
