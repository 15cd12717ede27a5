//! Leave-one-out zero-shot evaluation on the fixture: each event type is
//! extracted by a model that never saw it, using only its bleached statement.
//!
//!     cargo run --release --example zero_shot -- [epochs]

use bleached::eval::leave_one_out;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use bleached::synthetic;
use bleached::training::{fit, TrainConfig};
use bleached::ModelConfig;

fn main() -> bleached::Result<()> {
    env_logger::init();
    let epochs = std::env::args().nth(1).map_or(8, |s| s.parse().expect("epochs"));
    let (ontology, docs) = synthetic::fixture();
    let cfg = TrainConfig {
        epochs,
        ..synthetic::fixture_train_config()
    };
    let loo = leave_one_out(&docs, &ontology, |held, onto, train| {
        eprintln!("holding out {held}");
        let (mut model, _) = fit(ModelConfig::default(), onto, train, &cfg)?;
        // The held-out statement's words still need embeddings.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        model.extend_vocab(ontology.get(held).unwrap().tokens.iter().map(String::as_str), &mut rng);
        Ok(model)
    })?;
    print!("{}", loo.table());
    Ok(())
}
