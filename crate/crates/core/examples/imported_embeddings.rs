//! Trains only the selector on vectors produced elsewhere.
//!
//! Pairs are written to the binary embedding format, read back, and fitted
//! with Adam. The synthetic vectors place answer tokens near the placeholder.
//!
//!     cargo run --release --example imported_embeddings

use bleached::embeddings::{load_imported_embeddings, save_embeddings};
use bleached::encoder::EncodedPair;
use bleached::selector::SelectorConfig;
use bleached::tags::{decode_spans, Span, SpanSet};
use bleached::tensor::Mat;
use bleached::training::Adam;
use bleached::{Model, TagSequence, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 8;
const FOCUS: [usize; 1] = [2];

fn noise(rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    (0..DIM).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// A statement of 4 rows and a text of `m` rows with one answer span.
fn synth(rng: &mut ChaCha8Rng, m: usize) -> (EncodedPair<f32>, TagSequence) {
    let stmt: Vec<f64> = (0..4).flat_map(|_| noise(rng, 1.0)).collect();
    let ph = stmt[(FOCUS[0] - 1) * DIM..FOCUS[0] * DIM].to_vec();
    let start = rng.gen_range(1..m);
    let end = rng.gen_range(start + 1..=(start + 2).min(m + 1));
    let mut text = Vec::new();
    for j in 1..=m {
        let base = if (start..end).contains(&j) { ph.iter().zip(noise(rng, 0.2)).map(|(a, b)| a + b).collect() } else { noise(rng, 1.0) };
        text.extend(base);
    }
    let pair = EncodedPair {
        statement: Mat::from_vec(4, DIM, stmt),
        text: Mat::from_vec(m, DIM, text),
    };
    let gold = SpanSet::new(vec![Span::new(start, end)]).unwrap().to_tags(m).unwrap();
    (pair.cast(), gold)
}

fn main() -> bleached::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (pairs, golds): (Vec<_>, Vec<_>) = (0..60)
        .map(|_| {
            let m = rng.gen_range(4..9);
            synth(&mut rng, m)
        })
        .unzip();
    let dir = std::env::temp_dir().join("bleached-imported");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("pairs.blev");
    save_embeddings(&path, DIM, &pairs)?;
    let loaded: Vec<EncodedPair<f64>> = load_imported_embeddings(&path, Some(DIM))?
        .map(|p| p.map(|p| p.cast()))
        .collect::<bleached::Result<_>>()?;
    println!("read {} pairs of width {DIM} from {}", loaded.len(), path.display());

    let mut model = Model::with_imported_encoder(DIM, SelectorConfig::default(), &mut rng);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        ..TrainConfig::finetune()
    };
    let mut adam = Adam::new(&model, &cfg);
    let (train, test) = loaded.split_at(50);
    for epoch in 1..=30 {
        let mut total = 0.0;
        for (pair, gold) in train.iter().zip(&golds) {
            let (loss, grads) = model.nll_loss_encoded(pair, &FOCUS, gold)?;
            adam.update(&mut model, &grads);
            total += loss;
        }
        if epoch % 10 == 0 {
            println!("epoch {epoch:>2}  mean loss {:.4}", total / train.len() as f64);
        }
    }

    let mut exact = 0;
    for (pair, gold) in test.iter().zip(&golds[50..]) {
        let got = model.get_args_encoded(pair, &FOCUS, None)?;
        if got == decode_spans(gold) {
            exact += 1;
        }
    }
    println!("held-out exact span match: {exact}/{}", test.len());
    Ok(())
}
