//! Runs the mini encoder on one statement/text pair and prints the
//! placeholder attention weights and matching features.
//!
//!     cargo run --release --example encoding

use bleached::encoder::{EncoderInput, Vocab};
use bleached::selector::{matching_features, placeholder_attention};
use bleached::tags::Span;
use bleached::{Model, ModelConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn main() -> bleached::Result<()> {
    let statement = toks("someone died at some place from something");
    let text = toks("A man died in Baghdad when soldiers fired .");
    let vocab = Vocab::from_tokens(statement.iter().chain(&text).map(String::as_str), false);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = Model::new(ModelConfig::default(), vocab, &mut rng)?;
    let enc = model.mini_encoder().expect("mini encoder");

    let input = EncoderInput {
        statement_tokens: statement.clone(),
        text_tokens: text.clone(),
        trigger_span: Some(Span::new(3, 4)),
    };
    println!("sequence: {}", enc.sequence(&input)?.join(" "));
    let pair = enc.encode::<f64>(&model.store, &input)?;
    println!("statement {}x{}, text {}x{}", pair.statement.rows, pair.statement.cols, pair.text.rows, pair.text.cols);

    // "some place" is the placeholder at statement positions 4 and 5.
    let focus = [4, 5];
    let att = placeholder_attention(&pair, &focus)?;
    println!("\nattention over {:?}", focus.map(|i| &statement[i - 1]));
    for (j, w) in text.iter().enumerate() {
        let row: Vec<String> = (0..focus.len()).map(|i| format!("{:.3}", att.weights.get(j, i))).collect();
        println!("  {:<10} {}", w, row.join("  "));
    }

    let d = pair.text.cols;
    let j = 4;
    let x = matching_features(&att.vectors.data[j * d..(j + 1) * d], &pair.text.data[j * d..(j + 1) * d])?;
    println!("\nfeature vector for {:?}: {} entries", text[j], x.len());
    Ok(())
}
