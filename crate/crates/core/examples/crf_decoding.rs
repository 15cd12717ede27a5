//! Decode multi-span answers from emission scores with the BIO-constrained CRF.
//!
//!     cargo run --example crf_decoding

use bleached::crf::{log_partition, marginals, viterbi, Transitions};
use bleached::selector::select_spans;
use bleached::tensor::Mat;
use bleached::Span;

fn main() {
    let text = ["Kim", "and", "Pat", "married", "Sunday"];
    // Columns: B, I, O.
    let em: Mat<f64> = Mat::from_rows(&[
        vec![3.0, -1.0, 0.0],
        vec![-2.0, -1.0, 2.0],
        vec![2.5, -1.0, 0.0],
        vec![-1.0, -2.0, 3.0],
        vec![0.2, 0.0, 0.4],
    ]);
    let t = Transitions::bio_constrained();
    let (tags, best) = viterbi(&em, &t);
    let z = log_partition(&em, &t);
    let tags: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
    println!("tags {} (score {best:.3}, log Z {z:.3}, p {:.3})", tags.join(" "), (best - z).exp());
    let mg = marginals(&em, &t);
    for (j, w) in text.iter().enumerate() {
        println!("  {w:<8} P(B) {:.3}  P(I) {:.3}  P(O) {:.3}", mg.unary.get(j, 0), mg.unary.get(j, 1), mg.unary.get(j, 2));
    }
    let spans = select_spans(&em, &t, None);
    for s in spans.iter() {
        println!("span {s}: {}", s.range().map(|i| text[i]).collect::<Vec<_>>().join(" "));
    }
    // With sentence boundaries, spans are kept from the best-scoring sentence only.
    let spans = select_spans(&em, &t, Some(&[Span::new(1, 3), Span::new(3, 6)]));
    println!("restricted to one sentence: {:?}", spans.spans());
}
