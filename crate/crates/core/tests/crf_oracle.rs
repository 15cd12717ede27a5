mod common;

use bleached::crf::{log_partition, marginals, viterbi};
use bleached::tags::Tag;
use common::{brute_force, random_crf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn partition_and_viterbi_match_enumeration() {
    for seed in 0..150u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(1..=8);
        let (em, t) = random_crf(&mut rng, m, false);
        let bf = brute_force(&em, &t);
        let z = log_partition(&em, &t);
        assert!(((z - bf.log_z) / bf.log_z.abs().max(1.0)).abs() <= 1e-10, "seed {seed}: {z} vs {}", bf.log_z);
        let (tags, score) = viterbi(&em, &t);
        assert!((score - bf.best_score).abs() <= 1e-12 * bf.best_score.abs().max(1.0), "seed {seed}");
        let idx: Vec<usize> = tags.iter().map(|t| t.index()).collect();
        assert_eq!(idx, bf.best, "seed {seed}");
    }
}

#[test]
fn ties_resolve_by_preference() {
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = rng.gen_range(1..=6);
        let (em, t) = random_crf(&mut rng, m, true);
        let bf = brute_force(&em, &t);
        let (tags, score) = viterbi(&em, &t);
        assert_eq!(score, bf.best_score, "seed {seed}");
        assert_eq!(tags.iter().map(|t| t.index()).collect::<Vec<_>>(), bf.best, "seed {seed}");
    }
}

#[test]
fn all_zero_potentials_decode_to_outside() {
    let (em, _) = random_crf(&mut ChaCha8Rng::seed_from_u64(0), 5, true);
    let zero = bleached::tensor::Mat::<f64>::zeros(em.rows, 3);
    let (tags, _) = viterbi(&zero, &bleached::crf::Transitions::zeros());
    assert!(tags.iter().all(|&t| t == Tag::O));
}

#[test]
fn marginals_are_distributions() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.gen_range(1..=8);
        let (em, t) = random_crf(&mut rng, m, false);
        let mg = marginals(&em, &t);
        for j in 0..m {
            let s: f64 = (0..3).map(|y| mg.unary.get(j, y)).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
