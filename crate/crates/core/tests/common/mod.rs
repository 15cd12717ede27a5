//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use bleached::autodiff::{Graph, ParamId, ParamStore};
use bleached::crf::{Transitions, NUM_TAGS};
use bleached::encoder::{EncoderConfig, Vocab};
use bleached::selector::features_graph;
use bleached::tags::{Span, SpanSet};
use bleached::tensor::Mat;
use bleached::{Model, ModelConfig, Query};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Rank used for exact ties: O before B before I.
const RANK: [usize; NUM_TAGS] = [1, 2, 0];

pub struct BruteForce {
    pub log_z: f64,
    pub best_score: f64,
    pub best: Vec<usize>,
}

fn score(em: &Mat<f64>, t: &Transitions<f64>, y: &[usize]) -> f64 {
    let mut s = t.start[y[0]];
    s += em.get(0, y[0]);
    for j in 1..y.len() {
        s += t.trans[y[j - 1]][y[j]];
        s += em.get(j, y[j]);
    }
    s + t.stop[y[y.len() - 1]]
}

/// Enumerates all `3^m` tag sequences.
pub fn brute_force(em: &Mat<f64>, t: &Transitions<f64>) -> BruteForce {
    let m = em.rows;
    let total = NUM_TAGS.pow(m as u32);
    let mut scores = Vec::with_capacity(total);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for code in 0..total {
        let mut c = code;
        let y: Vec<usize> = (0..m)
            .map(|_| {
                let v = c % NUM_TAGS;
                c /= NUM_TAGS;
                v
            })
            .rev()
            .collect();
        let s = score(em, t, &y);
        scores.push(s);
        let better = match &best {
            None => true,
            Some((bs, by)) => {
                s > *bs
                    || (s == *bs && y.iter().map(|&v| RANK[v]).lt(by.iter().map(|&v| RANK[v])))
            }
        };
        if better {
            best = Some((s, y));
        }
    }
    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = mx + scores.iter().map(|s| (s - mx).exp()).sum::<f64>().ln();
    let (best_score, best) = best.unwrap();
    BruteForce { log_z, best_score, best }
}

/// Random potentials; integers in `[-2, 2]` when `integer` (ties are then common and exact).
pub fn random_crf(rng: &mut impl Rng, m: usize, integer: bool) -> (Mat<f64>, Transitions<f64>) {
    let draw = |rng: &mut dyn rand::RngCore| -> f64 {
        if integer {
            rng.gen_range(-2i32..=2) as f64
        } else {
            rng.gen_range(-3.0..3.0)
        }
    };
    let em = Mat::from_vec(m, NUM_TAGS, (0..m * NUM_TAGS).map(|_| draw(rng)).collect());
    let mut t = Transitions::zeros();
    for a in 0..NUM_TAGS {
        t.start[a] = draw(rng);
        t.stop[a] = draw(rng);
        for b in 0..NUM_TAGS {
            t.trans[a][b] = draw(rng);
        }
    }
    if rng.gen_bool(0.5) {
        t.forbid_invalid();
    }
    (em, t)
}

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

const WORDS: &[&str] = &[
    "someone", "killed", "a", "man", "in", "the", "village", "on", "Saturday", "soldiers", "with", "rifle", "and",
    "met", "paid",
];

pub struct GradCase {
    pub model: Model,
    pub statement: Vec<String>,
    pub focus: Vec<usize>,
    pub text: Vec<String>,
    pub trigger: Option<Span>,
    pub gold: bleached::TagSequence,
}

/// A small random model and query: `d ≤ 16`, text of at most 6 tokens.
pub fn grad_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = [4, 8, 12, 16][rng.gen_range(0..4)];
    let heads = if dim % 4 == 0 && rng.gen_bool(0.5) { 4 } else { 2 };
    let cfg = ModelConfig {
        encoder: EncoderConfig {
            dim,
            heads,
            layers: rng.gen_range(1..=2),
            ..Default::default()
        },
        selector: bleached::selector::SelectorConfig {
            shared_heads: rng.gen_bool(0.5),
            use_transitions: true,
        },
    };
    let vocab = Vocab::from_tokens(WORDS.iter().copied(), false);
    let model = Model::new(cfg, vocab, &mut rng).unwrap();
    let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
        (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect()
    };
    let n = rng.gen_range(2..=6);
    let statement = pick(&mut rng, n);
    let fs = rng.gen_range(1..=n);
    let fe = rng.gen_range(fs..=n);
    let m = rng.gen_range(1..=6);
    let text = pick(&mut rng, m);
    let trigger = if rng.gen_bool(0.5) {
        let s = rng.gen_range(1..=m);
        Some(Span::new(s, s + 1))
    } else {
        None
    };
    let mut spans = Vec::new();
    let mut j = 1;
    while j <= m {
        if rng.gen_bool(0.4) {
            let e = rng.gen_range(j + 1..=m + 1);
            spans.push(Span::new(j, e));
            j = e;
        } else {
            j += 1;
        }
    }
    let gold = SpanSet::new(spans).unwrap().to_tags(m).unwrap();
    GradCase {
        model,
        statement,
        focus: (fs..=fe).collect(),
        text,
        trigger,
        gold,
    }
}

impl GradCase {
    fn loss(&self) -> f64 {
        let q = Query {
            statement: &self.statement,
            focus: &self.focus,
            text: &self.text,
            trigger: self.trigger,
            sentences: None,
        };
        self.model.nll_loss(&q, &self.gold).unwrap().0
    }

    /// `(group, relative error)` of analytic against central-difference gradients,
    /// measured as `‖a − f‖ / max(‖a‖, ‖f‖)` over every scalar in the group.
    pub fn check(&mut self) -> Vec<(&'static str, f64)> {
        let q = Query {
            statement: &self.statement,
            focus: &self.focus,
            text: &self.text,
            trigger: self.trigger,
            sentences: None,
        };
        let (_, grads) = self.model.nll_loss(&q, &self.gold).unwrap();
        let groups: Vec<(&'static str, Vec<ParamId>)> = vec![
            ("encoder", self.model.encoder_param_ids()),
            ("ffnn", self.model.selector.ffnn_param_ids()),
            ("transitions", self.model.selector.transition_param_ids().to_vec()),
        ];
        let h = 1e-5;
        let mut out = Vec::new();
        for (name, ids) in groups {
            let (mut diff, mut na, mut nf) = (0.0, 0.0, 0.0);
            for id in ids {
                let zeros = Mat::zeros(self.model.store.get(id).rows, self.model.store.get(id).cols);
                let analytic = grads.get(id).cloned().unwrap_or(zeros);
                for k in 0..analytic.data.len() {
                    let orig = self.model.store.get(id).data[k];
                    self.model.store.get_mut(id).data[k] = orig + h;
                    let up = self.loss();
                    self.model.store.get_mut(id).data[k] = orig - h;
                    let down = self.loss();
                    self.model.store.get_mut(id).data[k] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let a = analytic.data[k];
                    diff += (a - fd) * (a - fd);
                    na += a * a;
                    nf += fd * fd;
                }
            }
            out.push((name, diff.sqrt() / na.sqrt().max(nf.sqrt()).max(1e-12)));
        }
        out
    }
}

/// Gradient check of the parameter-free attention/feature path with respect to
/// its statement and text inputs, under a random linear read-out.
pub fn attention_path_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..=8);
    let n = rng.gen_range(2..=6);
    let m = rng.gen_range(1..=6);
    let mut store = ParamStore::new();
    let rand_mat = |r, c, rng: &mut ChaCha8Rng| Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let s = store.add("s", rand_mat(n, d, &mut rng));
    let t = store.add("t", rand_mat(m, d, &mut rng));
    let w = rand_mat(m, 4 * d, &mut rng);
    let fs = rng.gen_range(0..n);
    let focus: Vec<usize> = (fs..rng.gen_range(fs + 1..=n)).collect();
    let f = |st: &ParamStore<f64>| {
        let mut g = Graph::new(st);
        let sv = g.param(s);
        let tv = g.param(t);
        let x = features_graph(&mut g, sv, tv, &focus);
        let wv = g.constant(w.clone());
        let y = g.mul(x, wv);
        let out = g.sum(y);
        (g.value(out).data[0], g.backward(out))
    };
    let (_, grads) = f(&store);
    let h = 1e-6;
    let (mut diff, mut na, mut nf) = (0.0, 0.0, 0.0);
    for id in [s, t] {
        let a = grads.get(id).unwrap().clone();
        for k in 0..a.data.len() {
            let orig = store.get(id).data[k];
            store.get_mut(id).data[k] = orig + h;
            let up = f(&store).0;
            store.get_mut(id).data[k] = orig - h;
            let down = f(&store).0;
            store.get_mut(id).data[k] = orig;
            let fd = (up - down) / (2.0 * h);
            diff += (a.data[k] - fd).powi(2);
            na += a.data[k].powi(2);
            nf += fd * fd;
        }
    }
    diff.sqrt() / na.sqrt().max(nf.sqrt()).max(1e-12)
}
