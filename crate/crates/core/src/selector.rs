//! Multiple-argument selector: placeholder attention, matching features, FFNN
//! emission potentials and a BIO-constrained linear-chain CRF.
//!
//! The tag potential at text position `j` is
//! `transition[y(j-1)][y(j)] + FFNN_y(x_j)` where
//! `x_j = [s̃_j ; t_j ; |s̃_j - t_j| ; s̃_j ⊙ t_j]` and `s̃_j` is the focused
//! placeholder's statement vectors attended with the text vector `t_j`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::crf::{self, Transitions, NUM_TAGS};
use crate::encoder::{xavier, EncodedPair};
use crate::error::{Error, Result};
use crate::tags::{decode_spans, Span, SpanSet, Tag, TagSequence};
use crate::tensor::{Mat, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    /// Share FFNN layers 1-3 between the three tag heads.
    pub shared_heads: bool,
    /// Learn transition scores; when off every allowed transition scores 0.
    pub use_transitions: bool,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            shared_heads: true,
            use_transitions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stack {
    layers: Vec<(ParamId, ParamId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Heads {
    /// One stack whose last layer has three outputs (B, I, O).
    Shared(Stack),
    /// One stack per tag, each ending in a single output.
    Separate([Stack; NUM_TAGS]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorParams {
    pub config: SelectorConfig,
    pub dim: usize,
    heads: Heads,
    start: ParamId,
    trans: ParamId,
    stop: ParamId,
}

fn new_stack<R: Rng>(
    store: &mut ParamStore<f64>,
    rng: &mut R,
    prefix: &str,
    dim: usize,
    out: usize,
) -> Stack {
    let widths = [4 * dim, 2 * dim, dim, dim, out];
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let wid = store.add(format!("{prefix}.w{}", k + 1), xavier(rng, w[0], w[1]));
            let bid = store.add(format!("{prefix}.b{}", k + 1), Mat::zeros(1, w[1]));
            (wid, bid)
        })
        .collect();
    Stack { layers }
}

impl SelectorParams {
    pub fn new<R: Rng>(
        config: SelectorConfig,
        dim: usize,
        store: &mut ParamStore<f64>,
        rng: &mut R,
    ) -> Self {
        let heads = if config.shared_heads {
            Heads::Shared(new_stack(store, rng, "selector.ffnn", dim, NUM_TAGS))
        } else {
            Heads::Separate(Tag::ALL.map(|t| new_stack(store, rng, &format!("selector.ffnn_{t}"), dim, 1)))
        };
        let start = store.add("selector.start", Mat::zeros(1, NUM_TAGS));
        let trans = store.add("selector.trans", Mat::zeros(NUM_TAGS, NUM_TAGS));
        let stop = store.add("selector.stop", Mat::zeros(1, NUM_TAGS));
        Self {
            config,
            dim,
            heads,
            start,
            trans,
            stop,
        }
    }

    pub fn ffnn_param_ids(&self) -> Vec<ParamId> {
        let stacks: Vec<&Stack> = match &self.heads {
            Heads::Shared(s) => vec![s],
            Heads::Separate(ss) => ss.iter().collect(),
        };
        stacks
            .into_iter()
            .flat_map(|s| s.layers.iter().flat_map(|&(w, b)| [w, b]))
            .collect()
    }

    /// Weights of the final (linear) layer, per head.
    pub fn output_layer_ids(&self) -> Vec<(ParamId, ParamId)> {
        match &self.heads {
            Heads::Shared(s) => vec![*s.layers.last().unwrap()],
            Heads::Separate(ss) => ss.iter().map(|s| *s.layers.last().unwrap()).collect(),
        }
    }

    pub fn transition_param_ids(&self) -> [ParamId; 3] {
        [self.start, self.trans, self.stop]
    }

    fn stack_graph<T: Scalar>(g: &mut Graph<'_, T>, stack: &Stack, x: Var) -> Var {
        let mut h = x;
        let last = stack.layers.len() - 1;
        for (k, &(w, b)) in stack.layers.iter().enumerate() {
            h = g.linear(h, w, b);
            if k < last {
                h = g.tanh(h);
            }
        }
        h
    }

    /// `m × 3` emission scores for features `x` (`m × 4d`).
    pub fn emissions_graph<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        match &self.heads {
            Heads::Shared(s) => Self::stack_graph(g, s, x),
            Heads::Separate(ss) => {
                let cols: Vec<Var> = ss.iter().map(|s| Self::stack_graph(g, s, x)).collect();
                g.concat_cols(&cols)
            }
        }
    }

    pub fn transition_vars<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Option<(Var, Var, Var)> {
        self.config.use_transitions.then(|| {
            let s = g.param(self.start);
            let t = g.param(self.trans);
            let e = g.param(self.stop);
            (s, t, e)
        })
    }

    /// Effective transition scores with BIO-invalid moves pinned to the surrogate.
    pub fn transitions<T: Scalar>(&self, store: &ParamStore<T>) -> Transitions<T> {
        let mut t = if self.config.use_transitions {
            Transitions::from_mats(store.get(self.start), store.get(self.trans), store.get(self.stop))
        } else {
            Transitions::zeros()
        };
        t.forbid_invalid();
        t
    }

    /// Attention, matching features and FFNN on the tape. `focus` holds 0-based statement rows.
    pub fn forward_graph<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        statement: Var,
        text: Var,
        focus: &[usize],
    ) -> Var {
        let x = features_graph(g, statement, text, focus);
        self.emissions_graph(g, x)
    }

    pub fn emission_scores<T: Scalar>(&self, store: &ParamStore<T>, x: &Mat<T>) -> Result<Mat<T>> {
        if x.cols != 4 * self.dim {
            return Err(Error::Dimension(format!(
                "features have width {}, expected {}",
                x.cols,
                4 * self.dim
            )));
        }
        let mut g = Graph::new(store);
        let xv = g.constant(x.clone());
        let e = self.emissions_graph(&mut g, xv);
        Ok(g.value(e).clone())
    }
}

/// Builds `x_j` for every text row on the tape; `focus` holds 0-based statement rows.
pub fn features_graph<T: Scalar>(g: &mut Graph<'_, T>, statement: Var, text: Var, focus: &[usize]) -> Var {
    let placeholder = g.select_rows(statement, focus);
    let scores = g.matmul_t(text, placeholder);
    let weights = g.softmax_rows(scores);
    let attended = g.matmul(weights, placeholder);
    let diff = g.sub(attended, text);
    let absdiff = g.abs(diff);
    let prod = g.mul(attended, text);
    g.concat_cols(&[attended, text, absdiff, prod])
}

/// Attention output for a placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct Attended<T> {
    /// `m × |I|`: `a_ij` for text row `j`, placeholder position `i`.
    pub weights: Mat<T>,
    /// `m × d`: `s̃_j`.
    pub vectors: Mat<T>,
}

/// `a_ij = softmax_{i∈I}(s_i · t_j)`, `s̃_j = Σ_i a_ij s_i`. `indices` are 1-based statement positions.
pub fn placeholder_attention<T: Scalar>(enc: &EncodedPair<T>, indices: &[usize]) -> Result<Attended<T>> {
    check_focus(indices, enc.statement.rows)?;
    let rows: Vec<usize> = indices.iter().map(|i| i - 1).collect();
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let s = g.constant(enc.statement.clone());
    let t = g.constant(enc.text.clone());
    let ph = g.select_rows(s, &rows);
    let scores = g.matmul_t(t, ph);
    let w = g.softmax_rows(scores);
    let v = g.matmul(w, ph);
    Ok(Attended {
        weights: g.value(w).clone(),
        vectors: g.value(v).clone(),
    })
}

pub(crate) fn check_focus(indices: &[usize], n: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::InvalidSpan("empty focus index set".into()));
    }
    if let Some(i) = indices.iter().find(|&&i| i == 0 || i > n) {
        return Err(Error::InvalidSpan(format!("focus index {i} outside statement of length {n}")));
    }
    Ok(())
}

/// `[s̃ ; t ; |s̃ - t| ; s̃ ⊙ t]`
pub fn matching_features<T: Scalar>(attended: &[T], text: &[T]) -> Result<Vec<T>> {
    if attended.len() != text.len() {
        return Err(Error::Dimension(format!(
            "attended vector has {} entries, text vector {}",
            attended.len(),
            text.len()
        )));
    }
    let mut x = Vec::with_capacity(4 * text.len());
    x.extend_from_slice(attended);
    x.extend_from_slice(text);
    x.extend(attended.iter().zip(text).map(|(&a, &b)| (a - b).abs()));
    x.extend(attended.iter().zip(text).map(|(&a, &b)| a * b));
    Ok(x)
}

pub fn crf_log_partition<T: Scalar>(emissions: &Mat<T>, transitions: &Transitions<T>) -> T {
    crf::log_partition(emissions, transitions)
}

pub fn crf_viterbi<T: Scalar>(emissions: &Mat<T>, transitions: &Transitions<T>) -> TagSequence {
    let (tags, _) = crf::viterbi(emissions, transitions);
    TagSequence::new(tags).expect("viterbi under BIO constraints yields valid tags")
}

/// Score of a decoded span: `B` emission at its first token plus `I` emissions after.
pub fn span_score<T: Scalar>(emissions: &Mat<T>, span: Span) -> T {
    let r = span.range();
    let mut s = emissions.get(r.start, Tag::B.index());
    for j in r.start + 1..r.end {
        s = s + emissions.get(j, Tag::I.index());
    }
    s
}

/// Keeps only spans inside the sentence holding the best-scoring, sentence-internal span.
pub fn restrict_to_one_sentence<T: Scalar>(spans: SpanSet, emissions: &Mat<T>, sentences: &[Span]) -> SpanSet {
    if spans.is_empty() || sentences.is_empty() {
        return spans;
    }
    let home = |s: &Span| sentences.iter().copied().find(|sent| sent.contains(s));
    let best = spans
        .iter()
        .filter_map(|s| home(s).map(|h| (span_score(emissions, *s), h)))
        .fold(None::<(T, Span)>, |acc, (score, h)| match acc {
            Some((b, _)) if b >= score => acc,
            _ => Some((score, h)),
        });
    let mut spans = spans;
    match best {
        Some((_, sentence)) => spans.retain(|s| sentence.contains(s)),
        None => spans.retain(|_| false),
    }
    spans
}

/// Viterbi-decode `emissions` into spans, applying the one-sentence rule when boundaries are given.
pub fn select_spans<T: Scalar>(
    emissions: &Mat<T>,
    transitions: &Transitions<T>,
    sentences: Option<&[Span]>,
) -> SpanSet {
    let tags = crf_viterbi(emissions, transitions);
    let spans = decode_spans(&tags);
    match sentences {
        Some(s) => restrict_to_one_sentence(spans, emissions, s),
        None => spans,
    }
}
