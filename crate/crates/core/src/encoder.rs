//! Contextual encoder for `[CLS] statement [SEP] text [SEP]` pairs.
//!
//! The mini-encoder sums token, sinusoidal position and segment embeddings and
//! applies `layers` blocks of multi-head self-attention and a tanh feed-forward
//! sublayer, each wrapped in a residual connection and layer normalisation.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::tags::Span;
use crate::tensor::{Mat, Scalar};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";
pub const TRIG_OPEN: &str = "[TRIG]";
pub const TRIG_CLOSE: &str = "[/TRIG]";

pub const RESERVED: [&str; 5] = [CLS, SEP, UNK, TRIG_OPEN, TRIG_CLOSE];

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub max_seq_len: usize,
    pub max_statement_len: usize,
    pub lowercase: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            heads: 4,
            layers: 2,
            max_seq_len: 512,
            max_statement_len: 128,
            lowercase: false,
        }
    }
}

/// Word-level vocabulary; the five reserved tokens always occupy ids 0..5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    lowercase: bool,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(lowercase: bool) -> Self {
        let mut v = Self {
            words: Vec::new(),
            lowercase,
            index: HashMap::new(),
        };
        for r in RESERVED {
            v.insert_raw(r.to_string());
        }
        v
    }

    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>, lowercase: bool) -> Self {
        let mut v = Self::new(lowercase);
        v.extend(tokens);
        v
    }

    fn norm(&self, w: &str) -> String {
        if self.lowercase && !RESERVED.contains(&w) {
            w.to_lowercase()
        } else {
            w.to_string()
        }
    }

    fn insert_raw(&mut self, w: String) -> usize {
        if let Some(&i) = self.index.get(&w) {
            return i;
        }
        self.index.insert(w.clone(), self.words.len());
        self.words.push(w);
        self.words.len() - 1
    }

    /// Adds unseen tokens in first-seen order; returns how many were new.
    pub fn extend<'a>(&mut self, tokens: impl IntoIterator<Item = &'a str>) -> usize {
        let before = self.words.len();
        for t in tokens {
            let w = self.norm(t);
            self.insert_raw(w);
        }
        self.words.len() - before
    }

    pub fn id(&self, w: &str) -> usize {
        self.index.get(&self.norm(w)).copied().unwrap_or(2)
    }

    pub fn contains(&self, w: &str) -> bool {
        self.index.contains_key(&self.norm(w))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Restores the lookup table after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderInput {
    pub statement_tokens: Vec<String>,
    pub text_tokens: Vec<String>,
    /// Text span wrapped in trigger markers before encoding.
    pub trigger_span: Option<Span>,
}

/// Contextual vectors for the statement (`n × d`) and text (`m × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair<T = f64> {
    pub statement: Mat<T>,
    pub text: Mat<T>,
}

impl<T: Scalar> EncodedPair<T> {
    pub fn dim(&self) -> usize {
        self.statement.cols
    }

    pub fn cast<U: Scalar>(&self) -> EncodedPair<U> {
        EncodedPair {
            statement: self.statement.cast(),
            text: self.text.cast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerParams {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
}

/// Trainable mini-encoder; weights live in a shared [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniEncoder {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    token_emb: ParamId,
    segment_emb: ParamId,
    layers: Vec<LayerParams>,
}

pub(crate) fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Mat<f64> {
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
}

pub(crate) fn xavier<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Mat<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, fan_in, fan_out, bound)
}

pub(crate) fn ones(cols: usize) -> Mat<f64> {
    Mat::from_vec(1, cols, vec![1.0; cols])
}

impl MiniEncoder {
    pub fn new<R: Rng>(
        config: EncoderConfig,
        vocab: Vocab,
        store: &mut ParamStore<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        let d = config.dim;
        if d == 0 || config.heads == 0 || !d.is_multiple_of(config.heads) {
            return Err(Error::Dimension(format!(
                "width {d} must be a positive multiple of the head count {}",
                config.heads
            )));
        }
        if vocab.lowercase != config.lowercase {
            return Err(Error::Encoder("vocabulary casing disagrees with encoder config".into()));
        }
        let token_emb = store.add("encoder.token_emb", uniform(rng, vocab.len(), d, 1.0));
        let segment_emb = store.add("encoder.segment_emb", uniform(rng, 2, d, 0.1));
        let h = 2 * d;
        let layers = (0..config.layers)
            .map(|l| {
                let mut add = |name: &str, m: Mat<f64>| store.add(format!("encoder.layer{l}.{name}"), m);
                LayerParams {
                    wq: add("wq", xavier(rng, d, d)),
                    bq: add("bq", Mat::zeros(1, d)),
                    wk: add("wk", xavier(rng, d, d)),
                    bk: add("bk", Mat::zeros(1, d)),
                    wv: add("wv", xavier(rng, d, d)),
                    bv: add("bv", Mat::zeros(1, d)),
                    wo: add("wo", xavier(rng, d, d)),
                    bo: add("bo", Mat::zeros(1, d)),
                    ln1_gain: add("ln1_gain", ones(d)),
                    ln1_bias: add("ln1_bias", Mat::zeros(1, d)),
                    w1: add("w1", xavier(rng, d, h)),
                    b1: add("b1", Mat::zeros(1, h)),
                    w2: add("w2", xavier(rng, h, d)),
                    b2: add("b2", Mat::zeros(1, d)),
                    ln2_gain: add("ln2_gain", ones(d)),
                    ln2_bias: add("ln2_bias", Mat::zeros(1, d)),
                }
            })
            .collect();
        Ok(Self {
            config,
            vocab,
            token_emb,
            segment_emb,
            layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.token_emb, self.segment_emb];
        for l in &self.layers {
            ids.extend([
                l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.ln1_gain, l.ln1_bias, l.w1,
                l.b1, l.w2, l.b2, l.ln2_gain, l.ln2_bias,
            ]);
        }
        ids
    }

    /// Grows the vocabulary, giving new tokens freshly initialised embeddings.
    pub fn extend_vocab<'a, R: Rng>(
        &mut self,
        tokens: impl IntoIterator<Item = &'a str>,
        store: &mut ParamStore<f64>,
        rng: &mut R,
    ) -> usize {
        let added = self.vocab.extend(tokens);
        if added > 0 {
            let table = store.get_mut(self.token_emb);
            let fresh = uniform(rng, added, table.cols, 1.0);
            table.data.extend_from_slice(&fresh.data);
            table.rows += added;
        }
        added
    }

    /// Builds the encoding on `g`, returning `(statement n×d, text m×d)` variables.
    pub fn encode_graph<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        input: &EncoderInput,
    ) -> Result<(Var, Var)> {
        let layout = self.layout(input)?;
        let d = self.config.dim;
        let ids: Vec<usize> = layout.tokens.iter().map(|t| self.vocab.id(t)).collect();
        let len = ids.len();

        let tok = g.gather(self.token_emb, &ids);
        let seg = g.gather(self.segment_emb, &layout.segments);
        let pos = g.constant(sinusoidal::<T>(len, d));
        let x = g.add(tok, seg);
        let mut h = g.add(x, pos);

        let dh = d / self.config.heads;
        let inv_sqrt = T::of(1.0 / (dh as f64).sqrt());
        let eps = T::of(LN_EPS);
        for l in &self.layers {
            let q = g.linear(h, l.wq, l.bq);
            let k = g.linear(h, l.wk, l.bk);
            let v = g.linear(h, l.wv, l.bv);
            let mut heads = Vec::with_capacity(self.config.heads);
            for hd in 0..self.config.heads {
                let (a, b) = (hd * dh, (hd + 1) * dh);
                let qh = g.slice_cols(q, a, b);
                let kh = g.slice_cols(k, a, b);
                let vh = g.slice_cols(v, a, b);
                let scores = g.matmul_t(qh, kh);
                let scores = g.scale(scores, inv_sqrt);
                let p = g.softmax_rows(scores);
                heads.push(g.matmul(p, vh));
            }
            let cat = g.concat_cols(&heads);
            let att = g.linear(cat, l.wo, l.bo);
            let r = g.add(h, att);
            let h1 = layer_norm(g, r, l.ln1_gain, l.ln1_bias, eps);
            let f = g.linear(h1, l.w1, l.b1);
            let f = g.tanh(f);
            let f = g.linear(f, l.w2, l.b2);
            let r = g.add(h1, f);
            h = layer_norm(g, r, l.ln2_gain, l.ln2_bias, eps);
        }
        let s = g.select_rows(h, &layout.statement_rows);
        let t = g.select_rows(h, &layout.text_rows);
        Ok((s, t))
    }

    /// Pure forward pass; sentinel and marker vectors are dropped.
    pub fn encode<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        input: &EncoderInput,
    ) -> Result<EncodedPair<T>> {
        let mut g = Graph::new(store);
        let (s, t) = self.encode_graph(&mut g, input)?;
        Ok(EncodedPair {
            statement: g.value(s).clone(),
            text: g.value(t).clone(),
        })
    }

    /// Token sequence actually fed to the network for `input`.
    pub fn sequence(&self, input: &EncoderInput) -> Result<Vec<String>> {
        Ok(self.layout(input)?.tokens)
    }

    fn layout(&self, input: &EncoderInput) -> Result<Layout> {
        let n = input.statement_tokens.len();
        let m = input.text_tokens.len();
        if n == 0 || m == 0 {
            return Err(Error::Encoder("statement and text must be non-empty".into()));
        }
        if n > self.config.max_statement_len {
            return Err(Error::Encoder(format!(
                "statement has {n} tokens, limit is {}",
                self.config.max_statement_len
            )));
        }
        let markers = if input.trigger_span.is_some() { 2 } else { 0 };
        let total = n + m + 3 + markers;
        if total > self.config.max_seq_len {
            return Err(Error::Encoder(format!(
                "sequence of {total} tokens exceeds limit {}",
                self.config.max_seq_len
            )));
        }
        if let Some(span) = input.trigger_span {
            if !span.within(m) {
                return Err(Error::InvalidSpan(format!("trigger {span} outside text of length {m}")));
            }
        }

        let mut tokens = Vec::with_capacity(total);
        let mut segments = Vec::with_capacity(total);
        tokens.push(CLS.to_string());
        segments.push(0);
        let statement_rows: Vec<usize> = (1..=n).collect();
        tokens.extend(input.statement_tokens.iter().cloned());
        segments.extend(std::iter::repeat_n(0, n));
        tokens.push(SEP.to_string());
        segments.push(0);

        let mut text_rows = Vec::with_capacity(m);
        for (j, w) in input.text_tokens.iter().enumerate() {
            let pos = j + 1;
            if input.trigger_span.is_some_and(|s| s.start == pos) {
                tokens.push(TRIG_OPEN.to_string());
                segments.push(1);
            }
            text_rows.push(tokens.len());
            tokens.push(w.clone());
            segments.push(1);
            if input.trigger_span.is_some_and(|s| s.end == pos + 1) {
                tokens.push(TRIG_CLOSE.to_string());
                segments.push(1);
            }
        }
        tokens.push(SEP.to_string());
        segments.push(1);
        Ok(Layout {
            tokens,
            segments,
            statement_rows,
            text_rows,
        })
    }
}

struct Layout {
    tokens: Vec<String>,
    segments: Vec<usize>,
    statement_rows: Vec<usize>,
    text_rows: Vec<usize>,
}

fn layer_norm<T: Scalar>(g: &mut Graph<'_, T>, x: Var, gain: ParamId, bias: ParamId, eps: T) -> Var {
    let n = g.normalize_rows(x, eps);
    let gv = g.param(gain);
    let bv = g.param(bias);
    let y = g.mul_row(n, gv);
    g.add_row(y, bv)
}

/// Fixed sinusoidal position table, `len × d`.
pub fn sinusoidal<T: Scalar>(len: usize, d: usize) -> Mat<T> {
    let mut m = Mat::zeros(len, d);
    for p in 0..len {
        for i in 0..d {
            let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = p as f64 * freq;
            let v = if i % 2 == 0 { a.sin() } else { a.cos() };
            m.set(p, i, T::of(v));
        }
    }
    m
}
