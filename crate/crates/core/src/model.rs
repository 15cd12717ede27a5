//! The full span-selection model (encoder + selector) and its checkpoint format.

use std::borrow::Cow;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Grads, Graph, ParamId, ParamStore};
use crate::encoder::{EncodedPair, EncoderConfig, EncoderInput, MiniEncoder, Vocab};
use crate::error::{Error, Result};
use crate::selector::{check_focus, select_spans, SelectorConfig, SelectorParams};
use crate::tags::{Span, SpanSet, TagSequence};
use crate::tensor::{Mat, Scalar};

/// One `GetArgs` request: which placeholder of which (partially filled) statement
/// to fill from which text.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub statement: &'a [String],
    /// 1-based statement positions of the focused placeholder.
    pub focus: &'a [usize],
    pub text: &'a [String],
    pub trigger: Option<Span>,
    /// Sentence boundaries in the text, if known.
    pub sentences: Option<&'a [Span]>,
}

impl Query<'_> {
    fn encoder_input(&self) -> EncoderInput {
        EncoderInput {
            statement_tokens: self.statement.to_vec(),
            text_tokens: self.text.to_vec(),
            trigger_span: self.trigger,
        }
    }

    fn focus_rows(&self) -> Result<Vec<usize>> {
        check_focus(self.focus, self.statement.len())?;
        Ok(self.focus.iter().map(|i| i - 1).collect())
    }
}

/// Anything that can answer a [`Query`] with zero or more text spans.
pub trait ArgSelector {
    fn get_args(&self, query: &Query<'_>) -> Result<SpanSet>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub selector: SelectorConfig,
}

/// Source of contextual vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncoderKind {
    Mini(MiniEncoder),
    /// Vectors come from an external encoder; only the selector is trainable.
    Imported { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Structure {
    config: ModelConfig,
    encoder: EncoderKind,
    selector: SelectorParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: EncoderKind,
    pub selector: SelectorParams,
    pub store: ParamStore<f64>,
}

impl Model {
    pub fn new<R: Rng>(config: ModelConfig, vocab: Vocab, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        let enc = MiniEncoder::new(config.encoder.clone(), vocab, &mut store, rng)?;
        let selector = SelectorParams::new(config.selector.clone(), config.encoder.dim, &mut store, rng);
        Ok(Self {
            config,
            encoder: EncoderKind::Mini(enc),
            selector,
            store,
        })
    }

    /// Selector-only model over imported `dim`-wide vectors.
    pub fn with_imported_encoder<R: Rng>(dim: usize, selector: SelectorConfig, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let sel = SelectorParams::new(selector.clone(), dim, &mut store, rng);
        Self {
            config: ModelConfig {
                encoder: EncoderConfig {
                    dim,
                    ..Default::default()
                },
                selector,
            },
            encoder: EncoderKind::Imported { dim },
            selector: sel,
            store,
        }
    }

    pub fn dim(&self) -> usize {
        self.selector.dim
    }

    pub fn mini_encoder(&self) -> Option<&MiniEncoder> {
        match &self.encoder {
            EncoderKind::Mini(e) => Some(e),
            EncoderKind::Imported { .. } => None,
        }
    }

    fn require_mini(&self) -> Result<&MiniEncoder> {
        self.mini_encoder()
            .ok_or_else(|| Error::Encoder("model uses imported embeddings; supply encoded pairs".into()))
    }

    pub fn encoder_param_ids(&self) -> Vec<ParamId> {
        self.mini_encoder().map(|e| e.param_ids()).unwrap_or_default()
    }

    /// Adds vocabulary entries (mini encoder only).
    pub fn extend_vocab<'a, R: Rng>(&mut self, tokens: impl IntoIterator<Item = &'a str>, rng: &mut R) -> usize {
        match &mut self.encoder {
            EncoderKind::Mini(e) => e.extend_vocab(tokens, &mut self.store, rng),
            EncoderKind::Imported { .. } => 0,
        }
    }

    pub fn predictor<T: Scalar>(&self) -> Predictor<'_, T> {
        Predictor {
            model: self,
            store: cast_store(&self.store),
        }
    }

    /// `m × 3` emission scores for a query.
    pub fn emissions<T: Scalar>(&self, store: &ParamStore<T>, q: &Query<'_>) -> Result<Mat<T>> {
        let enc = self.require_mini()?;
        let rows = q.focus_rows()?;
        let mut g = Graph::new(store);
        let (s, t) = enc.encode_graph(&mut g, &q.encoder_input())?;
        let e = self.selector.forward_graph(&mut g, s, t, &rows);
        Ok(g.value(e).clone())
    }

    /// Emission scores over precomputed vectors.
    pub fn emissions_encoded<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        pair: &EncodedPair<T>,
        focus: &[usize],
    ) -> Result<Mat<T>> {
        self.check_pair(pair, focus)?;
        let rows: Vec<usize> = focus.iter().map(|i| i - 1).collect();
        let mut g = Graph::new(store);
        let s = g.constant(pair.statement.clone());
        let t = g.constant(pair.text.clone());
        let e = self.selector.forward_graph(&mut g, s, t, &rows);
        Ok(g.value(e).clone())
    }

    fn check_pair<T: Scalar>(&self, pair: &EncodedPair<T>, focus: &[usize]) -> Result<()> {
        if pair.statement.cols != self.dim() || pair.text.cols != self.dim() {
            return Err(Error::Dimension(format!(
                "encoded pair has width {}, model expects {}",
                pair.statement.cols,
                self.dim()
            )));
        }
        if pair.text.rows == 0 {
            return Err(Error::Encoder("empty text".into()));
        }
        check_focus(focus, pair.statement.rows)
    }

    /// Negative log-likelihood of `gold` and gradients for every parameter on the path.
    pub fn nll_loss(&self, q: &Query<'_>, gold: &TagSequence) -> Result<(f64, Grads<f64>)> {
        let enc = self.require_mini()?;
        check_gold(gold, q.text.len())?;
        let rows = q.focus_rows()?;
        let mut g = Graph::new(&self.store);
        let (s, t) = enc.encode_graph(&mut g, &q.encoder_input())?;
        let e = self.selector.forward_graph(&mut g, s, t, &rows);
        let tv = self.selector.transition_vars(&mut g);
        let loss = g.crf_nll(e, tv, true, &gold.indices());
        Ok((g.value(loss).data[0], g.backward(loss)))
    }

    /// NLL over precomputed vectors; only selector parameters receive gradients.
    pub fn nll_loss_encoded(
        &self,
        pair: &EncodedPair<f64>,
        focus: &[usize],
        gold: &TagSequence,
    ) -> Result<(f64, Grads<f64>)> {
        self.check_pair(pair, focus)?;
        check_gold(gold, pair.text.rows)?;
        let rows: Vec<usize> = focus.iter().map(|i| i - 1).collect();
        let mut g = Graph::new(&self.store);
        let s = g.constant(pair.statement.clone());
        let t = g.constant(pair.text.clone());
        let e = self.selector.forward_graph(&mut g, s, t, &rows);
        let tv = self.selector.transition_vars(&mut g);
        let loss = g.crf_nll(e, tv, true, &gold.indices());
        Ok((g.value(loss).data[0], g.backward(loss)))
    }

    pub fn get_args_encoded(&self, pair: &EncodedPair<f64>, focus: &[usize], sentences: Option<&[Span]>) -> Result<SpanSet> {
        let em = self.emissions_encoded(&self.store, pair, focus)?;
        Ok(select_spans(&em, &self.selector.transitions(&self.store), sentences))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let structure = Structure {
            config: self.config.clone(),
            encoder: self.encoder.clone(),
            selector: self.selector.clone(),
        };
        let header = CheckpointHeader {
            version: CHECKPOINT_VERSION,
            structure,
            params: self
                .store
                .iter()
                .map(|(_, name, m)| (name.to_string(), m.rows, m.cols))
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + header.len() + self.store.scalar_count() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, m) in self.store.iter() {
            for v in &m.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
        if bytes.len() < 13 || &bytes[..5] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let body = bytes.get(13..13 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(body)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {}", header.version)));
        }
        let mut off = 13 + hlen;
        let mut store = ParamStore::new();
        for (name, rows, cols) in header.params {
            let n = rows * cols;
            let raw = bytes.get(off..off + 8 * n).ok_or_else(|| bad("truncated tensor data"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.add(name, Mat::from_vec(rows, cols, data));
            off += 8 * n;
        }
        if off != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let Structure {
            config,
            mut encoder,
            selector,
        } = header.structure;
        if let EncoderKind::Mini(e) = &mut encoder {
            e.vocab.reindex();
        }
        Ok(Self {
            config,
            encoder,
            selector,
            store,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// SHA-256 of the serialised checkpoint, hex encoded.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_gold(gold: &TagSequence, m: usize) -> Result<()> {
    if gold.len() != m {
        return Err(Error::InvalidTags(format!("{} gold tags for {m} text tokens", gold.len())));
    }
    Ok(())
}

fn cast_store<T: Scalar>(store: &ParamStore<f64>) -> Cow<'_, ParamStore<T>> {
    // f64 → f64 casting is a bitwise copy; avoid it when T is f64.
    if std::any::TypeId::of::<T>() == std::any::TypeId::of::<f64>() {
        let any: &dyn std::any::Any = store;
        Cow::Borrowed(any.downcast_ref::<ParamStore<T>>().unwrap())
    } else {
        Cow::Owned(store.cast())
    }
}

const CHECKPOINT_MAGIC: &[u8; 5] = b"BLCK1";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    structure: Structure,
    params: Vec<(String, usize, usize)>,
}

/// Model evaluated at precision `T`.
pub struct Predictor<'a, T: Scalar> {
    model: &'a Model,
    store: Cow<'a, ParamStore<T>>,
}

impl<T: Scalar> ArgSelector for Predictor<'_, T> {
    fn get_args(&self, q: &Query<'_>) -> Result<SpanSet> {
        let em = self.model.emissions(&self.store, q)?;
        Ok(select_spans(&em, &self.model.selector.transitions(&self.store), q.sentences))
    }
}

impl ArgSelector for Model {
    fn get_args(&self, q: &Query<'_>) -> Result<SpanSet> {
        let em = self.emissions(&self.store, q)?;
        Ok(select_spans(&em, &self.selector.transitions(&self.store), q.sentences))
    }
}
