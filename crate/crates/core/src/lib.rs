//! Event extraction by filling bleached statements.
//!
//! Each event type is described by a statement such as
//! `someone killed someone else with something`, whose placeholder phrases are
//! replaced one at a time by spans selected from the text. A span selector
//! (attention over the placeholder, a feed-forward scorer and a BIO CRF) answers
//! each query; the same selector finds triggers by focusing on the
//! non-placeholder words.

pub mod autodiff;
pub mod corpus;
pub mod crf;
pub mod embeddings;
pub mod encoder;
pub mod engine;
pub mod error;
pub mod eval;
pub mod model;
pub mod ontology;
pub mod ptb;
pub mod recast;
pub mod selector;
pub mod synthetic;
pub mod tags;
pub mod tensor;
pub mod training;

pub use corpus::{Document, EventRecord};
pub use engine::{extract_args, extract_document, extract_events, identify_triggers, RefinementState};
pub use error::{Error, Result};
pub use eval::{macro_average, score, ScoreReport};
pub use model::{ArgSelector, Model, ModelConfig, Query};
pub use ontology::{parse_ontology, BleachedStatement, Ontology};
pub use tags::{Span, SpanSet, Tag, TagSequence};
pub use training::{generate_examples, train, train_on_corpus, TrainConfig, TrainingExample};
