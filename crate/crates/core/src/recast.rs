//! Turns extractive QA pairs into cloze-style training examples.

use std::collections::BTreeMap;
use std::io::BufRead;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ptb::{extract_wh_phrase, parse_tree, WhPhrase};
use crate::tags::{Span, SpanSet};
use crate::training::{ExampleKind, TrainingExample};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub question_tokens: Vec<String>,
    /// Bracketed constituency parse of the question.
    pub parse: String,
    pub context_tokens: Vec<String>,
    #[serde(default)]
    pub answers: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecastExample {
    pub id: String,
    pub example: TrainingExample,
    /// The wh-phrase covers the whole question except punctuation.
    pub whole_question: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    NoWhPhrase,
    MultipleWhPhrases,
    Malformed,
}

impl DiscardReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::NoWhPhrase => "no-wh-phrase",
            DiscardReason::MultipleWhPhrases => "multiple-wh-phrases",
            DiscardReason::Malformed => "malformed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Kept(RecastExample),
    Discarded(DiscardReason),
}

/// Replaces the question's unique maximal wh-phrase with a placeholder.
///
/// The statement keeps the question tokens verbatim; the placeholder is the
/// wh-phrase itself and becomes the focus. Errors only on invalid input.
pub fn recast(qa: &QaExample) -> Result<Outcome> {
    let ctx = || format!("question {}", qa.id);
    let tree = parse_tree(&qa.parse).map_err(|e| Error::data(ctx(), e.to_string()))?;
    let leaves = tree.leaves();
    if leaves.len() != qa.question_tokens.len() || leaves.iter().zip(&qa.question_tokens).any(|(a, b)| a != b) {
        return Err(Error::data(ctx(), "parse yield does not match the question tokens"));
    }
    let answers = SpanSet::new(qa.answers.clone()).map_err(|e| Error::data(ctx(), e.to_string()))?;
    let m = qa.context_tokens.len();
    if let Some(s) = answers.iter().find(|s| !s.within(m)) {
        return Err(Error::data(ctx(), format!("answer {s} outside context of {m} tokens")));
    }
    let span = match extract_wh_phrase(&tree) {
        WhPhrase::None => return Ok(Outcome::Discarded(DiscardReason::NoWhPhrase)),
        WhPhrase::Ambiguous(_) => return Ok(Outcome::Discarded(DiscardReason::MultipleWhPhrases)),
        WhPhrase::One(s) => s,
    };
    let whole_question = qa
        .question_tokens
        .iter()
        .enumerate()
        .all(|(i, t)| span.range().contains(&i) || t.chars().all(|c| c.is_ascii_punctuation()));
    Ok(Outcome::Kept(RecastExample {
        id: qa.id.clone(),
        example: TrainingExample {
            statement: qa.question_tokens.clone(),
            focus: (span.start..span.end).collect(),
            text: qa.context_tokens.clone(),
            trigger: None,
            gold: answers.to_tags(m)?,
            kind: ExampleKind::Cloze,
            event_type: None,
            role: None,
        },
        whole_question,
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RecastSummary {
    pub input: usize,
    pub kept: usize,
    pub discarded: BTreeMap<String, usize>,
    pub whole_question: Vec<String>,
}

impl RecastSummary {
    pub fn discarded_total(&self) -> usize {
        self.discarded.values().sum()
    }

    fn discard(&mut self, r: DiscardReason) {
        *self.discarded.entry(r.as_str().to_string()).or_insert(0) += 1;
    }
}

/// Recasts a JSON-lines stream in order. Unreadable lines are counted as malformed.
pub fn recast_corpus<R: BufRead>(reader: R, mut emit: impl FnMut(RecastExample) -> Result<()>) -> Result<RecastSummary> {
    let mut sum = RecastSummary::default();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        sum.input += 1;
        let outcome = serde_json::from_str::<QaExample>(&line)
            .map_err(Error::from)
            .and_then(|qa| recast(&qa));
        match outcome {
            Ok(Outcome::Kept(ex)) => {
                if ex.whole_question {
                    info!("question {} is entirely a wh-phrase", ex.id);
                    sum.whole_question.push(ex.id.clone());
                }
                sum.kept += 1;
                emit(ex)?;
            }
            Ok(Outcome::Discarded(r)) => sum.discard(r),
            Err(e) => {
                warn!("line {}: {e}", k + 1);
                sum.discard(DiscardReason::Malformed);
            }
        }
    }
    Ok(sum)
}

/// Convenience wrapper collecting kept examples.
pub fn recast_all<R: BufRead>(reader: R) -> Result<(Vec<RecastExample>, RecastSummary)> {
    let mut kept = Vec::new();
    let sum = recast_corpus(reader, |e| {
        kept.push(e);
        Ok(())
    })?;
    Ok((kept, sum))
}
