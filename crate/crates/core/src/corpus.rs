//! Document and event records, and the JSON-lines files that carry them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tags::{Span, SpanSet};

/// One extracted (or gold) event: type, trigger and role fillers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    #[serde(rename = "type")]
    pub event_type: String,
    pub trigger: Span,
    #[serde(rename = "args", default)]
    pub arguments: BTreeMap<String, SpanSet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub events: Vec<EventRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<Span>>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: &str) -> Self {
        Self {
            doc_id: doc_id.into(),
            tokens: text.split_whitespace().map(str::to_string).collect(),
            events: Vec::new(),
            sentences: None,
        }
    }

    /// Checks that every span lies in the text and sentences tile it in order.
    pub fn validate(&self) -> Result<()> {
        let m = self.tokens.len();
        let ctx = || format!("document {}", self.doc_id);
        for ev in &self.events {
            if !ev.trigger.within(m) {
                return Err(Error::data(ctx(), format!("trigger {} out of bounds", ev.trigger)));
            }
            for (role, spans) in &ev.arguments {
                if let Some(s) = spans.iter().find(|s| !s.within(m)) {
                    return Err(Error::data(ctx(), format!("argument {role} span {s} out of bounds")));
                }
            }
        }
        if let Some(sents) = &self.sentences {
            let mut next = 1;
            for s in sents {
                if s.start != next || !s.within(m) {
                    return Err(Error::data(ctx(), format!("sentence {s} does not continue at {next}")));
                }
                next = s.end;
            }
            if next != m + 1 {
                return Err(Error::data(ctx(), "sentences do not cover the text"));
            }
        }
        Ok(())
    }

    /// Single-sentence extraction contexts as `(offset, span)`; the whole text when no boundaries are given.
    pub fn contexts(&self) -> Vec<Span> {
        match &self.sentences {
            Some(s) if !s.is_empty() => s.clone(),
            _ => vec![Span::new(1, self.tokens.len() + 1)],
        }
    }

    pub fn event_types(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.event_type.as_str())
    }
}

/// Reads one JSON value per non-blank line; errors name the file and line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::data(path.display().to_string(), e.to_string()))?;
    parse_jsonl(BufReader::new(f), &path.display().to_string())
}

pub fn parse_jsonl<T: DeserializeOwned, R: BufRead>(reader: R, name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("{name}:{}", k + 1), e.to_string()))?;
        out.push(v);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_jsonl(path)?;
    for d in &docs {
        d.validate()?;
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_json_shape() {
        let line = r#"{"doc_id":"d1","tokens":["Kim","and","Pat","married","Sunday"],"events":[{"type":"Life:Marry","trigger":[4,5],"args":{"person":[[1,2],[3,4]],"time":[[5,6]]}}]}"#;
        let d: Document = serde_json::from_str(line).unwrap();
        d.validate().unwrap();
        assert_eq!(d.events[0].arguments["person"].len(), 2);
        assert_eq!(serde_json::to_string(&d).unwrap(), line);
    }

    #[test]
    fn out_of_bounds_spans_fail_validation() {
        let mut d = Document::new("d", "a b c");
        d.events.push(EventRecord {
            event_type: "T".into(),
            trigger: Span::new(3, 5),
            arguments: BTreeMap::new(),
        });
        assert!(d.validate().is_err());
    }

    #[test]
    fn sentences_must_tile_text() {
        let mut d = Document::new("d", "a b . c d .");
        d.sentences = Some(vec![Span::new(1, 4), Span::new(4, 7)]);
        d.validate().unwrap();
        d.sentences = Some(vec![Span::new(1, 4), Span::new(5, 7)]);
        assert!(d.validate().is_err());
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let src = "{\"doc_id\":\"a\",\"tokens\":[\"x\"]}\n\nnot json\n";
        let err = parse_jsonl::<Document, _>(src.as_bytes(), "f.jsonl").unwrap_err();
        assert!(err.to_string().starts_with("f.jsonl:3"), "{err}");
    }
}
