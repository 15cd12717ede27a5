//! BIO tags, text spans and the conversions between them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    B,
    I,
    O,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::B, Tag::I, Tag::O];

    /// Column of this tag in an emission matrix.
    pub fn index(self) -> usize {
        match self {
            Tag::B => 0,
            Tag::I => 1,
            Tag::O => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tag::B => "B",
            Tag::I => "I",
            Tag::O => "O",
        };
        f.write_str(s)
    }
}

/// A half-open token interval `[start, end)` with 1-based positions.
///
/// Serialised as a two-element array `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Valid for a text of `len` tokens: non-empty, 1-based, inside `[1, len + 1)`.
    pub fn within(&self, len: usize) -> bool {
        self.start >= 1 && self.start < self.end && self.end <= len + 1
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Zero-based index range into a token slice.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start - 1..self.end - 1
    }

    pub fn shift(&self, by: isize) -> Span {
        Span::new(
            (self.start as isize + by) as usize,
            (self.end as isize + by) as usize,
        )
    }

    pub fn text<'a>(&self, tokens: &'a [String]) -> &'a [String] {
        &tokens[self.range()]
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// Zero or more disjoint, non-empty spans kept in text order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpanSet(Vec<Span>);

impl SpanSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(mut spans: Vec<Span>) -> Result<Self> {
        spans.sort();
        if let Some(s) = spans.iter().find(|s| s.is_empty()) {
            return Err(Error::InvalidSpan(format!("empty span {s}")));
        }
        for w in spans.windows(2) {
            if w[0].overlaps(&w[1]) {
                return Err(Error::InvalidSpan(format!("overlapping spans {} and {}", w[0], w[1])));
            }
        }
        Ok(Self(spans))
    }

    pub fn single(span: Span) -> Self {
        Self(vec![span])
    }

    pub fn spans(&self) -> &[Span] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Span> {
        self.0.iter()
    }

    pub fn retain(&mut self, f: impl FnMut(&Span) -> bool) {
        self.0.retain(f)
    }

    /// Tag sequence over `len` tokens marking every span as `B I*`.
    pub fn to_tags(&self, len: usize) -> Result<TagSequence> {
        let mut tags = vec![Tag::O; len];
        for s in &self.0 {
            if !s.within(len) {
                return Err(Error::InvalidSpan(format!("{s} outside text of length {len}")));
            }
            let r = s.range();
            tags[r.start] = Tag::B;
            for t in &mut tags[r.start + 1..r.end] {
                *t = Tag::I;
            }
        }
        Ok(TagSequence(tags))
    }
}

impl<'a> IntoIterator for &'a SpanSet {
    type Item = &'a Span;
    type IntoIter = std::slice::Iter<'a, Span>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// A BIO-valid tag per text token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tag>", into = "Vec<Tag>")]
pub struct TagSequence(Vec<Tag>);

impl TagSequence {
    pub fn new(tags: Vec<Tag>) -> Result<Self> {
        for (j, t) in tags.iter().enumerate() {
            let prev = if j == 0 { None } else { Some(tags[j - 1]) };
            if *t == Tag::I && matches!(prev, None | Some(Tag::O)) {
                return Err(Error::InvalidTags(format!(
                    "I at position {} follows {}",
                    j + 1,
                    prev.map_or("start".to_string(), |p| p.to_string())
                )));
            }
        }
        Ok(Self(tags))
    }

    pub fn all_outside(len: usize) -> Self {
        Self(vec![Tag::O; len])
    }

    pub fn tags(&self) -> &[Tag] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|t| t.index()).collect()
    }

    pub fn is_all_outside(&self) -> bool {
        self.0.iter().all(|&t| t == Tag::O)
    }
}

impl TryFrom<Vec<Tag>> for TagSequence {
    type Error = Error;
    fn try_from(tags: Vec<Tag>) -> Result<Self> {
        Self::new(tags)
    }
}

impl From<TagSequence> for Vec<Tag> {
    fn from(t: TagSequence) -> Self {
        t.0
    }
}

/// Maximal `B I*` runs as 1-based half-open spans.
pub fn decode_spans(tags: &TagSequence) -> SpanSet {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (j, &t) in tags.tags().iter().enumerate() {
        let pos = j + 1;
        match t {
            Tag::B => {
                if let Some(s) = open.replace(pos) {
                    spans.push(Span::new(s, pos));
                }
            }
            Tag::I => {}
            Tag::O => {
                if let Some(s) = open.take() {
                    spans.push(Span::new(s, pos));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push(Span::new(s, tags.len() + 1));
    }
    SpanSet(spans)
}
