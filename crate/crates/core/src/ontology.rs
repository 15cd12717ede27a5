//! Bleached statements, their placeholder dictionaries and the ontology file format.
//!
//! An ontology file holds one statement per line:
//!
//! ```text
//! # comment
//! Life:Die :: [agent|someone] killed [victim|someone else] with [instrument|something] in [place|some place] at [time|some time]
//! ```
//!
//! Placeholder markup `[role|words]` is removed during parsing and each role is
//! mapped to the (1-based, contiguous) positions its words occupy. `\[`, `\]`,
//! `\|` and `\\` escape literal characters.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::RefinementState;
use crate::error::{Error, Result};
use crate::tags::{Span, SpanSet};

/// Pseudo-role under which triggers are reported; not usable in statements.
pub const TRIGGER_ROLE: &str = "trigger";

/// Token inserted between multiple spans filling one placeholder.
pub const CONJUNCTION: &str = "and";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSlot {
    pub role: String,
    /// Positions of the placeholder words.
    pub span: Span,
}

impl RoleSlot {
    pub fn new(role: impl Into<String>, span: Span) -> Self {
        Self {
            role: role.into(),
            span,
        }
    }

    pub fn indices(&self) -> BTreeSet<usize> {
        (self.span.start..self.span.end).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleachedStatement {
    pub event_type: String,
    pub tokens: Vec<String>,
    /// Placeholder dictionary in fill order (left to right).
    pub placeholders: Vec<RoleSlot>,
}

impl BleachedStatement {
    /// Validates placeholder invariants. Does not require a non-empty trigger set;
    /// [`Ontology`] construction checks that separately.
    pub fn new(
        event_type: impl Into<String>,
        tokens: Vec<String>,
        placeholders: Vec<RoleSlot>,
    ) -> Result<Self> {
        let stmt = Self {
            event_type: event_type.into(),
            tokens,
            placeholders,
        };
        stmt.validate().map_err(|m| Error::ontology(0, m))?;
        Ok(stmt)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.event_type.is_empty() || self.event_type.chars().any(char::is_whitespace) {
            return Err(format!("invalid event type {:?}", self.event_type));
        }
        if self.tokens.is_empty() {
            return Err(format!("{}: statement has no tokens", self.event_type));
        }
        let n = self.tokens.len();
        let mut roles = HashSet::new();
        let mut prev_end = 1;
        for slot in &self.placeholders {
            if slot.role.eq_ignore_ascii_case(TRIGGER_ROLE) {
                return Err(format!("role name {:?} is reserved", slot.role));
            }
            if slot.role.is_empty() {
                return Err("empty role name".into());
            }
            if !roles.insert(slot.role.as_str()) {
                return Err(format!("duplicate role {:?}", slot.role));
            }
            if slot.span.is_empty() {
                return Err(format!("empty placeholder for role {:?}", slot.role));
            }
            if !slot.span.within(n) {
                return Err(format!("placeholder {} for {:?} out of range", slot.span, slot.role));
            }
            if slot.span.start < prev_end {
                return Err(format!(
                    "placeholder for {:?} overlaps or precedes an earlier one",
                    slot.role
                ));
            }
            prev_end = slot.span.end;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.placeholders.iter().map(|s| s.role.as_str())
    }

    pub fn slot(&self, role: &str) -> Option<&RoleSlot> {
        self.placeholders.iter().find(|s| s.role == role)
    }

    /// Serialises back into one ontology-file line.
    pub fn to_line(&self) -> String {
        let mut out = String::new();
        write!(out, "{} :: ", self.event_type).unwrap();
        let mut j = 0;
        let mut first = true;
        let mut sep = |out: &mut String| {
            if !first {
                out.push(' ');
            }
            first = false;
        };
        for slot in &self.placeholders {
            while j + 1 < slot.span.start {
                sep(&mut out);
                out.push_str(&escape(&self.tokens[j]));
                j += 1;
            }
            sep(&mut out);
            let words: Vec<String> = slot.span.text(&self.tokens).iter().map(|w| escape(w)).collect();
            write!(out, "[{}|{}]", escape(&slot.role), words.join(" ")).unwrap();
            j = slot.span.end - 1;
        }
        while j < self.tokens.len() {
            sep(&mut out);
            out.push_str(&escape(&self.tokens[j]));
            j += 1;
        }
        out
    }
}

/// Statement positions not covered by any placeholder.
pub fn trigger_index_set(stmt: &BleachedStatement) -> Result<Vec<usize>> {
    let covered: BTreeSet<usize> = stmt.placeholders.iter().flat_map(|s| s.indices()).collect();
    let rest: Vec<usize> = (1..=stmt.len()).filter(|i| !covered.contains(i)).collect();
    if rest.is_empty() {
        return Err(Error::ontology(
            0,
            format!("{}: statement has no non-placeholder tokens to anchor a trigger", stmt.event_type),
        ));
    }
    Ok(rest)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    entries: Vec<BleachedStatement>,
}

impl Ontology {
    pub fn new(entries: Vec<BleachedStatement>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (k, e) in entries.iter().enumerate() {
            e.validate().map_err(|m| Error::ontology(k + 1, m))?;
            if !seen.insert(e.event_type.as_str()) {
                return Err(Error::ontology(k + 1, format!("duplicate event type {:?}", e.event_type)));
            }
            trigger_index_set(e).map_err(|err| match err {
                Error::Ontology { message, .. } => Error::ontology(k + 1, message),
                other => other,
            })?;
        }
        Ok(Self { entries })
    }

    pub fn statements(&self) -> &[BleachedStatement] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, event_type: &str) -> Option<&BleachedStatement> {
        self.entries.iter().find(|e| e.event_type == event_type)
    }

    pub fn event_types(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.event_type.as_str())
    }

    /// Same ontology restricted to types for which `keep` holds, order preserved.
    pub fn filter(&self, keep: impl Fn(&str) -> bool) -> Ontology {
        Ontology {
            entries: self.entries.iter().filter(|e| keep(&e.event_type)).cloned().collect(),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|e| e.to_line() + "\n").collect()
    }
}

/// Parses an ontology document. Errors carry the 1-based source line.
pub fn parse_ontology(source: &str) -> Result<Ontology> {
    let mut entries: Vec<BleachedStatement> = Vec::new();
    let mut seen = HashSet::new();
    for (k, raw) in source.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let stmt = parse_line(line).map_err(|m| Error::ontology(line_no, m))?;
        if !seen.insert(stmt.event_type.clone()) {
            return Err(Error::ontology(
                line_no,
                format!("duplicate event type {:?}", stmt.event_type),
            ));
        }
        trigger_index_set(&stmt).map_err(|e| match e {
            Error::Ontology { message, .. } => Error::ontology(line_no, message),
            other => other,
        })?;
        entries.push(stmt);
    }
    Ok(Ontology { entries })
}

enum Piece {
    Text(String),
    Slot { role: String, words: String },
}

fn parse_line(line: &str) -> std::result::Result<BleachedStatement, String> {
    let (ty, body) = line
        .split_once("::")
        .ok_or_else(|| "expected `EVENT_TYPE :: statement`".to_string())?;
    let ty = ty.trim();

    let mut pieces = Vec::new();
    let mut buf = String::new();
    let mut role: Option<String> = None;
    let mut in_slot = false;
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(e @ ('[' | ']' | '|' | '\\')) => buf.push(e),
                Some(other) => return Err(format!("unknown escape \\{other}")),
                None => return Err("dangling escape at end of line".into()),
            },
            '[' if in_slot => return Err("nested '[' inside placeholder".into()),
            '[' => {
                pieces.push(Piece::Text(std::mem::take(&mut buf)));
                in_slot = true;
            }
            '|' if in_slot && role.is_none() => role = Some(std::mem::take(&mut buf)),
            '|' => return Err("unexpected '|'".into()),
            ']' if in_slot => {
                let r = role
                    .take()
                    .ok_or_else(|| "placeholder missing `role|` prefix".to_string())?;
                pieces.push(Piece::Slot {
                    role: r.trim().to_string(),
                    words: std::mem::take(&mut buf),
                });
                in_slot = false;
            }
            ']' => return Err("unmatched ']'".into()),
            c => buf.push(c),
        }
    }
    if in_slot {
        return Err("unterminated placeholder".into());
    }
    pieces.push(Piece::Text(buf));

    let mut tokens = Vec::new();
    let mut slots = Vec::new();
    for p in pieces {
        match p {
            Piece::Text(t) => tokens.extend(t.split_whitespace().map(str::to_string)),
            Piece::Slot { role, words } => {
                let start = tokens.len() + 1;
                tokens.extend(words.split_whitespace().map(str::to_string));
                let span = Span::new(start, tokens.len() + 1);
                if span.is_empty() {
                    return Err(format!("empty placeholder for role {role:?}"));
                }
                slots.push(RoleSlot::new(role, span));
            }
        }
    }
    let stmt = BleachedStatement {
        event_type: ty.to_string(),
        tokens,
        placeholders: slots,
    };
    stmt.validate()?;
    Ok(stmt)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '[' | ']' | '|' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Tokens substituted for a placeholder: spans in text order joined with [`CONJUNCTION`].
pub fn fill_tokens(spans: &SpanSet, text: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, s) in spans.iter().enumerate() {
        if k > 0 {
            out.push(CONJUNCTION.to_string());
        }
        out.extend_from_slice(s.text(text));
    }
    out
}

/// A statement with some placeholders replaced, plus where every slot now sits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub tokens: Vec<String>,
    /// Current position of each slot, aligned with `placeholders`.
    pub slots: Vec<Span>,
}

/// Substitutes `fills[k]` (when present) for placeholder `k`.
pub fn render_with_fills(stmt: &BleachedStatement, fills: &[Option<Vec<String>>]) -> Rendered {
    assert_eq!(fills.len(), stmt.placeholders.len(), "one fill entry per placeholder");
    let mut tokens = Vec::with_capacity(stmt.len());
    let mut slots = Vec::with_capacity(fills.len());
    let mut j = 0;
    for (slot, fill) in stmt.placeholders.iter().zip(fills) {
        tokens.extend_from_slice(&stmt.tokens[j..slot.span.start - 1]);
        let start = tokens.len() + 1;
        match fill {
            Some(words) => tokens.extend_from_slice(words),
            None => tokens.extend_from_slice(slot.span.text(&stmt.tokens)),
        }
        slots.push(Span::new(start, tokens.len() + 1));
        j = slot.span.end - 1;
    }
    tokens.extend_from_slice(&stmt.tokens[j..]);
    Rendered { tokens, slots }
}

/// Current surface form of a refinement state.
pub fn render_statement(state: &RefinementState) -> Vec<String> {
    state.layout().tokens
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const LIFE_DIE: &str = "Life:Die :: [agent|someone] killed [victim|someone else] with [instrument|something] in [place|some place] at [time|some time]";

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn parses_life_die_dictionary() {
        let o = parse_ontology(LIFE_DIE).unwrap();
        let s = &o.statements()[0];
        assert_eq!(s.event_type, "Life:Die");
        assert_eq!(s.len(), 12);
        let dict: Vec<(&str, BTreeSet<usize>)> =
            s.placeholders.iter().map(|p| (p.role.as_str(), p.indices())).collect();
        assert_eq!(
            dict,
            vec![
                ("agent", set(&[1])),
                ("victim", set(&[3, 4])),
                ("instrument", set(&[6])),
                ("place", set(&[8, 9])),
                ("time", set(&[11, 12])),
            ]
        );
        assert_eq!(trigger_index_set(s).unwrap(), vec![2, 5, 7, 10]);
    }

    #[test]
    fn minimal_statement() {
        let o = parse_ontology("T :: [a|x] y").unwrap();
        let s = &o.statements()[0];
        assert_eq!(s.tokens, vec!["x", "y"]);
        assert_eq!(s.placeholders, vec![RoleSlot::new("a", Span::new(1, 2))]);
        assert_eq!(trigger_index_set(s).unwrap(), vec![2]);
    }

    #[test]
    fn rejects_malformed_inputs() {
        for (src, needle) in [
            ("T :: [a|x] [a|z]", "duplicate role"),
            ("T :: [a|x] y\nT :: [b|x] y", "duplicate event type"),
            ("T :: [a|] y", "empty placeholder"),
            ("T :: [trigger|x] y", "reserved"),
            ("T :: [a|x y", "unterminated"),
            ("T :: [a x] y", "role|"),
            ("T :: a ] y", "unmatched"),
            ("T [a|x] y", "EVENT_TYPE"),
            ("T :: [a|x] [b|y]", "no non-placeholder"),
        ] {
            let err = parse_ontology(src).unwrap_err().to_string();
            assert!(err.contains(needle), "{src:?} gave {err:?}");
        }
    }

    #[test]
    fn error_reports_source_line() {
        let err = parse_ontology("# header\n\nT :: [a|x] y\nU :: [b|x] [b|y] z").unwrap_err();
        assert!(matches!(err, Error::Ontology { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn all_placeholder_statement_has_no_trigger_set() {
        let s = BleachedStatement::new(
            "T",
            vec!["x".into(), "y".into()],
            vec![RoleSlot::new("a", Span::new(1, 2)), RoleSlot::new("b", Span::new(2, 3))],
        )
        .unwrap();
        assert!(trigger_index_set(&s).is_err());
    }

    #[test]
    fn escapes_survive_round_trip() {
        let src = r"Odd:Type :: [who|some \[bracketed\] one] said a\|b";
        let o = parse_ontology(src).unwrap();
        let s = &o.statements()[0];
        assert_eq!(s.tokens, vec!["some", "[bracketed]", "one", "said", "a|b"]);
        assert_eq!(parse_ontology(&o.to_text()).unwrap(), o);
    }

    #[test]
    fn out_of_order_placeholders_are_rejected() {
        let r = BleachedStatement::new(
            "T",
            vec!["x".into(), "y".into(), "z".into()],
            vec![RoleSlot::new("b", Span::new(3, 4)), RoleSlot::new("a", Span::new(1, 2))],
        );
        assert!(r.is_err());
    }

    #[test]
    fn rendering_replaces_and_shifts() {
        let o = parse_ontology("Life:Marry :: [person|some people] married in [place|some location] at [time|some time]").unwrap();
        let s = &o.statements()[0];
        let fill = vec!["Kim".to_string(), "and".into(), "Pat".into()];
        let r = render_with_fills(s, &[Some(fill), None, None]);
        assert_eq!(r.tokens.join(" "), "Kim and Pat married in some location at some time");
        assert_eq!(r.slots, vec![Span::new(1, 4), Span::new(6, 8), Span::new(9, 11)]);
        let id = render_with_fills(s, &[None, None, None]);
        assert_eq!(id.tokens, s.tokens);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn word() -> impl Strategy<Value = String> {
            prop_oneof![
                "[a-z]{1,6}",
                Just("[x]".to_string()),
                Just("a|b".to_string()),
                Just(r"back\slash".to_string()),
            ]
        }

        fn statement() -> impl Strategy<Value = BleachedStatement> {
            // Alternating literal runs and placeholders; at least one literal word.
            (
                proptest::collection::vec(
                    (proptest::collection::vec(word(), 0..3), proptest::collection::vec(word(), 1..3)),
                    0..4,
                ),
                proptest::collection::vec(word(), 1..3),
            )
                .prop_map(|(parts, tail)| {
                    let mut tokens = Vec::new();
                    let mut slots = Vec::new();
                    for (k, (lit, ph)) in parts.into_iter().enumerate() {
                        tokens.extend(lit);
                        let start = tokens.len() + 1;
                        tokens.extend(ph);
                        slots.push(RoleSlot::new(format!("r{k}"), Span::new(start, tokens.len() + 1)));
                    }
                    tokens.extend(tail);
                    BleachedStatement::new("Ev:Type", tokens, slots).unwrap()
                })
        }

        proptest! {
            #[test]
            fn serialize_parse_round_trip(stmts in proptest::collection::vec(statement(), 1..4)) {
                let stmts: Vec<_> = stmts
                    .into_iter()
                    .enumerate()
                    .map(|(k, mut s)| { s.event_type = format!("T{k}"); s })
                    .collect();
                let o = Ontology::new(stmts).unwrap();
                let again = parse_ontology(&o.to_text()).unwrap();
                prop_assert_eq!(&again, &o);
                prop_assert_eq!(parse_ontology(&again.to_text()).unwrap(), again);
            }

            #[test]
            fn trigger_set_partitions_positions(s in statement()) {
                let trig = trigger_index_set(&s).unwrap();
                let mut all: Vec<usize> = trig.clone();
                for slot in &s.placeholders {
                    for i in slot.indices() {
                        prop_assert!(!trig.contains(&i));
                        all.push(i);
                    }
                }
                all.sort_unstable();
                prop_assert_eq!(all, (1..=s.len()).collect::<Vec<_>>());
            }

            #[test]
            fn placeholders_are_contiguous_and_disjoint(s in statement()) {
                let mut used = BTreeSet::new();
                for slot in &s.placeholders {
                    let idx: Vec<usize> = slot.indices().into_iter().collect();
                    prop_assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));
                    for i in idx { prop_assert!(used.insert(i)); }
                }
            }
        }
    }
}
