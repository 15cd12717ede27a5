//! Penn-style bracketed constituency trees.

use crate::error::{Error, Result};
use crate::tags::Span;

/// Constituent labels that mark a question phrase.
pub const WH_TAGS: [&str; 8] = ["WHADJP", "WHADVP", "WHNP", "WHPP", "WDT", "WP", "WP$", "WRB"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tree {
    Leaf(String),
    Node { label: String, children: Vec<Tree> },
}

impl Tree {
    pub fn label(&self) -> Option<&str> {
        match self {
            Tree::Leaf(_) => None,
            Tree::Node { label, .. } => Some(label),
        }
    }

    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Tree::Leaf(w) => out.push(w),
            Tree::Node { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn yield_len(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Node { children, .. } => children.iter().map(Tree::yield_len).sum(),
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(src: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in src.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok::Atom(&src[s..i]));
            }
            match c {
                '(' => out.push(Tok::Open),
                ')' => out.push(Tok::Close),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok::Atom(&src[s..]));
    }
    out
}

/// Parses one bracketed tree. A label-less outer wrapper `( (S ...) )` is unwrapped.
pub fn parse_tree(src: &str) -> Result<Tree> {
    let toks = lex(src);
    let mut pos = 0;
    let tree = parse_node(&toks, &mut pos)?;
    if pos != toks.len() {
        return Err(Error::Tree(format!("trailing input after position {pos}")));
    }
    Ok(match tree {
        Tree::Node { label, mut children } if label.is_empty() && children.len() == 1 => children.remove(0),
        t => t,
    })
}

fn parse_node(toks: &[Tok<'_>], pos: &mut usize) -> Result<Tree> {
    match toks.get(*pos) {
        Some(Tok::Open) => *pos += 1,
        Some(Tok::Atom(a)) => return Err(Error::Tree(format!("expected '(' but found {a:?}"))),
        Some(Tok::Close) => return Err(Error::Tree("unbalanced ')'".into())),
        None => return Err(Error::Tree("empty tree".into())),
    }
    let label = match toks.get(*pos) {
        Some(Tok::Atom(a)) => {
            *pos += 1;
            a.to_string()
        }
        _ => String::new(),
    };
    let mut children = Vec::new();
    loop {
        match toks.get(*pos) {
            Some(Tok::Close) => {
                *pos += 1;
                break;
            }
            Some(Tok::Open) => children.push(parse_node(toks, pos)?),
            Some(Tok::Atom(a)) => {
                children.push(Tree::Leaf(a.to_string()));
                *pos += 1;
            }
            None => return Err(Error::Tree("unbalanced '(': missing ')'".into())),
        }
    }
    if children.is_empty() {
        return Err(Error::Tree(format!("node {label:?} has no children")));
    }
    Ok(Tree::Node { label, children })
}

fn is_wh(label: &str) -> bool {
    // Function tags and indices: WHNP-1, WHADVP=2.
    let base = label.split(['-', '=']).next().unwrap_or(label);
    let base = if base.is_empty() { label } else { base };
    WH_TAGS.contains(&base)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WhPhrase {
    None,
    /// 1-based half-open token interval of the unique maximal wh-constituent.
    One(Span),
    Ambiguous(Vec<Span>),
}

/// Yield intervals of wh-labelled nodes with no wh-labelled ancestor.
pub fn maximal_wh_nodes(tree: &Tree) -> Vec<Span> {
    let mut out = Vec::new();
    walk(tree, 1, &mut out);
    out
}

fn walk(t: &Tree, start: usize, out: &mut Vec<Span>) {
    if let Tree::Node { label, children } = t {
        if is_wh(label) {
            out.push(Span::new(start, start + t.yield_len()));
            return;
        }
        let mut at = start;
        for c in children {
            walk(c, at, out);
            at += c.yield_len();
        }
    }
}

pub fn extract_wh_phrase(tree: &Tree) -> WhPhrase {
    let mut nodes = maximal_wh_nodes(tree);
    match nodes.len() {
        0 => WhPhrase::None,
        1 => WhPhrase::One(nodes.remove(0)),
        _ => WhPhrase::Ambiguous(nodes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const OXYGEN: &str = "(ROOT (SBARQ (WHNP (WHNP (WDT What) (NN form)) (PP (IN of) (NP (NN oxygen)))) (SQ (VBZ is) (VP (VBN composed) (PP (IN of) (NP (CD 3) (NN oxygen) (NNS atoms))))) (. ?)))";

    #[test]
    fn oxygen_wh_phrase() {
        let t = parse_tree(OXYGEN).unwrap();
        let words = t.leaves();
        assert_eq!(words.join(" "), "What form of oxygen is composed of 3 oxygen atoms ?");
        let WhPhrase::One(s) = extract_wh_phrase(&t) else { panic!() };
        assert_eq!(words[s.range()].join(" "), "What form of oxygen");
    }

    #[test]
    fn nested_wh_takes_outermost() {
        let t = parse_tree("(SBARQ (WHNP (WP Who)) (SQ (VBD won)) (. ?))").unwrap();
        assert_eq!(extract_wh_phrase(&t), WhPhrase::One(Span::new(1, 2)));
        let t = parse_tree("(SBARQ (WHPP (IN In) (WHNP (WDT which) (NN year))) (SQ (VBD did) (NP (PRP it)) (VP (VB end))) (. ?))").unwrap();
        assert_eq!(extract_wh_phrase(&t), WhPhrase::One(Span::new(1, 4)));
    }

    #[test]
    fn declarative_and_multiple() {
        let t = parse_tree("(S (NP (NNP Kim)) (VP (VBD left)) (. .))").unwrap();
        assert_eq!(extract_wh_phrase(&t), WhPhrase::None);
        let t = parse_tree("(SBARQ (WHNP (WP Who)) (SQ (VBD saw) (WHNP (WP what))) (. ?))").unwrap();
        assert_eq!(
            extract_wh_phrase(&t),
            WhPhrase::Ambiguous(vec![Span::new(1, 2), Span::new(3, 4)])
        );
    }

    #[test]
    fn labels_with_indices() {
        let t = parse_tree("( (SBARQ (WHADVP-1 (WRB When)) (SQ (VBD did) (NP (PRP it)) (VP (VB fall))) (. ?)) )").unwrap();
        assert_eq!(t.label(), Some("SBARQ"));
        assert_eq!(extract_wh_phrase(&t), WhPhrase::One(Span::new(1, 2)));
        assert!(!is_wh("NP"));
        assert!(is_wh("WP$"));
    }

    #[test]
    fn unbalanced_brackets() {
        assert!(parse_tree("(S (NP a)").is_err());
        assert!(parse_tree("(S (NP a)))").is_err());
        assert!(parse_tree("").is_err());
        assert!(parse_tree("(S ())").is_err());
    }
}
