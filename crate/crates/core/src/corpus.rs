//! Templates, attribute sets, dependency trees and slot filling.
//!
//! Corpora are pre-tokenized: tokens are separated by whitespace and a token
//! beginning with `$` names an attribute.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("line contains no tokens")]
    EmptyLine,
    #[error("attribute {0} occurs more than once")]
    DuplicateAttribute(String),
    #[error("invalid token {0:?}")]
    InvalidToken(String),
    #[error("invalid attribute name {0:?}")]
    InvalidAttribute(String),
    #[error("no binding for attribute {0}")]
    MissingBinding(String),
    #[error("invalid binding for {0:?}: keys start with `$` and values are non-empty")]
    InvalidBinding(String),
    #[error("tree record has no tokens")]
    EmptyRecord,
    #[error("tree record has {tokens} tokens but {heads} heads")]
    LengthMismatch { tokens: usize, heads: usize },
    #[error("head {head} of token {index} is out of range")]
    IndexOutOfRange { index: usize, head: i64 },
    #[error("token {index} is part of a cycle")]
    Cycle { index: usize },
    #[error("tokens {first} and {second} are both roots")]
    MultipleRoots { first: usize, second: usize },
    #[error("arc to token {index} crosses another arc")]
    NonProjective { index: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenKind {
    Word,
    Attribute,
}

/// A single whitespace-free token.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(String);

impl Token {
    pub fn new(text: impl Into<String>) -> Result<Self, CorpusError> {
        let text = text.into();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidToken(text));
        }
        Ok(Token(text))
    }

    pub fn text(&self) -> &str {
        &self.0
    }

    pub fn kind(&self) -> TokenKind {
        if self.0.starts_with('$') {
            TokenKind::Attribute
        } else {
            TokenKind::Word
        }
    }

    pub fn is_attribute(&self) -> bool {
        self.kind() == TokenKind::Attribute
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A word sequence intermixed with attributes. Never empty, and no attribute
/// appears twice.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Template {
    tokens: Vec<Token>,
}

impl Template {
    pub fn new(tokens: Vec<Token>) -> Result<Self, CorpusError> {
        if tokens.is_empty() {
            return Err(CorpusError::EmptyLine);
        }
        let mut seen = BTreeSet::new();
        for t in tokens.iter().filter(|t| t.is_attribute()) {
            if !seen.insert(t.text()) {
                return Err(CorpusError::DuplicateAttribute(t.text().to_string()));
            }
        }
        Ok(Template { tokens })
    }

    /// Builds a template from token texts.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Result<Self, CorpusError> {
        let tokens = words
            .iter()
            .map(|w| Token::new(w.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Template::new(tokens)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn attribute_set(&self) -> AttributeSet {
        extract_attribute_set(self)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t.text())?;
        }
        Ok(())
    }
}

impl core::str::FromStr for Template {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_template_line(s)
    }
}

/// Parses one corpus line: whitespace-separated tokens, `$` marks attributes.
pub fn parse_template_line(line: &str) -> Result<Template, CorpusError> {
    let tokens = line
        .split_whitespace()
        .map(|w| Token(w.to_string()))
        .collect::<Vec<_>>();
    Template::new(tokens)
}

/// Unordered set of attribute names. Ordering and equality are those of the
/// sorted canonical form.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttributeSet(BTreeSet<String>);

impl AttributeSet {
    pub fn new() -> Self {
        AttributeSet(BTreeSet::new())
    }

    /// Parses the canonical comma-separated form (`$a,$b`). Whitespace around
    /// names is ignored and the empty string is the empty set.
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        let mut set = AttributeSet::new();
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            set.insert(name)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, name: &str) -> Result<bool, CorpusError> {
        if !name.starts_with('$') || name.len() < 2 || name.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidAttribute(name.to_string()));
        }
        Ok(self.0.insert(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn remove(&mut self, name: &str) -> bool {
        self.0.remove(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> + '_ {
        self.0.iter().map(String::as_str)
    }

    pub fn is_subset(&self, other: &AttributeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    /// Sorted, comma-separated form.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(a);
        }
        out
    }
}

impl fmt::Display for AttributeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        f.write_str(&self.canonical())?;
        f.write_str("}")
    }
}

/// Projects the attribute tokens of a template.
pub fn extract_attribute_set(t: &Template) -> AttributeSet {
    AttributeSet(
        t.tokens
            .iter()
            .filter(|t| t.is_attribute())
            .map(|t| t.text().to_string())
            .collect(),
    )
}

/// Attribute → value map used for the second step of realization.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn insert(&mut self, attr: &str, value: &str) -> Result<(), CorpusError> {
        if !attr.starts_with('$') || attr.len() < 2 || value.is_empty() {
            return Err(CorpusError::InvalidBinding(attr.to_string()));
        }
        self.0.insert(attr.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, attr: &str) -> Option<&str> {
        self.0.get(attr).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Replaces every attribute token by its bound value.
pub fn fill_slots(t: &Template, b: &Bindings) -> Result<String, CorpusError> {
    let mut out = String::new();
    for (i, tok) in t.tokens().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        if tok.is_attribute() {
            let v = b
                .get(tok.text())
                .ok_or_else(|| CorpusError::MissingBinding(tok.text().to_string()))?;
            out.push_str(v);
        } else {
            out.push_str(tok.text());
        }
    }
    Ok(out)
}

/// Left/right side of a head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Left,
    Right,
}

/// A node with its dependents. Both child lists are ordered closest to the
/// head first.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TreeNode {
    pub token: Token,
    pub left: Vec<TreeNode>,
    pub right: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(token: Token) -> Self {
        TreeNode {
            token,
            left: Vec::new(),
            right: Vec::new(),
        }
    }

    pub fn children(&self, dir: Direction) -> &[TreeNode] {
        match dir {
            Direction::Left => &self.left,
            Direction::Right => &self.right,
        }
    }

    pub fn size(&self) -> usize {
        1 + self
            .left
            .iter()
            .chain(self.right.iter())
            .map(TreeNode::size)
            .sum::<usize>()
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a Token>) {
        for c in self.left.iter().rev() {
            c.collect_tokens(out);
        }
        out.push(&self.token);
        for c in &self.right {
            c.collect_tokens(out);
        }
    }

    /// Appends the surface tokens and head indices of this subtree.
    fn flatten(&self, parent: Option<usize>, tokens: &mut Vec<Token>, heads: &mut Vec<Option<usize>>) {
        // Positions of the left subtrees are only known after they are laid
        // out, so children record a placeholder that is patched afterwards.
        let mut pending = Vec::new();
        for c in self.left.iter().rev() {
            let start = tokens.len();
            c.flatten(None, tokens, heads);
            pending.push(start + c.root_offset());
        }
        let me = tokens.len();
        tokens.push(self.token.clone());
        heads.push(parent);
        for idx in pending {
            heads[idx] = Some(me);
        }
        for c in &self.right {
            c.flatten(Some(me), tokens, heads);
        }
    }

    /// Position of this node's own token within its linearized subtree.
    fn root_offset(&self) -> usize {
        self.left.iter().map(TreeNode::size).sum()
    }
}

/// An unlabeled projective dependency tree below an implicit ROOT.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DependencyTree {
    pub root: TreeNode,
}

impl DependencyTree {
    /// Checks the at-most-once attribute rule and wraps `root`.
    pub fn new(root: TreeNode) -> Result<Self, CorpusError> {
        let tree = DependencyTree { root };
        let mut seen = BTreeSet::new();
        for t in tree.tokens() {
            if t.is_attribute() && !seen.insert(t.text()) {
                return Err(CorpusError::DuplicateAttribute(t.text().to_string()));
            }
        }
        Ok(tree)
    }

    /// Builds a tree from surface tokens and parent indices (`-1` for the
    /// root). Children are ordered by surface proximity to their head.
    pub fn from_heads<S: AsRef<str>>(tokens: &[S], heads: &[i64]) -> Result<Self, CorpusError> {
        let n = tokens.len();
        if n == 0 {
            return Err(CorpusError::EmptyRecord);
        }
        if heads.len() != n {
            return Err(CorpusError::LengthMismatch {
                tokens: n,
                heads: heads.len(),
            });
        }
        let toks = tokens
            .iter()
            .map(|t| Token::new(t.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;

        let mut parent = Vec::with_capacity(n);
        let mut root = None;
        for (i, &h) in heads.iter().enumerate() {
            if h == -1 {
                if let Some(first) = root {
                    return Err(CorpusError::MultipleRoots { first, second: i });
                }
                root = Some(i);
                parent.push(None);
            } else if h < 0 || h as u64 >= n as u64 {
                return Err(CorpusError::IndexOutOfRange { index: i, head: h });
            } else if h as usize == i {
                return Err(CorpusError::Cycle { index: i });
            } else {
                parent.push(Some(h as usize));
            }
        }
        // Every node must reach the root in fewer than n steps.
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(p) = parent[cur] {
                cur = p;
                steps += 1;
                if steps > n {
                    return Err(CorpusError::Cycle { index: start });
                }
            }
        }
        let root = match root {
            Some(r) => r,
            None => return Err(CorpusError::Cycle { index: 0 }),
        };

        // Projectivity: everything strictly between a dependent and its head
        // is dominated by that head.
        for (d, p) in parent.iter().enumerate() {
            if let Some(h) = *p {
                let (lo, hi) = if d < h { (d, h) } else { (h, d) };
                for k in lo + 1..hi {
                    if !dominates(&parent, h, k) {
                        return Err(CorpusError::NonProjective { index: d });
                    }
                }
            }
        }

        let mut children: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
        for (d, p) in parent.iter().enumerate() {
            if let Some(h) = *p {
                children[h].push(d);
            }
        }
        let node = build_node(root, &toks, &children);
        DependencyTree::new(node)
    }

    /// Surface tokens with parent indices (`-1` for the root).
    pub fn to_heads(&self) -> (Vec<Token>, Vec<i64>) {
        let mut tokens = Vec::new();
        let mut heads = Vec::new();
        self.root.flatten(None, &mut tokens, &mut heads);
        let heads = heads
            .into_iter()
            .map(|h| h.map_or(-1, |h| h as i64))
            .collect();
        (tokens, heads)
    }

    /// Surface tokens in order.
    pub fn tokens(&self) -> Vec<&Token> {
        let mut out = Vec::new();
        self.root.collect_tokens(&mut out);
        out
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn attribute_set(&self) -> AttributeSet {
        AttributeSet(
            self.tokens()
                .into_iter()
                .filter(|t| t.is_attribute())
                .map(|t| t.text().to_string())
                .collect(),
        )
    }

    pub fn linearize(&self) -> Template {
        linearize(self)
    }
}

fn dominates(parent: &[Option<usize>], head: usize, mut node: usize) -> bool {
    loop {
        match parent[node] {
            Some(p) if p == head => return true,
            Some(p) => node = p,
            None => return false,
        }
    }
}

fn build_node(idx: usize, toks: &[Token], children: &[Vec<usize>]) -> TreeNode {
    let mut left: Vec<usize> = children[idx].iter().copied().filter(|&c| c < idx).collect();
    let mut right: Vec<usize> = children[idx].iter().copied().filter(|&c| c > idx).collect();
    left.sort_unstable_by(|a, b| b.cmp(a));
    right.sort_unstable();
    TreeNode {
        token: toks[idx].clone(),
        left: left.into_iter().map(|c| build_node(c, toks, children)).collect(),
        right: right.into_iter().map(|c| build_node(c, toks, children)).collect(),
    }
}

/// In-order traversal: left children outermost first, the head, then right
/// children innermost first.
pub fn linearize(tree: &DependencyTree) -> Template {
    Template {
        tokens: tree.tokens().into_iter().cloned().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(s: &str) -> Template {
        parse_template_line(s).unwrap()
    }

    fn flight_tree() -> DependencyTree {
        DependencyTree::from_heads(
            &["evening", "flights", "from", "Chicago", "in", "the", "afternoon"],
            &[1, -1, 1, 2, 1, 6, 4],
        )
        .unwrap()
    }

    #[test]
    fn parses_sample_line() {
        let tpl = t("  $trip flights from $city-fr to $city-to ");
        let words: Vec<_> = tpl.tokens().iter().map(Token::text).collect();
        assert_eq!(
            words,
            ["$trip", "flights", "from", "$city-fr", "to", "$city-to"]
        );
        assert_eq!(tpl.tokens()[0].kind(), TokenKind::Attribute);
        assert_eq!(tpl.tokens()[1].kind(), TokenKind::Word);
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert_eq!(parse_template_line(""), Err(CorpusError::EmptyLine));
        assert_eq!(parse_template_line("   "), Err(CorpusError::EmptyLine));
        assert_eq!(
            parse_template_line("$a b $a"),
            Err(CorpusError::DuplicateAttribute("$a".into()))
        );
        // Repeated plain words are fine.
        assert!(parse_template_line("to to $a").is_ok());
    }

    #[test]
    fn extracts_attributes() {
        let a = extract_attribute_set(&t("flights to $city-to leaving at $time-dep"));
        assert_eq!(a, AttributeSet::parse("$time-dep,$city-to").unwrap());
        assert!(extract_attribute_set(&t("flights")).is_empty());
        assert_eq!(extract_attribute_set(&t("$a x $b")).len(), 2);
    }

    #[test]
    fn attribute_set_canonical_form() {
        let a = AttributeSet::parse("$b, $a,$c").unwrap();
        assert_eq!(a.canonical(), "$a,$b,$c");
        assert_eq!(AttributeSet::parse("$c,$a,$b").unwrap(), a);
        assert!(AttributeSet::parse("").unwrap().is_empty());
        assert!(AttributeSet::parse("a").is_err());
    }

    #[test]
    fn fills_table2_step2() {
        let tpl = t("a flight to $city-to that departs from $city-fr at $time-dep on $date-dep");
        let mut b = Bindings::new();
        b.insert("$city-fr", "New York City").unwrap();
        b.insert("$city-to", "Seattle").unwrap();
        b.insert("$time-dep", "6 a.m.").unwrap();
        b.insert("$date-dep", "Wednesday").unwrap();
        assert_eq!(
            fill_slots(&tpl, &b).unwrap(),
            "a flight to Seattle that departs from New York City at 6 a.m. on Wednesday"
        );
    }

    #[test]
    fn fill_identity_and_missing() {
        let tpl = t("nonstop flights please");
        assert_eq!(fill_slots(&tpl, &Bindings::new()).unwrap(), "nonstop flights please");
        assert_eq!(
            fill_slots(&t("$x"), &Bindings::new()),
            Err(CorpusError::MissingBinding("$x".into()))
        );
    }

    #[test]
    fn bindings_validate() {
        let mut b = Bindings::new();
        assert!(b.insert("x", "y").is_err());
        assert!(b.insert("$x", "").is_err());
    }

    #[test]
    fn builds_flight_tree() {
        let tree = flight_tree();
        let r = &tree.root;
        assert_eq!(r.token.text(), "flights");
        assert_eq!(r.left.len(), 1);
        assert_eq!(r.left[0].token.text(), "evening");
        let right: Vec<_> = r.right.iter().map(|c| c.token.text()).collect();
        assert_eq!(right, ["from", "in"]);
        assert_eq!(r.right[0].right[0].token.text(), "Chicago");
        let afternoon = &r.right[1].right[0];
        assert_eq!(afternoon.token.text(), "afternoon");
        assert_eq!(afternoon.left[0].token.text(), "the");
        assert_eq!(
            tree.linearize().to_string(),
            "evening flights from Chicago in the afternoon"
        );
        assert_eq!(tree.size(), 7);
    }

    #[test]
    fn left_children_closest_first() {
        // a b c <- d : heads of a, b, c are d
        let tree = DependencyTree::from_heads(&["a", "b", "c", "d"], &[3, 3, 3, -1]).unwrap();
        let left: Vec<_> = tree.root.left.iter().map(|c| c.token.text()).collect();
        assert_eq!(left, ["c", "b", "a"]);
        assert_eq!(tree.linearize().to_string(), "a b c d");
    }

    #[test]
    fn single_node_and_errors() {
        let tree = DependencyTree::from_heads(&["flights"], &[-1]).unwrap();
        assert_eq!(tree.size(), 1);
        assert_eq!(tree.linearize().to_string(), "flights");

        assert_eq!(
            DependencyTree::from_heads(&["x"], &[0]),
            Err(CorpusError::Cycle { index: 0 })
        );
        assert!(matches!(
            DependencyTree::from_heads(&["a", "b", "c"], &[1, 0, -1]),
            Err(CorpusError::Cycle { .. })
        ));
        assert_eq!(
            DependencyTree::from_heads(&["a", "b"], &[-1, -1]),
            Err(CorpusError::MultipleRoots { first: 0, second: 1 })
        );
        assert_eq!(
            DependencyTree::from_heads(&["a", "b"], &[-1, 7]),
            Err(CorpusError::IndexOutOfRange { index: 1, head: 7 })
        );
        assert_eq!(
            DependencyTree::from_heads(&["$a", "$a"], &[-1, 0]),
            Err(CorpusError::DuplicateAttribute("$a".into()))
        );
        assert!(matches!(
            DependencyTree::from_heads(&["a"], &[-1, 0]),
            Err(CorpusError::LengthMismatch { .. })
        ));
        let empty: [&str; 0] = [];
        assert_eq!(
            DependencyTree::from_heads(&empty, &[]),
            Err(CorpusError::EmptyRecord)
        );
    }

    #[test]
    fn rejects_crossing_arcs() {
        // a -> c, b -> d crosses.
        assert!(matches!(
            DependencyTree::from_heads(&["a", "b", "c", "d"], &[2, 3, -1, 2]),
            Err(CorpusError::NonProjective { .. })
        ));
    }

    #[test]
    fn heads_round_trip() {
        let heads = vec![1, -1, 1, 2, 1, 6, 4];
        let tree = flight_tree();
        let (tokens, back) = tree.to_heads();
        assert_eq!(back, heads);
        assert_eq!(tokens.len(), 7);
    }
}
