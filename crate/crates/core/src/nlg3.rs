//! Top-down maxent dependency-tree generator.
//!
//! Trees are grown from a dummy ROOT. At each head the left children are
//! predicted one at a time, closest first, each fully expanded before the
//! next; then the right children the same way. Every prediction conditions
//! on the head, its parent, the two previously generated siblings on that
//! side, the direction and the attributes not yet placed anywhere in the
//! tree.
//!
//! ```text
//! Pr(T | A) = prod_w Pr_left(w | A) * Pr_right(w | A)
//! Pr_dir(w | A) = Pr(#children = n) * prod_i p(ch_i(w) | w, ch_i-1, ch_i-2, par(w), dir, attr)
//! ```
//!
//! The child-count prior is uniform over `0..=M'`, so it contributes the
//! same factor for every node and direction. The search charges both
//! factors when a node is created rather than when its sides close.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::corpus::{AttributeSet, Direction, DependencyTree, Template, Token, TreeNode};
use crate::maxent::{
    self, Context, Event, Executor, Feature, FeatureSchema, Marker, MaxentModel, Outcome,
    TrainDiagnostics, TrainOptions, Value,
};
use crate::math::ln;
use crate::nlg2::{AttributeMap, Scored};
use crate::{GenerateError, Generated};

/// A head position: the dummy ROOT or a word.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeRef {
    Root,
    Word(String),
}

impl NodeRef {
    fn value(&self) -> Value {
        match self {
            NodeRef::Root => Value::Marker(Marker::Root),
            NodeRef::Word(w) => Value::word(w),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Nlg3History {
    pub head: NodeRef,
    /// ch_{i-1}(w); `None` is the boundary before the first child.
    pub prev_sibling: Option<String>,
    /// ch_{i-2}(w).
    pub prev_sibling2: Option<String>,
    /// par(w); `None` only when the head is ROOT.
    pub parent: Option<NodeRef>,
    pub dir: Direction,
    /// Attributes not yet placed in the tree.
    pub remaining: AttributeSet,
}

const PATTERNS: &[&str] = &[
    "ch_i=? and ch_i-1=? and ch_i-2=? and dir=? and ? in attr",
    "ch_i=? and ch_i-1=? and w=? and dir=? and ? in attr",
    "ch_i=? and w=? and par(w)=? and dir=? and ? in attr",
];

/// Siblings, parent + sibling, and parent + grandparent patterns. Each is
/// instantiated once per remaining attribute; with none remaining the
/// attribute slot holds [`Marker::Done`], so stops and function words
/// after the last attribute are still learned.
#[derive(Clone, Copy, Debug, Default)]
pub struct Nlg3Schema;

pub fn nlg3_patterns() -> Nlg3Schema {
    Nlg3Schema
}

fn dir_value(d: Direction) -> Value {
    match d {
        Direction::Left => Value::Marker(Marker::Left),
        Direction::Right => Value::Marker(Marker::Right),
    }
}

fn contexts_for<'a>(
    head: Value,
    prev: Value,
    prev2: Value,
    parent: Value,
    dir: Direction,
    remaining: impl Iterator<Item = &'a str>,
) -> Vec<Context> {
    let d = dir_value(dir);
    let mut slots: Vec<Value> = remaining.map(Value::word).collect();
    if slots.is_empty() {
        slots.push(Value::Marker(Marker::Done));
    }
    let mut out = Vec::new();
    for a in slots {
        out.push(Context::new(
            0,
            vec![prev.clone(), prev2.clone(), d.clone(), a.clone()],
        ));
        out.push(Context::new(
            1,
            vec![prev.clone(), head.clone(), d.clone(), a.clone()],
        ));
        out.push(Context::new(2, vec![head.clone(), parent.clone(), d.clone(), a]));
    }
    out
}

impl FeatureSchema for Nlg3Schema {
    type History = Nlg3History;

    fn name(&self) -> &'static str {
        "nlg3"
    }

    fn patterns(&self) -> &'static [&'static str] {
        PATTERNS
    }

    fn contexts(&self, h: &Nlg3History) -> Vec<Context> {
        contexts_for(
            h.head.value(),
            crate::nlg2::slot(&h.prev_sibling),
            crate::nlg2::slot(&h.prev_sibling2),
            h.parent
                .as_ref()
                .map_or(Value::Marker(Marker::Boundary), NodeRef::value),
            h.dir,
            h.remaining.iter(),
        )
    }
}

fn emit_children(
    node: &TreeNode,
    parent: &NodeRef,
    remaining: &mut AttributeSet,
    events: &mut Vec<Event<Nlg3History>>,
) {
    let head = NodeRef::Word(node.token.text().to_string());
    for dir in [Direction::Left, Direction::Right] {
        let mut prev: Option<String> = None;
        let mut prev2: Option<String> = None;
        for child in node.children(dir) {
            events.push(Event::new(
                Nlg3History {
                    head: head.clone(),
                    prev_sibling: prev.clone(),
                    prev_sibling2: prev2.clone(),
                    parent: Some(parent.clone()),
                    dir,
                    remaining: remaining.clone(),
                },
                Outcome::word(child.token.text()),
            ));
            if child.token.is_attribute() {
                remaining.remove(child.token.text());
            }
            emit_children(child, &head, remaining, events);
            prev2 = prev.replace(child.token.text().to_string());
        }
        events.push(Event::new(
            Nlg3History {
                head: head.clone(),
                prev_sibling: prev,
                prev_sibling2: prev2,
                parent: Some(parent.clone()),
                dir,
                remaining: remaining.clone(),
            },
            Outcome::Stop,
        ));
    }
}

/// Child-prediction events in generation order: ROOT's single child, then
/// for each head its left children (each expanded recursively) and a left
/// stop, then its right children and a right stop. A tree of `n` nodes
/// yields `3n` events.
pub fn nlg3_events(treebank: &[DependencyTree]) -> Vec<Event<Nlg3History>> {
    let mut events = Vec::new();
    for tree in treebank {
        let mut remaining = tree.attribute_set();
        let root = &tree.root;
        events.push(Event::new(
            Nlg3History {
                head: NodeRef::Root,
                prev_sibling: None,
                prev_sibling2: None,
                parent: None,
                dir: Direction::Right,
                remaining: remaining.clone(),
            },
            Outcome::word(root.token.text()),
        ));
        if root.token.is_attribute() {
            remaining.remove(root.token.text());
        }
        emit_children(root, &NodeRef::Root, &mut remaining, &mut events);
    }
    events
}

fn collect_descendants(node: &TreeNode, table: &mut BTreeMap<String, BTreeSet<String>>) -> BTreeSet<String> {
    let mut attrs = BTreeSet::new();
    if node.token.is_attribute() {
        attrs.insert(node.token.text().to_string());
    }
    for c in node.left.iter().chain(node.right.iter()) {
        attrs.extend(collect_descendants(c, table));
    }
    table
        .entry(node.token.text().to_string())
        .or_default()
        .extend(attrs.iter().cloned());
    attrs
}

/// For every word, the attributes found in the subtree rooted at any of its
/// training occurrences (the word itself included).
pub fn descendant_table(treebank: &[DependencyTree]) -> BTreeMap<String, BTreeSet<String>> {
    let mut table = BTreeMap::new();
    for tree in treebank {
        collect_descendants(&tree.root, &mut table);
    }
    table
}

/// Keeps a feature predicting word `c` under attribute `a` only if `a`
/// occurs below some training occurrence of `c`. Stop features are kept.
pub fn descendant_filter(features: Vec<Feature>, treebank: &[DependencyTree]) -> Vec<Feature> {
    let table = descendant_table(treebank);
    features
        .into_iter()
        .filter(|f| {
            let word = match &f.outcome {
                Outcome::Word(w) => w,
                Outcome::Stop => return true,
            };
            match f.context.values.last() {
                Some(Value::Word(a)) if a.starts_with('$') => {
                    table.get(word).is_some_and(|s| s.contains(a))
                }
                _ => true,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Nlg3Config {
    /// Beam width N.
    pub beam: usize,
    /// Maximum tree size M in tokens.
    pub max_size: usize,
    /// Feature cutoff K.
    pub cutoff: u32,
    /// Maximum children per direction per head, M'.
    pub max_children: usize,
}

impl Default for Nlg3Config {
    fn default() -> Self {
        Nlg3Config {
            beam: 5,
            max_size: 30,
            cutoff: 10,
            max_children: 10,
        }
    }
}

impl Nlg3Config {
    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.beam == 0 {
            return Err(GenerateError::InvalidConfig("beam width must be at least 1"));
        }
        if self.max_size == 0 {
            return Err(GenerateError::InvalidConfig("maximum tree size must be at least 1"));
        }
        if self.cutoff == 0 {
            return Err(GenerateError::InvalidConfig("cutoff must be at least 1"));
        }
        if self.max_children == 0 {
            return Err(GenerateError::InvalidConfig("maximum children must be at least 1"));
        }
        Ok(())
    }

    fn log_child_prior(&self) -> f64 {
        -ln((self.max_children + 1) as f64)
    }
}

/// Builds events, instantiates features with `cutoff`, applies the
/// descendant filter and fits the weights.
pub fn train_nlg3<E: Executor>(
    treebank: &[DependencyTree],
    cutoff: u32,
    max_iters: usize,
    tol: f64,
    exec: &E,
    progress: impl FnMut(usize, f64),
) -> (MaxentModel, TrainDiagnostics) {
    let events = nlg3_events(treebank);
    let opts = TrainOptions {
        cutoff,
        max_iters,
        tol,
    };
    let features = maxent::instantiate_features(&Nlg3Schema, &events, cutoff);
    let features = descendant_filter(features, treebank);
    maxent::train_iis_with(&Nlg3Schema, &events, features, &opts, exec, progress)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("tree expresses {found} but {expected} was requested")]
pub struct AttributeMismatch {
    pub expected: String,
    pub found: String,
}

/// `ln Pr(T | A)`; negative infinity when a head has more than `M'`
/// children on one side or a word is outside the vocabulary.
pub fn tree_log_probability(
    model: &MaxentModel,
    tree: &DependencyTree,
    a: &AttributeSet,
    cfg: &Nlg3Config,
) -> Result<f64, AttributeMismatch> {
    let found = tree.attribute_set();
    if found != *a {
        return Err(AttributeMismatch {
            expected: a.canonical(),
            found: found.canonical(),
        });
    }
    if exceeds_children(&tree.root, cfg.max_children) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = 2.0 * tree.size() as f64 * cfg.log_child_prior();
    for e in nlg3_events(core::slice::from_ref(tree)) {
        total += model
            .log_prob(&Nlg3Schema.contexts(&e.history), &e.outcome)
            .unwrap_or(f64::NEG_INFINITY);
    }
    Ok(total)
}

/// `Pr(T | A)`.
pub fn tree_probability(
    model: &MaxentModel,
    tree: &DependencyTree,
    a: &AttributeSet,
    cfg: &Nlg3Config,
) -> Result<f64, AttributeMismatch> {
    tree_log_probability(model, tree, a, cfg).map(crate::math::exp)
}

fn exceeds_children(node: &TreeNode, max: usize) -> bool {
    node.left.len() > max
        || node.right.len() > max
        || node.left.iter().chain(&node.right).any(|c| exceeds_children(c, max))
}

#[derive(Clone, Debug)]
struct PartialNode {
    word: usize,
    parent: Option<usize>,
    left: Vec<usize>,
    right: Vec<usize>,
    left_done: bool,
}

#[derive(Clone, Debug)]
struct TreeCandidate {
    nodes: Vec<PartialNode>,
    /// Heads whose children are being generated, innermost last. Empty with
    /// nodes present means the tree is complete.
    stack: Vec<usize>,
    remaining: u64,
    log_prob: f64,
    /// Word ids in surface order, for tie-breaking.
    surface: Vec<usize>,
}

impl TreeCandidate {
    fn is_complete(&self) -> bool {
        !self.nodes.is_empty() && self.stack.is_empty()
    }

    fn children(&self, node: usize, dir: Direction) -> &[usize] {
        match dir {
            Direction::Left => &self.nodes[node].left,
            Direction::Right => &self.nodes[node].right,
        }
    }

    fn linearize_into(&self, node: usize, out: &mut Vec<usize>) {
        let n = &self.nodes[node];
        for &c in n.left.iter().rev() {
            self.linearize_into(c, out);
        }
        out.push(n.word);
        for &c in &n.right {
            self.linearize_into(c, out);
        }
    }

    fn refresh_surface(&mut self) {
        let mut s = Vec::with_capacity(self.nodes.len());
        if !self.nodes.is_empty() {
            self.linearize_into(0, &mut s);
        }
        self.surface = s;
    }

    fn to_node(&self, model: &MaxentModel, idx: usize) -> TreeNode {
        let n = &self.nodes[idx];
        let word = model.vocab().word(n.word).expect("tree nodes are words");
        TreeNode {
            token: Token::new(word).expect("vocabulary words are valid tokens"),
            left: n.left.iter().map(|&c| self.to_node(model, c)).collect(),
            right: n.right.iter().map(|&c| self.to_node(model, c)).collect(),
        }
    }

    fn to_tree(&self, model: &MaxentModel) -> DependencyTree {
        DependencyTree::new(self.to_node(model, 0)).expect("search never repeats an attribute")
    }
}

fn rank(a: &TreeCandidate, b: &TreeCandidate) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.surface.cmp(&b.surface))
}

/// Final ordering of complete trees: probability, then surface text, then
/// head indices.
fn rank_complete(a: &Scored<DependencyTree>, b: &Scored<DependencyTree>) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.value.tokens().cmp(&b.value.tokens()))
        .then_with(|| a.value.to_heads().1.cmp(&b.value.to_heads().1))
}

/// Beam search over partial trees in generation order.
///
/// Every round advances each beam member by one prediction (a child word or
/// stop at its single active site), ranks all extensions and keeps the top
/// `N`; finished trees move to the completed pool. Words are refused once a
/// tree holds `M` tokens or a head already has `M'` children on the active
/// side, so size-capped trees can still close with stops. Trees that repeat
/// an attribute, use one outside `A`, or finish without all of `A` are
/// dropped. Search ends when `N` trees are complete or the beam empties.
pub fn nlg3_search(
    model: &MaxentModel,
    a: &AttributeSet,
    cfg: &Nlg3Config,
) -> Result<Vec<Scored<DependencyTree>>, GenerateError> {
    cfg.validate()?;
    let attrs = AttributeMap::new(model, a)?;
    let vocab = model.vocab();
    let stop = vocab.stop();
    let prior = cfg.log_child_prior();

    let mut beam = vec![TreeCandidate {
        nodes: Vec::new(),
        stack: Vec::new(),
        remaining: attrs.full_mask(),
        log_prob: 0.0,
        surface: Vec::new(),
    }];
    let mut completed: Vec<TreeCandidate> = Vec::new();

    while !beam.is_empty() && completed.len() < cfg.beam {
        let mut next = Vec::new();
        for cand in &beam {
            let remaining_names = attrs.remaining_names(cand.remaining);
            // Active site: ROOT when the tree is empty, else the top head.
            let (ctx, site) = match cand.stack.last() {
                None => (
                    contexts_for(
                        Value::Marker(Marker::Root),
                        Value::Marker(Marker::Boundary),
                        Value::Marker(Marker::Boundary),
                        Value::Marker(Marker::Boundary),
                        Direction::Right,
                        remaining_names,
                    ),
                    None,
                ),
                Some(&head) => {
                    let node = &cand.nodes[head];
                    let dir = if node.left_done {
                        Direction::Right
                    } else {
                        Direction::Left
                    };
                    let sibs = cand.children(head, dir);
                    let word = |i: usize| Value::word(vocab.word(cand.nodes[i].word).unwrap_or(""));
                    let prev = sibs
                        .last()
                        .map_or(Value::Marker(Marker::Boundary), |&i| word(i));
                    let prev2 = sibs
                        .len()
                        .checked_sub(2)
                        .map_or(Value::Marker(Marker::Boundary), |k| word(sibs[k]));
                    let parent = node.parent.map_or(Value::Marker(Marker::Root), word);
                    (
                        contexts_for(word(head), prev, prev2, parent, dir, remaining_names),
                        Some((head, dir, sibs.len())),
                    )
                }
            };
            let logp = model.log_distribution(&ctx);
            for (o, &lp) in logp.iter().enumerate() {
                if o == stop {
                    let (head, dir, _) = match site {
                        // ROOT has exactly one child.
                        None => continue,
                        Some(s) => s,
                    };
                    let mut c = cand.clone();
                    c.log_prob += lp;
                    match dir {
                        Direction::Left => c.nodes[head].left_done = true,
                        Direction::Right => {
                            c.stack.pop();
                        }
                    }
                    if c.is_complete() && c.remaining != 0 {
                        continue;
                    }
                    next.push(c);
                    continue;
                }
                if cand.nodes.len() >= cfg.max_size {
                    continue;
                }
                if let Some((_, _, n)) = site {
                    if n >= cfg.max_children {
                        continue;
                    }
                }
                let mut remaining = cand.remaining;
                if let Some(slot) = attrs.by_outcome[o] {
                    match slot {
                        Some(i) if remaining & (1u64 << i) != 0 => remaining &= !(1u64 << i),
                        _ => continue,
                    }
                }
                let mut c = cand.clone();
                let idx = c.nodes.len();
                c.nodes.push(PartialNode {
                    word: o,
                    parent: site.map(|(h, _, _)| h),
                    left: Vec::new(),
                    right: Vec::new(),
                    left_done: false,
                });
                if let Some((head, dir, _)) = site {
                    match dir {
                        Direction::Left => c.nodes[head].left.push(idx),
                        Direction::Right => c.nodes[head].right.push(idx),
                    }
                }
                c.stack.push(idx);
                c.remaining = remaining;
                c.log_prob += lp + 2.0 * prior;
                c.refresh_surface();
                next.push(c);
            }
        }
        next.sort_by(rank);
        next.truncate(cfg.beam);
        beam.clear();
        for c in next {
            if c.is_complete() {
                completed.push(c);
            } else {
                beam.push(c);
            }
        }
    }

    let mut out: Vec<Scored<DependencyTree>> = completed
        .iter()
        .map(|c| Scored {
            value: c.to_tree(model),
            log_prob: c.log_prob,
        })
        .collect();
    out.sort_by(rank_complete);
    out.truncate(cfg.beam);
    Ok(out)
}

/// Linearization of the best tree from [`nlg3_search`].
pub fn nlg3_generate(
    model: &MaxentModel,
    a: &AttributeSet,
    cfg: &Nlg3Config,
) -> Result<Generated<Template>, GenerateError> {
    Ok(match nlg3_search(model, a, cfg)?.into_iter().next() {
        Some(s) => Generated::Output(s.value.linearize()),
        None => Generated::NoOutput,
    })
}
