//! Brute-force oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Debug;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use surfgen_core::corpus::{Direction, TreeNode};
use surfgen_core::maxent::{conditional_prob, Outcome};
use surfgen_core::nlg2::{Nlg2History, Nlg2Schema};
use surfgen_core::nlg3::{Nlg3History, Nlg3Schema, NodeRef};
use surfgen_core::{AttributeSet, DependencyTree, MaxentModel, Template, Token};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn set(s: &str) -> AttributeSet {
    AttributeSet::parse(s).unwrap()
}

fn pick_label(rng: &mut ChaCha8Rng, words: &[&str], used: &mut Vec<String>) -> String {
    loop {
        let w = words[rng.gen_range(0..words.len())];
        if w.starts_with('$') {
            if used.iter().any(|u| u == w) {
                continue;
            }
            used.push(w.to_string());
        }
        return w.to_string();
    }
}

/// Random templates over `words` with 1..=max_len tokens, each attribute at
/// most once. `words` needs at least one plain word.
pub fn random_corpus(rng: &mut ChaCha8Rng, words: &[&str], n: usize, max_len: usize) -> Vec<Template> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            let mut used = Vec::new();
            let toks: Vec<String> = (0..len).map(|_| pick_label(rng, words, &mut used)).collect();
            Template::from_words(&toks).unwrap()
        })
        .collect()
}

/// Random projective trees with 1..=max_size nodes, grown by inserting each
/// new node at a random position among a random node's left or right
/// children.
pub fn random_treebank(
    rng: &mut ChaCha8Rng,
    words: &[&str],
    n: usize,
    max_size: usize,
) -> Vec<DependencyTree> {
    (0..n)
        .map(|_| {
            let size = rng.gen_range(1..=max_size);
            let mut used = Vec::new();
            let mut root = TreeNode::leaf(Token::new(pick_label(rng, words, &mut used)).unwrap());
            for k in 1..size {
                let label = Token::new(pick_label(rng, words, &mut used)).unwrap();
                let target = rng.gen_range(0..k);
                insert_at(&mut root, target, &mut 0, &mut Some(TreeNode::leaf(label)), rng);
            }
            DependencyTree::new(root).unwrap()
        })
        .collect()
}

fn insert_at(node: &mut TreeNode, target: usize, seen: &mut usize, new: &mut Option<TreeNode>, rng: &mut ChaCha8Rng) {
    if *seen == target {
        let side = if rng.gen_bool(0.5) { &mut node.left } else { &mut node.right };
        let pos = rng.gen_range(0..=side.len());
        side.insert(pos, new.take().unwrap());
        return;
    }
    *seen += 1;
    for c in node.left.iter_mut().chain(node.right.iter_mut()) {
        insert_at(c, target, seen, new, rng);
        if new.is_none() {
            return;
        }
    }
}

fn attrs_of(words: &[&str]) -> AttributeSet {
    let mut a = AttributeSet::new();
    for w in words.iter().filter(|w| w.starts_with('$')) {
        a.insert(w).unwrap();
    }
    a
}

/// Every word sequence over the model vocabulary with at most `m - 1`
/// words that mentions each attribute of `a` exactly once and no other
/// attribute, scored as `ln(1/m) + sum ln p(w_i | history)` including the
/// final stop.
pub fn enumerate_sequences(model: &MaxentModel, a: &AttributeSet, m: usize) -> Vec<(Template, f64)> {
    let words: Vec<String> = model
        .vocab()
        .words()
        .iter()
        .filter(|w| !w.starts_with('$') || a.contains(w))
        .cloned()
        .collect();
    let mut out = Vec::new();
    let mut seq: Vec<String> = Vec::new();
    extend_sequences(model, a, m, &words, &mut seq, &mut out);
    sort_ranked(&mut out);
    out
}

fn extend_sequences(
    model: &MaxentModel,
    a: &AttributeSet,
    m: usize,
    words: &[String],
    seq: &mut Vec<String>,
    out: &mut Vec<(Template, f64)>,
) {
    let used = attrs_of(&seq.iter().map(String::as_str).collect::<Vec<_>>());
    if used == *a && !seq.is_empty() {
        let t = Template::from_words(seq).unwrap();
        out.push((t.clone(), sequence_score(model, &t, a, m)));
    }
    if seq.len() + 1 >= m {
        return;
    }
    for w in words {
        if w.starts_with('$') && used.contains(w) {
            continue;
        }
        seq.push(w.clone());
        extend_sequences(model, a, m, words, seq, out);
        seq.pop();
    }
}

fn log_p(model: &MaxentModel, dist: &[f64], outcome: &Outcome) -> f64 {
    dist[model.vocab().id(outcome).expect("outcome in vocabulary")].ln()
}

/// Independent left-to-right factorization of the nlg2 score.
pub fn sequence_score(model: &MaxentModel, t: &Template, a: &AttributeSet, m: usize) -> f64 {
    let mut remaining = a.clone();
    let mut total = (1.0 / m as f64).ln();
    let toks: Vec<&str> = t.tokens().iter().map(Token::text).collect();
    for i in 0..=toks.len() {
        let h = Nlg2History {
            prev: i.checked_sub(1).map(|j| toks[j].to_string()),
            prev2: i.checked_sub(2).map(|j| toks[j].to_string()),
            remaining: remaining.clone(),
        };
        let dist = conditional_prob(model, &Nlg2Schema, &h);
        let outcome = match toks.get(i) {
            Some(w) => Outcome::word(w),
            None => Outcome::Stop,
        };
        total += log_p(model, &dist, &outcome);
        if i < toks.len() {
            remaining.remove(toks[i]);
        }
    }
    total
}

#[derive(Clone, Debug)]
struct Shape {
    /// Both sides in surface order.
    left: Vec<Shape>,
    right: Vec<Shape>,
}

fn shapes(n: usize) -> Vec<Shape> {
    let mut out = Vec::new();
    for forest in forests(n - 1) {
        for split in 0..=forest.len() {
            out.push(Shape {
                left: forest[..split].to_vec(),
                right: forest[split..].to_vec(),
            });
        }
    }
    out
}

fn forests(m: usize) -> Vec<Vec<Shape>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for k in 1..=m {
        for s in shapes(k) {
            for rest in forests(m - k) {
                let mut f = vec![s.clone()];
                f.extend(rest);
                out.push(f);
            }
        }
    }
    out
}

/// Surface-ordered (preorder id, parent preorder id) pairs.
fn flatten(shape: &Shape, parent: Option<usize>, next: &mut usize, out: &mut Vec<(usize, Option<usize>)>) {
    let me = *next;
    *next += 1;
    for c in &shape.left {
        flatten(c, Some(me), next, out);
    }
    out.push((me, parent));
    for c in &shape.right {
        flatten(c, Some(me), next, out);
    }
}

/// Number of distinct unlabeled shapes with `n` nodes.
pub fn shape_count(n: usize) -> usize {
    shapes(n).len()
}

/// Every tree of 1..=m nodes over the model vocabulary that contains each
/// attribute of `a` exactly once and no other attribute, built through
/// head indices.
pub fn enumerate_trees(model: &MaxentModel, a: &AttributeSet, m: usize) -> Vec<DependencyTree> {
    let words: Vec<&str> = model
        .vocab()
        .words()
        .iter()
        .map(String::as_str)
        .filter(|w| !w.starts_with('$') || a.contains(w))
        .collect();
    let mut out = Vec::new();
    for n in 1..=m {
        for shape in shapes(n) {
            let mut layout = Vec::new();
            flatten(&shape, None, &mut 0, &mut layout);
            let mut labels = Vec::with_capacity(n);
            label_trees(&words, a, n, &layout, &mut labels, &mut out);
        }
    }
    out
}

fn label_trees(
    words: &[&str],
    a: &AttributeSet,
    n: usize,
    layout: &[(usize, Option<usize>)],
    labels: &mut Vec<String>,
    out: &mut Vec<DependencyTree>,
) {
    if labels.len() == n {
        if attrs_of(&labels.iter().map(String::as_str).collect::<Vec<_>>()) != *a {
            return;
        }
        let pos: BTreeMap<usize, usize> = layout.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
        let tokens: Vec<&str> = layout.iter().map(|(id, _)| labels[*id].as_str()).collect();
        let heads: Vec<i64> = layout
            .iter()
            .map(|(_, p)| p.map_or(-1, |p| pos[&p] as i64))
            .collect();
        out.push(DependencyTree::from_heads(&tokens, &heads).unwrap());
        return;
    }
    for w in words {
        if w.starts_with('$') && labels.iter().any(|l| l == w) {
            continue;
        }
        labels.push(w.to_string());
        label_trees(words, a, n, layout, labels, out);
        labels.pop();
    }
}

/// Independent evaluation of `ln Pr(T | A)`: ROOT's child, then each head's
/// left and right children in generation order, with a uniform
/// `1 / (max_children + 1)` prior per head and side.
pub fn tree_score(model: &MaxentModel, tree: &DependencyTree, a: &AttributeSet, max_children: usize) -> f64 {
    let mut remaining = a.clone();
    let root = &tree.root;
    let h = Nlg3History {
        head: NodeRef::Root,
        prev_sibling: None,
        prev_sibling2: None,
        parent: None,
        dir: Direction::Right,
        remaining: remaining.clone(),
    };
    let dist = conditional_prob(model, &Nlg3Schema, &h);
    let mut total = log_p(model, &dist, &Outcome::word(root.token.text()));
    remaining.remove(root.token.text());
    total += score_node(model, root, &NodeRef::Root, &mut remaining, max_children);
    total
}

fn score_node(
    model: &MaxentModel,
    node: &TreeNode,
    parent: &NodeRef,
    remaining: &mut AttributeSet,
    max_children: usize,
) -> f64 {
    let prior = (1.0 / (max_children as f64 + 1.0)).ln();
    if node.left.len() > max_children || node.right.len() > max_children {
        return f64::NEG_INFINITY;
    }
    let me = NodeRef::Word(node.token.text().to_string());
    let mut total = 0.0;
    for dir in [Direction::Left, Direction::Right] {
        total += prior;
        let kids = node.children(dir);
        for i in 0..=kids.len() {
            let h = Nlg3History {
                head: me.clone(),
                prev_sibling: i.checked_sub(1).map(|j| kids[j].token.text().to_string()),
                prev_sibling2: i.checked_sub(2).map(|j| kids[j].token.text().to_string()),
                parent: Some(parent.clone()),
                dir,
                remaining: remaining.clone(),
            };
            let dist = conditional_prob(model, &Nlg3Schema, &h);
            match kids.get(i) {
                Some(c) => {
                    total += log_p(model, &dist, &Outcome::word(c.token.text()));
                    remaining.remove(c.token.text());
                    total += score_node(model, c, &me, remaining, max_children);
                }
                None => total += log_p(model, &dist, &Outcome::Stop),
            }
        }
    }
    total
}

/// Best first; exact ties by key.
pub fn sort_ranked<K: Ord>(xs: &mut [(K, f64)]) {
    xs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
}

/// Checks that `got` lists the same items as `want` with scores within
/// `tol`, in the same order except where neighbouring scores tie within
/// `tol`.
pub fn same_ranking<K: Ord + Debug>(got: &[(K, f64)], want: &[(K, f64)], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} results, oracle has {}", got.len(), want.len()));
    }
    let oracle: BTreeMap<&K, f64> = want.iter().map(|(k, s)| (k, *s)).collect();
    for (i, ((gk, gs), (wk, ws))) in got.iter().zip(want).enumerate() {
        let Some(&os) = oracle.get(gk) else {
            return Err(format!("rank {i}: {gk:?} is not a valid candidate"));
        };
        if (os - gs).abs() > tol {
            return Err(format!("rank {i}: {gk:?} scored {gs}, oracle {os}"));
        }
        if gk != wk && (gs - ws).abs() > tol {
            return Err(format!("rank {i}: got {gk:?} ({gs}), oracle {wk:?} ({ws})"));
        }
    }
    Ok(())
}
