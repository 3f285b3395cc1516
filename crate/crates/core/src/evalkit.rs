//! Evaluation protocol and synthetic data.
//!
//! Test templates are grouped by attribute set; each system is judged once
//! per unique set. Weighted scores count a set as often as it occurs in the
//! test data, unweighted scores count it once. Only `Correct` counts as
//! right when computing error reduction against a baseline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AttributeSet, DependencyTree, Template, Token, TreeNode};
use crate::Generated;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rank {
    /// Perfectly acceptable.
    Correct,
    /// Tense or agreement is wrong, but the meaning is preserved.
    Ok,
    /// Words are missing or extraneous.
    Bad,
    /// The system produced nothing.
    NoOutput,
}

impl Rank {
    pub const ALL: [Rank; 4] = [Rank::Correct, Rank::Ok, Rank::Bad, Rank::NoOutput];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rank::Correct => "Correct",
            Rank::Ok => "OK",
            Rank::Bad => "Bad",
            Rank::NoOutput => "NoOutput",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown rank `{0}` (expected Correct, OK, Bad or NoOutput)")]
pub struct ParseRankError(pub String);

impl FromStr for Rank {
    type Err = ParseRankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Correct" => Ok(Rank::Correct),
            "OK" | "Ok" => Ok(Rank::Ok),
            "Bad" => Ok(Rank::Bad),
            "NoOutput" => Ok(Rank::NoOutput),
            _ => Err(ParseRankError(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Judgment {
    pub attribute_set: AttributeSet,
    pub system: String,
    pub rank: Rank,
}

impl Judgment {
    pub fn new(system: impl Into<String>, attribute_set: AttributeSet, rank: Rank) -> Self {
        Judgment {
            attribute_set,
            system: system.into(),
            rank,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no judgment for system {system} on {attributes}")]
    MissingJudgment { system: String, attributes: String },
    #[error("system {system} judged more than once on {attributes}")]
    DuplicateJudgment { system: String, attributes: String },
    #[error("system {system} judged on {attributes}, which is not in the test set")]
    UnexpectedJudgment { system: String, attributes: String },
    #[error("test set is empty")]
    EmptyTestSet,
}

/// Unique attribute sets of `test` with their multiplicities, sorted by set.
pub fn dedupe_attribute_sets(test: &[Template]) -> Vec<(AttributeSet, u64)> {
    let mut counts: BTreeMap<AttributeSet, u64> = BTreeMap::new();
    for t in test {
        *counts.entry(t.attribute_set()).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

/// Percentages in [`Rank::ALL`] order.
pub type RankShares = [f64; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct SystemScore {
    pub system: String,
    pub weighted: RankShares,
    pub unweighted: RankShares,
    /// Percent; `None` for the baseline itself or when the baseline is
    /// always correct.
    pub weighted_error_reduction: Option<f64>,
    pub unweighted_error_reduction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub baseline: String,
    /// Baseline first, then the other systems by name.
    pub systems: Vec<SystemScore>,
    pub unique_sets: usize,
    pub total_occurrences: u64,
}

impl ScoreReport {
    pub fn system(&self, name: &str) -> Option<&SystemScore> {
        self.systems.iter().find(|s| s.system == name)
    }
}

/// `1 - (1 - acc_sys) / (1 - acc_base)` as a percentage, from Correct
/// shares in percent.
pub fn error_reduction(baseline_correct: f64, system_correct: f64) -> Option<f64> {
    let base_err = 100.0 - baseline_correct;
    if base_err <= 0.0 {
        return None;
    }
    Some(100.0 * (1.0 - (100.0 - system_correct) / base_err))
}

/// Tallies judgments per system. Every system named in `judgments`, and
/// the baseline, must be judged exactly once on every set in `counts` and
/// on nothing else.
pub fn score_report(
    judgments: &[Judgment],
    counts: &[(AttributeSet, u64)],
    baseline: &str,
) -> Result<ScoreReport, EvalError> {
    if counts.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let weights: BTreeMap<&AttributeSet, u64> = counts.iter().map(|(a, c)| (a, *c)).collect();
    let total: u64 = weights.values().sum();

    let mut by_system: BTreeMap<&str, BTreeMap<&AttributeSet, Rank>> = BTreeMap::new();
    by_system.insert(baseline, BTreeMap::new());
    for j in judgments {
        if !weights.contains_key(&j.attribute_set) {
            return Err(EvalError::UnexpectedJudgment {
                system: j.system.clone(),
                attributes: j.attribute_set.canonical(),
            });
        }
        let ranks = by_system.entry(j.system.as_str()).or_default();
        if ranks.insert(&j.attribute_set, j.rank).is_some() {
            return Err(EvalError::DuplicateJudgment {
                system: j.system.clone(),
                attributes: j.attribute_set.canonical(),
            });
        }
    }

    let mut shares: BTreeMap<&str, (RankShares, RankShares)> = BTreeMap::new();
    for (&system, ranks) in &by_system {
        let mut w = [0u64; 4];
        let mut u = [0u64; 4];
        for (a, &c) in &weights {
            let rank = ranks.get(a).ok_or_else(|| EvalError::MissingJudgment {
                system: system.to_string(),
                attributes: a.canonical(),
            })?;
            w[rank.index()] += c;
            u[rank.index()] += 1;
        }
        let pct = |xs: [u64; 4], d: u64| xs.map(|x| 100.0 * x as f64 / d as f64);
        shares.insert(system, (pct(w, total), pct(u, weights.len() as u64)));
    }

    let (base_w, base_u) = shares[baseline];
    let mut systems = Vec::with_capacity(shares.len());
    let order = core::iter::once(baseline).chain(shares.keys().copied().filter(|s| *s != baseline));
    for name in order {
        let (w, u) = shares[name];
        let is_base = name == baseline;
        systems.push(SystemScore {
            system: name.to_string(),
            weighted: w,
            unweighted: u,
            weighted_error_reduction: if is_base { None } else { error_reduction(base_w[0], w[0]) },
            unweighted_error_reduction: if is_base { None } else { error_reduction(base_u[0], u[0]) },
        });
    }
    Ok(ScoreReport {
        baseline: baseline.to_string(),
        systems,
        unique_sets: weights.len(),
        total_occurrences: total,
    })
}

impl ScoreReport {
    fn write_table(
        &self,
        f: &mut fmt::Formatter<'_>,
        title: &str,
        pick: impl Fn(&SystemScore) -> (RankShares, Option<f64>),
    ) -> fmt::Result {
        let width = self
            .systems
            .iter()
            .map(|s| s.system.len())
            .max()
            .unwrap_or(0)
            .max("system".len());
        writeln!(f, "{title}")?;
        writeln!(
            f,
            "{:<width$}  {:>9}  {:>5}  {:>6}  {:>12}  {:>18}",
            "system",
            "% Correct",
            "% OK",
            "% Bad",
            "% No output",
            &alloc::format!("% error reduction from {}", self.baseline)[..],
        )?;
        for s in &self.systems {
            let (shares, er) = pick(s);
            let er = match er {
                Some(v) => alloc::format!("{v:.0}"),
                None => String::from("-"),
            };
            writeln!(
                f,
                "{:<width$}  {:>9.1}  {:>5.1}  {:>6.1}  {:>12.1}  {:>18}",
                s.system, shares[0], shares[1], shares[2], shares[3], er
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_table(
            f,
            &alloc::format!("weighted ({} test occurrences)", self.total_occurrences),
            |s| (s.weighted, s.weighted_error_reduction),
        )?;
        writeln!(f)?;
        self.write_table(
            f,
            &alloc::format!("unweighted ({} unique attribute sets)", self.unique_sets),
            |s| (s.unweighted, s.unweighted_error_reduction),
        )
    }
}

/// One attribute of a synthetic grammar.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthAttribute {
    /// Attribute token, e.g. `$city-fr`.
    pub name: String,
    /// Whether the attribute may appear bare before the head word.
    pub pre: bool,
    /// Probability of choosing the pre-head position when both are allowed.
    pub pre_weight: f64,
    /// Post-head realizations. Each is a word chain ending in `name`, e.g.
    /// `["leaving", "at", "$time-dep"]`.
    pub post: Vec<Vec<String>>,
}

impl SynthAttribute {
    fn post_only(&self) -> bool {
        !self.pre
    }
}

/// A small phrase grammar for noun phrases about flights.
///
/// Pre-head attributes appear bare, in inventory order, to the left of the
/// head word. Post-head attributes appear as fragments, in any order, to
/// the right. In the tree the head is the root, pre-head attributes are its
/// left children and each fragment is a right-branching chain hanging off
/// the head.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthGrammar {
    pub head: String,
    pub attributes: Vec<SynthAttribute>,
    /// Inclusive bounds on the number of attributes per sampled set.
    pub min_attrs: usize,
    pub max_attrs: usize,
}

fn frag(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

fn attr(name: &str, pre: bool, pre_weight: f64, post: &[&[&str]]) -> SynthAttribute {
    SynthAttribute {
        name: name.to_string(),
        pre,
        pre_weight,
        post: post.iter().map(|p| frag(p)).collect(),
    }
}

impl Default for SynthGrammar {
    /// Ten air-travel attributes.
    fn default() -> Self {
        SynthGrammar {
            head: "flights".to_string(),
            attributes: vec![
                attr("$trip", true, 1.0, &[]),
                attr(
                    "$time-dep",
                    true,
                    0.5,
                    &[&["leaving", "at", "$time-dep"], &["departing", "at", "$time-dep"]],
                ),
                attr("$air", true, 0.7, &[&["on", "$air"]]),
                attr(
                    "$city-fr",
                    false,
                    0.0,
                    &[&["from", "$city-fr"], &["leaving", "$city-fr"]],
                ),
                attr(
                    "$city-to",
                    false,
                    0.0,
                    &[&["to", "$city-to"], &["going", "to", "$city-to"]],
                ),
                attr("$date-dep", false, 0.0, &[&["on", "$date-dep"]]),
                attr("$fare-class", false, 0.0, &[&["in", "$fare-class"]]),
                attr("$stops", false, 0.0, &[&["with", "$stops"]]),
                attr("$meal", false, 0.0, &[&["serving", "$meal"]]),
                attr(
                    "$city-via",
                    false,
                    0.0,
                    &[&["via", "$city-via"], &["stopping", "in", "$city-via"]],
                ),
            ],
            min_attrs: 1,
            max_attrs: 5,
        }
    }
}

/// A sampled phrase: pre-head attribute indices and post fragments.
struct Realization {
    pre: Vec<usize>,
    post: Vec<Vec<String>>,
}

impl SynthGrammar {
    fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Whether `t` is a grammatical realization of exactly `a`.
    pub fn accepts(&self, t: &Template, a: &AttributeSet) -> bool {
        let toks: Vec<&str> = t.tokens().iter().map(Token::text).collect();
        let Some(h) = toks.iter().position(|w| *w == self.head) else {
            return false;
        };
        let mut seen = AttributeSet::new();
        let mut last_pre = None;
        for w in &toks[..h] {
            let Some(i) = self.index_of(w) else {
                return false;
            };
            if !self.attributes[i].pre || last_pre.is_some_and(|p| p >= i) {
                return false;
            }
            last_pre = Some(i);
            let _ = seen.insert(w);
        }
        let mut start = h + 1;
        for end in h + 1..toks.len() {
            let Some(i) = self.index_of(toks[end]) else {
                continue;
            };
            let piece = &toks[start..=end];
            if !self.attributes[i]
                .post
                .iter()
                .any(|f| f.iter().map(String::as_str).eq(piece.iter().copied()))
            {
                return false;
            }
            let _ = seen.insert(toks[end]);
            start = end + 1;
        }
        start == toks.len() && seen == *a
    }

    /// Correct when `output` is grammatical for `a`, Bad otherwise.
    pub fn judge(&self, a: &AttributeSet, output: &Generated<Template>) -> Rank {
        match output {
            Generated::Output(t) if self.accepts(t, a) => Rank::Correct,
            Generated::Output(_) => Rank::Bad,
            Generated::NoOutput => Rank::NoOutput,
        }
    }

    fn sample_set(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let hi = self.max_attrs.min(self.attributes.len()).max(1);
        let lo = self.min_attrs.clamp(1, hi);
        loop {
            let k = rng.gen_range(lo..=hi);
            let mut idx: Vec<usize> = (0..self.attributes.len()).collect();
            idx.shuffle(rng);
            idx.truncate(k);
            idx.sort_unstable();
            // Keep the head from ending the phrase with nothing after it.
            if idx.iter().any(|&i| self.attributes[i].post_only()) {
                return idx;
            }
        }
    }

    fn realize(&self, set: &[usize], rng: &mut ChaCha8Rng) -> Realization {
        let mut pre = Vec::new();
        let mut post = Vec::new();
        for &i in set {
            let at = &self.attributes[i];
            let use_pre = at.pre && (at.post.is_empty() || rng.gen_bool(at.pre_weight.clamp(0.0, 1.0)));
            if use_pre {
                pre.push(i);
            } else {
                post.push(at.post[rng.gen_range(0..at.post.len())].clone());
            }
        }
        post.shuffle(rng);
        Realization { pre, post }
    }

    fn template(&self, r: &Realization) -> Template {
        let mut words: Vec<&str> = r.pre.iter().map(|&i| self.attributes[i].name.as_str()).collect();
        words.push(&self.head);
        for f in &r.post {
            words.extend(f.iter().map(String::as_str));
        }
        Template::from_words(&words).expect("grammar words are valid tokens")
    }

    fn tree(&self, r: &Realization) -> DependencyTree {
        let leaf = |w: &str| TreeNode::leaf(Token::new(w).expect("grammar words are valid tokens"));
        let mut root = leaf(&self.head);
        // Closest to the head first.
        root.left = r
            .pre
            .iter()
            .rev()
            .map(|&i| leaf(&self.attributes[i].name))
            .collect();
        for f in &r.post {
            let mut chain: Option<TreeNode> = None;
            for w in f.iter().rev() {
                let mut n = leaf(w);
                n.right.extend(chain.take());
                chain = Some(n);
            }
            root.right.extend(chain);
        }
        DependencyTree::new(root).expect("grammar never repeats an attribute")
    }

    fn set_key(&self, set: &[usize]) -> AttributeSet {
        let mut a = AttributeSet::new();
        for &i in set {
            a.insert(&self.attributes[i].name)
                .expect("grammar attributes start with $");
        }
        a
    }
}

/// Output of [`synth_corpus`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<Template>,
    /// Trees for `train`, index-aligned.
    pub treebank: Vec<DependencyTree>,
    pub test: Vec<Template>,
    /// Test attribute sets that never occur in `train`.
    pub novel: BTreeSet<AttributeSet>,
}

/// Samples `n` training templates with trees and `max(1, n / 4)` test
/// templates.
///
/// Attribute sets come from a pool of about `n / 40` distinct sets with
/// Zipf-like frequencies, so most recur many times. Roughly a third of the
/// test data draws from a disjoint held-out pool and is novel by
/// construction.
pub fn synth_corpus(grammar: &SynthGrammar, seed: u64, n: usize) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n.max(1);
    let pool_size = (n / 40).max(1);
    let held_size = (pool_size / 2).max(1);

    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut pool = Vec::new();
    let mut held = Vec::new();
    let mut attempts = 0usize;
    while (pool.len() < pool_size || held.len() < held_size) && attempts < 100 * (pool_size + held_size) {
        attempts += 1;
        let s = grammar.sample_set(&mut rng);
        if !seen.insert(s.clone()) {
            continue;
        }
        if pool.len() < pool_size {
            pool.push(s);
        } else {
            held.push(s);
        }
    }

    let zipf = |len: usize| {
        WeightedIndex::new((0..len).map(|i| 1.0 / (i + 1) as f64)).expect("pool is non-empty")
    };
    let pool_dist = zipf(pool.len());

    let mut train = Vec::with_capacity(n);
    let mut treebank = Vec::with_capacity(n);
    for _ in 0..n {
        let set = &pool[pool_dist.sample(&mut rng)];
        let r = grammar.realize(set, &mut rng);
        train.push(grammar.template(&r));
        treebank.push(grammar.tree(&r));
    }

    let n_test = (n / 4).max(1);
    let mut test = Vec::with_capacity(n_test);
    let mut novel = BTreeSet::new();
    let held_dist = (!held.is_empty()).then(|| zipf(held.len()));
    for _ in 0..n_test {
        let set = match &held_dist {
            Some(d) if rng.gen_bool(1.0 / 3.0) => {
                let s = &held[d.sample(&mut rng)];
                novel.insert(grammar.set_key(s));
                s
            }
            _ => &pool[pool_dist.sample(&mut rng)],
        };
        let r = grammar.realize(set, &mut rng);
        test.push(grammar.template(&r));
    }

    SynthCorpus {
        train,
        treebank,
        test,
        novel,
    }
}
