//! Conditional maximum entropy models over a vocabulary plus a stop symbol.
//!
//! A feature pairs one outcome with one fully instantiated context
//! predicate; it fires (value 1) when the predicted outcome matches and the
//! history produces that context. The model is
//!
//! ```text
//! p(w | h) = prod_j alpha_j^{f_j(w,h)} / Z(h)
//! ```
//!
//! with weights kept as `log alpha_j` and `Z(h)` summed over every outcome.
//! Weights are fit with Improved Iterative Scaling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::math::{exp, ln, logsumexp};

/// Distinguished non-word values that can fill a context slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Marker {
    /// Position before the first word or sibling.
    Boundary,
    /// The dummy node above the top-most head.
    Root,
    Left,
    Right,
    /// Attribute slot when every attribute has been generated.
    Done,
}

impl Marker {
    fn as_str(self) -> &'static str {
        match self {
            Marker::Boundary => "#bos",
            Marker::Root => "#root",
            Marker::Left => "#left",
            Marker::Right => "#right",
            Marker::Done => "#done",
        }
    }
}

/// One slot of an instantiated context predicate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Word(String),
    Marker(Marker),
}

impl Value {
    pub fn word(w: &str) -> Self {
        Value::Word(w.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Word(w) => write!(f, "={}", w),
            Value::Marker(m) => f.write_str(m.as_str()),
        }
    }
}

/// A context predicate with every `?` of its pattern filled in.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context {
    pub pattern: u8,
    pub values: Vec<Value>,
}

impl Context {
    pub fn new(pattern: u8, values: Vec<Value>) -> Self {
        Context { pattern, values }
    }
}

/// Space separated: the pattern number, then `=word` or `#marker` slots.
impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pattern)?;
        for v in &self.values {
            write!(f, " {}", v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("malformed context {0:?}")]
pub struct ParseContextError(pub String);

impl FromStr for Context {
    type Err = ParseContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseContextError(s.to_string());
        let mut parts = s.split(' ');
        let pattern = parts
            .next()
            .and_then(|p| p.parse::<u8>().ok())
            .ok_or_else(err)?;
        let mut values = Vec::new();
        for p in parts {
            let v = if let Some(w) = p.strip_prefix('=') {
                if w.is_empty() {
                    return Err(err());
                }
                Value::Word(w.to_string())
            } else {
                match p {
                    "#bos" => Value::Marker(Marker::Boundary),
                    "#root" => Value::Marker(Marker::Root),
                    "#left" => Value::Marker(Marker::Left),
                    "#right" => Value::Marker(Marker::Right),
                    "#done" => Value::Marker(Marker::Done),
                    _ => return Err(err()),
                }
            };
            values.push(v);
        }
        Ok(Context { pattern, values })
    }
}

/// A predicted symbol: a vocabulary word or the stop symbol.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Word(String),
    Stop,
}

impl Outcome {
    pub fn word(w: &str) -> Self {
        Outcome::Word(w.to_string())
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Word(w) => f.write_str(w),
            Outcome::Stop => f.write_str("*stop*"),
        }
    }
}

/// Maps a system's history type onto the contexts its feature patterns
/// instantiate.
pub trait FeatureSchema {
    type History;

    /// Tag stored in model files so a model is only used with its schema.
    fn name(&self) -> &'static str;

    /// Human-readable pattern descriptions, indexed by `Context::pattern`.
    fn patterns(&self) -> &'static [&'static str];

    /// Every context predicate that holds for `history`, one per pattern
    /// instantiation.
    fn contexts(&self, history: &Self::History) -> Vec<Context>;
}

/// A training observation with multiplicity.
#[derive(Clone, Debug, PartialEq)]
pub struct Event<H> {
    pub history: H,
    pub outcome: Outcome,
    pub count: u32,
}

impl<H> Event<H> {
    pub fn new(history: H, outcome: Outcome) -> Self {
        Event {
            history,
            outcome,
            count: 1,
        }
    }
}

/// Words seen in training, in sorted order. The stop symbol takes the index
/// just past the last word.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = words.into_iter().map(Into::into).collect();
        let words: Vec<String> = set.into_iter().collect();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }

    /// Number of words, excluding stop.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of outcomes: words plus stop.
    pub fn outcomes(&self) -> usize {
        self.words.len() + 1
    }

    pub fn stop(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_id(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn id(&self, o: &Outcome) -> Option<usize> {
        match o {
            Outcome::Word(w) => self.word_id(w),
            Outcome::Stop => Some(self.stop()),
        }
    }

    pub fn outcome(&self, id: usize) -> Outcome {
        if id == self.stop() {
            Outcome::Stop
        } else {
            Outcome::Word(self.words[id].clone())
        }
    }

    /// Word text for a word id; `None` for stop.
    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }
}

/// Binary indicator `[outcome = o and context in contexts(h)]` with weight
/// `exp(log_weight)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub outcome: Outcome,
    pub context: Context,
    pub log_weight: f64,
}

impl Feature {
    pub fn new(outcome: Outcome, context: Context) -> Self {
        Feature {
            outcome,
            context,
            log_weight: 0.0,
        }
    }

    /// The multiplicative weight alpha; always positive.
    pub fn weight(&self) -> f64 {
        exp(self.log_weight)
    }

    pub fn value(&self, outcome: &Outcome, contexts: &[Context]) -> u8 {
        (self.outcome == *outcome && contexts.contains(&self.context)) as u8
    }
}

/// Instantiates every (outcome, context) pair seen at least `cutoff` times.
///
/// Counts respect event multiplicity. A context produced twice by the same
/// history counts once. Results are sorted by context then outcome.
pub fn instantiate_features<S: FeatureSchema>(
    schema: &S,
    events: &[Event<S::History>],
    cutoff: u32,
) -> Vec<Feature> {
    let mut counts: BTreeMap<(Context, Outcome), u64> = BTreeMap::new();
    for e in events {
        let mut ctxs = schema.contexts(&e.history);
        ctxs.sort();
        ctxs.dedup();
        for c in ctxs {
            *counts.entry((c, e.outcome.clone())).or_insert(0) += u64::from(e.count);
        }
    }
    counts
        .into_iter()
        .filter(|&(_, n)| n >= u64::from(cutoff.max(1)))
        .map(|((c, o), _)| Feature::new(o, c))
        .collect()
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("feature outcome {0} is not in the vocabulary")]
    UnknownOutcome(String),
    #[error("feature {0} has a non-finite weight")]
    NonFiniteWeight(usize),
    #[error("duplicate feature for outcome {outcome} and context {context}")]
    DuplicateFeature { outcome: String, context: String },
}

/// A trained conditional model. Immutable; safe to share across threads.
#[derive(Clone, Debug)]
pub struct MaxentModel {
    schema: String,
    cutoff: u32,
    vocab: Vocabulary,
    features: Vec<Feature>,
    context_index: BTreeMap<Context, usize>,
    /// Per context id: the (outcome id, feature id) pairs it gates.
    context_features: Vec<Vec<(usize, usize)>>,
    /// Per outcome id: the features predicting it.
    outcome_index: Vec<Vec<usize>>,
}

impl PartialEq for MaxentModel {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.cutoff == other.cutoff
            && self.vocab == other.vocab
            && self.features.len() == other.features.len()
            && self.features.iter().zip(&other.features).all(|(a, b)| {
                a.outcome == b.outcome
                    && a.context == b.context
                    && a.log_weight.to_bits() == b.log_weight.to_bits()
            })
    }
}

impl MaxentModel {
    pub fn from_parts(
        schema: &str,
        cutoff: u32,
        vocab: Vocabulary,
        features: Vec<Feature>,
    ) -> Result<Self, ModelError> {
        let mut context_index = BTreeMap::new();
        let mut context_features: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut outcome_index = vec![Vec::new(); vocab.outcomes()];
        let mut seen = BTreeSet::new();
        for (fid, f) in features.iter().enumerate() {
            let oid = vocab
                .id(&f.outcome)
                .ok_or_else(|| ModelError::UnknownOutcome(f.outcome.to_string()))?;
            if !f.log_weight.is_finite() {
                return Err(ModelError::NonFiniteWeight(fid));
            }
            if !seen.insert((&f.context, oid)) {
                return Err(ModelError::DuplicateFeature {
                    outcome: f.outcome.to_string(),
                    context: f.context.to_string(),
                });
            }
            let next = context_features.len();
            let cid = *context_index.entry(f.context.clone()).or_insert(next);
            if cid == next {
                context_features.push(Vec::new());
            }
            context_features[cid].push((oid, fid));
            outcome_index[oid].push(fid);
        }
        Ok(MaxentModel {
            schema: schema.to_string(),
            cutoff,
            vocab,
            features,
            context_index,
            context_features,
            outcome_index,
        })
    }

    pub fn schema(&self) -> &str {
        &self.schema
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn num_outcomes(&self) -> usize {
        self.vocab.outcomes()
    }

    /// Features whose outcome is `outcome_id`.
    pub fn features_for_outcome(&self, outcome_id: usize) -> &[usize] {
        &self.outcome_index[outcome_id]
    }

    /// Context ids known to the model, sorted and deduplicated. Unknown
    /// contexts activate no feature and are dropped.
    pub fn resolve(&self, contexts: &[Context]) -> Vec<usize> {
        let mut ids: Vec<usize> = contexts
            .iter()
            .filter_map(|c| self.context_index.get(c).copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    fn scores(&self, context_ids: &[usize], scores: &mut [f64]) {
        scores.iter_mut().for_each(|s| *s = 0.0);
        for &cid in context_ids {
            for &(oid, fid) in &self.context_features[cid] {
                scores[oid] += self.features[fid].log_weight;
            }
        }
    }

    /// Log-probabilities of every outcome (words then stop) for resolved
    /// context ids.
    pub fn log_distribution_ids(&self, context_ids: &[usize]) -> Vec<f64> {
        let mut s = vec![0.0; self.num_outcomes()];
        self.scores(context_ids, &mut s);
        let lz = logsumexp(&s);
        s.iter_mut().for_each(|x| *x -= lz);
        s
    }

    pub fn log_distribution(&self, contexts: &[Context]) -> Vec<f64> {
        self.log_distribution_ids(&self.resolve(contexts))
    }

    /// Probabilities of every outcome (words then stop).
    pub fn distribution(&self, contexts: &[Context]) -> Vec<f64> {
        let mut d = self.log_distribution(contexts);
        d.iter_mut().for_each(|x| *x = exp(*x));
        d
    }

    pub fn log_prob(&self, contexts: &[Context], outcome: &Outcome) -> Option<f64> {
        let oid = self.vocab.id(outcome)?;
        Some(self.log_distribution(contexts)[oid])
    }
}

/// `p(. | h)` over the vocabulary followed by stop.
pub fn conditional_prob<S: FeatureSchema>(
    model: &MaxentModel,
    schema: &S,
    history: &S::History,
) -> Vec<f64> {
    model.distribution(&schema.contexts(history))
}

/// Sum over events of `count * log p(outcome | history)`. Outcomes outside
/// the vocabulary contribute negative infinity.
pub fn log_likelihood<S: FeatureSchema>(
    model: &MaxentModel,
    schema: &S,
    events: &[Event<S::History>],
) -> f64 {
    let mut total = 0.0;
    for e in events {
        let lp = model
            .log_prob(&schema.contexts(&e.history), &e.outcome)
            .unwrap_or(f64::NEG_INFINITY);
        total += f64::from(e.count) * lp;
    }
    total
}

/// Runs independent jobs and returns their results in job order.
pub trait Executor {
    fn map<T, F>(&self, jobs: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Runs jobs one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, jobs: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..jobs).map(f).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub cutoff: u32,
    pub max_iters: usize,
    /// Stop once every feature's expected count is within `tol` (relative to
    /// `max(1, empirical)`) of its empirical count.
    pub tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            cutoff: 1,
            max_iters: 100,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainDiagnostics {
    /// Weight updates performed.
    pub iterations: usize,
    /// Training log-likelihood before the first update and after each one.
    pub log_likelihood: Vec<f64>,
    /// Largest relative gap between expected and empirical feature counts
    /// for the returned model.
    pub final_gap: f64,
    pub converged: bool,
}

/// Histories are split into this many contiguous shards. The split depends
/// only on the data, so results do not depend on the executor.
const SHARDS: usize = 16;

struct HistoryStats {
    contexts: Vec<usize>,
    outcome_counts: Vec<(usize, f64)>,
    total: f64,
    /// (outcome, feature, accumulator slot) for every feature active on
    /// some outcome under this history.
    pairs: Vec<(usize, usize, usize)>,
}

struct Prepared {
    histories: Vec<HistoryStats>,
    empirical: Vec<f64>,
    /// Per feature: start offset into the slot array and the distinct
    /// values of f# it takes.
    slot_start: Vec<usize>,
    slot_fsharp: Vec<Vec<u32>>,
    slots: usize,
}

fn prepare<S: FeatureSchema>(
    model: &MaxentModel,
    schema: &S,
    events: &[Event<S::History>],
) -> Prepared {
    let nf = model.features.len();
    let mut grouped: BTreeMap<Vec<usize>, BTreeMap<usize, f64>> = BTreeMap::new();
    for e in events {
        let oid = match model.vocab.id(&e.outcome) {
            Some(o) => o,
            None => continue,
        };
        let cids = model.resolve(&schema.contexts(&e.history));
        *grouped.entry(cids).or_default().entry(oid).or_insert(0.0) += f64::from(e.count);
    }

    let mut empirical = vec![0.0; nf];
    let mut fsharp_sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); nf];
    // (context ids, observed outcome counts, (outcome, feature, f#) triples)
    type Raw = (Vec<usize>, Vec<(usize, f64)>, Vec<(usize, usize, u32)>);
    let mut raw: Vec<Raw> = Vec::new();
    let mut fsharp = vec![0u32; model.num_outcomes()];
    for (cids, counts) in grouped {
        let mut active = Vec::new();
        for &cid in &cids {
            for &(oid, fid) in &model.context_features[cid] {
                active.push((oid, fid));
                fsharp[oid] += 1;
            }
        }
        // f# is only final once every context has been visited.
        let mut pairs = Vec::with_capacity(active.len());
        for &(oid, fid) in &active {
            fsharp_sets[fid].insert(fsharp[oid]);
            pairs.push((oid, fid, fsharp[oid]));
            if let Some(&c) = counts.get(&oid) {
                empirical[fid] += c;
            }
        }
        for &(oid, _) in &active {
            fsharp[oid] = 0;
        }
        raw.push((cids, counts.into_iter().collect(), pairs));
    }

    let mut slot_start = Vec::with_capacity(nf);
    let mut slot_fsharp = Vec::with_capacity(nf);
    let mut slots = 0;
    for set in fsharp_sets {
        slot_start.push(slots);
        slots += set.len();
        slot_fsharp.push(set.into_iter().collect::<Vec<_>>());
    }
    let histories = raw
        .into_iter()
        .map(|(contexts, outcome_counts, pairs)| {
            let total = outcome_counts.iter().map(|&(_, c)| c).sum();
            let pairs = pairs
                .into_iter()
                .map(|(oid, fid, m)| {
                    let k = slot_fsharp[fid].binary_search(&m).unwrap_or(0);
                    (oid, fid, slot_start[fid] + k)
                })
                .collect();
            HistoryStats {
                contexts,
                outcome_counts,
                total,
                pairs,
            }
        })
        .collect();
    Prepared {
        histories,
        empirical,
        slot_start,
        slot_fsharp,
        slots,
    }
}

struct Pass {
    log_likelihood: f64,
    /// Expected feature counts bucketed by f#.
    acc: Vec<f64>,
}

fn shard_pass(model: &MaxentModel, prep: &Prepared, range: core::ops::Range<usize>) -> Pass {
    let mut acc = vec![0.0; prep.slots];
    let mut scores = vec![0.0; model.num_outcomes()];
    let mut ll = 0.0;
    for h in &prep.histories[range] {
        model.scores(&h.contexts, &mut scores);
        let lz = logsumexp(&scores);
        for &(oid, c) in &h.outcome_counts {
            ll += c * (scores[oid] - lz);
        }
        for &(oid, _, slot) in &h.pairs {
            acc[slot] += h.total * exp(scores[oid] - lz);
        }
    }
    Pass {
        log_likelihood: ll,
        acc,
    }
}

fn full_pass<E: Executor>(model: &MaxentModel, prep: &Prepared, exec: &E) -> Pass {
    let n = prep.histories.len();
    let shards = SHARDS.min(n.max(1));
    let bounds = |k: usize| k * n / shards;
    let parts = exec.map(shards, |k| shard_pass(model, prep, bounds(k)..bounds(k + 1)));
    let mut total = Pass {
        log_likelihood: 0.0,
        acc: vec![0.0; prep.slots],
    };
    for p in parts {
        total.log_likelihood += p.log_likelihood;
        for (a, b) in total.acc.iter_mut().zip(p.acc) {
            *a += b;
        }
    }
    total
}

/// Solves `sum_m a_m exp(delta * m) = target` for `delta`, where `terms`
/// holds `(m, a_m)` with `m >= 1` and `a_m >= 0`. The left side is
/// increasing and log-convex in `delta`; a safeguarded Newton iteration on
/// its logarithm is used. A single distinct `m` has the closed form
/// `ln(target / a) / m`.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must take the early return
pub fn solve_iis_update(terms: &[(f64, f64)], target: f64) -> f64 {
    let total: f64 = terms.iter().map(|&(_, a)| a).sum();
    if !(total > 0.0) || !(target > 0.0) {
        return 0.0;
    }
    let r = ln(target / total);
    let (mut m_min, mut m_max) = (f64::INFINITY, 0.0f64);
    for &(m, a) in terms {
        if a > 0.0 {
            m_min = m_min.min(m);
            m_max = m_max.max(m);
        }
    }
    if m_min == m_max {
        return r / m_min;
    }
    // The root lies between r / m_max and r / m_min.
    let (mut lo, mut hi) = if r >= 0.0 {
        (r / m_max, r / m_min)
    } else {
        (r / m_min, r / m_max)
    };
    let log_target = ln(target);
    let eval = |d: f64| -> (f64, f64) {
        let logs: Vec<f64> = terms
            .iter()
            .filter(|&&(_, a)| a > 0.0)
            .map(|&(m, a)| ln(a) + d * m)
            .collect();
        let lz = logsumexp(&logs);
        let mean_m: f64 = terms
            .iter()
            .filter(|&&(_, a)| a > 0.0)
            .zip(&logs)
            .map(|(&(m, _), &l)| m * exp(l - lz))
            .sum();
        (lz - log_target, mean_m)
    };
    let mut d = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (g, dg) = eval(d);
        if g == 0.0 {
            return d;
        }
        if g > 0.0 {
            hi = d;
        } else {
            lo = d;
        }
        let mut next = d - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - d).abs() <= 1e-15 * (1.0 + d.abs()) || hi - lo <= 1e-15 * (1.0 + d.abs()) {
            return next;
        }
        d = next;
    }
    d
}

/// Fits feature weights by Improved Iterative Scaling.
///
/// Each iteration computes expected feature counts under the current model
/// and, for every feature `j`, moves `log alpha_j` by the `delta_j` solving
///
/// ```text
/// sum_(h,w) c(h) p(w|h) f_j(w,h) exp(delta_j f#(w,h)) = empirical_j
/// ```
///
/// where `f#(w,h)` counts the features active on `(w,h)`. Iteration stops
/// after `opts.max_iters` updates or once the relative moment gap drops
/// below `opts.tol`. Features never observed with their outcome keep their
/// weight. Non-convergence is reported in the diagnostics, not as an error.
pub fn train_iis<S, E>(
    schema: &S,
    events: &[Event<S::History>],
    features: Vec<Feature>,
    opts: &TrainOptions,
    exec: &E,
) -> (MaxentModel, TrainDiagnostics)
where
    S: FeatureSchema,
    E: Executor,
{
    train_iis_with(schema, events, features, opts, exec, |_, _| {})
}

/// As [`train_iis`], calling `progress(iteration, log_likelihood)` after
/// every pass over the data.
pub fn train_iis_with<S, E, P>(
    schema: &S,
    events: &[Event<S::History>],
    features: Vec<Feature>,
    opts: &TrainOptions,
    exec: &E,
    mut progress: P,
) -> (MaxentModel, TrainDiagnostics)
where
    S: FeatureSchema,
    E: Executor,
    P: FnMut(usize, f64),
{
    let vocab = Vocabulary::new(events.iter().filter_map(|e| match &e.outcome {
        Outcome::Word(w) => Some(w.clone()),
        Outcome::Stop => None,
    }));
    let features = features
        .into_iter()
        .filter(|f| vocab.id(&f.outcome).is_some())
        .collect();
    let mut model = MaxentModel::from_parts(schema.name(), opts.cutoff, vocab, features)
        .expect("features are deduplicated and restricted to the vocabulary");
    let prep = prepare(&model, schema, events);
    let mut diag = TrainDiagnostics::default();

    loop {
        let pass = full_pass(&model, &prep, exec);
        progress(diag.iterations, pass.log_likelihood);
        diag.log_likelihood.push(pass.log_likelihood);
        let mut gap = 0.0f64;
        for (fid, emp) in prep.empirical.iter().enumerate() {
            let start = prep.slot_start[fid];
            let k = prep.slot_fsharp[fid].len();
            let expected: f64 = pass.acc[start..start + k].iter().sum();
            gap = gap.max((expected - emp).abs() / emp.max(1.0));
        }
        diag.final_gap = gap;
        if gap < opts.tol {
            diag.converged = true;
            break;
        }
        if diag.iterations >= opts.max_iters {
            break;
        }
        let mut terms = Vec::new();
        for fid in 0..model.features.len() {
            let start = prep.slot_start[fid];
            terms.clear();
            terms.extend(
                prep.slot_fsharp[fid]
                    .iter()
                    .enumerate()
                    .map(|(k, &m)| (f64::from(m), pass.acc[start + k])),
            );
            let delta = solve_iis_update(&terms, prep.empirical[fid]);
            model.features[fid].log_weight += delta;
        }
        diag.iterations += 1;
    }
    (model, diag)
}

/// Instantiates features with `opts.cutoff` and fits them.
pub fn train<S, E>(
    schema: &S,
    events: &[Event<S::History>],
    opts: &TrainOptions,
    exec: &E,
) -> (MaxentModel, TrainDiagnostics)
where
    S: FeatureSchema,
    E: Executor,
{
    let features = instantiate_features(schema, events, opts.cutoff);
    train_iis(schema, events, features, opts, exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Histories are plain context lists.
    struct Direct;

    impl FeatureSchema for Direct {
        type History = Vec<Context>;

        fn name(&self) -> &'static str {
            "direct"
        }

        fn patterns(&self) -> &'static [&'static str] {
            &["always", "x"]
        }

        fn contexts(&self, h: &Vec<Context>) -> Vec<Context> {
            h.clone()
        }
    }

    fn ctx(p: u8, w: &str) -> Context {
        Context::new(p, vec![Value::word(w)])
    }

    fn ev(h: Vec<Context>, o: &str) -> Event<Vec<Context>> {
        let outcome = if o == "*stop*" {
            Outcome::Stop
        } else {
            Outcome::word(o)
        };
        Event::new(h, outcome)
    }

    #[test]
    fn zero_features_is_uniform() {
        let m = MaxentModel::from_parts("direct", 1, Vocabulary::new(["a", "b", "c"]), vec![]).unwrap();
        let d = m.distribution(&[]);
        assert_eq!(d.len(), 4);
        for p in d {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn single_feature_closed_form() {
        // alpha = 2 on outcome a: p(a) = 2/4, p(b) = p(stop) = 1/4.
        let always = ctx(0, "t");
        let mut f = Feature::new(Outcome::word("a"), always.clone());
        f.log_weight = ln(2.0);
        let m = MaxentModel::from_parts("direct", 1, Vocabulary::new(["a", "b"]), vec![f]).unwrap();
        let d = m.distribution(&[always]);
        assert!((d[0] - 0.5).abs() < 1e-15);
        assert!((d[1] - 0.25).abs() < 1e-15);
        assert!((d[2] - 0.25).abs() < 1e-15);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_contexts_fire_once() {
        let c = ctx(0, "t");
        let mut f = Feature::new(Outcome::word("a"), c.clone());
        f.log_weight = ln(3.0);
        let m = MaxentModel::from_parts("direct", 1, Vocabulary::new(["a"]), vec![f]).unwrap();
        let d = m.distribution(&[c.clone(), c]);
        assert!((d[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn from_parts_rejects_bad_features() {
        let f = Feature::new(Outcome::word("zz"), ctx(0, "t"));
        assert!(matches!(
            MaxentModel::from_parts("direct", 1, Vocabulary::new(["a"]), vec![f]),
            Err(ModelError::UnknownOutcome(_))
        ));
        let mut f = Feature::new(Outcome::word("a"), ctx(0, "t"));
        f.log_weight = f64::NAN;
        assert!(matches!(
            MaxentModel::from_parts("direct", 1, Vocabulary::new(["a"]), vec![f]),
            Err(ModelError::NonFiniteWeight(0))
        ));
        let f = Feature::new(Outcome::word("a"), ctx(0, "t"));
        assert!(matches!(
            MaxentModel::from_parts("direct", 1, Vocabulary::new(["a"]), vec![f.clone(), f]),
            Err(ModelError::DuplicateFeature { .. })
        ));
    }

    #[test]
    fn cutoff_filters_and_counts_multiplicity() {
        let x = ctx(1, "x");
        let mut events = vec![ev(vec![x.clone()], "a"), ev(vec![x.clone()], "b")];
        events[0].count = 3;
        let f = instantiate_features(&Direct, &events, 3);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].outcome, Outcome::word("a"));
        assert!(instantiate_features(&Direct, &events, 5).is_empty());
        assert_eq!(instantiate_features(&Direct, &events, 1).len(), 2);
    }

    #[test]
    fn three_of_four_converges_to_closed_form() {
        // a follows x in 3 of 4 events; one indicator (a, x); V = {a, b}.
        // Maxent solution: p(a|x) = 3/4, b and stop share the rest.
        let x = ctx(1, "x");
        let events = vec![
            ev(vec![x.clone()], "a"),
            ev(vec![x.clone()], "a"),
            ev(vec![x.clone()], "a"),
            ev(vec![x.clone()], "b"),
        ];
        let features = vec![Feature::new(Outcome::word("a"), x.clone())];
        let opts = TrainOptions {
            cutoff: 1,
            max_iters: 1000,
            tol: 1e-10,
        };
        let (m, diag) = train_iis(&Direct, &events, features, &opts, &Sequential);
        let p = m.distribution(&[x]);
        assert!((p[0] - 0.75).abs() < 1e-4, "p(a|x) = {}", p[0]);
        assert!(diag.converged);
        // f# = 1, so the first update is exactly ln(3 / (4/3)).
        assert!(diag.iterations > 1);
        // alpha = 6 balances 6 / (6 + 1 + 1).
        assert!((m.features()[0].weight() - 6.0).abs() < 1e-6);
        for w in diag.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
    }

    #[test]
    fn zero_iterations_keeps_unit_weights() {
        let x = ctx(1, "x");
        let events = vec![ev(vec![x.clone()], "a"), ev(vec![x.clone()], "b")];
        let features = instantiate_features(&Direct, &events, 1);
        let opts = TrainOptions {
            max_iters: 0,
            ..TrainOptions::default()
        };
        let (m, diag) = train_iis(&Direct, &events, features, &opts, &Sequential);
        assert_eq!(diag.iterations, 0);
        assert!(m.features().iter().all(|f| f.log_weight == 0.0));
        assert!((log_likelihood(&m, &Direct, &events) - 2.0 * ln(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn uniform_log_likelihood() {
        let m = MaxentModel::from_parts("direct", 1, Vocabulary::new(["a", "b", "c"]), vec![]).unwrap();
        let events = vec![ev(vec![], "a")];
        assert!((log_likelihood(&m, &Direct, &events) - ln(0.25)).abs() < 1e-15);
    }

    #[test]
    fn iis_update_matches_closed_form_and_brackets() {
        let d = solve_iis_update(&[(2.0, 0.5)], 2.0);
        assert!((d - ln(4.0) / 2.0).abs() < 1e-15);
        let terms = [(1.0, 0.3), (2.0, 0.2), (4.0, 0.1)];
        for target in [0.01, 0.3, 0.6, 5.0, 400.0] {
            let d = solve_iis_update(&terms, target);
            let lhs: f64 = terms.iter().map(|&(m, a)| a * exp(d * m)).sum();
            assert!((lhs - target).abs() <= 1e-10 * target, "target {target}: {lhs}");
        }
        assert_eq!(solve_iis_update(&terms, 0.0), 0.0);
        assert_eq!(solve_iis_update(&[], 1.0), 0.0);
    }

    #[test]
    fn context_text_round_trip() {
        let c = Context::new(
            2,
            vec![
                Value::word("flight"),
                Value::Marker(Marker::Boundary),
                Value::Marker(Marker::Root),
                Value::Marker(Marker::Left),
                Value::Marker(Marker::Right),
                Value::Marker(Marker::Done),
                Value::word("$city-fr"),
            ],
        );
        let s = c.to_string();
        assert_eq!(s, "2 =flight #bos #root #left #right #done =$city-fr");
        assert_eq!(s.parse::<Context>().unwrap(), c);
        assert!("x".parse::<Context>().is_err());
        assert!("1 =".parse::<Context>().is_err());
        assert!("1 #nope".parse::<Context>().is_err());
        assert_eq!("0".parse::<Context>().unwrap(), Context::new(0, vec![]));
    }
}
