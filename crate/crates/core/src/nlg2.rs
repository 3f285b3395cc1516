//! Left-to-right maxent n-gram generator.
//!
//! Each word is predicted from the two previous words and the attributes
//! still to be mentioned. Search keeps the `N` best prefixes per length and
//! only accepts sequences that mention every requested attribute exactly
//! once before stopping.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::corpus::{AttributeSet, Template, Token};
use crate::maxent::{
    self, Context, Event, Executor, FeatureSchema, MaxentModel, Outcome, TrainDiagnostics,
    TrainOptions, Value,
};
use crate::math::ln;
use crate::{GenerateError, Generated};

/// A previous-word slot: a token, or the boundary before the first word.
pub type Prev = Option<String>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Nlg2History {
    pub prev: Prev,
    pub prev2: Prev,
    /// Attributes not yet mentioned at this position.
    pub remaining: AttributeSet,
}

const PATTERNS: &[&str] = &[
    "w_i=? and attr_i={}",
    "w_i=? and w_i-1=? and ? in attr_i",
    "w_i=? and w_i-1 w_i-2=? ? and ? in attr_i",
];

/// The three n-gram patterns: no attributes remaining, word bigram with an
/// attribute, word trigram with an attribute.
#[derive(Clone, Copy, Debug, Default)]
pub struct Nlg2Schema;

pub fn nlg2_patterns() -> Nlg2Schema {
    Nlg2Schema
}

pub(crate) fn slot(p: &Option<impl AsRef<str>>) -> Value {
    match p {
        Some(w) => Value::word(w.as_ref()),
        None => Value::Marker(maxent::Marker::Boundary),
    }
}

impl FeatureSchema for Nlg2Schema {
    type History = Nlg2History;

    fn name(&self) -> &'static str {
        "nlg2"
    }

    fn patterns(&self) -> &'static [&'static str] {
        PATTERNS
    }

    fn contexts(&self, h: &Nlg2History) -> Vec<Context> {
        contexts_for(h.prev.as_deref(), h.prev2.as_deref(), h.remaining.iter())
    }
}

fn contexts_for<'a>(
    prev: Option<&str>,
    prev2: Option<&str>,
    remaining: impl Iterator<Item = &'a str>,
) -> Vec<Context> {
    let mut out = Vec::new();
    let p1 = slot(&prev);
    let p2 = slot(&prev2);
    for a in remaining {
        out.push(Context::new(1, vec![p1.clone(), Value::word(a)]));
        out.push(Context::new(2, vec![p1.clone(), p2.clone(), Value::word(a)]));
    }
    if out.is_empty() {
        out.push(Context::new(0, Vec::new()));
    }
    out
}

/// One event per token plus a final stop event for every template.
pub fn nlg2_events(corpus: &[Template]) -> Vec<Event<Nlg2History>> {
    let mut events = Vec::with_capacity(corpus.iter().map(|t| t.len() + 1).sum());
    for t in corpus {
        let mut remaining = t.attribute_set();
        let mut prev: Prev = None;
        let mut prev2: Prev = None;
        for tok in t.tokens() {
            events.push(Event::new(
                Nlg2History {
                    prev: prev.clone(),
                    prev2: prev2.clone(),
                    remaining: remaining.clone(),
                },
                Outcome::word(tok.text()),
            ));
            if tok.is_attribute() {
                remaining.remove(tok.text());
            }
            prev2 = prev.replace(tok.text().to_string());
        }
        events.push(Event::new(
            Nlg2History {
                prev,
                prev2,
                remaining,
            },
            Outcome::Stop,
        ));
    }
    events
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Nlg2Config {
    /// Beam width N.
    pub beam: usize,
    /// Maximum sequence length M, counting the final stop.
    pub max_len: usize,
    /// Feature cutoff K.
    pub cutoff: u32,
}

impl Default for Nlg2Config {
    fn default() -> Self {
        Nlg2Config {
            beam: 10,
            max_len: 30,
            cutoff: 3,
        }
    }
}

impl Nlg2Config {
    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.beam == 0 {
            return Err(GenerateError::InvalidConfig("beam width must be at least 1"));
        }
        if self.max_len == 0 {
            return Err(GenerateError::InvalidConfig("maximum length must be at least 1"));
        }
        if self.cutoff == 0 {
            return Err(GenerateError::InvalidConfig("cutoff must be at least 1"));
        }
        Ok(())
    }
}

/// Builds events, instantiates features with `cutoff` and fits them.
pub fn train_nlg2<E: Executor>(
    corpus: &[Template],
    cutoff: u32,
    max_iters: usize,
    tol: f64,
    exec: &E,
    progress: impl FnMut(usize, f64),
) -> (MaxentModel, TrainDiagnostics) {
    let events = nlg2_events(corpus);
    let opts = TrainOptions {
        cutoff,
        max_iters,
        tol,
    };
    let features = maxent::instantiate_features(&Nlg2Schema, &events, cutoff);
    maxent::train_iis_with(&Nlg2Schema, &events, features, &opts, exec, progress)
}

/// A generated template with its score `(1/M) * prod p(w_i | history)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored<T> {
    pub value: T,
    pub log_prob: f64,
}

impl<T> Scored<T> {
    pub fn probability(&self) -> f64 {
        crate::math::exp(self.log_prob)
    }
}

#[derive(Clone, Debug)]
struct SeqCandidate {
    /// Outcome ids; a completed candidate ends with stop.
    words: Vec<usize>,
    /// Bit i set when the i-th requested attribute is still pending.
    remaining: u64,
    log_prob: f64,
}

/// Per-query lookup of vocabulary ids that are attributes.
pub(crate) struct AttributeMap {
    /// For every outcome id: `None` for plain words and stop, `Some(Some(i))`
    /// for the i-th requested attribute, `Some(None)` for other attributes.
    pub(crate) by_outcome: Vec<Option<Option<usize>>>,
    pub(crate) names: Vec<String>,
}

impl AttributeMap {
    pub(crate) fn new(model: &MaxentModel, a: &AttributeSet) -> Result<Self, GenerateError> {
        if a.is_empty() {
            return Err(GenerateError::EmptyAttributeSet);
        }
        if a.len() > 64 {
            return Err(GenerateError::InvalidConfig("at most 64 attributes per query"));
        }
        let names: Vec<String> = a.iter().map(ToString::to_string).collect();
        let vocab = model.vocab();
        for n in &names {
            if vocab.word_id(n).is_none() {
                return Err(GenerateError::UnknownAttribute(n.clone()));
            }
        }
        let by_outcome = (0..vocab.outcomes())
            .map(|id| match vocab.word(id) {
                Some(w) if w.starts_with('$') => Some(names.iter().position(|n| n == w)),
                _ => None,
            })
            .collect();
        Ok(AttributeMap { by_outcome, names })
    }

    pub(crate) fn full_mask(&self) -> u64 {
        if self.names.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.names.len()) - 1
        }
    }

    pub(crate) fn remaining_names(&self, mask: u64) -> impl Iterator<Item = &str> + '_ {
        self.names
            .iter()
            .enumerate()
            .filter(move |(i, _)| mask & (1u64 << i) != 0)
            .map(|(_, n)| n.as_str())
    }
}

fn word_text(model: &MaxentModel, id: usize) -> Option<&str> {
    model.vocab().word(id)
}

fn rank(a: &SeqCandidate, b: &SeqCandidate) -> Ordering {
    // Vocabulary ids follow token text order, so comparing ids compares text.
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.words.cmp(&b.words))
}

fn to_template(model: &MaxentModel, words: &[usize]) -> Template {
    let tokens = words
        .iter()
        .filter_map(|&i| word_text(model, i))
        .map(|w| Token::new(w).expect("vocabulary words are valid tokens"))
        .collect();
    Template::new(tokens).expect("search never repeats an attribute")
}

/// Beam search over `V ∪ {stop}`.
///
/// At each length the extensions of the current beam that respect the
/// at-most-once rule (and, for stop, the at-least-once rule) are ranked
/// and cut to `N`; stop-terminated ones move to the completed pool. Search
/// ends once `N` sequences are complete or length `M` has been expanded.
/// Results are sorted by `(1/M) * prod p`, best first; ties by token text.
pub fn nlg2_search(
    model: &MaxentModel,
    a: &AttributeSet,
    cfg: &Nlg2Config,
) -> Result<Vec<Scored<Template>>, GenerateError> {
    cfg.validate()?;
    let attrs = AttributeMap::new(model, a)?;
    let stop = model.vocab().stop();
    let length_prior = -ln(cfg.max_len as f64);

    let mut beam = vec![SeqCandidate {
        words: Vec::new(),
        remaining: attrs.full_mask(),
        log_prob: 0.0,
    }];
    let mut completed: Vec<SeqCandidate> = Vec::new();

    for _len in 1..=cfg.max_len {
        let mut next = Vec::new();
        for cand in &beam {
            let n = cand.words.len();
            let prev = n.checked_sub(1).and_then(|i| word_text(model, cand.words[i]));
            let prev2 = n.checked_sub(2).and_then(|i| word_text(model, cand.words[i]));
            let ctx = contexts_for(prev, prev2, attrs.remaining_names(cand.remaining));
            let logp = model.log_distribution(&ctx);
            for (o, &lp) in logp.iter().enumerate() {
                let mut remaining = cand.remaining;
                if o == stop {
                    if remaining != 0 {
                        continue;
                    }
                } else if let Some(slot) = attrs.by_outcome[o] {
                    match slot {
                        Some(i) if remaining & (1u64 << i) != 0 => remaining &= !(1u64 << i),
                        _ => continue,
                    }
                }
                let mut words = cand.words.clone();
                words.push(o);
                next.push(SeqCandidate {
                    words,
                    remaining,
                    log_prob: cand.log_prob + lp,
                });
            }
        }
        next.sort_by(rank);
        next.truncate(cfg.beam);
        beam.clear();
        for c in next {
            if c.words.last() == Some(&stop) {
                completed.push(c);
            } else {
                beam.push(c);
            }
        }
        if completed.len() >= cfg.beam || beam.is_empty() {
            break;
        }
    }

    completed.sort_by(rank);
    completed.truncate(cfg.beam);
    Ok(completed
        .into_iter()
        .map(|c| Scored {
            value: to_template(model, &c.words),
            log_prob: length_prior + c.log_prob,
        })
        .collect())
}

/// The best template from [`nlg2_search`].
pub fn nlg2_generate(
    model: &MaxentModel,
    a: &AttributeSet,
    cfg: &Nlg2Config,
) -> Result<Generated<Template>, GenerateError> {
    Ok(match nlg2_search(model, a, cfg)?.into_iter().next() {
        Some(s) => Generated::Output(s.value),
        None => Generated::NoOutput,
    })
}

/// `ln((1/M) * prod p(w_i | history))` for a template followed by stop.
pub fn sequence_log_prob(model: &MaxentModel, template: &Template, max_len: usize) -> f64 {
    let mut total = -ln(max_len as f64);
    let events = nlg2_events(core::slice::from_ref(template));
    for e in &events {
        total += model
            .log_prob(&Nlg2Schema.contexts(&e.history), &e.outcome)
            .unwrap_or(f64::NEG_INFINITY);
    }
    total
}
