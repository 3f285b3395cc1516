//! Text file formats.
//!
//! | file       | line format                                           |
//! |------------|-------------------------------------------------------|
//! | corpus     | space-separated tokens, `$` marks attributes          |
//! | treebank   | `{"tokens": [...], "heads": [...]}`, `-1` for the root |
//! | bindings   | `$attr<TAB>value`                                     |
//! | judgments  | `system<TAB>canonical-attribute-set<TAB>rank`         |
//! | model      | header, then a system-specific body (see [`write_model`]) |
//!
//! Blank lines are skipped everywhere except inside model bodies.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use surfgen_core::evalkit::{Judgment, Rank};
use surfgen_core::maxent::{Feature, Outcome, Vocabulary};
use surfgen_core::nlg1::FrequencyTable;
use surfgen_core::{AttributeSet, Bindings, Context, DependencyTree, MaxentModel, Template};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

impl FormatError {
    fn new(line: usize, message: impl ToString) -> Self {
        FormatError {
            line,
            message: message.to_string(),
        }
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn read_corpus(text: &str) -> Result<Vec<Template>, FormatError> {
    content_lines(text)
        .map(|(n, l)| surfgen_core::corpus::parse_template_line(l).map_err(|e| FormatError::new(n, e)))
        .collect()
}

pub fn write_corpus(corpus: &[Template]) -> String {
    let mut out = String::new();
    for t in corpus {
        let _ = writeln!(out, "{t}");
    }
    out
}

/// One treebank line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeRecord {
    pub tokens: Vec<String>,
    pub heads: Vec<i64>,
}

impl TreeRecord {
    pub fn from_tree(tree: &DependencyTree) -> Self {
        let (tokens, heads) = tree.to_heads();
        TreeRecord {
            tokens: tokens.iter().map(|t| t.text().to_string()).collect(),
            heads,
        }
    }
}

/// Parses and validates a single treebank line.
pub fn parse_tree_record(line: &str) -> Result<DependencyTree, String> {
    let rec: TreeRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    DependencyTree::from_heads(&rec.tokens, &rec.heads).map_err(|e| e.to_string())
}

pub fn tree_record_line(tree: &DependencyTree) -> String {
    serde_json::to_string(&TreeRecord::from_tree(tree)).expect("tree records always serialize")
}

pub fn read_treebank(text: &str) -> Result<Vec<DependencyTree>, FormatError> {
    content_lines(text)
        .map(|(n, l)| parse_tree_record(l).map_err(|e| FormatError::new(n, e)))
        .collect()
}

pub fn write_treebank(trees: &[DependencyTree]) -> String {
    let mut out = String::new();
    for t in trees {
        out.push_str(&tree_record_line(t));
        out.push('\n');
    }
    out
}

pub fn read_bindings(text: &str) -> Result<Bindings, FormatError> {
    let mut b = Bindings::new();
    for (n, l) in content_lines(text) {
        let (attr, value) = l
            .split_once('\t')
            .ok_or_else(|| FormatError::new(n, "expected `$attr<TAB>value`"))?;
        if b.get(attr).is_some() {
            return Err(FormatError::new(n, format!("{attr} bound twice")));
        }
        b.insert(attr, value).map_err(|e| FormatError::new(n, e))?;
    }
    Ok(b)
}

pub fn read_judgments(text: &str) -> Result<Vec<Judgment>, FormatError> {
    content_lines(text)
        .map(|(n, l)| {
            let fields: Vec<&str> = l.split('\t').collect();
            let [system, attrs, rank] = fields[..] else {
                return Err(FormatError::new(n, "expected `system<TAB>attributes<TAB>rank`"));
            };
            if system.is_empty() {
                return Err(FormatError::new(n, "empty system name"));
            }
            let a = AttributeSet::parse(attrs).map_err(|e| FormatError::new(n, e))?;
            let r: Rank = rank.parse().map_err(|e| FormatError::new(n, e))?;
            Ok(Judgment::new(system, a, r))
        })
        .collect()
}

pub fn write_judgments(judgments: &[Judgment]) -> String {
    let mut out = String::new();
    for j in judgments {
        let _ = writeln!(out, "{}\t{}\t{}", j.system, j.attribute_set.canonical(), j.rank);
    }
    out
}

const MAGIC: &str = "surfgen-model 1";

/// A trained generator of any kind.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelFile {
    Nlg1(FrequencyTable),
    /// An `nlg2` or `nlg3` model; [`MaxentModel::schema`] says which.
    Maxent(MaxentModel),
}

impl ModelFile {
    pub fn system(&self) -> &str {
        match self {
            ModelFile::Nlg1(_) => "nlg1",
            ModelFile::Maxent(m) => m.schema(),
        }
    }
}

/// Serializes a model.
///
/// ```text
/// surfgen-model 1
/// system nlg1
/// entries <n>
/// <canonical set>\t<template>\t<count>      (n lines)
/// ```
///
/// or
///
/// ```text
/// surfgen-model 1
/// system nlg2|nlg3
/// cutoff <K>
/// words <n>
/// <word>                                    (n lines, sorted)
/// features <k>
/// <log-weight>\t<=word|#stop>\t<context>    (k lines)
/// ```
///
/// Weights use the shortest decimal form that parses back to the same
/// bits.
pub fn write_model(model: &ModelFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "system {}", model.system());
    match model {
        ModelFile::Nlg1(table) => {
            let _ = writeln!(out, "entries {}", table.iter().count());
            for (a, t, c) in table.iter() {
                let _ = writeln!(out, "{}\t{}\t{}", a.canonical(), t, c);
            }
        }
        ModelFile::Maxent(m) => {
            let _ = writeln!(out, "cutoff {}", m.cutoff());
            let _ = writeln!(out, "words {}", m.vocab().len());
            for w in m.vocab().words() {
                let _ = writeln!(out, "{w}");
            }
            let _ = writeln!(out, "features {}", m.features().len());
            for f in m.features() {
                let outcome = match &f.outcome {
                    Outcome::Word(w) => format!("={w}"),
                    Outcome::Stop => "#stop".to_string(),
                };
                let _ = writeln!(out, "{}\t{}\t{}", f.log_weight, outcome, f.context);
            }
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), FormatError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l.strip_suffix('\r').unwrap_or(l)))
            }
            None => Err(FormatError::new(self.last + 1, "unexpected end of file")),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str), FormatError> {
        let (n, l) = self.next()?;
        l.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(|v| (n, v))
            .ok_or_else(|| FormatError::new(n, format!("expected `{key} ...`")))
    }

    fn count(&mut self, key: &str) -> Result<usize, FormatError> {
        let (n, v) = self.keyed(key)?;
        v.parse().map_err(|e| FormatError::new(n, format!("{key}: {e}")))
    }
}

pub fn read_model(text: &str) -> Result<ModelFile, FormatError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (n, magic) = lines.next()?;
    if magic != MAGIC {
        return Err(FormatError::new(n, format!("not a model file (expected `{MAGIC}`)")));
    }
    let (n, system) = lines.keyed("system")?;
    let model = match system {
        "nlg1" => {
            let entries = lines.count("entries")?;
            let mut table = FrequencyTable::new();
            for _ in 0..entries {
                let (n, l) = lines.next()?;
                let fields: Vec<&str> = l.split('\t').collect();
                let [attrs, template, count] = fields[..] else {
                    return Err(FormatError::new(n, "expected `attributes<TAB>template<TAB>count`"));
                };
                let t: Template = template.parse().map_err(|e| FormatError::new(n, e))?;
                let a = AttributeSet::parse(attrs).map_err(|e| FormatError::new(n, e))?;
                if t.attribute_set() != a {
                    return Err(FormatError::new(n, "attribute set does not match template"));
                }
                let c: u64 = count.parse().map_err(|e| FormatError::new(n, e))?;
                if c == 0 || table.count(&a, &t) != 0 {
                    return Err(FormatError::new(n, "zero or repeated entry"));
                }
                table.add(t, c);
            }
            ModelFile::Nlg1(table)
        }
        "nlg2" | "nlg3" => {
            let (cn, cutoff) = lines.keyed("cutoff")?;
            let cutoff: u32 = cutoff.parse().map_err(|e| FormatError::new(cn, e))?;
            let nwords = lines.count("words")?;
            let mut words = Vec::with_capacity(nwords);
            for _ in 0..nwords {
                let (n, w) = lines.next()?;
                if let Some(prev) = words.last() {
                    if prev >= &w {
                        return Err(FormatError::new(n, "words must be sorted and unique"));
                    }
                }
                surfgen_core::Token::new(w).map_err(|e| FormatError::new(n, e))?;
                words.push(w);
            }
            let nfeatures = lines.count("features")?;
            let mut features = Vec::with_capacity(nfeatures);
            for _ in 0..nfeatures {
                let (n, l) = lines.next()?;
                let fields: Vec<&str> = l.splitn(3, '\t').collect();
                let [weight, outcome, context] = fields[..] else {
                    return Err(FormatError::new(n, "expected `weight<TAB>outcome<TAB>context`"));
                };
                let log_weight: f64 = weight.parse().map_err(|e| FormatError::new(n, e))?;
                let outcome = match outcome {
                    "#stop" => Outcome::Stop,
                    o => match o.strip_prefix('=') {
                        Some(w) => Outcome::word(w),
                        None => return Err(FormatError::new(n, format!("bad outcome `{o}`"))),
                    },
                };
                let context: Context = context.parse().map_err(|e| FormatError::new(n, e))?;
                let mut f = Feature::new(outcome, context);
                f.log_weight = log_weight;
                features.push(f);
            }
            let m = MaxentModel::from_parts(system, cutoff, Vocabulary::new(words), features)
                .map_err(|e| FormatError::new(lines.last, e))?;
            ModelFile::Maxent(m)
        }
        other => return Err(FormatError::new(n, format!("unknown system `{other}`"))),
    };
    for (i, l) in lines.inner {
        if !l.trim().is_empty() {
            return Err(FormatError::new(i + 1, "trailing content after model"));
        }
    }
    Ok(model)
}
