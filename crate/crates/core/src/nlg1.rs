//! Frequency baseline: the most common training template for an attribute
//! set, or nothing when the set was never seen.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{AttributeSet, Template};
use crate::Generated;

/// Template counts keyed by attribute set, then by template text.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    entries: BTreeMap<AttributeSet, BTreeMap<String, (Template, u64)>>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        FrequencyTable::default()
    }

    /// Adds `count` occurrences of `template`.
    pub fn add(&mut self, template: Template, count: u64) {
        if count == 0 {
            return;
        }
        let key = template.attribute_set();
        let text = template.to_string();
        self.entries
            .entry(key)
            .or_default()
            .entry(text)
            .or_insert((template, 0))
            .1 += count;
    }

    pub fn count(&self, a: &AttributeSet, template: &Template) -> u64 {
        self.entries
            .get(a)
            .and_then(|m| m.get(&template.to_string()))
            .map_or(0, |&(_, c)| c)
    }

    /// Sum of all counts; equals the training corpus size.
    pub fn total(&self) -> u64 {
        self.entries
            .values()
            .flat_map(|m| m.values())
            .map(|&(_, c)| c)
            .sum()
    }

    pub fn attribute_sets(&self) -> impl Iterator<Item = &AttributeSet> + '_ {
        self.entries.keys()
    }

    pub fn contains(&self, a: &AttributeSet) -> bool {
        self.entries.contains_key(a)
    }

    /// Every (attribute set, template, count), sorted by set then template
    /// text.
    pub fn iter(&self) -> impl Iterator<Item = (&AttributeSet, &Template, u64)> + '_ {
        self.entries
            .iter()
            .flat_map(|(a, m)| m.values().map(move |(t, c)| (a, t, *c)))
    }

    /// Templates seen with `a`, most frequent first; ties by template text.
    pub fn ranked(&self, a: &AttributeSet) -> Vec<(&Template, u64)> {
        let mut out: Vec<(&str, &Template, u64)> = match self.entries.get(a) {
            Some(m) => m.iter().map(|(s, (t, c))| (s.as_str(), t, *c)).collect(),
            None => Vec::new(),
        };
        out.sort_by(|x, y| y.2.cmp(&x.2).then_with(|| x.0.cmp(y.0)));
        out.into_iter().map(|(_, t, c)| (t, c)).collect()
    }
}

pub fn train_nlg1<'a, I>(corpus: I) -> FrequencyTable
where
    I: IntoIterator<Item = &'a Template>,
{
    let mut table = FrequencyTable::new();
    for t in corpus {
        table.add(t.clone(), 1);
    }
    table
}

/// The argmax template for `a`. Ties go to the lexicographically smallest
/// space-joined text.
pub fn nlg1_generate(table: &FrequencyTable, a: &AttributeSet) -> Generated<Template> {
    match table.ranked(a).first() {
        Some((t, _)) => Generated::Output((*t).clone()),
        None => Generated::NoOutput,
    }
}

impl FrequencyTable {
    /// Text of the best template, for diagnostics.
    pub fn best_text(&self, a: &AttributeSet) -> Option<String> {
        nlg1_generate(self, a).output().map(|t| t.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_template_line;
    use alloc::vec;

    fn t(s: &str) -> Template {
        parse_template_line(s).unwrap()
    }

    fn set(s: &str) -> AttributeSet {
        AttributeSet::parse(s).unwrap()
    }

    #[test]
    fn counts_and_argmax() {
        let corpus = vec![t("a $x"), t("a $x"), t("the $x")];
        let table = train_nlg1(&corpus);
        assert_eq!(table.count(&set("$x"), &t("a $x")), 2);
        assert_eq!(table.count(&set("$x"), &t("the $x")), 1);
        assert_eq!(table.total(), 3);
        assert_eq!(nlg1_generate(&table, &set("$x")), Generated::Output(t("a $x")));
        assert_eq!(nlg1_generate(&table, &set("$y")), Generated::NoOutput);
    }

    #[test]
    fn single_template() {
        let table = train_nlg1(&[t("flights to $city-to")]);
        assert_eq!(table.iter().count(), 1);
        assert_eq!(table.total(), 1);
    }

    #[test]
    fn tie_breaks_on_text() {
        let table = train_nlg1(&[t("b $x"), t("a $x")]);
        assert_eq!(nlg1_generate(&table, &set("$x")), Generated::Output(t("a $x")));
    }

    #[test]
    fn order_independent() {
        let c1 = vec![t("a $x"), t("b $x"), t("b $x"), t("c $y")];
        let mut c2 = c1.clone();
        c2.reverse();
        assert_eq!(train_nlg1(&c1), train_nlg1(&c2));
    }

    #[test]
    fn empty_set_is_a_key() {
        let table = train_nlg1(&[t("nonstop flights")]);
        assert_eq!(
            table.best_text(&AttributeSet::new()).as_deref(),
            Some("nonstop flights")
        );
    }
}
