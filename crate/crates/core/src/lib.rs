//! # surfgen-core
//!
//! Trainable surface realization from flat attribute sets.
//!
//! Three generators share a common corpus model:
//!
//! * [`nlg1`] memorizes the most frequent template seen for each attribute set.
//! * [`nlg2`] predicts one word at a time with a conditional maximum entropy
//!   model over word n-grams and the attributes still to be mentioned, and
//!   searches left to right with a beam.
//! * [`nlg3`] predicts a dependency tree top-down, conditioning each child on
//!   its head, grandparent, nearest siblings and the remaining attributes.
//!
//! Models are trained by Improved Iterative Scaling ([`maxent`]). The
//! [`evalkit`] module carries the weighted/unweighted scoring protocol and a
//! seeded synthetic corpus generator.
//!
//! This crate is `no_std` and only needs `alloc`. File formats, the threaded
//! training executor and the command-line tool live in the `surfgen` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod evalkit;
pub mod maxent;
pub mod nlg1;
pub mod nlg2;
pub mod nlg3;

mod math;

pub use corpus::{
    AttributeSet, Bindings, CorpusError, DependencyTree, Template, Token, TokenKind, TreeNode,
};
pub use maxent::{Context, Event, FeatureSchema, MaxentModel, Outcome, TrainOptions, Value};

/// Outcome of a generation request that may legitimately produce nothing.
#[derive(Clone, Debug, PartialEq)]
pub enum Generated<T> {
    /// The best candidate.
    Output(T),
    /// No candidate satisfied the constraints.
    NoOutput,
}

impl<T> Generated<T> {
    pub fn output(self) -> Option<T> {
        match self {
            Generated::Output(t) => Some(t),
            Generated::NoOutput => None,
        }
    }

    pub fn is_no_output(&self) -> bool {
        matches!(self, Generated::NoOutput)
    }
}

/// Errors raised by the search-based generators before any search is run.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GenerateError {
    #[error("attribute set is empty")]
    EmptyAttributeSet,
    #[error("attribute {0} was never seen in training")]
    UnknownAttribute(alloc::string::String),
    #[error("invalid search configuration: {0}")]
    InvalidConfig(&'static str),
}
