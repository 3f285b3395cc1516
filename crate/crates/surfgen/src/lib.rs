//! Standard-library companion to `surfgen-core`: file formats, a threaded
//! training executor and the `surfgen` command-line tool.

pub mod formats;
pub mod parallel;

pub use formats::{
    parse_tree_record, read_bindings, read_corpus, read_judgments, read_model, read_treebank,
    tree_record_line, write_corpus, write_judgments, write_model, write_treebank, FormatError,
    ModelFile, TreeRecord,
};
pub use parallel::Threaded;
