//! Metric learning on ordered labeled trees with weighted pq-gram
//! distances.
//!
//! Trees are turned into sparse pq-gram count vectors ([`pqgram`]); the
//! distance between two trees is a softplus-weighted sum of the absolute
//! count differences ([`metric`]); the weights are learned with a
//! large-margin nearest-neighbor hinge loss ([`lmnn`]) and evaluated with
//! k-NN classification against a tree edit distance baseline ([`knn`],
//! [`ted`]).

pub mod cli;
pub mod datasets;
pub mod error;
pub mod knn;
pub mod lmnn;
pub mod metric;
pub mod model_file;
pub mod pqgram;
pub mod ted;
pub mod tree;

pub use error::{Error, Result};
pub use pqgram::{
    build_vocabulary, extract_grams, gram_count, profile, sym_diff, GramMultiset, GramShape,
    LabelTuple, Profile, SparseCounts, Vocabulary,
};
pub use tree::{parse_tree, serialize_tree, tree_size, Tree};
