//! Knowledge-graph triples: loading, vocabularies, reverse relations,
//! the filtered-ranking index, negative sampling and batching.

mod store;
pub mod synthetic;

pub use store::{
    augment_reverse, load_dataset, load_triples, sample_negatives, shuffle, Batches, Direction,
    FilterIndex, Query, Triple, TripleStore, Vocab,
};
