//! Knowledge-graph embeddings (TransE, DistMult, RotatE, OTE) with relation-based
//! embedding propagation as a training-free post-processing step, plus filtered
//! link-prediction evaluation.
//!
//! The usual pipeline is [`trainer::train`] → [`propagation::propagate`] →
//! [`eval::evaluate`], with [`checkpoint`] files in between.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod propagation;
pub mod real;
pub mod store;
pub mod synthetic;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use eval::{evaluate, Protocol, RankingReport, TiePolicy};
pub use graph::{AdjacencyIndex, Dataset, KnowledgeGraph, KnownTripletSet, Triplet, Vocab, VocabMode};
pub use model::{ModelFamily, ModelSpec, NormOrder, PreparedRelation};
pub use propagation::{propagate, propagate_ep, PropagationConfig, PropagationMode};
pub use real::Real;
pub use store::EmbeddingStore;
pub use trainer::{train, TrainConfig, TrainReport};

/// Runs `f` on a dedicated pool of `threads` workers (`0` = rayon's default).
///
/// With `threads == 1` every parallel section runs in a fixed order.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
