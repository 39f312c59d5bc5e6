//! Locate and suppress the part of a language model's sparse-autoencoder
//! feature space that fires on protected text.
//!
//! The pipeline has four stages:
//!
//! 1. [`sae`]: a JumpReLU sparse autoencoder maps dense hidden states to a
//!    wide, mostly-zero code and back.
//! 2. [`alignment`]: each code dimension is scored by how often it fires
//!    harder on a protected sample than on a general one (a strict-win AUROC).
//! 3. [`subspace`]: the top-n dimensions form the protected subspace.
//! 4. [`intervene`]: at decode time, above-threshold activations in that
//!    subspace are clamped to zero (or amplified) and the edited code is
//!    decoded back into the residual stream with the reconstruction error
//!    passed through.
//!
//! [`evalmetrics`] scores generations against reference continuations and
//! ranks methods by pairwise win rate, and [`toylm`] provides desk-scale
//! testbeds: a planted-feature activation generator and a tiny
//! character-level transformer that memorizes passages.

pub mod activations;
pub mod alignment;
pub mod error;
pub mod evalmetrics;
mod io;
pub mod intervene;
pub mod sae;
pub mod subspace;
pub mod toylm;

pub use activations::{
    load_dump, max_pool, save_dump, ActivationDataset, ActivationRecord, CorpusLabel, PooledVector,
};
pub use alignment::{score_dimension, score_dimension_fast, score_report, subspace_score, AlignmentReport};
pub use error::{Result, ScopeError};
pub use evalmetrics::{
    levenshtein_similarity, minhash_similarity, ngram_cosine, win_rate, GenerationRecord,
    MetricMatrix, MinHashConfig,
};
pub use intervene::{amplify_code, apply_hook, clamp_code, InterventionConfig, InterventionMode};
pub use sae::{jump_relu, SaeModel, TrainConfig};
pub use subspace::{project, select_top_n, SubspaceSpec};
