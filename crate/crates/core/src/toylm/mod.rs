//! Desk-scale testbeds: a planted-feature activation generator with known
//! protected dimensions, and a tiny character-level transformer that
//! memorizes passages and exposes a residual-stream hook point.

pub mod corpus;
pub mod generate;
pub mod model;
pub mod planted;
pub mod train;
pub mod vocab;

pub use corpus::{build_corpus, labeled_windows, parse_passages, sample_passages, CorpusConfig};
pub use generate::{decode_greedy, extract_activations, logit_lens, text_activations, LogitLens};
pub use model::{ToyLm, ToyLmConfig};
pub use planted::{generate_planted, planted_recall, PlantedConfig, PlantedData};
pub use train::{
    memorization, split_passage, train_toy_lm, train_toy_lm_with, LmTrainConfig, LmTrainReport,
    MEMORIZATION_THRESHOLD,
};
pub use vocab::Vocab;
