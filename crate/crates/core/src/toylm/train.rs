//! Training the toy LM until it regurgitates its protected passages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, ScopeError};
use crate::evalmetrics::levenshtein_similarity;
use crate::toylm::generate::decode_greedy;
use crate::toylm::model::{Adam, ToyLm, ToyLmConfig};
use crate::toylm::vocab::Vocab;

/// Similarity a passage's greedy continuation must reach to count as memorized.
pub const MEMORIZATION_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct LmTrainConfig {
    /// Peak learning rate, cosine-decayed to zero over the run.
    pub learning_rate: f32,
    /// Windows per optimizer step.
    pub batch_size: usize,
    /// Fixed training budget; memorization is checked once at the end.
    pub epochs: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f32,
    pub threshold: f64,
}

impl Default for LmTrainConfig {
    fn default() -> Self {
        LmTrainConfig {
            learning_rate: 3e-3,
            batch_size: 16,
            epochs: 20,
            clip_norm: 1.0,
            threshold: MEMORIZATION_THRESHOLD,
        }
    }
}

impl LmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ScopeError::config("learning_rate", "must be positive and finite"));
        }
        if self.batch_size == 0 {
            return Err(ScopeError::config("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(ScopeError::config("epochs", "must be at least 1"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(ScopeError::config("clip_norm", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ScopeError::config("threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct LmTrainReport {
    pub epoch_losses: Vec<f32>,
    /// Memorization similarity per passage after training.
    pub similarities: Vec<f64>,
}

/// Splits a passage at its character midpoint into (prompt, continuation).
pub fn split_passage(passage: &str) -> (String, String) {
    let chars: Vec<char> = passage.chars().collect();
    let mid = chars.len() / 2;
    (chars[..mid].iter().collect(), chars[mid..].iter().collect())
}

/// Greedy-decodes each passage's second half from its first half and
/// returns the normalized Levenshtein similarity per passage.
pub fn memorization(lm: &ToyLm, passages: &[String]) -> Result<Vec<f64>> {
    passages
        .par_iter()
        .map(|p| {
            let (prompt, rest) = split_passage(p);
            if prompt.is_empty() || rest.is_empty() {
                return Err(ScopeError::domain("passages need at least 2 characters"));
            }
            let generated = decode_greedy(lm, &prompt, rest.chars().count(), None)?;
            Ok(levenshtein_similarity(&generated, &rest))
        })
        .collect()
}

pub fn train_toy_lm(corpus: &str, protected: &[String], config: &ToyLmConfig) -> Result<ToyLm> {
    train_toy_lm_with(corpus, protected, config, &LmTrainConfig::default()).map(|(lm, _)| lm)
}

/// Trains on random windows of `corpus` for `epochs` epochs, then fails with
/// a training error unless every protected passage is memorized.
pub fn train_toy_lm_with(
    corpus: &str,
    protected: &[String],
    config: &ToyLmConfig,
    train: &LmTrainConfig,
) -> Result<(ToyLm, LmTrainReport)> {
    train.validate()?;
    config.validate()?;
    if let Some(p) = protected.iter().find(|p| !corpus.contains(p.as_str())) {
        let head: String = p.chars().take(40).collect();
        return Err(ScopeError::domain(format!(
            "protected passage {head:?}... does not appear in the corpus"
        )));
    }
    let vocab = Vocab::from_texts([corpus]);
    let tokens = vocab.encode(corpus)?;
    if tokens.len() < 2 {
        return Err(ScopeError::domain("corpus needs at least 2 characters"));
    }
    let mut lm = ToyLm::init(config, vocab)?;
    let width = (config.context_len + 1).min(tokens.len());
    let per_epoch = tokens.len().div_ceil(train.batch_size * (width - 1)).max(1);
    let total_steps = (per_epoch * train.epochs) as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x70_71_4c_4d);
    let mut opt = Adam::new(&lm.params, train.learning_rate);
    let mut report = LmTrainReport {
        epoch_losses: Vec::new(),
        similarities: Vec::new(),
    };

    for epoch in 1..=train.epochs {
        let mut epoch_loss = 0.0f64;
        for step in 0..per_epoch {
            let progress = ((epoch - 1) * per_epoch + step) as f32 / total_steps;
            opt.lr = 0.5 * train.learning_rate * (1.0 + (std::f32::consts::PI * progress).cos());
            let starts: Vec<usize> = (0..train.batch_size)
                .map(|_| rng.random_range(0..=tokens.len() - width))
                .collect();
            let results: Vec<_> = starts
                .par_iter()
                .map(|&s| lm.loss_and_grad(&tokens[s..s + width]))
                .collect::<Result<_>>()?;
            // Summed in batch order so the result does not depend on scheduling.
            let mut iter = results.into_iter();
            let (mut loss, mut grad) = iter.next().expect("batch_size >= 1");
            for (l, g) in iter {
                loss += l;
                grad.add_assign(&g);
            }
            let inv = 1.0 / train.batch_size as f32;
            grad.scale(inv);
            loss *= inv;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(ScopeError::Training {
                    epoch,
                    reason: format!("non-finite loss or gradient (loss {loss})"),
                });
            }
            let norm = grad.norm();
            if norm > train.clip_norm {
                grad.scale(train.clip_norm / norm);
            }
            opt.step(&mut lm.params, &grad);
            epoch_loss += loss as f64;
        }
        let mean = (epoch_loss / per_epoch as f64) as f32;
        report.epoch_losses.push(mean);
        log::info!("toy LM epoch {epoch}: loss {mean:.4}");
    }
    report.similarities = memorization(&lm, protected)?;
    if report.similarities.iter().all(|s| *s >= train.threshold) {
        return Ok((lm, report));
    }
    Err(ScopeError::Training {
        epoch: train.epochs,
        reason: format!(
            "passages not memorized to similarity {}: per-passage similarity {:?}, final loss {:.4}",
            train.threshold,
            report
                .similarities
                .iter()
                .map(|s| format!("{s:.3}"))
                .collect::<Vec<_>>(),
            report.epoch_losses.last().copied().unwrap_or(f32::NAN)
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyLmConfig {
        ToyLmConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            context_len: 32,
            hook_layer: 0,
            seed: 9,
            ..ToyLmConfig::default()
        }
    }

    #[test]
    fn memorizes_a_short_repeated_passage() {
        let passage = "abba cab dab bad".to_string();
        let corpus = format!("{passage}\n").repeat(40);
        let cfg = LmTrainConfig {
            learning_rate: 1e-2,
            epochs: 120,
            ..LmTrainConfig::default()
        };
        let (lm, report) = train_toy_lm_with(&corpus, &[passage.clone()], &small(), &cfg).unwrap();
        assert!(report.similarities[0] >= 0.8);
        assert_eq!(memorization(&lm, &[passage]).unwrap(), report.similarities);
    }

    #[test]
    fn empty_protected_list_trivially_memorized() {
        let cfg = LmTrainConfig { epochs: 2, ..LmTrainConfig::default() };
        let (_, report) = train_toy_lm_with("some text, some more text.", &[], &small(), &cfg).unwrap();
        assert_eq!(report.epoch_losses.len(), 2);
        assert!(report.similarities.is_empty());
    }

    #[test]
    fn same_seed_same_weights() {
        let corpus = "the cat sat on the mat. ".repeat(10);
        let a = train_toy_lm(&corpus, &[], &small()).unwrap();
        let b = train_toy_lm(&corpus, &[], &small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unmemorizable_target_is_a_training_error() {
        // One epoch of a tiny budget cannot memorize anything.
        let passage = "qwertyuiopasdfghjklzxcvbnm".to_string();
        let corpus = format!("{passage} filler filler filler");
        let cfg = LmTrainConfig {
            epochs: 1,
            learning_rate: 1e-5,
            ..LmTrainConfig::default()
        };
        match train_toy_lm_with(&corpus, &[passage], &small(), &cfg) {
            Err(ScopeError::Training { epoch: 1, reason }) => assert!(reason.contains("similarity")),
            other => panic!("expected training error, got {other:?}"),
        }
    }

    #[test]
    fn passage_missing_from_corpus_rejected() {
        assert!(train_toy_lm("abc", &["xyz".to_string()], &small()).is_err());
    }

    #[test]
    fn split_at_char_midpoint() {
        assert_eq!(split_passage("abcdé"), ("ab".into(), "cdé".into()));
    }
}
