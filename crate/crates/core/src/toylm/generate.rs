//! Greedy decoding with an optional residual hook, hook-layer activation
//! extraction, and the logit lens.

use rayon::prelude::*;

use crate::activations::{ActivationDataset, ActivationRecord, CorpusLabel};
use crate::error::{Result, ScopeError};
use crate::intervene::ResidualHook;
use crate::sae::SaeModel;
use crate::toylm::model::{HookAt, ToyLm};

/// Deterministic argmax decoding of `max_tokens` characters after `prompt`.
///
/// The model is re-run over the whole (sliding) window at every step. When
/// a hook is given it rewrites the hook-layer residual at every generation
/// position, meaning the last prompt position and everything after it, and
/// at prompt positions too if the hook asks for that.
pub fn decode_greedy(
    lm: &ToyLm,
    prompt: &str,
    max_tokens: usize,
    hook: Option<&dyn ResidualHook>,
) -> Result<String> {
    if max_tokens == 0 {
        return Err(ScopeError::domain("max_tokens must be at least 1"));
    }
    let mut tokens = lm.vocab.encode(prompt)?;
    if tokens.is_empty() {
        return Err(ScopeError::domain("prompt is empty"));
    }
    let prompt_len = tokens.len();
    let ctx = lm.config.context_len;
    for _ in 0..max_tokens {
        let start = tokens.len().saturating_sub(ctx);
        let at = hook.map(|hook| HookAt {
            hook,
            from: if hook.hook_prompt() {
                0
            } else {
                (prompt_len - 1).saturating_sub(start)
            },
        });
        let logits = lm.next_logits(&tokens[start..], at)?;
        tokens.push(argmax(logits.as_slice().expect("contiguous")));
    }
    Ok(lm.vocab.decode(&tokens[prompt_len..]))
}

/// First index of the largest value.
fn argmax(values: &[f32]) -> u32 {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best as u32
}

/// Hook-layer residuals for `text`, one vector per character. Text longer
/// than the context is processed in consecutive context-sized chunks.
pub fn text_activations(lm: &ToyLm, text: &str) -> Result<Vec<Vec<f32>>> {
    let tokens = lm.vocab.encode(text)?;
    if tokens.is_empty() {
        return Err(ScopeError::domain("text is empty"));
    }
    let mut out = Vec::with_capacity(tokens.len());
    for chunk in tokens.chunks(lm.config.context_len) {
        let h = lm.hook_residuals(chunk)?;
        out.extend(h.rows().into_iter().map(|r| r.to_vec()));
    }
    Ok(out)
}

/// An activation dataset with one record per labeled text.
pub fn extract_activations(lm: &ToyLm, samples: &[(CorpusLabel, String)]) -> Result<ActivationDataset> {
    let records: Vec<ActivationRecord> = samples
        .par_iter()
        .map(|(label, text)| ActivationRecord::from_vectors(*label, &text_activations(lm, text)?))
        .collect::<Result<_>>()?;
    let mut dataset = ActivationDataset::new(lm.d_model());
    for r in records {
        dataset.push(r)?;
    }
    dataset.metadata.insert("source".into(), "toylm".into());
    dataset
        .metadata
        .insert("hook_layer".into(), lm.config.hook_layer.to_string());
    Ok(dataset)
}

/// Tokens most promoted and most suppressed by a feature's decoder direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitLens {
    /// Largest logits first.
    pub promoted: Vec<(char, f64)>,
    /// Smallest logits first.
    pub suppressed: Vec<(char, f64)>,
}

/// Projects decoder column `feature` through the unembedding. Ties in
/// either list are ordered by token index.
pub fn logit_lens(lm: &ToyLm, model: &SaeModel, feature: usize, top_m: usize) -> Result<LogitLens> {
    if feature >= model.k() {
        return Err(ScopeError::domain(format!(
            "feature {feature} out of range for k={}",
            model.k()
        )));
    }
    if model.d() != lm.d_model() {
        return Err(ScopeError::domain(format!(
            "SAE input dimension {} does not match d_model {}",
            model.d(),
            lm.d_model()
        )));
    }
    let column = model.w_dec.column(feature);
    let logits: Vec<f64> = lm
        .unembedding()
        .columns()
        .into_iter()
        .map(|u| u.iter().zip(column.iter()).map(|(&a, &b)| a as f64 * b).sum())
        .collect();
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let m = top_m.min(logits.len());
    let entry = |i: usize| (lm.vocab.chars()[i], logits[i]);
    let promoted = order[..m].iter().map(|&i| entry(i)).collect();
    order.sort_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(a.cmp(&b)));
    let suppressed = order[..m].iter().map(|&i| entry(i)).collect();
    Ok(LogitLens { promoted, suppressed })
}
