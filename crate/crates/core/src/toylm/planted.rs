//! Synthetic activations with known protected dimensions.
//!
//! Every token vector is `D · z + noise` for a fixed random unit-norm
//! dictionary `D` (d × k) and a sparse ground-truth code `z`. General
//! samples only use background atoms. Protected samples also switch on every
//! planted atom once, at a random token, with a magnitude above `tau`, so
//! the pooled ground-truth code satisfies coverage and exclusivity exactly.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::activations::{max_pool, ActivationDataset, ActivationRecord, CorpusLabel, PooledVector};
use crate::error::{Result, ScopeError};
use crate::sae::{SaeModel, DEFAULT_TAU};
use crate::subspace::SubspaceSpec;

/// Decoder/atom cosine needed for a learned feature to count as finding an atom.
pub const MATCH_COSINE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub d: usize,
    pub k: usize,
    pub planted: Vec<usize>,
    /// Background atoms active per token.
    pub density: usize,
    /// Magnitude range `[lo, hi)` for active atoms.
    pub activation_scale: (f64, f64),
    pub noise_sigma: f64,
    pub tokens_per_sample: usize,
    /// Planted activations are drawn above this threshold.
    pub tau: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            d: 64,
            k: 512,
            planted: (0..16).map(|i| i * 32 + 7).collect(),
            density: 3,
            activation_scale: (10.0, 20.0),
            noise_sigma: 0.01,
            tokens_per_sample: 8,
            tau: DEFAULT_TAU,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(ScopeError::config("d", "must be at least 1"));
        }
        if self.k == 0 {
            return Err(ScopeError::config("k", "must be at least 1"));
        }
        if self.planted.is_empty() || self.planted.iter().all(|&p| p >= self.k) {
            return Err(ScopeError::config("planted", "no planted dimension lies in 0..k"));
        }
        if let Some(p) = self.planted.iter().find(|&&p| p >= self.k) {
            return Err(ScopeError::config("planted", format!("dimension {p} >= k = {}", self.k)));
        }
        let mut sorted = self.planted.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.planted.len() {
            return Err(ScopeError::config("planted", "dimensions must be unique"));
        }
        if self.density == 0 {
            return Err(ScopeError::config("density", "must be at least 1"));
        }
        let (lo, hi) = self.activation_scale;
        if !(lo.is_finite() && hi.is_finite() && lo < hi && lo >= 0.0) {
            return Err(ScopeError::config("activation_scale", "need 0 <= lo < hi"));
        }
        if !(self.tau > 0.0) || lo <= self.tau {
            return Err(ScopeError::config(
                "activation_scale",
                format!("lower bound {lo} must exceed tau = {}", self.tau),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(ScopeError::config("noise_sigma", "must be finite and >= 0"));
        }
        if self.tokens_per_sample == 0 {
            return Err(ScopeError::config("tokens_per_sample", "must be at least 1"));
        }
        Ok(())
    }
}

/// Generated data with its ground truth.
#[derive(Debug, Clone)]
pub struct PlantedData {
    pub dataset: ActivationDataset,
    /// Planted dimensions, sorted.
    pub ground_truth: Vec<usize>,
    /// The generating dictionary, d × k with unit columns.
    pub dictionary: Array2<f64>,
    /// Max-pooled true codes, one per record.
    pub true_pooled: Vec<PooledVector>,
}

pub fn generate_planted(config: &PlantedConfig, n_cr: usize, n_gen: usize) -> Result<PlantedData> {
    config.validate()?;
    if n_cr == 0 || n_gen == 0 {
        return Err(ScopeError::domain("need at least one sample of each label"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (d, k, t) = (config.d, config.k, config.tokens_per_sample);

    let mut dictionary = Array2::<f64>::zeros((d, k));
    for mut col in dictionary.columns_mut() {
        col.mapv_inplace(|_| StandardNormal.sample(&mut rng));
        let norm = col.dot(&col).sqrt();
        col /= norm;
    }

    let mut is_planted = vec![false; k];
    for &p in &config.planted {
        is_planted[p] = true;
    }
    let background: Vec<usize> = (0..k).filter(|&i| !is_planted[i]).collect();
    let noise = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
    let (lo, hi) = config.activation_scale;

    let mut dataset = ActivationDataset::new(d);
    let mut true_pooled = Vec::with_capacity(n_cr + n_gen);
    let labels = std::iter::repeat_n(CorpusLabel::Copyrighted, n_cr)
        .chain(std::iter::repeat_n(CorpusLabel::General, n_gen));
    for label in labels {
        let mut codes = vec![vec![0.0f64; k]; t];
        for code in codes.iter_mut() {
            let active = config.density.min(background.len());
            for j in sample(&mut rng, background.len(), active) {
                code[background[j]] = rng.random_range(lo..hi);
            }
        }
        if label == CorpusLabel::Copyrighted {
            for &p in &config.planted {
                let at = rng.random_range(0..t);
                codes[at][p] = rng.random_range(lo..hi);
            }
        }
        let mut values = Vec::with_capacity(t * d);
        for code in &codes {
            let h = dictionary.dot(&Array1::from(code.clone()));
            values.extend(h.iter().map(|&v| {
                let eps = if config.noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                (v + eps) as f32
            }));
        }
        dataset.push(ActivationRecord::new(label, d, values)?)?;
        true_pooled.push(PooledVector {
            label,
            values: max_pool(&codes)?,
        });
    }
    dataset
        .metadata
        .insert("generator".into(), "planted".into());
    dataset.metadata.insert("seed".into(), config.seed.to_string());
    dataset.metadata.insert(
        "planted".into(),
        config
            .planted
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    let mut ground_truth = config.planted.clone();
    ground_truth.sort_unstable();
    Ok(PlantedData {
        dataset,
        ground_truth,
        dictionary,
        true_pooled,
    })
}

/// Stacks unit atoms (each of length `d`) as the columns of a d × k dictionary.
pub fn dictionary_from_atoms(atoms: &[Vec<f64>], d: usize) -> Result<Array2<f64>> {
    if let Some(a) = atoms.iter().find(|a| a.len() != d) {
        return Err(ScopeError::domain(format!("atom of length {}, expected {d}", a.len())));
    }
    Ok(Array2::from_shape_fn((d, atoms.len()), |(i, j)| atoms[j][i]))
}

/// For each learned feature, the dictionary atom its decoder column points
/// at most closely, with that cosine.
pub fn match_features(model: &SaeModel, dictionary: &Array2<f64>) -> Result<Vec<(usize, f64)>> {
    if dictionary.nrows() != model.d() {
        return Err(ScopeError::domain(format!(
            "dictionary has {} rows, SAE input dimension is {}",
            dictionary.nrows(),
            model.d()
        )));
    }
    let atom_norms: Vec<f64> = dictionary.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    Ok(model
        .w_dec
        .columns()
        .into_iter()
        .map(|col| {
            let norm = col.dot(&col).sqrt();
            if norm == 0.0 {
                return (0, 0.0);
            }
            let sims = dictionary.t().dot(&col);
            sims.iter()
                .enumerate()
                .map(|(a, s)| (a, s / (norm * atom_norms[a].max(f64::MIN_POSITIVE))))
                .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        })
        .collect())
}

/// Fraction of planted atoms matched (cosine >= [`MATCH_COSINE`]) by at
/// least one selected feature.
pub fn planted_recall(
    model: &SaeModel,
    spec: &SubspaceSpec,
    dictionary: &Array2<f64>,
    ground_truth: &[usize],
) -> Result<f64> {
    if ground_truth.is_empty() {
        return Err(ScopeError::domain("ground truth is empty"));
    }
    let matches = match_features(model, dictionary)?;
    let found: std::collections::BTreeSet<usize> = spec
        .indices()
        .filter_map(|j| {
            let (atom, cos) = matches[j];
            (cos >= MATCH_COSINE).then_some(atom)
        })
        .collect();
    let hits = ground_truth.iter().filter(|p| found.contains(p)).count();
    Ok(hits as f64 / ground_truth.len() as f64)
}

/// Recall of `ground_truth` among the selected indices themselves, for
/// selections made directly in ground-truth code space.
pub fn index_recall(spec: &SubspaceSpec, ground_truth: &[usize]) -> f64 {
    let chosen: std::collections::BTreeSet<usize> = spec.indices().collect();
    ground_truth.iter().filter(|p| chosen.contains(p)).count() as f64 / ground_truth.len().max(1) as f64
}
