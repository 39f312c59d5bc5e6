//! Decode-time edits of the sparse code.
//!
//! A hook encodes the hidden state `h`, edits the code `z` into `z'`, and
//! returns `decode(z') + (h - decode(z))`. The second term is the SAE's
//! reconstruction error, so an edit that leaves the code unchanged returns
//! `h` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScopeError};
use crate::sae::SaeModel;
use crate::subspace::SubspaceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterventionMode {
    /// Zero subspace activations above `tau`.
    Clamp,
    /// Multiply subspace activations by `alpha`, no threshold.
    Amplify,
    Passthrough,
}

impl std::str::FromStr for InterventionMode {
    type Err = ScopeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clamp" => Ok(InterventionMode::Clamp),
            "amplify" => Ok(InterventionMode::Amplify),
            "passthrough" | "none" => Ok(InterventionMode::Passthrough),
            other => Err(ScopeError::config(
                "mode",
                format!("unknown intervention mode {other:?} (expected clamp, amplify or passthrough)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionConfig {
    pub mode: InterventionMode,
    pub spec: SubspaceSpec,
    pub tau: f64,
    pub alpha: f64,
    /// Also edit prompt positions, not just the positions that produce new tokens.
    pub hook_prompt: bool,
}

impl InterventionConfig {
    pub fn clamp(spec: SubspaceSpec, tau: f64) -> Self {
        InterventionConfig {
            mode: InterventionMode::Clamp,
            spec,
            tau,
            alpha: 1.0,
            hook_prompt: false,
        }
    }

    pub fn amplify(spec: SubspaceSpec, alpha: f64) -> Self {
        let tau = spec.tau;
        InterventionConfig {
            mode: InterventionMode::Amplify,
            spec,
            tau,
            alpha,
            hook_prompt: false,
        }
    }

    pub fn passthrough(spec: SubspaceSpec) -> Self {
        let tau = spec.tau;
        InterventionConfig {
            mode: InterventionMode::Passthrough,
            spec,
            tau,
            alpha: 1.0,
            hook_prompt: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            InterventionMode::Clamp if !(self.tau > 0.0 && self.tau.is_finite()) => {
                Err(ScopeError::config("tau", "clamp threshold must be finite and > 0"))
            }
            InterventionMode::Amplify if !(self.alpha >= 1.0 && self.alpha.is_finite()) => {
                Err(ScopeError::config("alpha", "amplification factor must be finite and >= 1"))
            }
            _ => self.spec.validate(),
        }
    }

    /// Applies the configured edit to a code vector.
    pub fn edit_code(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            InterventionMode::Clamp => clamp_code(z, &self.spec, self.tau),
            InterventionMode::Amplify => amplify_code(z, &self.spec, self.alpha),
            InterventionMode::Passthrough => Ok(z.to_vec()),
        }
    }
}

fn check_dims(z: &[f64], spec: &SubspaceSpec) -> Result<()> {
    if z.len() != spec.k {
        return Err(ScopeError::domain(format!(
            "code has dimension {}, subspace is over k={}",
            z.len(),
            spec.k
        )));
    }
    Ok(())
}

/// `z_i <- 0` for subspace members with `z_i > tau`.
pub fn clamp_code(z: &[f64], spec: &SubspaceSpec, tau: f64) -> Result<Vec<f64>> {
    check_dims(z, spec)?;
    if !(tau > 0.0) {
        return Err(ScopeError::domain("clamp threshold must be > 0"));
    }
    let mut out = z.to_vec();
    for i in spec.indices() {
        if out[i] > tau {
            out[i] = 0.0;
        }
    }
    Ok(out)
}

/// `z_i <- alpha * z_i` for subspace members.
pub fn amplify_code(z: &[f64], spec: &SubspaceSpec, alpha: f64) -> Result<Vec<f64>> {
    check_dims(z, spec)?;
    if !(alpha >= 1.0) {
        return Err(ScopeError::domain("amplification factor must be >= 1"));
    }
    let mut out = z.to_vec();
    for i in spec.indices() {
        out[i] *= alpha;
    }
    Ok(out)
}

/// Encode, edit, decode, and add back the reconstruction error.
pub fn apply_hook(model: &SaeModel, h: &[f64], config: &InterventionConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if config.spec.k != model.k() {
        return Err(ScopeError::domain(format!(
            "subspace is over k={} but the SAE has k={}",
            config.spec.k,
            model.k()
        )));
    }
    if config.mode == InterventionMode::Passthrough {
        if h.len() != model.d() {
            return Err(ScopeError::domain(format!(
                "hidden state has dimension {}, expected {}",
                h.len(),
                model.d()
            )));
        }
        return Ok(h.to_vec());
    }
    let z = model.encode(h)?;
    let edited = config.edit_code(&z)?;
    if edited == z {
        return Ok(h.to_vec());
    }
    let recon = model.decode(&z)?;
    let steered = model.decode(&edited)?;
    Ok(steered
        .iter()
        .zip(h.iter().zip(&recon))
        .map(|(s, (x, r))| s + (x - r))
        .collect())
}

/// Something that rewrites a residual-stream vector during generation.
pub trait ResidualHook: Sync {
    fn apply(&self, h: &[f32]) -> Result<Vec<f32>>;

    /// Whether prompt positions are edited too.
    fn hook_prompt(&self) -> bool {
        false
    }
}

/// An SAE intervention bound to a model, usable as a [`ResidualHook`].
#[derive(Debug, Clone, Copy)]
pub struct SaeHook<'a> {
    pub model: &'a SaeModel,
    pub config: &'a InterventionConfig,
}

impl<'a> SaeHook<'a> {
    pub fn new(model: &'a SaeModel, config: &'a InterventionConfig) -> Result<Self> {
        config.validate()?;
        if config.spec.k != model.k() {
            return Err(ScopeError::domain(format!(
                "subspace is over k={} but the SAE has k={}",
                config.spec.k,
                model.k()
            )));
        }
        Ok(SaeHook { model, config })
    }
}

impl ResidualHook for SaeHook<'_> {
    fn apply(&self, h: &[f32]) -> Result<Vec<f32>> {
        let wide: Vec<f64> = h.iter().map(|&v| v as f64).collect();
        let out = apply_hook(self.model, &wide, self.config)?;
        if out == wide {
            return Ok(h.to_vec());
        }
        Ok(out.into_iter().map(|v| v as f32).collect())
    }

    fn hook_prompt(&self) -> bool {
        self.config.hook_prompt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(k: usize, idx: &[usize]) -> SubspaceSpec {
        SubspaceSpec::from_indices(k, 5.0, idx).unwrap()
    }

    fn model(seed: u64) -> SaeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, k) = (6, 10);
        SaeModel::from_parts(
            Array2::from_shape_simple_fn((k, d), || rng.random_range(-2.0..2.0)),
            Array1::from_shape_simple_fn(k, || rng.random_range(-0.5..0.5)),
            Array2::from_shape_simple_fn((d, k), || rng.random_range(-1.0..1.0)),
            Array1::from_shape_simple_fn(d, || rng.random_range(-0.5..0.5)),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn clamp_examples() {
        let s = spec(3, &[2]);
        assert_eq!(clamp_code(&[1.0, 7.0, 9.0], &s, 5.0).unwrap(), vec![1.0, 7.0, 0.0]);
        assert_eq!(clamp_code(&[1.0, 7.0, 4.0], &s, 5.0).unwrap(), vec![1.0, 7.0, 4.0]);
        assert_eq!(clamp_code(&[1.0, 7.0, 5.0], &s, 5.0).unwrap(), vec![1.0, 7.0, 5.0]);
        assert!(clamp_code(&[1.0], &s, 5.0).is_err());
    }

    #[test]
    fn amplify_examples() {
        let s = spec(2, &[1]);
        assert_eq!(amplify_code(&[3.0, 4.0], &s, 2.0).unwrap(), vec![3.0, 8.0]);
        assert_eq!(amplify_code(&[3.0, 4.0], &s, 1.0).unwrap(), vec![3.0, 4.0]);
        assert!(amplify_code(&[3.0, 4.0], &s, 0.5).is_err());
    }

    #[test]
    fn clamp_and_amplify_match_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let k = rng.random_range(1..20);
            let z: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..12.0)).collect();
            let members: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.4)).collect();
            let tau = rng.random_range(0.1..10.0);
            let s = spec(k, &members);
            let clamped = clamp_code(&z, &s, tau).unwrap();
            let amplified = amplify_code(&z, &s, 1.5).unwrap();
            for i in 0..k {
                let member = members.contains(&i);
                let want_c = if member && z[i] > tau { 0.0 } else { z[i] };
                let want_a = if member { 1.5 * z[i] } else { z[i] };
                assert_eq!(clamped[i], want_c);
                assert_eq!(amplified[i], want_a);
            }
        }
    }

    #[test]
    fn passthrough_and_noop_clamp_return_h_exactly() {
        let m = model(1);
        let h = [0.31, -1.7, 0.002, 4.2, -0.9, 1.1];
        let pass = InterventionConfig::passthrough(spec(10, &[0, 3]));
        assert_eq!(apply_hook(&m, &h, &pass).unwrap(), h.to_vec());

        let z = m.encode(&h).unwrap();
        let quiet: Vec<usize> = (0..10).filter(|&i| z[i] <= 1.0).collect();
        let cfg = InterventionConfig::clamp(spec(10, &quiet), 1.0);
        assert_eq!(apply_hook(&m, &h, &cfg).unwrap(), h.to_vec());

        let empty = InterventionConfig::clamp(SubspaceSpec::empty(10, 1.0), 1.0);
        assert_eq!(apply_hook(&m, &h, &empty).unwrap(), h.to_vec());
    }

    #[test]
    fn single_clamped_dim_subtracts_its_decoder_column() {
        let m = model(4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        while checked < 20 {
            let h: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z = m.encode(&h).unwrap();
            let Some(j) = (0..10).find(|&i| z[i] > 1.0) else { continue };
            let cfg = InterventionConfig::clamp(spec(10, &[j]), 1.0);
            let out = apply_hook(&m, &h, &cfg).unwrap();
            for r in 0..6 {
                let want = h[r] - m.w_dec[[r, j]] * z[j];
                assert!((out[r] - want).abs() < 1e-10);
            }
            checked += 1;
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = InterventionConfig::amplify(spec(3, &[0]), 0.9);
        assert!(matches!(cfg.validate(), Err(ScopeError::Config { field: "alpha", .. })));
        cfg.alpha = 1.2;
        assert!(cfg.validate().is_ok());
        let cfg = InterventionConfig::clamp(spec(3, &[0]), 0.0);
        assert!(cfg.validate().is_err());
        assert!("CLAMP".parse::<InterventionMode>().is_ok());
        assert!("bogus".parse::<InterventionMode>().is_err());
    }

    #[test]
    fn hook_rejects_mismatched_subspace() {
        let m = model(2);
        let cfg = InterventionConfig::clamp(spec(4, &[0]), 1.0);
        assert!(apply_hook(&m, &[0.0; 6], &cfg).is_err());
        assert!(SaeHook::new(&m, &cfg).is_err());
    }

    proptest! {
        #[test]
        fn clamp_idempotent_and_local(z in proptest::collection::vec(-3.0f64..12.0, 12),
                                      members in proptest::collection::btree_set(0usize..12, 0..12),
                                      tau in 0.1f64..10.0) {
            let idx: Vec<usize> = members.iter().copied().collect();
            let s = spec(12, &idx);
            let once = clamp_code(&z, &s, tau).unwrap();
            prop_assert_eq!(&clamp_code(&once, &s, tau).unwrap(), &once);
            for i in 0..12 {
                if !members.contains(&i) || z[i] <= tau {
                    prop_assert_eq!(once[i], z[i]);
                }
            }
        }

        #[test]
        fn amplify_then_clamp_zeroes_active_members(z in proptest::collection::vec(0.0f64..12.0, 8),
                                                    alpha in 1.0f64..4.0) {
            let s = spec(8, &[1, 4, 6]);
            let out = clamp_code(&amplify_code(&z, &s, alpha).unwrap(), &s, 5.0).unwrap();
            for i in [1, 4, 6] {
                if z[i] > 5.0 {
                    prop_assert_eq!(out[i], 0.0);
                }
            }
        }

        #[test]
        fn perturbation_locality(h in proptest::collection::vec(-3.0f64..3.0, 6),
                                 members in proptest::collection::btree_set(0usize..10, 1..10)) {
            let m = model(5);
            let idx: Vec<usize> = members.into_iter().collect();
            let cfg = InterventionConfig::clamp(spec(10, &idx), 1.0);
            let out = apply_hook(&m, &h, &cfg).unwrap();
            let z = m.encode(&h).unwrap();
            let dz: Vec<f64> = cfg.edit_code(&z).unwrap().iter().zip(&z).map(|(a, b)| a - b).collect();
            let delta = m.w_dec.dot(&Array1::from(dz));
            let lhs: f64 = out.iter().zip(&h).map(|(o, x)| (o - x) * (o - x)).sum::<f64>().sqrt();
            let rhs = delta.dot(&delta).sqrt();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
