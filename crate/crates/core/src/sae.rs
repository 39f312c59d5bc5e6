//! JumpReLU sparse autoencoder.
//!
//! `z = JumpReLU(W_enc h + b_e)`, `ĥ = W_dec z + b_d`, trained on
//! `‖ĥ − h‖² + λ‖z‖₁` with minibatch SGD. The threshold `tau` is a fixed
//! hyperparameter; through the jump the activation's derivative is taken as
//! the step `H(x − tau)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::activations::{max_pool, ActivationDataset, ActivationRecord, PooledVector};
use crate::error::{Result, ScopeError};
use crate::io::{check_magic, check_version, write_f64s_as_f32, LeReader};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SCPM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Threshold used when none is given.
pub const DEFAULT_TAU: f64 = 5.0;

/// `x` if `x > tau`, else 0. Strict: `jump_relu(tau, tau) == 0`.
#[inline]
pub fn jump_relu(x: f64, tau: f64) -> f64 {
    if x > tau {
        x
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    /// k × d
    pub w_enc: Array2<f64>,
    pub b_enc: Array1<f64>,
    /// d × k
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
    pub tau: f64,
}

/// Parameter gradients, shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeGradients {
    pub w_enc: Array2<f64>,
    pub b_enc: Array1<f64>,
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Rescale decoder columns to unit norm after every step.
    pub normalize_decoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-3,
            learning_rate: 3e-3,
            epochs: 60,
            batch_size: 32,
            seed: 0,
            normalize_decoder: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(ScopeError::config("lambda", "must be finite and >= 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ScopeError::config("learning_rate", "must be finite and > 0"));
        }
        if self.epochs == 0 {
            return Err(ScopeError::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(ScopeError::config("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Loss trajectory recorded by [`train_with_history`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    /// Mean per-vector loss over the whole dataset after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

impl SaeModel {
    pub fn from_parts(
        w_enc: Array2<f64>,
        b_enc: Array1<f64>,
        w_dec: Array2<f64>,
        b_dec: Array1<f64>,
        tau: f64,
    ) -> Result<Self> {
        let (k, d) = w_enc.dim();
        if k == 0 || d == 0 {
            return Err(ScopeError::domain("SAE needs d >= 1 and k >= 1"));
        }
        if w_dec.dim() != (d, k) || b_enc.len() != k || b_dec.len() != d {
            return Err(ScopeError::domain(format!(
                "inconsistent SAE shapes: W_enc {:?}, b_e {}, W_dec {:?}, b_d {}",
                w_enc.dim(),
                b_enc.len(),
                w_dec.dim(),
                b_dec.len()
            )));
        }
        let model = SaeModel {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
            tau,
        };
        model.validate()?;
        Ok(model)
    }

    /// Uniform initialization in `[-1/√d, 1/√d]` for `W_enc` rows and
    /// `W_dec` columns, zero biases.
    pub fn init(d: usize, k: usize, tau: f64, seed: u64) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(ScopeError::domain("SAE needs d >= 1 and k >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (d as f64).sqrt();
        let w_enc = Array2::from_shape_simple_fn((k, d), || rng.random_range(-bound..=bound));
        let w_dec = Array2::from_shape_simple_fn((d, k), || rng.random_range(-bound..=bound));
        Self::from_parts(w_enc, Array1::zeros(k), w_dec, Array1::zeros(d), tau)
    }

    pub fn d(&self) -> usize {
        self.w_enc.ncols()
    }

    pub fn k(&self) -> usize {
        self.w_enc.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ScopeError::domain(format!("tau must be finite and > 0, got {}", self.tau)));
        }
        let finite = self.w_enc.iter().all(|v| v.is_finite())
            && self.b_enc.iter().all(|v| v.is_finite())
            && self.w_dec.iter().all(|v| v.is_finite())
            && self.b_dec.iter().all(|v| v.is_finite());
        if !finite {
            return Err(ScopeError::domain("SAE parameters must be finite"));
        }
        Ok(())
    }

    fn check_len(&self, got: usize, want: usize, what: &str) -> Result<()> {
        if got != want {
            return Err(ScopeError::domain(format!(
                "{what} has dimension {got}, expected {want}"
            )));
        }
        Ok(())
    }

    /// `W_enc h + b_e`, before thresholding.
    pub fn pre_activations(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_len(h.len(), self.d(), "hidden state")?;
        let pre = self.w_enc.dot(&ArrayView1::from(h)) + &self.b_enc;
        Ok(pre.to_vec())
    }

    pub fn encode(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.pre_activations(h)?;
        for v in &mut z {
            *v = jump_relu(*v, self.tau);
        }
        Ok(z)
    }

    pub fn encode_f32(&self, h: &[f32]) -> Result<Vec<f64>> {
        let h: Vec<f64> = h.iter().map(|&v| v as f64).collect();
        self.encode(&h)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len(), self.k(), "code")?;
        let out = self.w_dec.dot(&ArrayView1::from(z)) + &self.b_dec;
        Ok(out.to_vec())
    }

    /// `‖decode(encode(h)) − h‖² + λ‖encode(h)‖₁`.
    pub fn loss(&self, h: &[f64], lambda: f64) -> Result<f64> {
        let z = self.encode(h)?;
        let recon = self.decode(&z)?;
        let sq: f64 = recon.iter().zip(h).map(|(r, x)| (r - x) * (r - x)).sum();
        let l1: f64 = z.iter().map(|v| v.abs()).sum();
        Ok(sq + lambda * l1)
    }

    /// Loss and analytic gradient for a single input.
    pub fn loss_and_grad(&self, h: &[f64], lambda: f64) -> Result<(f64, SaeGradients)> {
        self.check_len(h.len(), self.d(), "hidden state")?;
        let batch = ArrayView2::from_shape((1, h.len()), h).expect("row view");
        Ok(self.batch_loss_and_grad(batch, lambda))
    }

    /// Mean loss over the rows of `batch` and the gradient of that mean.
    pub(crate) fn batch_loss_and_grad(&self, batch: ArrayView2<f64>, lambda: f64) -> (f64, SaeGradients) {
        let n = batch.nrows() as f64;
        let pre = batch.dot(&self.w_enc.t()) + &self.b_enc;
        let active = pre.mapv(|x| if x > self.tau { 1.0 } else { 0.0 });
        let z = &pre * &active;
        let recon = z.dot(&self.w_dec.t()) + &self.b_dec;
        let err = recon - batch;
        let loss = (err.iter().map(|e| e * e).sum::<f64>() + lambda * z.sum()) / n;

        // z is zero or > tau > 0, so d‖z‖₁/dz = 1 on active units.
        let d_recon = err * (2.0 / n);
        let w_dec = d_recon.t().dot(&z);
        let b_dec = d_recon.sum_axis(Axis(0));
        let d_z = d_recon.dot(&self.w_dec) + lambda / n;
        let d_pre = d_z * &active;
        let w_enc = d_pre.t().dot(&batch);
        let b_enc = d_pre.sum_axis(Axis(0));
        (
            loss,
            SaeGradients {
                w_enc,
                b_enc,
                w_dec,
                b_dec,
            },
        )
    }

    fn sgd_step(&mut self, grads: &SaeGradients, lr: f64) {
        self.w_enc.scaled_add(-lr, &grads.w_enc);
        self.b_enc.scaled_add(-lr, &grads.b_enc);
        self.w_dec.scaled_add(-lr, &grads.w_dec);
        self.b_dec.scaled_add(-lr, &grads.b_dec);
    }

    fn normalize_decoder_columns(&mut self) {
        for mut col in self.w_dec.columns_mut() {
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                col /= norm;
            }
        }
    }

    /// Encodes every token of `record` and max-pools the codes.
    pub fn encode_pooled(&self, record: &ActivationRecord) -> Result<PooledVector> {
        let codes = record
            .vectors()
            .map(|h| self.encode_f32(h))
            .collect::<Result<Vec<_>>>()?;
        Ok(PooledVector {
            label: record.label(),
            values: max_pool(&codes)?,
        })
    }

    /// Pooled code for every record, in record order.
    pub fn pooled_codes(&self, dataset: &ActivationDataset) -> Result<Vec<PooledVector>> {
        self.check_len(dataset.dim, self.d(), "dataset")?;
        dataset
            .records
            .par_iter()
            .map(|r| self.encode_pooled(r))
            .collect()
    }

    /// Mean per-vector loss over every token of `dataset`.
    pub fn mean_loss(&self, dataset: &ActivationDataset, lambda: f64) -> Result<f64> {
        let data = token_matrix(dataset);
        self.check_len(data.ncols(), self.d(), "dataset")?;
        Ok(self.mean_loss_on(data.view(), lambda))
    }

    fn mean_loss_on(&self, data: ArrayView2<f64>, lambda: f64) -> f64 {
        // Fixed-size chunks summed in order keep this deterministic.
        let chunks: Vec<ArrayView2<f64>> = data.axis_chunks_iter(Axis(0), 256).collect();
        let sums: Vec<f64> = chunks
            .into_par_iter()
            .map(|chunk| self.batch_loss_only(chunk, lambda))
            .collect();
        sums.iter().sum::<f64>() / data.nrows() as f64
    }

    fn batch_loss_only(&self, batch: ArrayView2<f64>, lambda: f64) -> f64 {
        let pre = batch.dot(&self.w_enc.t()) + &self.b_enc;
        let z = pre.mapv(|x| jump_relu(x, self.tau));
        let recon = z.dot(&self.w_dec.t()) + &self.b_dec;
        let err = recon - batch;
        err.iter().map(|e| e * e).sum::<f64>() + lambda * z.sum()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        self.validate()?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.d() as u32).to_le_bytes())?;
        w.write_all(&(self.k() as u32).to_le_bytes())?;
        w.write_all(&(self.tau as f32).to_le_bytes())?;
        for arr in [
            self.w_enc.as_standard_layout().as_slice().unwrap(),
            self.b_enc.as_slice().unwrap(),
            self.w_dec.as_standard_layout().as_slice().unwrap(),
            self.b_dec.as_slice().unwrap(),
        ] {
            write_f64s_as_f32(w, arr)?;
        }
        Ok(())
    }

    /// Reads a checkpoint. Parameters come back rounded to binary32.
    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = LeReader::new(r);
        check_magic(&mut r, CHECKPOINT_MAGIC)?;
        check_version(&mut r, CHECKPOINT_VERSION)?;
        let d = r.u32("d")? as usize;
        let k = r.u32("k")? as usize;
        let tau = r.f32("tau")? as f64;
        let mut array = |len: usize, what: &str| -> Result<Vec<f64>> {
            Ok(r.f32_array(len, what)?.into_iter().map(f64::from).collect())
        };
        let w_enc = Array2::from_shape_vec((k, d), array(k * d, "W_enc")?).expect("shape");
        let b_enc = Array1::from(array(k, "b_e")?);
        let w_dec = Array2::from_shape_vec((d, k), array(d * k, "W_dec")?).expect("shape");
        let b_dec = Array1::from(array(d, "b_d")?);
        r.expect_eof()?;
        Self::from_parts(w_enc, b_enc, w_dec, b_dec, tau).map_err(|e| ScopeError::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn token_matrix(dataset: &ActivationDataset) -> Array2<f64> {
    let rows = dataset.total_tokens();
    let flat: Vec<f64> = dataset
        .token_vectors()
        .flat_map(|v| v.iter().map(|&x| x as f64))
        .collect();
    Array2::from_shape_vec((rows, dataset.dim), flat).expect("token matrix shape")
}

/// Trains a fresh `k`-wide SAE on every token vector in `dataset`.
pub fn train(dataset: &ActivationDataset, k: usize, tau: f64, config: &TrainConfig) -> Result<SaeModel> {
    train_with_history(dataset, k, tau, config).map(|(m, _)| m)
}

pub fn train_with_history(
    dataset: &ActivationDataset,
    k: usize,
    tau: f64,
    config: &TrainConfig,
) -> Result<(SaeModel, TrainReport)> {
    config.validate()?;
    if dataset.total_tokens() == 0 {
        return Err(ScopeError::domain("cannot train an SAE on an empty dataset"));
    }
    dataset.validate()?;
    let model = SaeModel::init(dataset.dim, k, tau, config.seed)?;
    train_from(model, dataset, config)
}

/// Continues training `model` in place of a fresh initialization.
pub fn train_from(
    mut model: SaeModel,
    dataset: &ActivationDataset,
    config: &TrainConfig,
) -> Result<(SaeModel, TrainReport)> {
    config.validate()?;
    model.validate()?;
    let data = token_matrix(dataset);
    if data.nrows() == 0 {
        return Err(ScopeError::domain("cannot train an SAE on an empty dataset"));
    }
    if data.ncols() != model.d() {
        return Err(ScopeError::domain(format!(
            "dataset dimension {} does not match SAE input dimension {}",
            data.ncols(),
            model.d()
        )));
    }
    if config.normalize_decoder {
        model.normalize_decoder_columns();
    }
    let initial_loss = model.mean_loss_on(data.view(), config.lambda);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    // Offset so the shuffle stream differs from the init stream for the same seed.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5ae_5ae_5ae);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut batch = Array2::<f64>::zeros((config.batch_size, data.ncols()));
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            let mut rows = batch.slice_mut(ndarray::s![..idx.len(), ..]);
            for (mut row, &i) in rows.rows_mut().into_iter().zip(idx) {
                row.assign(&data.row(i));
            }
            let (_, grads) = model.batch_loss_and_grad(batch.slice(ndarray::s![..idx.len(), ..]), config.lambda);
            model.sgd_step(&grads, config.learning_rate);
            if config.normalize_decoder {
                model.normalize_decoder_columns();
            }
        }
        let loss = model.mean_loss_on(data.view(), config.lambda);
        log::debug!("sae epoch {epoch}: mean loss {loss:.6}");
        if !loss.is_finite() || model.validate().is_err() {
            return Err(ScopeError::Training {
                epoch,
                reason: format!("loss became non-finite ({loss}); lower the learning rate"),
            });
        }
        epoch_losses.push(loss);
    }
    Ok((
        model,
        TrainReport {
            initial_loss,
            epoch_losses,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity_model(tau: f64) -> SaeModel {
        SaeModel::from_parts(
            Array2::eye(2),
            Array1::zeros(2),
            Array2::eye(2),
            Array1::zeros(2),
            tau,
        )
        .unwrap()
    }

    fn random_model(d: usize, k: usize, seed: u64) -> SaeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = SaeModel::init(d, k, 0.5, seed).unwrap();
        m.b_enc.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        m.b_dec.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        m.w_enc.mapv_inplace(|v| v * 3.0);
        m
    }

    fn naive_encode(m: &SaeModel, h: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; m.k()];
        for i in 0..m.k() {
            let mut acc = m.b_enc[i];
            for j in 0..m.d() {
                acc += m.w_enc[[i, j]] * h[j];
            }
            z[i] = if acc > m.tau { acc } else { 0.0 };
        }
        z
    }

    fn naive_decode(m: &SaeModel, z: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; m.d()];
        for j in 0..m.d() {
            let mut acc = m.b_dec[j];
            for i in 0..m.k() {
                acc += m.w_dec[[j, i]] * z[i];
            }
            h[j] = acc;
        }
        h
    }

    #[test]
    fn jump_relu_examples() {
        assert_eq!(jump_relu(6.0, 5.0), 6.0);
        assert_eq!(jump_relu(4.0, 5.0), 0.0);
        assert_eq!(jump_relu(5.0, 5.0), 0.0);
        assert_eq!(jump_relu(-3.0, 5.0), 0.0);
    }

    #[test]
    fn encode_identity_reduces_to_jump_relu() {
        let m = identity_model(5.0);
        assert_eq!(m.encode(&[6.0, 4.0]).unwrap(), vec![6.0, 0.0]);
        assert_eq!(m.encode(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn encode_decode_match_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..10 {
            let m = random_model(7, 13, seed);
            let h: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z = m.encode(&h).unwrap();
            let z_ref = naive_encode(&m, &h);
            for (a, b) in z.iter().zip(&z_ref) {
                assert!((a - b).abs() < 1e-12);
            }
            let zr: Vec<f64> = (0..13).map(|_| rng.random_range(0.0..3.0)).collect();
            let out = m.decode(&zr).unwrap();
            for (a, b) in out.iter().zip(naive_decode(&m, &zr)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decode_zero_and_unit_codes() {
        let m = random_model(4, 6, 1);
        assert_eq!(m.decode(&[0.0; 6]).unwrap(), m.b_dec.to_vec());
        let mut e = vec![0.0; 6];
        e[2] = 1.0;
        let out = m.decode(&e).unwrap();
        for j in 0..4 {
            assert_eq!(out[j], m.w_dec[[j, 2]] + m.b_dec[j]);
        }
    }

    #[test]
    fn dimension_mismatch_is_domain_error() {
        let m = identity_model(1.0);
        assert!(matches!(m.encode(&[1.0]), Err(ScopeError::Domain(_))));
        assert!(matches!(m.decode(&[1.0, 2.0, 3.0]), Err(ScopeError::Domain(_))));
        assert!(m.loss(&[1.0, 2.0, 3.0], 0.0).is_err());
    }

    #[test]
    fn loss_examples() {
        // h below threshold: z = 0, and b_dec = h reconstructs exactly.
        let mut m = identity_model(5.0);
        m.b_dec = array![1.0, 2.0];
        assert_eq!(m.loss(&[1.0, 2.0], 0.7).unwrap(), 0.0);

        let m = random_model(5, 9, 4);
        let h = [0.3, -1.2, 0.8, 2.0, -0.1];
        let z = naive_encode(&m, &h);
        let recon = naive_decode(&m, &z);
        let mut sq = 0.0;
        for j in 0..5 {
            sq += (recon[j] - h[j]) * (recon[j] - h[j]);
        }
        assert!((m.loss(&h, 0.0).unwrap() - sq).abs() < 1e-12);
        let l1: f64 = z.iter().sum();
        assert!(l1 > 0.0);
        let lam = 0.25;
        let diff = m.loss(&h, 2.0 * lam).unwrap() - m.loss(&h, lam).unwrap();
        assert!((diff - lam * l1).abs() < 1e-12);
    }

    #[test]
    fn sparsity_non_increasing_in_tau() {
        let m = random_model(6, 40, 9);
        let h = [1.0, -0.5, 0.2, 0.9, -1.1, 0.4];
        let mut last = usize::MAX;
        for step in 0..40 {
            let mut mm = m.clone();
            mm.tau = 0.05 + 0.1 * step as f64;
            let nnz = mm.encode(&h).unwrap().iter().filter(|&&v| v != 0.0).count();
            assert!(nnz <= last);
            last = nnz;
        }
    }

    #[test]
    fn decode_is_affine() {
        let m = random_model(5, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z1: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z2: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (1.7, -0.4);
        let mix: Vec<f64> = z1.iter().zip(&z2).map(|(x, y)| a * x + b * y).collect();
        let lhs = m.decode(&mix).unwrap();
        let (d1, d2) = (m.decode(&z1).unwrap(), m.decode(&z2).unwrap());
        for j in 0..5 {
            let rhs = a * d1[j] + b * d2[j] - (a + b - 1.0) * m.b_dec[j];
            assert!((lhs[j] - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn train_config_rejects_zero_epochs() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(ScopeError::Config { field: "epochs", .. })));
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn train_rejects_empty_dataset() {
        let ds = ActivationDataset::new(3);
        assert!(matches!(
            train(&ds, 4, 1.0, &TrainConfig::default()),
            Err(ScopeError::Domain(_))
        ));
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut ds = ActivationDataset::new(2);
        ds.push(
            ActivationRecord::new(crate::CorpusLabel::General, 2, vec![1e3, -1e3, 2e3, 5e2]).unwrap(),
        )
        .unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e4,
            epochs: 50,
            batch_size: 1,
            ..TrainConfig::default()
        };
        match train(&ds, 4, 0.1, &cfg) {
            Err(ScopeError::Training { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip_rounds_to_f32() {
        let m = random_model(3, 5, 11);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SCPM");
        assert_eq!(buf.len(), 4 + 4 + 4 + 4 + 4 + 4 * (15 + 5 + 15 + 3));
        let back = SaeModel::read_from(&buf[..]).unwrap();
        assert_eq!(back.d(), 3);
        assert_eq!(back.k(), 5);
        for (a, b) in m.w_enc.iter().zip(back.w_enc.iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);

        buf[4] = 2;
        assert!(matches!(SaeModel::read_from(&buf[..]), Err(ScopeError::Format(_))));
    }
}
