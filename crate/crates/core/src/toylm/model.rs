//! A small pre-norm decoder-only transformer over characters, with
//! hand-written backpropagation.
//!
//! Each block is `h += attn(ln1(h)); h += mlp(ln2(h))`, with causal
//! multi-head attention, a ReLU MLP of width `4 · d_model`, learned position
//! embeddings, and an unembedding with no bias.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, ScopeError};
use crate::intervene::ResidualHook;
use crate::io::{check_magic, check_version, write_f32s, LeReader};
use crate::toylm::vocab::Vocab;

pub const LM_CHECKPOINT_MAGIC: &[u8; 4] = b"SCPL";
pub const LM_CHECKPOINT_VERSION: u32 = 1;

const LN_EPS: f32 = 1e-5;
const INIT_STD: f32 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyLmConfig {
    /// Character set size. 0 means "take it from the training text".
    pub vocab: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub context_len: usize,
    /// Block whose output residual is exposed to hooks and extraction.
    pub hook_layer: usize,
    pub seed: u64,
}

impl Default for ToyLmConfig {
    fn default() -> Self {
        ToyLmConfig {
            vocab: 0,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            context_len: 128,
            hook_layer: 1,
            seed: 0,
        }
    }
}

impl ToyLmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 {
            return Err(ScopeError::config("d_model", "must be at least 1"));
        }
        if self.n_layers == 0 {
            return Err(ScopeError::config("n_layers", "must be at least 1"));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(ScopeError::config(
                "n_heads",
                format!("must divide d_model = {}", self.d_model),
            ));
        }
        if self.context_len < 2 {
            return Err(ScopeError::config("context_len", "must be at least 2"));
        }
        if self.hook_layer >= self.n_layers {
            return Err(ScopeError::config(
                "hook_layer",
                format!("must be below n_layers = {}", self.n_layers),
            ));
        }
        Ok(())
    }

    pub fn d_ff(&self) -> usize {
        4 * self.d_model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    ln1_g: Array1<f32>,
    ln1_b: Array1<f32>,
    w_q: Array2<f32>,
    w_k: Array2<f32>,
    w_v: Array2<f32>,
    w_o: Array2<f32>,
    ln2_g: Array1<f32>,
    ln2_b: Array1<f32>,
    w_1: Array2<f32>,
    b_1: Array1<f32>,
    w_2: Array2<f32>,
    b_2: Array1<f32>,
}

/// All trainable tensors. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Params {
    tok: Array2<f32>,
    pos: Array2<f32>,
    blocks: Vec<Block>,
    lnf_g: Array1<f32>,
    lnf_b: Array1<f32>,
    /// d_model × vocab.
    unembed: Array2<f32>,
}

impl Params {
    fn zeros(cfg: &ToyLmConfig, vocab: usize) -> Self {
        let (d, f) = (cfg.d_model, cfg.d_ff());
        let z1 = |n| Array1::zeros(n);
        let z2 = |r, c| Array2::zeros((r, c));
        Params {
            tok: z2(vocab, d),
            pos: z2(cfg.context_len, d),
            blocks: (0..cfg.n_layers)
                .map(|_| Block {
                    ln1_g: z1(d),
                    ln1_b: z1(d),
                    w_q: z2(d, d),
                    w_k: z2(d, d),
                    w_v: z2(d, d),
                    w_o: z2(d, d),
                    ln2_g: z1(d),
                    ln2_b: z1(d),
                    w_1: z2(d, f),
                    b_1: z1(f),
                    w_2: z2(f, d),
                    b_2: z1(d),
                })
                .collect(),
            lnf_g: z1(d),
            lnf_b: z1(d),
            unembed: z2(d, vocab),
        }
    }

    fn init(cfg: &ToyLmConfig, vocab: usize) -> Self {
        let mut p = Self::zeros(cfg, vocab);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0f32, INIT_STD).expect("valid std");
        let resid = Normal::new(0.0f32, INIT_STD / (2.0 * cfg.n_layers as f32).sqrt()).expect("valid std");
        let mut fill = |a: &mut Array2<f32>, dist: &Normal<f32>| a.mapv_inplace(|_| dist.sample(&mut rng));
        fill(&mut p.tok, &normal);
        fill(&mut p.pos, &normal);
        for b in &mut p.blocks {
            b.ln1_g.fill(1.0);
            b.ln2_g.fill(1.0);
            fill(&mut b.w_q, &normal);
            fill(&mut b.w_k, &normal);
            fill(&mut b.w_v, &normal);
            fill(&mut b.w_o, &resid);
            fill(&mut b.w_1, &normal);
            fill(&mut b.w_2, &resid);
        }
        p.lnf_g.fill(1.0);
        fill(&mut p.unembed, &normal);
        p
    }

    /// Every tensor as a flat slice, in checkpoint order.
    fn tensors(&self) -> Vec<&[f32]> {
        let mut out = vec![self.tok.as_slice().unwrap(), self.pos.as_slice().unwrap()];
        for b in &self.blocks {
            out.extend([
                b.ln1_g.as_slice().unwrap(),
                b.ln1_b.as_slice().unwrap(),
                b.w_q.as_slice().unwrap(),
                b.w_k.as_slice().unwrap(),
                b.w_v.as_slice().unwrap(),
                b.w_o.as_slice().unwrap(),
                b.ln2_g.as_slice().unwrap(),
                b.ln2_b.as_slice().unwrap(),
                b.w_1.as_slice().unwrap(),
                b.b_1.as_slice().unwrap(),
                b.w_2.as_slice().unwrap(),
                b.b_2.as_slice().unwrap(),
            ]);
        }
        out.extend([
            self.lnf_g.as_slice().unwrap(),
            self.lnf_b.as_slice().unwrap(),
            self.unembed.as_slice().unwrap(),
        ]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out = vec![self.tok.as_slice_mut().unwrap(), self.pos.as_slice_mut().unwrap()];
        for b in &mut self.blocks {
            out.extend([
                b.ln1_g.as_slice_mut().unwrap(),
                b.ln1_b.as_slice_mut().unwrap(),
                b.w_q.as_slice_mut().unwrap(),
                b.w_k.as_slice_mut().unwrap(),
                b.w_v.as_slice_mut().unwrap(),
                b.w_o.as_slice_mut().unwrap(),
                b.ln2_g.as_slice_mut().unwrap(),
                b.ln2_b.as_slice_mut().unwrap(),
                b.w_1.as_slice_mut().unwrap(),
                b.b_1.as_slice_mut().unwrap(),
                b.w_2.as_slice_mut().unwrap(),
                b.b_2.as_slice_mut().unwrap(),
            ]);
        }
        out.extend([
            self.lnf_g.as_slice_mut().unwrap(),
            self.lnf_b.as_slice_mut().unwrap(),
            self.unembed.as_slice_mut().unwrap(),
        ]);
        out
    }

    pub(crate) fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub(crate) fn scale(&mut self, factor: f32) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub(crate) fn norm(&self) -> f32 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| (*x as f64) * (*x as f64))
            .sum::<f64>()
            .sqrt() as f32
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone)]
pub(crate) struct Adam {
    m: Params,
    v: Params,
    t: i32,
    pub(crate) lr: f32,
}

impl Adam {
    const B1: f32 = 0.9;
    const B2: f32 = 0.999;
    const EPS: f32 = 1e-8;

    pub(crate) fn new(like: &Params, lr: f32) -> Self {
        let mut m = like.clone();
        m.scale(0.0);
        Adam {
            v: m.clone(),
            m,
            t: 0,
            lr,
        }
    }

    pub(crate) fn step(&mut self, params: &mut Params, grads: &Params) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let lr = self.lr;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

struct LnCache {
    xhat: Array2<f32>,
    rstd: Array1<f32>,
}

fn layer_norm(x: &Array2<f32>, g: &Array1<f32>, b: &Array1<f32>) -> (Array2<f32>, LnCache) {
    let d = x.ncols() as f32;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f32>() / d;
        *r = 1.0 / (var + LN_EPS).sqrt();
        row *= *r;
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, rstd })
}

fn layer_norm_row(x: ArrayView1<f32>, g: &Array1<f32>, b: &Array1<f32>) -> Array1<f32> {
    let d = x.len() as f32;
    let mean = x.sum() / d;
    let centered = x.mapv(|v| v - mean);
    let var = centered.iter().map(|v| v * v).sum::<f32>() / d;
    centered * (1.0 / (var + LN_EPS).sqrt()) * g + b
}

/// Returns dx and accumulates dg, db.
fn layer_norm_back(
    dy: &Array2<f32>,
    cache: &LnCache,
    g: &Array1<f32>,
    dg: &mut Array1<f32>,
    db: &mut Array1<f32>,
) -> Array2<f32> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f32;
    let mut dx = dy * g;
    for ((mut row, xh), &r) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.rstd) {
        let mean = row.sum() / d;
        let mean_x = row.dot(&xh) / d;
        row.zip_mut_with(&xh, |v, &x| *v = r * (*v - mean - x * mean_x));
    }
    dx
}

fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

struct BlockCache {
    a: Array2<f32>,
    ln1: LnCache,
    q: Array2<f32>,
    k: Array2<f32>,
    v: Array2<f32>,
    probs: Vec<Array2<f32>>,
    o: Array2<f32>,
    m: Array2<f32>,
    ln2: LnCache,
    u: Array2<f32>,
    r: Array2<f32>,
}

fn block_forward(b: &Block, h: &Array2<f32>, n_heads: usize) -> (Array2<f32>, BlockCache) {
    let (t, d) = h.dim();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let (a, ln1) = layer_norm(h, &b.ln1_g, &b.ln1_b);
    let q = a.dot(&b.w_q);
    let k = a.dot(&b.w_k);
    let v = a.dot(&b.w_v);
    let mut o = Array2::zeros((t, d));
    let mut probs = Vec::with_capacity(n_heads);
    for head in 0..n_heads {
        let cols = s![.., head * dh..(head + 1) * dh];
        let mut p = q.slice(cols).dot(&k.slice(cols).t());
        for (i, mut row) in p.rows_mut().into_iter().enumerate() {
            let row = row.as_slice_mut().unwrap();
            row[..=i].iter_mut().for_each(|x| *x *= scale);
            softmax_in_place(&mut row[..=i]);
            row[i + 1..].fill(0.0);
        }
        o.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    let h_mid = h + &o.dot(&b.w_o);
    let (m, ln2) = layer_norm(&h_mid, &b.ln2_g, &b.ln2_b);
    let u = m.dot(&b.w_1) + &b.b_1;
    let r = u.mapv(|x| x.max(0.0));
    let out = h_mid + r.dot(&b.w_2) + &b.b_2;
    let cache = BlockCache {
        a,
        ln1,
        q,
        k,
        v,
        probs,
        o,
        m,
        ln2,
        u,
        r,
    };
    (out, cache)
}

/// Backpropagates through one block, accumulating into `g`. Returns the
/// gradient with respect to the block input.
fn block_backward(b: &Block, c: &BlockCache, dout: &Array2<f32>, n_heads: usize, g: &mut Block) -> Array2<f32> {
    let d = dout.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f32).sqrt();

    g.b_2 += &dout.sum_axis(Axis(0));
    general_mat_mul(1.0, &c.r.t(), dout, 1.0, &mut g.w_2);
    let mut du = dout.dot(&b.w_2.t());
    du.zip_mut_with(&c.u, |v, &u| {
        if u <= 0.0 {
            *v = 0.0
        }
    });
    general_mat_mul(1.0, &c.m.t(), &du, 1.0, &mut g.w_1);
    g.b_1 += &du.sum_axis(Axis(0));
    let dm = du.dot(&b.w_1.t());
    let dh_mid = dout + &layer_norm_back(&dm, &c.ln2, &b.ln2_g, &mut g.ln2_g, &mut g.ln2_b);

    general_mat_mul(1.0, &c.o.t(), &dh_mid, 1.0, &mut g.w_o);
    let d_o = dh_mid.dot(&b.w_o.t());
    let mut dq = Array2::zeros(c.q.dim());
    let mut dk = Array2::zeros(c.k.dim());
    let mut dv = Array2::zeros(c.v.dim());
    for (head, p) in c.probs.iter().enumerate() {
        let cols = s![.., head * dh..(head + 1) * dh];
        let d_oh = d_o.slice(cols);
        dv.slice_mut(cols).assign(&p.t().dot(&d_oh));
        let mut ds = d_oh.dot(&c.v.slice(cols).t());
        for (mut ds_row, p_row) in ds.rows_mut().into_iter().zip(p.rows()) {
            let dot = ds_row.dot(&p_row);
            ds_row.zip_mut_with(&p_row, |v, &pv| *v = pv * (*v - dot) * scale);
        }
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }
    general_mat_mul(1.0, &c.a.t(), &dq, 1.0, &mut g.w_q);
    general_mat_mul(1.0, &c.a.t(), &dk, 1.0, &mut g.w_k);
    general_mat_mul(1.0, &c.a.t(), &dv, 1.0, &mut g.w_v);
    let da = dq.dot(&b.w_q.t()) + dk.dot(&b.w_k.t()) + dv.dot(&b.w_v.t());
    dh_mid + layer_norm_back(&da, &c.ln1, &b.ln1_g, &mut g.ln1_g, &mut g.ln1_b)
}

/// A trained character-level language model.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm {
    pub(crate) config: ToyLmConfig,
    pub(crate) vocab: Vocab,
    pub(crate) params: Params,
}

/// Where a hook is applied during a forward pass.
#[derive(Clone, Copy)]
pub(crate) struct HookAt<'a> {
    pub hook: &'a dyn ResidualHook,
    /// First position (within the window) whose residual is rewritten.
    pub from: usize,
}

impl ToyLm {
    /// A freshly initialized model over `vocab`.
    pub fn init(config: &ToyLmConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(ScopeError::config("vocab", "vocabulary is empty"));
        }
        if config.vocab != 0 && config.vocab != vocab.len() {
            return Err(ScopeError::config(
                "vocab",
                format!("config says {} characters, text has {}", config.vocab, vocab.len()),
            ));
        }
        let config = ToyLmConfig {
            vocab: vocab.len(),
            ..config.clone()
        };
        let params = Params::init(&config, vocab.len());
        Ok(ToyLm { config, vocab, params })
    }

    pub fn config(&self) -> &ToyLmConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    /// The unembedding matrix, d_model × vocab.
    pub fn unembedding(&self) -> &Array2<f32> {
        &self.params.unembed
    }

    fn embed(&self, tokens: &[u32]) -> Array2<f32> {
        let mut h = self.params.pos.slice(s![..tokens.len(), ..]).to_owned();
        for (mut row, &t) in h.rows_mut().into_iter().zip(tokens) {
            row += &self.params.tok.row(t as usize);
        }
        h
    }

    fn check_window(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() || tokens.len() > self.config.context_len {
            return Err(ScopeError::domain(format!(
                "window of {} tokens, need 1..={}",
                tokens.len(),
                self.config.context_len
            )));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.vocab.len()) {
            return Err(ScopeError::domain(format!("token id {t} outside the vocabulary")));
        }
        Ok(())
    }

    /// Runs blocks `0..=last_layer` over a window, applying `hook` after the
    /// hook layer if given.
    pub(crate) fn residuals(&self, tokens: &[u32], hook: Option<HookAt<'_>>, last_layer: usize) -> Result<Array2<f32>> {
        self.check_window(tokens)?;
        let mut h = self.embed(tokens);
        for (l, block) in self.params.blocks.iter().enumerate().take(last_layer + 1) {
            h = block_forward(block, &h, self.config.n_heads).0;
            if l == self.config.hook_layer {
                if let Some(HookAt { hook, from }) = hook {
                    for mut row in h.rows_mut().into_iter().skip(from) {
                        let edited = hook.apply(row.as_slice().unwrap())?;
                        if edited.len() != row.len() {
                            return Err(ScopeError::domain(format!(
                                "hook returned {} values for a {}-wide residual",
                                edited.len(),
                                row.len()
                            )));
                        }
                        row.assign(&ArrayView1::from(&edited));
                    }
                }
            }
        }
        Ok(h)
    }

    /// Output residuals of the hook layer, one row per position.
    pub fn hook_residuals(&self, tokens: &[u32]) -> Result<Array2<f32>> {
        self.residuals(tokens, None, self.config.hook_layer)
    }

    /// Next-token logits after the last position of `tokens`.
    pub(crate) fn next_logits(&self, tokens: &[u32], hook: Option<HookAt<'_>>) -> Result<Array1<f32>> {
        let h = self.residuals(tokens, hook, self.config.n_layers - 1)?;
        let last = layer_norm_row(h.row(h.nrows() - 1), &self.params.lnf_g, &self.params.lnf_b);
        Ok(last.dot(&self.params.unembed))
    }

    /// Mean next-character cross-entropy over a window of `T + 1` tokens
    /// and its gradient.
    pub(crate) fn loss_and_grad(&self, window: &[u32]) -> Result<(f32, Params)> {
        if window.len() < 2 {
            return Err(ScopeError::domain("a training window needs at least 2 tokens"));
        }
        let (inputs, targets) = (&window[..window.len() - 1], &window[1..]);
        self.check_window(inputs)?;
        let p = &self.params;
        let n_heads = self.config.n_heads;
        let t = inputs.len();

        let mut h = self.embed(inputs);
        let mut caches = Vec::with_capacity(p.blocks.len());
        for block in &p.blocks {
            let (next, cache) = block_forward(block, &h, n_heads);
            caches.push(cache);
            h = next;
        }
        let (f, lnf) = layer_norm(&h, &p.lnf_g, &p.lnf_b);
        let mut dlogits = f.dot(&p.unembed);
        let mut loss = 0.0f64;
        for (mut row, &target) in dlogits.rows_mut().into_iter().zip(targets) {
            let row = row.as_slice_mut().unwrap();
            let target = target as usize;
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f32>().ln();
            loss += (lse - row[target]) as f64;
            softmax_in_place(row);
            row[target] -= 1.0;
            row.iter_mut().for_each(|v| *v /= t as f32);
        }

        let mut g = Params::zeros(&self.config, self.vocab.len());
        general_mat_mul(1.0, &f.t(), &dlogits, 0.0, &mut g.unembed);
        let df = dlogits.dot(&p.unembed.t());
        let mut dh = layer_norm_back(&df, &lnf, &p.lnf_g, &mut g.lnf_g, &mut g.lnf_b);
        for ((block, cache), gb) in p.blocks.iter().zip(&caches).zip(&mut g.blocks).rev() {
            dh = block_backward(block, cache, &dh, n_heads, gb);
        }
        for (i, &tok) in inputs.iter().enumerate() {
            let row = dh.row(i);
            let mut tok_row = g.tok.row_mut(tok as usize);
            tok_row += &row;
            let mut pos_row = g.pos.row_mut(i);
            pos_row += &row;
        }
        Ok(((loss / t as f64) as f32, g))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let c = &self.config;
        w.write_all(LM_CHECKPOINT_MAGIC)?;
        w.write_all(&LM_CHECKPOINT_VERSION.to_le_bytes())?;
        for v in [c.vocab, c.d_model, c.n_layers, c.n_heads, c.context_len, c.hook_layer, c.d_ff()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&c.seed.to_le_bytes())?;
        for &ch in self.vocab.chars() {
            w.write_all(&(ch as u32).to_le_bytes())?;
        }
        for t in self.params.tensors() {
            write_f32s(w, t.iter().copied())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = LeReader::new(r);
        check_magic(&mut r, LM_CHECKPOINT_MAGIC)?;
        check_version(&mut r, LM_CHECKPOINT_VERSION)?;
        let mut field = |what: &str| -> Result<usize> { Ok(r.u32(what)? as usize) };
        let config = ToyLmConfig {
            vocab: field("vocab")?,
            d_model: field("d_model")?,
            n_layers: field("n_layers")?,
            n_heads: field("n_heads")?,
            context_len: field("context_len")?,
            hook_layer: field("hook_layer")?,
            seed: 0,
        };
        let d_ff = r.u32("d_ff")? as usize;
        let seed = r.u64("seed")?;
        let config = ToyLmConfig { seed, ..config };
        config.validate().map_err(|e| ScopeError::Format(e.to_string()))?;
        if d_ff != config.d_ff() || config.vocab == 0 {
            return Err(ScopeError::Format(format!(
                "header has d_ff={d_ff} and vocab={}; expected d_ff={} and a non-empty vocabulary",
                config.vocab,
                config.d_ff()
            )));
        }
        let mut chars = Vec::with_capacity(config.vocab);
        for _ in 0..config.vocab {
            let offset = r.offset();
            let code = r.u32("vocabulary")?;
            chars.push(char::from_u32(code).ok_or(ScopeError::Corruption {
                offset,
                reason: format!("invalid code point {code:#x}"),
            })?);
        }
        let vocab = Vocab::from_chars(chars).map_err(|e| ScopeError::Format(e.to_string()))?;
        if vocab.chars().len() != config.vocab {
            return Err(ScopeError::Format("vocabulary size mismatch".into()));
        }
        let mut params = Params::zeros(&config, config.vocab);
        for t in params.tensors_mut() {
            let values = r.f32_array(t.len(), "parameters")?;
            t.copy_from_slice(&values);
        }
        r.expect_eof()?;
        Ok(ToyLm { config, vocab, params })
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

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ToyLm {
        let cfg = ToyLmConfig {
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            context_len: 12,
            hook_layer: 0,
            seed,
            ..ToyLmConfig::default()
        };
        ToyLm::init(&cfg, Vocab::from_texts(["abcdef "])).unwrap()
    }

    #[test]
    fn config_validation() {
        let ok = ToyLmConfig::default();
        assert!(ok.validate().is_ok());
        let bad = |c: ToyLmConfig, field: &str| match c.validate() {
            Err(ScopeError::Config { field: f, .. }) => assert_eq!(f, field),
            other => panic!("expected config error for {field}, got {other:?}"),
        };
        bad(ToyLmConfig { hook_layer: 2, ..ok.clone() }, "hook_layer");
        bad(ToyLmConfig { n_heads: 3, ..ok.clone() }, "n_heads");
        bad(ToyLmConfig { context_len: 1, ..ok.clone() }, "context_len");
        let v = Vocab::from_texts(["ab"]);
        assert!(ToyLm::init(&ToyLmConfig { vocab: 5, ..ok }, v).is_err());
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = Array2::from_shape_fn((3, 6), |(i, j)| (i * 7 + j * j) as f32);
        let (y, _) = layer_norm(&x, &Array1::ones(6), &Array1::zeros(6));
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-4);
            assert!((row.dot(&row) / 6.0 - 1.0).abs() < 1e-3);
        }
        let single = layer_norm_row(x.row(1), &Array1::ones(6), &Array1::zeros(6));
        assert!(single.iter().zip(y.row(1)).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn attention_is_causal() {
        let lm = tiny(1);
        let a = lm.hook_residuals(&[0, 1, 2, 3]).unwrap();
        let b = lm.hook_residuals(&[0, 1, 5, 5]).unwrap();
        assert_eq!(a.row(0), b.row(0));
        assert_eq!(a.row(1), b.row(1));
        assert_ne!(a.row(2), b.row(2));
    }

    #[test]
    fn next_logits_match_training_forward() {
        // The loss at the last position computed two ways.
        let lm = tiny(2);
        let window = [0u32, 3, 1, 4, 2];
        let logits = lm.next_logits(&window[..4], None).unwrap();
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f32>().ln();
        let last_loss = lse - logits[2];
        let (l4, _) = lm.loss_and_grad(&window).unwrap();
        let (l3, _) = lm.loss_and_grad(&window[..4]).unwrap();
        assert!((4.0 * l4 - 3.0 * l3 - last_loss).abs() < 1e-4);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut lm = tiny(3);
        // Unit-scale residuals, so a finite-difference step is small next
        // to the LayerNorm scale, and larger weights elsewhere so every
        // path carries a measurable gradient.
        for (i, t) in lm.params.tensors_mut().into_iter().enumerate() {
            let factor = if i < 2 { 50.0 } else { 5.0 };
            t.iter_mut().for_each(|v| *v *= factor);
        }
        let window = [0u32, 1, 2, 3, 4, 5, 6, 0, 2];
        let (_, grad) = lm.loss_and_grad(&window).unwrap();
        let analytic: Vec<Vec<f32>> = grad.tensors().iter().map(|t| t.to_vec()).collect();
        let n_tensors = analytic.len();
        let h = 3e-3f32;
        let mut checked = 0;
        for ti in 0..n_tensors {
            let len = analytic[ti].len();
            for &j in &[0, len / 3, len - 1] {
                let orig = lm.params.tensors()[ti][j];
                lm.params.tensors_mut()[ti][j] = orig + h;
                let (lp, _) = lm.loss_and_grad(&window).unwrap();
                lm.params.tensors_mut()[ti][j] = orig - h;
                let (lm_, _) = lm.loss_and_grad(&window).unwrap();
                lm.params.tensors_mut()[ti][j] = orig;
                let fd = (lp - lm_) / (2.0 * h);
                let an = analytic[ti][j];
                assert!(
                    (fd - an).abs() <= 2e-2 * an.abs().max(fd.abs()) + 2e-3,
                    "tensor {ti} index {j}: analytic {an} vs numeric {fd}"
                );
                checked += 1;
            }
        }
        assert_eq!(checked, 3 * n_tensors);
    }

    #[test]
    fn adam_decreases_loss() {
        let mut lm = tiny(4);
        let window = [0u32, 1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5];
        let (first, _) = lm.loss_and_grad(&window).unwrap();
        let mut opt = Adam::new(&lm.params, 1e-2);
        for _ in 0..100 {
            let (_, g) = lm.loss_and_grad(&window).unwrap();
            opt.step(&mut lm.params, &g);
        }
        let (last, _) = lm.loss_and_grad(&window).unwrap();
        assert!(last < 0.2 * first, "{first} -> {last}");
    }

    #[test]
    fn window_limits() {
        let lm = tiny(5);
        assert!(lm.hook_residuals(&[]).is_err());
        assert!(lm.hook_residuals(&[0; 13]).is_err());
        assert!(lm.hook_residuals(&[7]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let lm = tiny(6);
        let mut buf = Vec::new();
        lm.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SCPL");
        assert_eq!(ToyLm::read_from(&buf[..]).unwrap(), lm);
        let mut again = Vec::new();
        lm.write_to(&mut again).unwrap();
        assert_eq!(buf, again);

        let mut truncated = buf.clone();
        truncated.truncate(buf.len() - 3);
        assert!(matches!(ToyLm::read_from(&truncated[..]), Err(ScopeError::Corruption { .. })));
        let mut versioned = buf.clone();
        versioned[4] = 9;
        assert!(matches!(ToyLm::read_from(&versioned[..]), Err(ScopeError::Format(_))));
        let mut bad_hook = buf;
        bad_hook[28] = 7;
        assert!(matches!(ToyLm::read_from(&bad_hook[..]), Err(ScopeError::Format(_))));
    }
}
