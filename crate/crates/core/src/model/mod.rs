//! The dual-branch conditional VAE.
//!
//! A shared Transformer encoder reads tokenized numeric samples (no
//! positional encoding, so the encoders are insensitive to sample order)
//! together with either the embedded equation (posterior branch) or a
//! learned mask token (prior branch). Branch MLPs produce diagonal
//! Gaussians over the latent space; reparameterized samples are fused and
//! drive a Transformer decoder that reconstructs the equation token by
//! token. Training optimizes token cross-entropy plus a KL term that
//! aligns the posterior with the learned prior.

mod checkpoint;
mod infer;
mod loss;
mod schedule;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use infer::{decode, decode_greedy, decode_greedy_with_memory, embed_numeric_raw, DecodeOutput};
pub use loss::{loss_and_grads, teacher_forced_logits, LossParts, PreparedEntry};
pub use schedule::{kl_weight, lr_schedule};
pub use train::{AdamState, StepRecord, TrainConfig, Trainer};

use crate::encoding::{EncodingError, SampleGrid};
use crate::tensor::{Graph, Tensor, Var};
use crate::token::{Token, VOCAB_SIZE};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite loss at step {step}, batch position {batch_index} (corpus entry {entry_index})")]
    NonFiniteLoss {
        step: u64,
        batch_index: usize,
        entry_index: usize,
    },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Architecture hyperparameters baked into a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Model width and latent dimension.
    pub d: usize,
    /// Numeric sub-token embedding dimension.
    pub d_n: usize,
    /// Encoder and decoder depth.
    pub layers: usize,
    pub heads: usize,
    /// Feed-forward width.
    pub ff: usize,
    /// Largest input dimensionality the numeric embedder accepts.
    pub max_vars: usize,
    /// Fixed equation length (ids), BOS..EOS then PAD.
    pub pad_len: usize,
    /// Latent samples fused per reconstruction during training.
    pub n_latent: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d == 0 || self.d_n == 0 || self.layers == 0 || self.heads == 0 || self.ff == 0 {
            return Err(ModelError::Config("dimensions must be positive".into()));
        }
        if self.d % self.heads != 0 {
            return Err(ModelError::Config("d must be divisible by heads".into()));
        }
        if self.max_vars == 0 || self.max_vars > crate::token::MAX_VARS {
            return Err(ModelError::Config("max_vars must be in 1..=10".into()));
        }
        if self.pad_len < 3 {
            return Err(ModelError::Config(
                "pad_len must cover BOS, one token, EOS".into(),
            ));
        }
        if self.n_latent == 0 {
            return Err(ModelError::Config("n_latent must be >= 1".into()));
        }
        Ok(())
    }

    /// Width of one tokenized sample row: 3 sub-tokens per value, D+1 values.
    pub fn row_width(&self) -> usize {
        3 * (self.max_vars + 1)
    }
}

/// A diagonal Gaussian over the latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> DiagGaussian {
        assert_eq!(mean.len(), var.len());
        assert!(
            var.iter().all(|v| *v > 0.0 && v.is_finite()),
            "variances must be positive and finite"
        );
        DiagGaussian { mean, var }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Closed-form KL divergence between diagonal Gaussians:
/// ½ Σ_j [(μ1−μ2)²/σ2² + σ1²/σ2² − ln(σ1²/σ2²) − 1].
pub fn kl_divergence(q: &DiagGaussian, p: &DiagGaussian) -> f64 {
    assert_eq!(q.dim(), p.dim(), "KL dimensions");
    let mut acc = 0.0;
    for j in 0..q.dim() {
        let dm = q.mean[j] - p.mean[j];
        let ratio = q.var[j] / p.var[j];
        acc += dm * dm / p.var[j] + ratio - ratio.ln() - 1.0;
    }
    0.5 * acc
}

/// Draw n latent vectors z = μ + σ ⊙ ε, ε ~ N(0, I).
pub fn reparameterize<R: rand::Rng>(g: &DiagGaussian, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    assert!(n >= 1);
    let sd: Vec<f64> = g.var.iter().map(|v| v.sqrt()).collect();
    (0..n)
        .map(|_| {
            g.mean
                .iter()
                .zip(&sd)
                .map(|(m, s)| m + s * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect()
        })
        .collect()
}

/// Permutation-invariant fusion: mean over the sampled latents, then the
/// learned affine map.
pub fn fuse(params: &ModelParams, latents: &[Vec<f64>]) -> Vec<f64> {
    assert!(!latents.is_empty());
    let d = latents[0].len();
    let mut mean = vec![0.0; d];
    for z in latents {
        assert_eq!(z.len(), d);
        for (m, v) in mean.iter_mut().zip(z) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= latents.len() as f64;
    }
    let w = params.get("fuse_w");
    let b = params.get("fuse_b");
    let mut out = b.data.clone();
    for i in 0..d {
        let row = &w.data[i * d..(i + 1) * d];
        let mi = mean[i];
        for j in 0..d {
            out[j] += mi * row[j];
        }
    }
    out
}

/// Membership test for the chi-squared high-confidence region:
/// Σ_j (z_j − μ_j)²/σ_j² ≤ χ²_{d,α} (Wilson–Hilferty quantile).
pub fn region_contains(g: &DiagGaussian, z: &[f64], alpha: f64) -> bool {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha in (0,1)");
    assert_eq!(z.len(), g.dim());
    let stat: f64 = z
        .iter()
        .zip(&g.mean)
        .zip(&g.var)
        .map(|((z, m), v)| (z - m) * (z - m) / v)
        .sum();
    stat <= chi2_quantile(g.dim(), alpha)
}

/// Wilson–Hilferty approximation of the chi-squared quantile.
pub fn chi2_quantile(d: usize, alpha: f64) -> f64 {
    let d = d as f64;
    let z = normal_quantile(alpha);
    let t = 1.0 - 2.0 / (9.0 * d) + z * (2.0 / (9.0 * d)).sqrt();
    d * t.powi(3)
}

/// Acklam's rational approximation of the standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// All trainable weights, keyed by a stable name.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    /// Seeded initialization: scaled-normal matrices, unit gains, zero
    /// biases.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<ModelParams, ModelError> {
        cfg.validate()?;
        let mut t: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut rng = crate::rng::stream(seed, "model-init");
        let v = VOCAB_SIZE;
        let (d, dn, ff) = (cfg.d, cfg.d_n, cfg.ff);
        let dh = d / cfg.heads;
        {
            let mut mat = |name: &str, shape: &[usize]| {
                let fan_in = shape[0] as f64;
                let std = (1.0 / fan_in).sqrt();
                t.insert(name.to_string(), Tensor::randn(shape, std, &mut rng));
            };
            mat("embed", &[v, dn]);
            mat("eq_embed", &[v, d]);
            mat("num_proj_w", &[cfg.row_width() * dn, d]);
            mat("mask_embed_m", &[1, d]);
            for l in 0..cfg.layers {
                for h in 0..cfg.heads {
                    mat(&format!("enc{l}.q{h}"), &[d, dh]);
                    mat(&format!("enc{l}.k{h}"), &[d, dh]);
                    mat(&format!("enc{l}.v{h}"), &[d, dh]);
                    mat(&format!("dec{l}.q{h}"), &[d, dh]);
                    mat(&format!("dec{l}.k{h}"), &[d, dh]);
                    mat(&format!("dec{l}.v{h}"), &[d, dh]);
                    mat(&format!("dec{l}.cq{h}"), &[d, dh]);
                    mat(&format!("dec{l}.ck{h}"), &[d, dh]);
                    mat(&format!("dec{l}.cv{h}"), &[d, dh]);
                }
                mat(&format!("enc{l}.attn_out"), &[d, d]);
                mat(&format!("enc{l}.ff1"), &[d, ff]);
                mat(&format!("enc{l}.ff2"), &[ff, d]);
                mat(&format!("dec{l}.attn_out"), &[d, d]);
                mat(&format!("dec{l}.cross_out"), &[d, d]);
                mat(&format!("dec{l}.ff1"), &[d, ff]);
                mat(&format!("dec{l}.ff2"), &[ff, d]);
            }
            mat("post_w1", &[d, d]);
            mat("post_w2", &[d, 2 * d]);
            mat("prior_w1", &[d, d]);
            mat("prior_w2", &[d, 2 * d]);
            mat("fuse_w", &[d, d]);
            mat("out_w", &[d, v]);
        }

        let mut params = ModelParams { cfg, tensors: t };
        // Vector parameters: biases zero, norm gains one.
        for (name, shape, fill) in params.vector_specs() {
            let n: usize = shape.iter().product();
            params.tensors.insert(name, Tensor::new(shape, vec![fill; n]));
        }
        Ok(params)
    }

    fn vector_specs(&self) -> Vec<(String, Vec<usize>, f64)> {
        let (d, ff, v) = (self.cfg.d, self.cfg.ff, VOCAB_SIZE);
        let mut out: Vec<(String, Vec<usize>, f64)> = vec![
            ("num_proj_b".into(), vec![d], 0.0),
            ("post_b1".into(), vec![d], 0.0),
            ("post_b2".into(), vec![2 * d], 0.0),
            ("prior_b1".into(), vec![d], 0.0),
            ("prior_b2".into(), vec![2 * d], 0.0),
            ("fuse_b".into(), vec![d], 0.0),
            ("out_b".into(), vec![v], 0.0),
            ("enc_ln_g".into(), vec![d], 1.0),
            ("enc_ln_b".into(), vec![d], 0.0),
            ("dec_ln_g".into(), vec![d], 1.0),
            ("dec_ln_b".into(), vec![d], 0.0),
        ];
        for l in 0..self.cfg.layers {
            for (stack, norms) in [("enc", 2usize), ("dec", 3)] {
                out.push((format!("{stack}{l}.attn_out_b"), vec![d], 0.0));
                out.push((format!("{stack}{l}.ff1_b"), vec![ff], 0.0));
                out.push((format!("{stack}{l}.ff2_b"), vec![d], 0.0));
                for n in 1..=norms {
                    out.push((format!("{stack}{l}.ln{n}_g"), vec![d], 1.0));
                    out.push((format!("{stack}{l}.ln{n}_b"), vec![d], 0.0));
                }
            }
            out.push((format!("dec{l}.cross_out_b"), vec![d], 0.0));
        }
        out
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }

    pub(crate) fn insert(&mut self, name: String, t: Tensor) {
        self.tensors.insert(name, t);
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.all_finite())
    }
}

/// Sinusoidal positional encoding for `len` positions.
pub(crate) fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + 2 * i] = (pos as f64 * freq).sin();
            data[pos * d + 2 * i + 1] = (pos as f64 * freq).cos();
        }
    }
    Tensor::new(vec![len, d], data)
}

/// Graph handles for every parameter, inserted as leaves (training) or
/// constants (inference).
pub(crate) struct ParamCtx {
    vars: BTreeMap<String, Var>,
}

impl ParamCtx {
    pub fn new(g: &mut Graph, params: &ModelParams, trainable: bool) -> ParamCtx {
        let mut vars = BTreeMap::new();
        for (name, t) in params.iter() {
            let v = if trainable {
                g.leaf(t.clone())
            } else {
                g.constant(t.clone())
            };
            vars.insert(name.clone(), v);
        }
        ParamCtx { vars }
    }

    pub fn p(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

/// Token ids (3 per value) for one sample row, padded to the embedder width.
pub(crate) fn row_token_ids(
    cfg: &ModelConfig,
    row: &[crate::encoding::NumericTokenTriple],
) -> Vec<u32> {
    let mut ids = Vec::with_capacity(cfg.row_width());
    for t in row {
        for tok in t.tokens() {
            ids.push(tok.id());
        }
    }
    ids.resize(cfg.row_width(), Token::Pad.id());
    ids
}

/// Numeric embedder: sub-token embeddings, flattened per row, projected to
/// the model width. One output row per sample; no positional encoding.
pub(crate) fn embed_numeric(
    g: &mut Graph,
    ctx: &ParamCtx,
    cfg: &ModelConfig,
    grid: &SampleGrid,
) -> Var {
    let m = grid.len();
    let width = cfg.row_width();
    let mut ids = Vec::with_capacity(m * width);
    for i in 0..m {
        ids.extend(row_token_ids(cfg, grid.row(i)));
    }
    let emb = g.gather(ctx.p("embed"), &ids);
    let flat = g.reshape(emb, &[m, width * cfg.d_n]);
    let proj = g.matmul(flat, ctx.p("num_proj_w"));
    g.add_row(proj, ctx.p("num_proj_b"))
}

/// Equation embedder: token embeddings plus positional encoding.
pub(crate) fn embed_equation(g: &mut Graph, ctx: &ParamCtx, cfg: &ModelConfig, ids: &[u32]) -> Var {
    let emb = g.gather(ctx.p("eq_embed"), ids);
    let pe = g.constant(positional_encoding(ids.len(), cfg.d));
    g.add(emb, pe)
}

#[allow(clippy::too_many_arguments)]
fn attention(
    g: &mut Graph,
    ctx: &ParamCtx,
    cfg: &ModelConfig,
    queries: Var,
    keys_vals: Var,
    prefix: &str,
    names: (&str, &str, &str, &str),
    causal: bool,
) -> Var {
    let (q_name, k_name, v_name, out_name) = names;
    let dh = cfg.d / cfg.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let n_q = g.value(queries).rows();
    let n_k = g.value(keys_vals).rows();
    let mask = if causal {
        let mut data = vec![0.0; n_q * n_k];
        for i in 0..n_q {
            for j in 0..n_k {
                if j > i {
                    data[i * n_k + j] = -1e30;
                }
            }
        }
        Some(g.constant(Tensor::new(vec![n_q, n_k], data)))
    } else {
        None
    };
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let q = g.matmul(queries, ctx.p(&format!("{prefix}.{q_name}{h}")));
        let k = g.matmul(keys_vals, ctx.p(&format!("{prefix}.{k_name}{h}")));
        let v = g.matmul(keys_vals, ctx.p(&format!("{prefix}.{v_name}{h}")));
        let mut scores = g.matmul_nt(q, k);
        scores = g.scale(scores, scale);
        if let Some(mask) = mask {
            scores = g.add(scores, mask);
        }
        let attn = g.softmax_rows(scores);
        heads.push(g.matmul(attn, v));
    }
    let cat = g.concat_cols(&heads);
    let o = g.matmul(cat, ctx.p(&format!("{prefix}.{out_name}")));
    g.add_row(o, ctx.p(&format!("{prefix}.{out_name}_b")))
}

fn feed_forward(g: &mut Graph, ctx: &ParamCtx, prefix: &str, x: Var) -> Var {
    let h = g.matmul(x, ctx.p(&format!("{prefix}.ff1")));
    let h = g.add_row(h, ctx.p(&format!("{prefix}.ff1_b")));
    let h = g.softplus(h);
    let h = g.matmul(h, ctx.p(&format!("{prefix}.ff2")));
    g.add_row(h, ctx.p(&format!("{prefix}.ff2_b")))
}

/// Pre-norm Transformer encoder stack with a final layer norm.
pub(crate) fn encoder_stack(g: &mut Graph, ctx: &ParamCtx, cfg: &ModelConfig, mut x: Var) -> Var {
    for l in 0..cfg.layers {
        let prefix = format!("enc{l}");
        let ln1_g = ctx.p(&format!("{prefix}.ln1_g"));
        let ln1_b = ctx.p(&format!("{prefix}.ln1_b"));
        let h = g.layer_norm(x, ln1_g, ln1_b);
        let attn = attention(g, ctx, cfg, h, h, &prefix, ("q", "k", "v", "attn_out"), false);
        x = g.add(x, attn);
        let ln2_g = ctx.p(&format!("{prefix}.ln2_g"));
        let ln2_b = ctx.p(&format!("{prefix}.ln2_b"));
        let h = g.layer_norm(x, ln2_g, ln2_b);
        let ff = feed_forward(g, ctx, &prefix, h);
        x = g.add(x, ff);
    }
    let gn = ctx.p("enc_ln_g");
    let bn = ctx.p("enc_ln_b");
    g.layer_norm(x, gn, bn)
}

/// Pre-norm Transformer decoder stack (causal self-attention plus
/// cross-attention over `memory`) with a final layer norm.
pub(crate) fn decoder_stack(
    g: &mut Graph,
    ctx: &ParamCtx,
    cfg: &ModelConfig,
    mut x: Var,
    memory: Var,
) -> Var {
    for l in 0..cfg.layers {
        let prefix = format!("dec{l}");
        let ln1_g = ctx.p(&format!("{prefix}.ln1_g"));
        let ln1_b = ctx.p(&format!("{prefix}.ln1_b"));
        let h = g.layer_norm(x, ln1_g, ln1_b);
        let attn = attention(g, ctx, cfg, h, h, &prefix, ("q", "k", "v", "attn_out"), true);
        x = g.add(x, attn);
        let ln2_g = ctx.p(&format!("{prefix}.ln2_g"));
        let ln2_b = ctx.p(&format!("{prefix}.ln2_b"));
        let h = g.layer_norm(x, ln2_g, ln2_b);
        let cross = attention(
            g,
            ctx,
            cfg,
            h,
            memory,
            &prefix,
            ("cq", "ck", "cv", "cross_out"),
            false,
        );
        x = g.add(x, cross);
        let ln3_g = ctx.p(&format!("{prefix}.ln3_g"));
        let ln3_b = ctx.p(&format!("{prefix}.ln3_b"));
        let h = g.layer_norm(x, ln3_g, ln3_b);
        let ff = feed_forward(g, ctx, &prefix, h);
        x = g.add(x, ff);
    }
    let gn = ctx.p("dec_ln_g");
    let bn = ctx.p("dec_ln_b");
    g.layer_norm(x, gn, bn)
}

/// Branch head: two-layer MLP from the pooled encoding to (μ, log σ²),
/// with the log-variance clamped to [-10, 10].
pub(crate) fn branch_head(
    g: &mut Graph,
    ctx: &ParamCtx,
    cfg: &ModelConfig,
    prefix: &str,
    pooled: Var,
) -> (Var, Var) {
    let x = g.reshape(pooled, &[1, cfg.d]);
    let h = g.matmul(x, ctx.p(&format!("{prefix}_w1")));
    let h = g.add_row(h, ctx.p(&format!("{prefix}_b1")));
    let h = g.softplus(h);
    let o = g.matmul(h, ctx.p(&format!("{prefix}_w2")));
    let o = g.add_row(o, ctx.p(&format!("{prefix}_b2")));
    let two = g.reshape(o, &[2, cfg.d]);
    let mu = g.row(two, 0);
    let lv_raw = g.row(two, 1);
    let lv = g.clamp(lv_raw, -10.0, 10.0);
    (mu, lv)
}

/// Posterior forward over an already-embedded numeric channel.
pub(crate) fn posterior_forward(
    g: &mut Graph,
    ctx: &ParamCtx,
    cfg: &ModelConfig,
    xe: Var,
    eq_ids: &[u32],
) -> (Var, Var) {
    let fe = embed_equation(g, ctx, cfg, eq_ids);
    let toks = g.concat_rows(&[xe, fe]);
    let enc = encoder_stack(g, ctx, cfg, toks);
    let pooled = g.mean_rows(enc);
    branch_head(g, ctx, cfg, "post", pooled)
}

/// Prior forward: the equation channel is replaced by the learned mask
/// embedding.
pub(crate) fn prior_forward(
    g: &mut Graph,
    ctx: &ParamCtx,
    cfg: &ModelConfig,
    xe: Var,
) -> (Var, Var) {
    let mask = ctx.p("mask_embed_m");
    let toks = g.concat_rows(&[xe, mask]);
    let enc = encoder_stack(g, ctx, cfg, toks);
    let pooled = g.mean_rows(enc);
    branch_head(g, ctx, cfg, "prior", pooled)
}

fn check_grid(cfg: &ModelConfig, grid: &SampleGrid) -> Result<(), ModelError> {
    if grid.is_empty() {
        return Err(ModelError::Shape("empty sample grid".into()));
    }
    if grid.dim() > cfg.max_vars {
        return Err(ModelError::Shape(format!(
            "grid dimension {} exceeds model max_vars {}",
            grid.dim(),
            cfg.max_vars
        )));
    }
    Ok(())
}

fn check_eq_ids(cfg: &ModelConfig, ids: &[u32]) -> Result<(), ModelError> {
    if ids.len() != cfg.pad_len {
        return Err(ModelError::Shape(format!(
            "equation id length {} != pad_len {}",
            ids.len(),
            cfg.pad_len
        )));
    }
    if let Some(bad) = ids.iter().find(|&&id| id as usize >= VOCAB_SIZE) {
        return Err(ModelError::Shape(format!("token id {bad} out of vocabulary")));
    }
    Ok(())
}

/// Posterior distribution q(z | X, F).
pub fn encode_posterior(
    params: &ModelParams,
    grid: &SampleGrid,
    eq_ids: &[u32],
) -> Result<DiagGaussian, ModelError> {
    check_grid(&params.cfg, grid)?;
    check_eq_ids(&params.cfg, eq_ids)?;
    let mut g = Graph::new();
    let ctx = ParamCtx::new(&mut g, params, false);
    let xe = embed_numeric(&mut g, &ctx, &params.cfg, grid);
    let (mu, lv) = posterior_forward(&mut g, &ctx, &params.cfg, xe, eq_ids);
    Ok(gaussian_from(&g, mu, lv))
}

/// Prior distribution p(z | X).
pub fn encode_prior(params: &ModelParams, grid: &SampleGrid) -> Result<DiagGaussian, ModelError> {
    check_grid(&params.cfg, grid)?;
    let mut g = Graph::new();
    let ctx = ParamCtx::new(&mut g, params, false);
    let xe = embed_numeric(&mut g, &ctx, &params.cfg, grid);
    let (mu, lv) = prior_forward(&mut g, &ctx, &params.cfg, xe);
    Ok(gaussian_from(&g, mu, lv))
}

fn gaussian_from(g: &Graph, mu: Var, lv: Var) -> DiagGaussian {
    let mean = g.value(mu).data.clone();
    let var = g.value(lv).data.iter().map(|v| v.exp()).collect();
    DiagGaussian::new(mean, var)
}
