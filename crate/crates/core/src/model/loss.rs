//! Batch loss: token cross-entropy plus λ-weighted KL, with gradients.

use super::{
    embed_numeric, posterior_forward, prior_forward, ModelConfig, ModelError, ModelParams,
    ParamCtx,
};
use crate::encoding::SampleGrid;
use crate::tensor::{Graph, Tensor, Var};
use crate::token::Token;
use rand::seq::SliceRandom;
use std::collections::BTreeMap;

/// One corpus entry prepared for training: padded equation ids plus the
/// tokenized sample grid.
#[derive(Clone, Debug)]
pub struct PreparedEntry {
    /// Index into the source corpus, for error reporting.
    pub entry_index: usize,
    pub ids: Vec<u32>,
    pub grid: SampleGrid,
}

impl PreparedEntry {
    pub fn new(
        entry_index: usize,
        expr: &crate::expr::Expr,
        samples: &[(Vec<f64>, f64)],
        pad_len: usize,
    ) -> Result<PreparedEntry, ModelError> {
        let ids = crate::encoding::encode_equation(expr, pad_len)?;
        let grid = crate::encoding::encode_samples(samples)?;
        Ok(PreparedEntry {
            entry_index,
            ids,
            grid,
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LossParts {
    /// L_CE + λ·L_KL.
    pub total: f64,
    /// Mean over the batch of the per-example token cross-entropy sum.
    pub lce: f64,
    /// Mean over the batch of the per-example KL divergence.
    pub lkl: f64,
}

/// Forward + backward over one batch.
///
/// The reconstruction term is the per-example sum of token cross-entropies
/// (PAD targets masked), averaged over the batch; with λ = 1 the total is
/// the negative single-sample ELBO estimate averaged over the batch. The
/// `noise_seed` fixes the reparameterization draws and the row subsample,
/// making the whole computation a deterministic function of the inputs.
pub fn loss_and_grads(
    params: &ModelParams,
    batch: &[&PreparedEntry],
    lambda: f64,
    rows_per_entry: usize,
    noise_seed: u64,
) -> Result<(LossParts, BTreeMap<String, Tensor>), ModelError> {
    assert!(lambda >= 0.0, "lambda must be non-negative");
    assert!(!batch.is_empty(), "empty batch");
    let cfg = &params.cfg;
    let mut g = Graph::new();
    let ctx = ParamCtx::new(&mut g, params, true);

    let b = batch.len();
    let t_len = cfg.pad_len - 1;
    let mut hiddens = Vec::with_capacity(b);
    let mut kls = Vec::with_capacity(b);
    let mut targets_all: Vec<u32> = Vec::with_capacity(b * t_len);
    let mut weights_all: Vec<f64> = Vec::with_capacity(b * t_len);

    for (bi, entry) in batch.iter().enumerate() {
        if entry.ids.len() != cfg.pad_len {
            return Err(ModelError::Shape(format!(
                "entry {} has id length {}, pad_len is {}",
                entry.entry_index,
                entry.ids.len(),
                cfg.pad_len
            )));
        }
        let grid = subsample_grid(&entry.grid, rows_per_entry, noise_seed, bi as u64);
        let xe = embed_numeric(&mut g, &ctx, cfg, &grid);
        let (mu1, lv1) = posterior_forward(&mut g, &ctx, cfg, xe, &entry.ids);
        let (mu2, lv2) = prior_forward(&mut g, &ctx, cfg, xe);
        kls.push(kl_node(&mut g, mu1, lv1, mu2, lv2));

        let fused = fused_latents(&mut g, &ctx, cfg, mu1, lv1, noise_seed, bi as u64);
        let memory = g.concat_rows(&[fused, xe]);

        let dec_in = &entry.ids[..t_len];
        let dec_emb = super::embed_equation(&mut g, &ctx, cfg, dec_in);
        let hidden = super::decoder_stack(&mut g, &ctx, cfg, dec_emb, memory);
        hiddens.push(hidden);

        let pad_id = Token::Pad.id();
        for &t in &entry.ids[1..] {
            targets_all.push(t);
            weights_all.push(if t == pad_id { 0.0 } else { 1.0 / b as f64 });
        }
    }

    let hidden_all = g.concat_rows(&hiddens);
    let logits = g.matmul(hidden_all, ctx.p("out_w"));
    let logits = g.add_row(logits, ctx.p("out_b"));
    let lce = g.weighted_ce(logits, &targets_all, &weights_all);

    let kl_cat = g.concat_rows(&kls);
    let kl_sum = g.sum(kl_cat);
    let kl_mean = g.scale(kl_sum, 1.0 / b as f64);
    let kl_term = g.scale(kl_mean, lambda);
    let total = g.add(lce, kl_term);

    let parts = LossParts {
        total: g.scalar_value(total),
        lce: g.scalar_value(lce),
        lkl: g.scalar_value(kl_mean),
    };
    if !parts.total.is_finite() {
        // Identify the offending example for the error report.
        let batch_index = kls
            .iter()
            .position(|&k| !g.scalar_value(k).is_finite())
            .or_else(|| hiddens.iter().position(|&h| !g.value(h).all_finite()))
            .unwrap_or(0);
        return Err(ModelError::NonFiniteLoss {
            step: 0,
            batch_index,
            entry_index: batch[batch_index].entry_index,
        });
    }

    let grads = g.backward(total);
    let mut out = BTreeMap::new();
    for (name, var) in ctx.iter() {
        let grad = grads[var.index()]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&params.get(name).shape));
        out.insert(name.clone(), grad);
    }
    Ok((parts, out))
}

/// Teacher-forced decoder logits [pad_len − 1, V] for one example,
/// conditioned on an externally supplied fused latent. This is the same
/// computation the loss performs, exposed so reconstruction probabilities
/// can be evaluated (and the autoregressive decoder cross-checked)
/// independently of the training path.
pub fn teacher_forced_logits(
    params: &ModelParams,
    grid: &SampleGrid,
    eq_ids: &[u32],
    fused: &[f64],
) -> Result<Tensor, ModelError> {
    let cfg = &params.cfg;
    super::check_grid(cfg, grid)?;
    super::check_eq_ids(cfg, eq_ids)?;
    if fused.len() != cfg.d {
        return Err(ModelError::Shape(format!(
            "fused latent has dim {}, model d is {}",
            fused.len(),
            cfg.d
        )));
    }
    let mut g = Graph::new();
    let ctx = ParamCtx::new(&mut g, params, false);
    let xe = embed_numeric(&mut g, &ctx, cfg, grid);
    let fused_var = g.constant(Tensor::new(vec![1, cfg.d], fused.to_vec()));
    let memory = g.concat_rows(&[fused_var, xe]);
    let dec_emb = super::embed_equation(&mut g, &ctx, cfg, &eq_ids[..cfg.pad_len - 1]);
    let hidden = super::decoder_stack(&mut g, &ctx, cfg, dec_emb, memory);
    let logits = g.matmul(hidden, ctx.p("out_w"));
    let logits = g.add_row(logits, ctx.p("out_b"));
    Ok(g.value(logits).clone())
}

/// Deterministic row subsample for long datasets.
fn subsample_grid(grid: &SampleGrid, rows: usize, seed: u64, example: u64) -> SampleGrid {
    if grid.len() <= rows {
        return grid.clone();
    }
    let mut idx: Vec<usize> = (0..grid.len()).collect();
    let mut rng = crate::rng::stream_indexed(seed, "row-subsample", &[example]);
    idx.shuffle(&mut rng);
    idx.truncate(rows);
    grid.select_rows(&idx)
}

/// Closed-form diagonal KL as a graph node (scalar [1]):
/// ½ Σ_j [(μ1−μ2)²·e^{−lv2} + e^{lv1−lv2} − (lv1 − lv2) − 1].
fn kl_node(g: &mut Graph, mu1: Var, lv1: Var, mu2: Var, lv2: Var) -> Var {
    let dm = g.sub(mu1, mu2);
    let dm2 = g.mul(dm, dm);
    let neg_lv2 = g.scale(lv2, -1.0);
    let inv_var2 = g.exp(neg_lv2);
    let t1 = g.mul(dm2, inv_var2);
    let dlv = g.sub(lv1, lv2);
    let t2 = g.exp(dlv);
    let t12 = g.add(t1, t2);
    let neg_dlv = g.scale(dlv, -1.0);
    let t123 = g.add(t12, neg_dlv);
    let inner = g.add_scalar(t123, -1.0);
    let s = g.sum(inner);
    let half = g.scale(s, 0.5);
    g.reshape(half, &[1, 1])
}

/// Reparameterized posterior samples fused into the decoder conditioning
/// vector [1, d].
fn fused_latents(
    g: &mut Graph,
    ctx: &ParamCtx,
    cfg: &ModelConfig,
    mu: Var,
    lv: Var,
    seed: u64,
    example: u64,
) -> Var {
    let half_lv = g.scale(lv, 0.5);
    let sigma = g.exp(half_lv);
    let mut zs = Vec::with_capacity(cfg.n_latent);
    for i in 0..cfg.n_latent {
        let mut rng = crate::rng::stream_indexed(seed, "reparam-eps", &[example, i as u64]);
        let eps = g.constant(Tensor::randn(&[cfg.d], 1.0, &mut rng));
        let se = g.mul(sigma, eps);
        let z = g.add(mu, se);
        zs.push(g.reshape(z, &[1, cfg.d]));
    }
    let stack = g.concat_rows(&zs);
    let mean = g.mean_rows(stack);
    let x = g.reshape(mean, &[1, cfg.d]);
    let f = g.matmul(x, ctx.p("fuse_w"));
    g.add_row(f, ctx.p("fuse_b"))
}
