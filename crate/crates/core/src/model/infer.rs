//! Inference-time decoding: autoregressive greedy readout with cached
//! self- and cross-attention keys/values.
//!
//! Training uses the graph decoder (teacher forcing); this raw path exists
//! so candidate decoding inside the search loop stays cheap. A consistency
//! test pins the two implementations to each other.

use super::{positional_encoding, ModelConfig, ModelError, ModelParams};
use crate::encoding::SampleGrid;
use crate::tensor::Tensor;
use crate::token::{Token, TokenSeq};

/// Greedy decode result: readout tokens (BOS up to and including the first
/// EOS) and the logits of every predicted position (pad_len − 1 rows when
/// fully rolled out).
#[derive(Clone, Debug)]
pub struct DecodeOutput {
    pub tokens: TokenSeq,
    pub logits: Vec<Vec<f64>>,
}

fn linear_into(x: &[f64], w: &Tensor, bias: Option<&Tensor>, out: &mut [f64]) {
    let (n_in, n_out) = (w.rows(), w.cols());
    debug_assert_eq!(x.len(), n_in);
    debug_assert_eq!(out.len(), n_out);
    match bias {
        Some(b) => out.copy_from_slice(&b.data),
        None => out.fill(0.0),
    }
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w.data[i * n_out..(i + 1) * n_out];
        for j in 0..n_out {
            out[j] += xi * row[j];
        }
    }
}

fn linear(x: &[f64], w: &Tensor, bias: Option<&Tensor>) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    linear_into(x, w, bias, &mut out);
    out
}

fn layer_norm_vec(x: &[f64], gain: &Tensor, bias: &Tensor) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let inv = 1.0 / (var + 1e-5).sqrt();
    (0..n)
        .map(|j| (x[j] - mean) * inv * gain.data[j] + bias.data[j])
        .collect()
}

fn softmax_in_place(xs: &mut [f64]) {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in xs.iter_mut() {
        *v = (*v - mx).exp();
        z += *v;
    }
    for v in xs.iter_mut() {
        *v /= z;
    }
}

/// Raw numeric embedder (matches the graph path bit for bit: same gather,
/// same matmul loop order).
pub fn embed_numeric_raw(params: &ModelParams, grid: &SampleGrid) -> Tensor {
    let cfg = &params.cfg;
    let m = grid.len();
    let width = cfg.row_width();
    let embed = params.get("embed");
    let dn = cfg.d_n;
    let mut flat = Tensor::zeros(&[m, width * dn]);
    for i in 0..m {
        let ids = super::row_token_ids(cfg, grid.row(i));
        for (slot, id) in ids.iter().enumerate() {
            let id = *id as usize;
            flat.data[i * width * dn + slot * dn..i * width * dn + (slot + 1) * dn]
                .copy_from_slice(&embed.data[id * dn..(id + 1) * dn]);
        }
    }
    let w = params.get("num_proj_w");
    let b = params.get("num_proj_b");
    let data = crate::tensor::mm_nn(&flat, w, m, width * dn, cfg.d);
    let mut out = Tensor::new(vec![m, cfg.d], data);
    for i in 0..m {
        for j in 0..cfg.d {
            out.data[i * cfg.d + j] += b.data[j];
        }
    }
    out
}

struct LayerCache {
    /// Self-attention keys/values per head, one row per generated position.
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// Cross-attention keys/values per head over the memory rows.
    ck: Vec<Tensor>,
    cv: Vec<Tensor>,
}

fn attend(q: &[f64], keys: &[f64], vals: &[f64], rows: usize, dh: usize, out: &mut [f64]) {
    let scale = 1.0 / (dh as f64).sqrt();
    let mut scores = vec![0.0; rows];
    for r in 0..rows {
        let k = &keys[r * dh..(r + 1) * dh];
        let mut s = 0.0;
        for j in 0..dh {
            s += q[j] * k[j];
        }
        scores[r] = s * scale;
    }
    softmax_in_place(&mut scores);
    out.fill(0.0);
    for r in 0..rows {
        let a = scores[r];
        let v = &vals[r * dh..(r + 1) * dh];
        for j in 0..dh {
            out[j] += a * v[j];
        }
    }
}

struct Decoder<'a> {
    params: &'a ModelParams,
    cfg: &'a ModelConfig,
    memory: Tensor,
    caches: Vec<LayerCache>,
    pe: Tensor,
}

impl<'a> Decoder<'a> {
    fn new(params: &'a ModelParams, fused: &[f64], xe: &Tensor) -> Decoder<'a> {
        let cfg = &params.cfg;
        assert_eq!(fused.len(), cfg.d, "fused latent width");
        let mem_rows = xe.rows() + 1;
        let mut memory = Tensor::zeros(&[mem_rows, cfg.d]);
        memory.data[..cfg.d].copy_from_slice(fused);
        memory.data[cfg.d..].copy_from_slice(&xe.data);

        let dh = cfg.d / cfg.heads;
        let caches = (0..cfg.layers)
            .map(|l| {
                let mut ck = Vec::with_capacity(cfg.heads);
                let mut cv = Vec::with_capacity(cfg.heads);
                for h in 0..cfg.heads {
                    let wk = params.get(&format!("dec{l}.ck{h}"));
                    let wv = params.get(&format!("dec{l}.cv{h}"));
                    ck.push(Tensor::new(
                        vec![mem_rows, dh],
                        crate::tensor::mm_nn(&memory, wk, mem_rows, cfg.d, dh),
                    ));
                    cv.push(Tensor::new(
                        vec![mem_rows, dh],
                        crate::tensor::mm_nn(&memory, wv, mem_rows, cfg.d, dh),
                    ));
                }
                LayerCache {
                    k: vec![Vec::new(); cfg.heads],
                    v: vec![Vec::new(); cfg.heads],
                    ck,
                    cv,
                }
            })
            .collect();
        Decoder {
            params,
            cfg,
            memory,
            caches,
            pe: positional_encoding(cfg.pad_len, cfg.d),
        }
    }

    /// Feed the token at position `pos`, return logits for position pos+1.
    fn step(&mut self, token_id: u32, pos: usize) -> Vec<f64> {
        let cfg = self.cfg;
        let d = cfg.d;
        let dh = d / cfg.heads;
        let p = self.params;
        let eq_embed = p.get("eq_embed");
        let id = token_id as usize;
        let mut x: Vec<f64> = eq_embed.data[id * d..(id + 1) * d].to_vec();
        for j in 0..d {
            x[j] += self.pe.data[pos * d + j];
        }

        for l in 0..cfg.layers {
            // Self-attention over the cached prefix plus this position.
            let h = layer_norm_vec(
                &x,
                p.get(&format!("dec{l}.ln1_g")),
                p.get(&format!("dec{l}.ln1_b")),
            );
            let mut heads_out = vec![0.0; d];
            for hh in 0..cfg.heads {
                let q = linear(&h, p.get(&format!("dec{l}.q{hh}")), None);
                let k = linear(&h, p.get(&format!("dec{l}.k{hh}")), None);
                let v = linear(&h, p.get(&format!("dec{l}.v{hh}")), None);
                let cache = &mut self.caches[l];
                cache.k[hh].extend_from_slice(&k);
                cache.v[hh].extend_from_slice(&v);
                let rows = cache.k[hh].len() / dh;
                attend(
                    &q,
                    &cache.k[hh],
                    &cache.v[hh],
                    rows,
                    dh,
                    &mut heads_out[hh * dh..(hh + 1) * dh],
                );
            }
            let attn = linear(
                &heads_out,
                p.get(&format!("dec{l}.attn_out")),
                Some(p.get(&format!("dec{l}.attn_out_b"))),
            );
            for j in 0..d {
                x[j] += attn[j];
            }

            // Cross-attention into the fused latent + numeric memory.
            let h = layer_norm_vec(
                &x,
                p.get(&format!("dec{l}.ln2_g")),
                p.get(&format!("dec{l}.ln2_b")),
            );
            let mut heads_out = vec![0.0; d];
            let mem_rows = self.memory.rows();
            for hh in 0..cfg.heads {
                let q = linear(&h, p.get(&format!("dec{l}.cq{hh}")), None);
                let cache = &self.caches[l];
                attend(
                    &q,
                    &cache.ck[hh].data,
                    &cache.cv[hh].data,
                    mem_rows,
                    dh,
                    &mut heads_out[hh * dh..(hh + 1) * dh],
                );
            }
            let cross = linear(
                &heads_out,
                p.get(&format!("dec{l}.cross_out")),
                Some(p.get(&format!("dec{l}.cross_out_b"))),
            );
            for j in 0..d {
                x[j] += cross[j];
            }

            // Feed-forward.
            let h = layer_norm_vec(
                &x,
                p.get(&format!("dec{l}.ln3_g")),
                p.get(&format!("dec{l}.ln3_b")),
            );
            let mut ff = linear(
                &h,
                p.get(&format!("dec{l}.ff1")),
                Some(p.get(&format!("dec{l}.ff1_b"))),
            );
            for v in &mut ff {
                *v = v.max(0.0) + (-v.abs()).exp().ln_1p();
            }
            let ff = linear(
                &ff,
                p.get(&format!("dec{l}.ff2")),
                Some(p.get(&format!("dec{l}.ff2_b"))),
            );
            for j in 0..d {
                x[j] += ff[j];
            }
        }

        let xf = layer_norm_vec(&x, p.get("dec_ln_g"), p.get("dec_ln_b"));
        linear(&xf, p.get("out_w"), Some(p.get("out_b")))
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in xs.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

fn run_decode(
    params: &ModelParams,
    fused: &[f64],
    xe: &Tensor,
    collect_logits: bool,
    stop_at_eos: bool,
) -> DecodeOutput {
    let cfg = &params.cfg;
    let mut dec = Decoder::new(params, fused, xe);
    let mut tokens = vec![Token::Bos];
    let mut logits_rows = Vec::new();
    let mut cur = Token::Bos.id();
    let mut done = false;
    for pos in 0..cfg.pad_len - 1 {
        let logits = dec.step(cur, pos);
        let next = argmax(&logits) as u32;
        if collect_logits {
            logits_rows.push(logits);
        }
        let tok = Token::from_id(next).expect("argmax id within vocab");
        if !done {
            tokens.push(tok);
            if tok == Token::Eos {
                done = true;
                if stop_at_eos {
                    break;
                }
            }
        }
        cur = next;
    }
    DecodeOutput {
        tokens,
        logits: logits_rows,
    }
}

/// Full greedy decode conditioned on a fused latent and numeric samples:
/// per-position vocabulary logits plus the readout (argmax per position,
/// starting at position 0, stopping at the first EOS).
pub fn decode(
    params: &ModelParams,
    fused: &[f64],
    grid: &SampleGrid,
) -> Result<DecodeOutput, ModelError> {
    super::check_grid(&params.cfg, grid)?;
    if fused.len() != params.cfg.d {
        return Err(ModelError::Shape(format!(
            "fused latent has dim {}, model d is {}",
            fused.len(),
            params.cfg.d
        )));
    }
    let xe = embed_numeric_raw(params, grid);
    Ok(run_decode(params, fused, &xe, true, false))
}

/// Lean greedy decode for the search loop: readout only, stops at EOS.
pub fn decode_greedy(
    params: &ModelParams,
    fused: &[f64],
    grid: &SampleGrid,
) -> Result<TokenSeq, ModelError> {
    super::check_grid(&params.cfg, grid)?;
    let xe = embed_numeric_raw(params, grid);
    Ok(run_decode(params, fused, &xe, false, true).tokens)
}

/// Same as [`decode_greedy`] with the numeric embedding precomputed, so a
/// search can amortize it across candidates.
pub fn decode_greedy_with_memory(params: &ModelParams, fused: &[f64], xe: &Tensor) -> TokenSeq {
    run_decode(params, fused, xe, false, true).tokens
}
