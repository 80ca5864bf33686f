//! Adam training loop with Noam learning rate and KL annealing.

use super::loss::{loss_and_grads, PreparedEntry};
use super::schedule::lr_schedule;
use super::{Checkpoint, ModelConfig, ModelError, ModelParams};
use crate::datagen::CorpusEntry;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Everything a training run needs besides the corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub d: usize,
    pub d_n: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    /// Latent samples fused per reconstruction.
    pub n_latent: usize,
    pub max_vars: usize,
    /// Equation pad length; None means the corpus maximum prefix length.
    pub pad_len: Option<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub base_lr: f64,
    /// Noam warm-up steps.
    pub warmup: u64,
    /// Fraction of total steps over which λ anneals from 0 to 1.
    pub kl_anneal_frac: f64,
    /// Numeric rows consumed per entry each step (subsampled when the
    /// stored dataset is larger).
    pub rows_per_entry: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 32,
            d_n: 8,
            layers: 2,
            heads: 2,
            ff: 128,
            n_latent: 4,
            max_vars: 3,
            pad_len: None,
            batch_size: 16,
            epochs: 10,
            steps_per_epoch: 200,
            base_lr: 0.05,
            warmup: 400,
            kl_anneal_frac: 0.5,
            rows_per_entry: 48,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 || self.epochs == 0 || self.steps_per_epoch == 0 {
            return Err(ModelError::Config(
                "batch_size, epochs, steps_per_epoch must be positive".into(),
            ));
        }
        if self.warmup == 0 || self.warmup > self.total_steps() {
            return Err(ModelError::Config("warmup must be in 1..=total steps".into()));
        }
        if !(self.kl_anneal_frac > 0.0 && self.kl_anneal_frac <= 1.0) {
            return Err(ModelError::Config("kl_anneal_frac must be in (0, 1]".into()));
        }
        if self.rows_per_entry == 0 {
            return Err(ModelError::Config("rows_per_entry must be positive".into()));
        }
        if !(self.base_lr > 0.0) {
            return Err(ModelError::Config("base_lr must be positive".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        (self.epochs * self.steps_per_epoch) as u64
    }

    /// λ under the configured annealing fraction.
    pub fn lambda_at(&self, step: u64) -> f64 {
        let ramp = self.kl_anneal_frac * self.total_steps() as f64;
        (step as f64 / ramp).min(1.0)
    }
}

/// One row of the training log (CSV columns step,lce,lkl,lambda,lr).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lce: f64,
    pub lkl: f64,
    pub lambda: f64,
    pub lr: f64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str = "step,lce,lkl,lambda,lr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.step, self.lce, self.lkl, self.lambda, self.lr
        )
    }
}

/// Adam with the Noam-schedule pairing (β1 = 0.9, β2 = 0.98, ε = 1e-9).
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
    pub t: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.98;
    pub const EPS: f64 = 1e-9;

    pub fn new(params: &ModelParams) -> AdamState {
        let zeros = |p: &ModelParams| -> BTreeMap<String, Tensor> {
            p.iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(&t.shape)))
                .collect()
        };
        AdamState {
            m: zeros(params),
            v: zeros(params),
            t: 0,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams, grads: &BTreeMap<String, Tensor>, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for (name, g) in grads {
            let m = self.m.get_mut(name).expect("adam m state");
            let v = self.v.get_mut(name).expect("adam v state");
            let p = params.get_mut(name);
            for i in 0..g.data.len() {
                let gi = g.data[i];
                m.data[i] = Self::BETA1 * m.data[i] + (1.0 - Self::BETA1) * gi;
                v.data[i] = Self::BETA2 * v.data[i] + (1.0 - Self::BETA2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * mhat / (vhat.sqrt() + Self::EPS);
            }
        }
    }
}

/// A resumable training run over a prepared corpus.
pub struct Trainer {
    pub params: ModelParams,
    pub opt: AdamState,
    pub step: u64,
    pub cfg: TrainConfig,
    prepared: Vec<PreparedEntry>,
}

/// Longest prefix encoding (with BOS/EOS) in the corpus.
pub fn corpus_pad_len(corpus: &[CorpusEntry]) -> usize {
    corpus
        .iter()
        .map(|e| e.expr_prefix.len())
        .max()
        .unwrap_or(0)
}

fn prepare(corpus: &[CorpusEntry], pad_len: usize) -> Result<Vec<PreparedEntry>, ModelError> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let expr = entry
                .expr()
                .map_err(|e| ModelError::Config(format!("corpus entry {i}: {e}")))?;
            PreparedEntry::new(i, &expr, &entry.samples, pad_len)
        })
        .collect()
}

impl Trainer {
    pub fn new(corpus: &[CorpusEntry], cfg: TrainConfig) -> Result<Trainer, ModelError> {
        cfg.validate()?;
        if corpus.is_empty() {
            return Err(ModelError::Config("corpus is empty".into()));
        }
        let pad_len = cfg.pad_len.unwrap_or_else(|| corpus_pad_len(corpus));
        let mcfg = ModelConfig {
            d: cfg.d,
            d_n: cfg.d_n,
            layers: cfg.layers,
            heads: cfg.heads,
            ff: cfg.ff,
            max_vars: cfg.max_vars,
            pad_len,
            n_latent: cfg.n_latent,
        };
        let params = ModelParams::init(mcfg, cfg.seed)?;
        let opt = AdamState::new(&params);
        let prepared = prepare(corpus, pad_len)?;
        Ok(Trainer {
            params,
            opt,
            step: 0,
            cfg,
            prepared,
        })
    }

    /// Resume from a checkpoint; the step counter continues where it left
    /// off.
    pub fn from_checkpoint(ck: Checkpoint, corpus: &[CorpusEntry]) -> Result<Trainer, ModelError> {
        ck.train_cfg.validate()?;
        if corpus.is_empty() {
            return Err(ModelError::Config("corpus is empty".into()));
        }
        let prepared = prepare(corpus, ck.params.cfg.pad_len)?;
        Ok(Trainer {
            params: ck.params,
            opt: ck.opt,
            step: ck.step,
            cfg: ck.train_cfg,
            prepared,
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.cfg.total_steps()
    }

    fn pick_batch(&self, step: u64) -> Vec<usize> {
        let mut rng = crate::rng::stream_indexed(self.cfg.seed, "batch", &[step]);
        let n = self.prepared.len();
        let b = self.cfg.batch_size;
        if n >= b {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.truncate(b);
            idx
        } else {
            (0..b).map(|_| rng.random_range(0..n)).collect()
        }
    }

    /// Run until the configured step budget, appending to the log and
    /// checkpointing each epoch when a path is given.
    pub fn run(
        &mut self,
        ckpt_path: Option<&Path>,
        log_path: Option<&Path>,
    ) -> Result<Vec<StepRecord>, ModelError> {
        let total = self.total_steps();
        let mut log = Vec::new();
        let mut log_file = match log_path {
            Some(p) => {
                let fresh = self.step == 0 || !p.exists();
                let mut f = std::fs::OpenOptions::new()
                    .create(true)
                    .append(!fresh)
                    .write(true)
                    .truncate(fresh)
                    .open(p)
                    .map_err(|e| ModelError::Checkpoint(format!("log {}: {e}", p.display())))?;
                if fresh {
                    writeln!(f, "{}", StepRecord::CSV_HEADER)
                        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
                }
                Some(std::io::BufWriter::new(f))
            }
            None => None,
        };

        while self.step < total {
            let step = self.step + 1;
            let lambda = self.cfg.lambda_at(step);
            let lr = lr_schedule(step, self.cfg.warmup, self.cfg.base_lr);
            let batch_idx = self.pick_batch(step);
            let batch: Vec<&PreparedEntry> = batch_idx.iter().map(|&i| &self.prepared[i]).collect();
            let noise_seed = crate::rng::derive_seed_indexed(self.cfg.seed, "step-noise", &[step]);
            let (parts, grads) =
                loss_and_grads(&self.params, &batch, lambda, self.cfg.rows_per_entry, noise_seed)
                    .map_err(|e| match e {
                        ModelError::NonFiniteLoss {
                            batch_index,
                            entry_index,
                            ..
                        } => ModelError::NonFiniteLoss {
                            step,
                            batch_index,
                            entry_index,
                        },
                        other => other,
                    })?;
            self.opt.update(&mut self.params, &grads, lr);
            self.step = step;
            let rec = StepRecord {
                step,
                lce: parts.lce,
                lkl: parts.lkl,
                lambda,
                lr,
            };
            if let Some(f) = log_file.as_mut() {
                writeln!(f, "{}", rec.csv_row())
                    .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
            }
            log.push(rec);

            if step % self.cfg.steps_per_epoch as u64 == 0 {
                if let Some(p) = ckpt_path {
                    self.save(p)?;
                }
            }
        }
        if let Some(f) = log_file.as_mut() {
            f.flush().map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let ck = Checkpoint {
            train_cfg: self.cfg.clone(),
            params: self.params.clone(),
            opt: self.opt.clone(),
            step: self.step,
        };
        super::save_checkpoint(path, &ck)
    }
}
