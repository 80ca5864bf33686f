//! End-to-end orchestration: coarse localization, the CMA-ES/BFGS search
//! loop, and the evaluation protocols (reconstruction, interpolation,
//! noise benchmark, Pareto ranking).

mod pareto;
mod protocols;

pub use pareto::{pareto_rank, ParetoReport};
pub use protocols::{
    interpolate, noise_bench, reconstruction_eval, InterpPoint, InterpReport, NoiseBenchReport,
    NoiseBenchRow, ReconBranch, ReconStats, RunRow, DEFAULT_NOISE_LEVELS, DEFAULT_RATIOS,
};

use crate::datagen::GenError;
use crate::encoding::encode_samples;
use crate::expr::{from_prefix, Expr};
use crate::model::{
    decode_greedy_with_memory, embed_numeric_raw, encode_prior, fuse, DiagGaussian, ModelError,
    ModelParams,
};
use crate::optim::{
    bfgs_fit_constants, cma_init, cma_sample, cma_update, fitness, r2, CmaConfig, OptimError,
};
use crate::rng;
use crate::tensor::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Widening retries exhausted and even the prior-mean decode is
    /// invalid.
    #[error("search degenerated: no valid candidate found and the prior-mean decode is invalid")]
    Degenerate,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("invalid search config: {0}")]
    InvalidConfig(&'static str),
}

/// Search-loop configuration on top of the CMA-ES settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub cma: CmaConfig,
    /// Fraction of the data used for constant fitting and ranking; the
    /// remainder is held out for the reported R².
    pub fit_fraction: f64,
    /// Stop after this many generations without best-fitness improvement.
    pub patience: usize,
    /// Improvement below this does not reset the patience counter.
    pub min_improvement: f64,
    /// σ-doubling retries when a whole generation is invalid.
    pub max_widen_retries: usize,
    /// Worker threads for candidate evaluation (1 = serial).
    pub jobs: usize,
}

impl SearchConfig {
    pub fn for_dim(d: usize) -> SearchConfig {
        SearchConfig {
            cma: CmaConfig::for_dim(d),
            fit_fraction: 0.75,
            patience: 20,
            min_improvement: 1e-6,
            max_widen_retries: 3,
            jobs: 1,
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if !(self.fit_fraction > 0.0 && self.fit_fraction < 1.0) {
            return Err(PipelineError::InvalidConfig("fit_fraction must be in (0,1)"));
        }
        if self.jobs == 0 {
            return Err(PipelineError::InvalidConfig("jobs must be >= 1"));
        }
        Ok(())
    }
}

/// Fit/held-out partition. The held-out points are private: they can only
/// be consumed through [`DataSplit::score_held_out`], after the search has
/// committed to a candidate.
#[derive(Clone, Debug)]
pub struct DataSplit {
    fit: Vec<(Vec<f64>, f64)>,
    held_out: Vec<(Vec<f64>, f64)>,
}

impl DataSplit {
    pub fn new(
        data: &[(Vec<f64>, f64)],
        fit_fraction: f64,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> DataSplit {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(rng);
        let n_fit = ((data.len() as f64 * fit_fraction).round() as usize)
            .clamp(1, data.len().saturating_sub(1).max(1));
        let fit = idx[..n_fit].iter().map(|&i| data[i].clone()).collect();
        let held_out = idx[n_fit..].iter().map(|&i| data[i].clone()).collect();
        DataSplit { fit, held_out }
    }

    pub fn fit(&self) -> &[(Vec<f64>, f64)] {
        &self.fit
    }

    pub fn fit_len(&self) -> usize {
        self.fit.len()
    }

    pub fn held_out_len(&self) -> usize {
        self.held_out.len()
    }

    /// R² of the expression on the held-out points; −∞ when evaluation
    /// fails anywhere or fewer than two points are held out.
    pub fn score_held_out(&self, expr: &Expr) -> f64 {
        if self.held_out.len() < 2 {
            return f64::NEG_INFINITY;
        }
        let mut y = Vec::with_capacity(self.held_out.len());
        let mut yhat = Vec::with_capacity(self.held_out.len());
        for (x, t) in &self.held_out {
            match expr.eval(x) {
                Ok(v) => {
                    y.push(*t);
                    yhat.push(v);
                }
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        let s = r2(&y, &yhat);
        if s.is_nan() {
            f64::NEG_INFINITY
        } else {
            s
        }
    }
}

/// Coarse localization: tokenize the samples and read the prior Gaussian.
pub fn localize(
    params: &ModelParams,
    data: &[(Vec<f64>, f64)],
) -> Result<DiagGaussian, PipelineError> {
    let grid = encode_samples(data).map_err(ModelError::Encoding)?;
    Ok(encode_prior(params, &grid)?)
}

/// One generation row of the optimizer trace
/// (CSV columns gen,best_fitness,best_r2,best_complexity,mean_sigma,active_dims).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenTrace {
    pub gen: u64,
    pub best_fitness: f64,
    pub best_r2: f64,
    pub best_complexity: usize,
    pub mean_sigma: f64,
    pub active_dims: usize,
}

impl GenTrace {
    pub const CSV_HEADER: &'static str =
        "gen,best_fitness,best_r2,best_complexity,mean_sigma,active_dims";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.gen,
            self.best_fitness,
            self.best_r2,
            self.best_complexity,
            self.mean_sigma,
            self.active_dims
        )
    }
}

/// Final search outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchResult {
    /// Canonical infix text of the best expression.
    pub expr: String,
    /// Prefix token strings (BOS..EOS) of the best expression.
    pub expr_prefix: Vec<String>,
    /// R² on the held-out split.
    pub r2: f64,
    pub complexity: usize,
    /// Fitness on the fit split (the quantity the search maximized).
    pub fitness: f64,
    pub time_s: f64,
    pub seed: u64,
    pub generations: u64,
    /// True when the result came from the prior-mean fallback after a
    /// degenerate search.
    pub degenerate_fallback: bool,
    pub trace: Vec<GenTrace>,
}

#[derive(Clone, Debug)]
struct Candidate {
    z: Vec<f64>,
    expr: Option<Expr>,
    fitness: f64,
    r2: f64,
    complexity: usize,
}

fn evaluate_candidate(
    params: &ModelParams,
    xe: &Tensor,
    z: Vec<f64>,
    fit_data: &[(Vec<f64>, f64)],
    omega: f64,
    seed: u64,
    tags: &[u64],
) -> Candidate {
    let invalid = |z: Vec<f64>| Candidate {
        z,
        expr: None,
        fitness: f64::NEG_INFINITY,
        r2: f64::NEG_INFINITY,
        complexity: usize::MAX,
    };
    let fused = fuse(params, std::slice::from_ref(&z));
    let tokens = decode_greedy_with_memory(params, &fused, xe);
    let Ok(parsed) = from_prefix(&tokens) else {
        return invalid(z);
    };
    let skeleton = parsed.canonicalize_constants();
    let mut bfgs_rng = rng::stream_indexed(seed, "bfgs", tags);
    let Ok((fitted, _mse)) = bfgs_fit_constants(&skeleton, fit_data, &mut bfgs_rng) else {
        return invalid(z);
    };
    let mut y = Vec::with_capacity(fit_data.len());
    let mut yhat = Vec::with_capacity(fit_data.len());
    for (x, t) in fit_data {
        match fitted.eval(x) {
            Ok(v) => {
                y.push(*t);
                yhat.push(v);
            }
            Err(_) => return invalid(z),
        }
    }
    let score = r2(&y, &yhat);
    if !score.is_finite() {
        return invalid(z);
    }
    let complexity = fitted.complexity();
    Candidate {
        z,
        expr: Some(fitted),
        fitness: fitness(score, complexity, omega),
        r2: score,
        complexity,
    }
}

fn rank_candidates(mut cands: Vec<Candidate>) -> Vec<Candidate> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        cands[b]
            .fitness
            .partial_cmp(&cands[a].fitness)
            .unwrap()
            .then(cands[a].complexity.cmp(&cands[b].complexity))
            .then(a.cmp(&b))
    });
    let mut out = Vec::with_capacity(cands.len());
    for i in order {
        out.push(std::mem::replace(
            &mut cands[i],
            Candidate {
                z: Vec::new(),
                expr: None,
                fitness: f64::NEG_INFINITY,
                r2: f64::NEG_INFINITY,
                complexity: usize::MAX,
            },
        ));
    }
    out
}

/// Latent-space search: decode CMA-ES candidates, refine constants with
/// BFGS on the fit split, rank by fitness, update the distribution, and
/// re-score the winner on held-out points.
pub fn search(
    params: &ModelParams,
    data: &[(Vec<f64>, f64)],
    cfg: &SearchConfig,
) -> Result<SearchResult, PipelineError> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let seed = cfg.cma.seed;
    let mut split_rng = rng::stream(seed, "split");
    let split = DataSplit::new(data, cfg.fit_fraction, &mut split_rng);

    let prior = localize(params, split.fit())?;
    let grid = encode_samples(split.fit()).map_err(ModelError::Encoding)?;
    let xe = embed_numeric_raw(params, &grid);
    let mut state = cma_init(&prior, &cfg.cma)?;

    let omega = cfg.cma.fitness_weight;
    let mut sample_rng = rng::stream(seed, "cma-sample");
    let mut best: Option<Candidate> = None;
    let mut stall = 0usize;
    let mut trace = Vec::new();
    let mut degenerate_fallback = false;
    let mut generations = 0u64;

    'outer: for gen in 0..cfg.cma.max_generations as u64 {
        let mut cands = None;
        for attempt in 0..=cfg.max_widen_retries as u64 {
            let zs = cma_sample(&state, cfg.cma.population, &mut sample_rng);
            let evaluated: Vec<Candidate> = if cfg.jobs > 1 {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.jobs)
                    .build()
                    .expect("thread pool");
                pool.install(|| {
                    zs.into_par_iter()
                        .enumerate()
                        .map(|(i, z)| {
                            evaluate_candidate(
                                params,
                                &xe,
                                z,
                                split.fit(),
                                omega,
                                seed,
                                &[gen, attempt, i as u64],
                            )
                        })
                        .collect()
                })
            } else {
                zs.into_iter()
                    .enumerate()
                    .map(|(i, z)| {
                        evaluate_candidate(
                            params,
                            &xe,
                            z,
                            split.fit(),
                            omega,
                            seed,
                            &[gen, attempt, i as u64],
                        )
                    })
                    .collect()
            };
            if evaluated.iter().any(|c| c.fitness > f64::NEG_INFINITY) {
                cands = Some(evaluated);
                break;
            }
            crate::optim::widen(&mut state);
        }
        let Some(cands) = cands else {
            // Three widenings exhausted: fall back to the prior mean.
            let fallback = evaluate_candidate(
                params,
                &xe,
                prior.mean.clone(),
                split.fit(),
                omega,
                seed,
                &[u64::MAX, 0, 0],
            );
            if fallback.fitness > f64::NEG_INFINITY
                && best.as_ref().map_or(true, |b| fallback.fitness > b.fitness)
            {
                best = Some(fallback);
                degenerate_fallback = true;
                break 'outer;
            }
            if best.is_some() {
                break 'outer;
            }
            return Err(PipelineError::Degenerate);
        };

        let ranked = rank_candidates(cands);
        let leader = &ranked[0];
        let improved = match &best {
            None => leader.fitness > f64::NEG_INFINITY,
            Some(b) => leader.fitness > b.fitness + cfg.min_improvement,
        };
        if best.as_ref().map_or(true, |b| leader.fitness > b.fitness) {
            best = Some(leader.clone());
        }
        if improved {
            stall = 0;
        } else {
            stall += 1;
        }

        let b = best.as_ref().expect("best exists after first generation");
        let mean_sigma = state
            .active
            .iter()
            .map(|&j| state.step * state.var[j].sqrt())
            .sum::<f64>()
            / state.active.len() as f64;
        trace.push(GenTrace {
            gen,
            best_fitness: b.fitness,
            best_r2: b.r2,
            best_complexity: b.complexity,
            mean_sigma,
            active_dims: state.active.len(),
        });
        generations = gen + 1;

        let pairs: Vec<(Vec<f64>, f64)> =
            ranked.into_iter().map(|c| (c.z, c.fitness)).collect();
        match cma_update(&state, &pairs, &cfg.cma) {
            Ok(next) => state = next,
            Err(OptimError::Degenerate) => unreachable!("degenerate handled before ranking"),
            Err(e) => return Err(e.into()),
        }
        if stall >= cfg.patience {
            break;
        }
    }

    let best = best.ok_or(PipelineError::Degenerate)?;
    let expr = best.expr.expect("valid best candidate carries an expression");
    let held_r2 = split.score_held_out(&expr);
    Ok(SearchResult {
        expr: expr.to_string(),
        expr_prefix: crate::expr::to_prefix(&expr)
            .iter()
            .map(|t| t.text())
            .collect(),
        r2: held_r2,
        complexity: best.complexity,
        fitness: best.fitness,
        time_s: started.elapsed().as_secs_f64(),
        seed,
        generations,
        degenerate_fallback,
        trace,
    })
}
