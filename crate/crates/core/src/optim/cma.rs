//! Diagonal CMA-ES with top-k variance updates.
//!
//! The covariance matrix is restricted to its diagonal; only the k latent
//! dimensions with the largest variances are perturbed and updated each
//! generation (the rest stay frozen at the mean). Recombination uses
//! log-rank weights over the top-p candidates, per-dimension variances
//! blend with learning rate c_var = 2/(d+6), and the global step size
//! adapts by cumulative path length as in separable CMA variants.

use super::OptimError;
use crate::model::DiagGaussian;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaConfig {
    /// Population size s.
    pub population: usize,
    /// Selected parents p (top-p by fitness).
    pub parents: usize,
    /// Number of active (perturbed + updated) dimensions k.
    pub top_k: usize,
    /// Initial step size t, scaling the prior standard deviation.
    pub initial_step: f64,
    pub max_generations: usize,
    /// Fitness weight ω in R² − ω·complexity.
    pub fitness_weight: f64,
    pub seed: u64,
}

impl CmaConfig {
    /// Desk-scale defaults for latent dimension d: s = 50, p = s/2,
    /// k = d/2, t = 1.1, ω = 0.005.
    pub fn for_dim(d: usize) -> CmaConfig {
        CmaConfig {
            population: 50,
            parents: 25,
            top_k: (d / 2).max(1),
            initial_step: 1.1,
            max_generations: 200,
            fitness_weight: 0.005,
            seed: 0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), OptimError> {
        if self.population < 1 {
            return Err(OptimError::InvalidConfig("population must be >= 1"));
        }
        if self.parents < 1 || self.parents > self.population {
            return Err(OptimError::InvalidConfig("parents must be in 1..=population"));
        }
        if self.top_k < 1 || self.top_k > dim {
            return Err(OptimError::InvalidConfig("top_k must be in 1..=dim"));
        }
        if !(self.initial_step > 0.0) {
            return Err(OptimError::InvalidConfig("initial_step must be positive"));
        }
        if self.fitness_weight < 0.0 {
            return Err(OptimError::InvalidConfig("fitness_weight must be >= 0"));
        }
        Ok(())
    }
}

/// Search distribution state. Sampling standard deviation along dimension
/// j is step · sqrt(var[j]) for active j, zero otherwise.
#[derive(Clone, Debug)]
pub struct CmaState {
    pub mean: Vec<f64>,
    /// Per-dimension shape variances σ².
    pub var: Vec<f64>,
    /// Global step-size multiplier, adapted by cumulative path length.
    pub step: f64,
    pub generation: u64,
    /// Indices of the k largest-variance dimensions.
    pub active: Vec<usize>,
    /// Cumulative step-size adaptation path (active dimensions only).
    path: Vec<f64>,
}

pub(crate) const VAR_FLOOR: f64 = 1e-12;

fn top_k_indices(var: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..var.len()).collect();
    idx.sort_by(|&a, &b| var[b].partial_cmp(&var[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Initialize from the prior: μ ← prior mean, σ² ← t²·prior variance,
/// active set ← the k largest prior variances.
pub fn cma_init(prior: &DiagGaussian, cfg: &CmaConfig) -> Result<CmaState, OptimError> {
    cfg.validate(prior.dim())?;
    let t2 = cfg.initial_step * cfg.initial_step;
    let var: Vec<f64> = prior.var.iter().map(|v| (v * t2).max(VAR_FLOOR)).collect();
    let active = top_k_indices(&var, cfg.top_k);
    Ok(CmaState {
        mean: prior.mean.clone(),
        var,
        step: 1.0,
        generation: 0,
        active,
        path: vec![0.0; prior.dim()],
    })
}

/// Draw s candidates: z = μ + step·sqrt(σ²) ⊙ ε with ε zeroed outside the
/// active set, so frozen coordinates equal the mean exactly.
pub fn cma_sample(state: &CmaState, s: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    assert!(s >= 1);
    (0..s)
        .map(|_| {
            let mut z = state.mean.clone();
            for &j in &state.active {
                let sd = state.step * state.var[j].sqrt();
                z[j] += sd * rng.sample::<f64, _>(StandardNormal);
            }
            z
        })
        .collect()
}

/// Log-rank recombination weights over p parents, normalized to sum 1.
fn recombination_weights(p: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=p)
        .map(|i| (p as f64 + 0.5).ln() - (i as f64).ln())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|w| w / sum).collect()
}

/// One generation update from a fitness-ranked candidate list (descending;
/// ties broken upstream by complexity, then candidate index).
pub fn cma_update(
    state: &CmaState,
    ranked: &[(Vec<f64>, f64)],
    cfg: &CmaConfig,
) -> Result<CmaState, OptimError> {
    let d = state.mean.len();
    assert_eq!(ranked.len(), cfg.population, "ranked list must have s entries");
    if ranked.iter().all(|(_, f)| *f == f64::NEG_INFINITY) {
        return Err(OptimError::Degenerate);
    }
    let p = cfg.parents;
    let w = recombination_weights(p);
    let mu_eff = 1.0 / w.iter().map(|w| w * w).sum::<f64>();

    let mut mean = vec![0.0; d];
    for (i, (z, _)) in ranked.iter().take(p).enumerate() {
        for j in 0..d {
            mean[j] += w[i] * z[j];
        }
    }

    // Rank-mu diagonal variance update on active dimensions, with the
    // global step factored out so var keeps the distribution shape.
    let c_var = 2.0 / (d as f64 + 6.0);
    let step2 = state.step * state.step;
    let mut var = state.var.clone();
    for &j in &state.active {
        let mut sample_var = 0.0;
        for (i, (z, _)) in ranked.iter().take(p).enumerate() {
            let dz = z[j] - state.mean[j];
            sample_var += w[i] * dz * dz;
        }
        var[j] = ((1.0 - c_var) * var[j] + c_var * sample_var / step2).max(VAR_FLOOR);
    }

    // Cumulative step-size adaptation over the active subspace.
    let k = state.active.len() as f64;
    let c_s = (mu_eff + 2.0) / (k + mu_eff + 5.0);
    let d_s = 1.0 + 2.0 * (((mu_eff - 1.0) / (k + 1.0)).sqrt() - 1.0).max(0.0) + c_s;
    let chi_k = k.sqrt() * (1.0 - 1.0 / (4.0 * k) + 1.0 / (21.0 * k * k));
    let mut path = state.path.clone();
    let incr = (c_s * (2.0 - c_s) * mu_eff).sqrt();
    for &j in &state.active {
        let sd = state.step * state.var[j].sqrt();
        let delta = (mean[j] - state.mean[j]) / sd.max(VAR_FLOOR.sqrt());
        path[j] = (1.0 - c_s) * path[j] + incr * delta;
    }
    let path_norm: f64 = state
        .active
        .iter()
        .map(|&j| path[j] * path[j])
        .sum::<f64>()
        .sqrt();
    let step = (state.step * ((c_s / d_s) * (path_norm / chi_k - 1.0)).exp())
        .clamp(1e-12, 1e12);

    // Reselect the active set from the updated variances; drop stale path
    // components for dimensions leaving it.
    let active = top_k_indices(&var, cfg.top_k);
    let mut in_active = vec![false; d];
    for &j in &active {
        in_active[j] = true;
    }
    for (j, p) in path.iter_mut().enumerate() {
        if !in_active[j] {
            *p = 0.0;
        }
    }

    Ok(CmaState {
        mean,
        var,
        step,
        generation: state.generation + 1,
        active,
        path,
    })
}

/// Widen the search distribution in place (σ ×2 per retry) after a
/// degenerate generation.
pub fn widen(state: &mut CmaState) {
    for v in &mut state.var {
        *v *= 4.0;
    }
}
