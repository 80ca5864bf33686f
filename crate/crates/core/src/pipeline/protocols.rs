//! Evaluation protocols: latent interpolation, branch reconstruction
//! error, and the noise benchmark.

use super::{search, PipelineError, SearchConfig};
use crate::datagen::{add_noise, sample_dataset, CorpusEntry, GenConfig};
use crate::encoding::encode_samples;
use crate::expr::{from_prefix, Expr};
use crate::model::{
    decode_greedy_with_memory, embed_numeric_raw, encode_posterior, encode_prior, fuse,
    ModelError, ModelParams,
};
use crate::rng;
use crate::token::{edit_distance, Token};
use serde::{Deserialize, Serialize};

/// Default interpolation grid.
pub const DEFAULT_RATIOS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// One decoded interpolant. `expr` is the canonicalized (constants → c)
/// text when the decode parses, None when syntactically invalid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterpPoint {
    pub ratio: f64,
    pub expr: Option<String>,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterpReport {
    pub points: Vec<InterpPoint>,
    pub validity_rate: f64,
}

/// Linear interpolation z(ratio) = (1−ratio)·z1 + ratio·z2 between the
/// prior means of two datasets; the decoder's numeric conditioning is
/// interpolated the same way so the endpoints reproduce direct decodes
/// exactly.
pub fn interpolate(
    params: &ModelParams,
    data1: &[(Vec<f64>, f64)],
    data2: &[(Vec<f64>, f64)],
    ratios: &[f64],
) -> Result<InterpReport, PipelineError> {
    let grid1 = encode_samples(data1).map_err(ModelError::Encoding)?;
    let grid2 = encode_samples(data2).map_err(ModelError::Encoding)?;
    let g1 = encode_prior(params, &grid1)?;
    let g2 = encode_prior(params, &grid2)?;
    let xe1 = embed_numeric_raw(params, &grid1);
    let xe2 = embed_numeric_raw(params, &grid2);
    let m = xe1.rows().min(xe2.rows());
    let d = params.cfg.d;

    let mut points = Vec::with_capacity(ratios.len());
    let mut valid = 0usize;
    for &ratio in ratios {
        let z: Vec<f64> = g1
            .mean
            .iter()
            .zip(&g2.mean)
            .map(|(a, b)| (1.0 - ratio) * a + ratio * b)
            .collect();
        let mut xe = crate::tensor::Tensor::zeros(&[m, d]);
        for i in 0..m {
            for j in 0..d {
                xe.data[i * d + j] =
                    (1.0 - ratio) * xe1.data[i * d + j] + ratio * xe2.data[i * d + j];
            }
        }
        let fused = fuse(params, std::slice::from_ref(&z));
        let tokens = decode_greedy_with_memory(params, &fused, &xe);
        let expr = from_prefix(&tokens)
            .ok()
            .map(|e| e.canonicalize_constants().to_string());
        if expr.is_some() {
            valid += 1;
        }
        points.push(InterpPoint {
            ratio,
            expr,
            tokens: tokens.iter().map(|t| t.text()).collect(),
        });
    }
    let validity_rate = valid as f64 / ratios.len().max(1) as f64;
    Ok(InterpReport {
        points,
        validity_rate,
    })
}

/// Which encoder supplies the latent for reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconBranch {
    Posterior,
    Prior,
}

impl ReconBranch {
    pub fn name(self) -> &'static str {
        match self {
            ReconBranch::Posterior => "posterior",
            ReconBranch::Prior => "prior",
        }
    }
}

/// Normalized edit distance statistics over a corpus.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReconStats {
    pub branch: ReconBranch,
    pub mean: f64,
    pub std: f64,
    pub entries: usize,
}

fn strip_specials(tokens: &[Token]) -> Vec<Token> {
    tokens
        .iter()
        .copied()
        .filter(|t| !matches!(t, Token::Pad | Token::Bos | Token::Eos))
        .collect()
}

/// Deterministic reconstruction protocol: encode every corpus entry with
/// the chosen branch, decode greedily from the distribution mean, and
/// aggregate Levenshtein distance normalized by the target token length.
pub fn reconstruction_eval(
    params: &ModelParams,
    corpus: &[CorpusEntry],
    branch: ReconBranch,
) -> Result<ReconStats, PipelineError> {
    assert!(!corpus.is_empty(), "empty corpus");
    let mut dists = Vec::with_capacity(corpus.len());
    for entry in corpus {
        let expr = entry.expr()?;
        let grid = encode_samples(&entry.samples).map_err(ModelError::Encoding)?;
        let ids = crate::encoding::encode_equation(&expr, params.cfg.pad_len)
            .map_err(ModelError::Encoding)?;
        let gauss = match branch {
            ReconBranch::Posterior => encode_posterior(params, &grid, &ids)?,
            ReconBranch::Prior => encode_prior(params, &grid)?,
        };
        let fused = fuse(params, std::slice::from_ref(&gauss.mean));
        let decoded = crate::model::decode_greedy(params, &fused, &grid)?;
        let target = strip_specials(&crate::expr::to_prefix(&expr));
        let got = strip_specials(&decoded);
        let dist = edit_distance(&got, &target) as f64 / target.len().max(1) as f64;
        dists.push(dist);
    }
    let n = dists.len() as f64;
    let mean = dists.iter().sum::<f64>() / n;
    let std = if dists.len() > 1 {
        (dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(ReconStats {
        branch,
        mean,
        std,
        entries: dists.len(),
    })
}

/// One search run inside the noise benchmark
/// (CSV columns method,dataset,noise,r2,time_s,complexity,seed).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRow {
    pub method: String,
    pub dataset: String,
    pub noise: f64,
    pub r2: f64,
    pub time_s: f64,
    pub complexity: usize,
    pub seed: u64,
}

impl RunRow {
    pub const CSV_HEADER: &'static str = "method,dataset,noise,r2,time_s,complexity,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method, self.dataset, self.noise, self.r2, self.time_s, self.complexity, self.seed
        )
    }
}

/// Per-level aggregate of the noise benchmark.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseBenchRow {
    pub level: f64,
    /// Mean over successful runs.
    pub mean_r2: f64,
    pub mean_time_s: f64,
    pub mean_complexity: f64,
    pub failures: usize,
    pub runs: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseBenchReport {
    pub rows: Vec<NoiseBenchRow>,
    pub runs: Vec<RunRow>,
}

/// Default noise levels.
pub const DEFAULT_NOISE_LEVELS: [f64; 4] = [0.0, 0.001, 0.01, 0.1];

/// For each target and noise level: sample data, perturb the targets, run
/// the search, and aggregate. Per-run failures become rows with R² = −∞.
pub fn noise_bench(
    params: &ModelParams,
    targets: &[Expr],
    levels: &[f64],
    gen_cfg: &GenConfig,
    search_cfg: &SearchConfig,
    seed: u64,
) -> Result<NoiseBenchReport, PipelineError> {
    let mut runs = Vec::new();
    let mut rows = Vec::with_capacity(levels.len());
    for (li, &level) in levels.iter().enumerate() {
        let mut level_runs = Vec::new();
        for (ti, target) in targets.iter().enumerate() {
            let run_seed = rng::derive_seed_indexed(seed, "noise-bench", &[li as u64, ti as u64]);
            let mut data_rng = rng::stream_indexed(seed, "noise-data", &[li as u64, ti as u64]);
            let row = match sample_dataset(target, gen_cfg, &mut data_rng) {
                Ok(mut data) => {
                    let ys: Vec<f64> = data.iter().map(|(_, y)| *y).collect();
                    let noisy = add_noise(&ys, level, &mut data_rng);
                    for (pair, y) in data.iter_mut().zip(noisy) {
                        pair.1 = y;
                    }
                    let mut cfg = search_cfg.clone();
                    cfg.cma.seed = run_seed;
                    match search(params, &data, &cfg) {
                        Ok(res) => RunRow {
                            method: "latentsr".into(),
                            dataset: target.to_string(),
                            noise: level,
                            r2: res.r2,
                            time_s: res.time_s,
                            complexity: res.complexity,
                            seed: run_seed,
                        },
                        Err(_) => failed_row(target, level, run_seed),
                    }
                }
                Err(_) => failed_row(target, level, run_seed),
            };
            level_runs.push(row);
        }
        let ok: Vec<&RunRow> = level_runs.iter().filter(|r| r.r2.is_finite()).collect();
        let n_ok = ok.len().max(1) as f64;
        rows.push(NoiseBenchRow {
            level,
            mean_r2: if ok.is_empty() {
                f64::NEG_INFINITY
            } else {
                ok.iter().map(|r| r.r2).sum::<f64>() / n_ok
            },
            mean_time_s: ok.iter().map(|r| r.time_s).sum::<f64>() / n_ok,
            mean_complexity: ok.iter().map(|r| r.complexity as f64).sum::<f64>() / n_ok,
            failures: level_runs.len() - ok.len(),
            runs: level_runs.len(),
        });
        runs.extend(level_runs);
    }
    Ok(NoiseBenchReport { rows, runs })
}

fn failed_row(target: &Expr, level: f64, seed: u64) -> RunRow {
    RunRow {
        method: "latentsr".into(),
        dataset: target.to_string(),
        noise: level,
        r2: f64::NEG_INFINITY,
        time_s: 0.0,
        complexity: 0,
        seed,
    }
}
