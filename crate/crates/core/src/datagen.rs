//! Synthetic equation corpora and paired numeric datasets.
//!
//! Expressions are grown by a recursive sampler over a configurable
//! operator set (LogExp or Trig, plus single-family sets for the
//! function-family suites), paired with uniformly sampled inputs, and
//! streamed to a JSON-lines corpus deduplicated by canonical prefix string.

use crate::encoding::{detokenize_float, tokenize_float};
use crate::expr::{BinaryOp, Expr, UnaryOp};
use crate::rng;
use crate::token::Token;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum GenError {
    #[error("generation timed out: {0}")]
    Timeout(&'static str),
    #[error("invalid generator config: {0}")]
    InvalidConfig(&'static str),
    #[error("corpus io: {0}")]
    Io(String),
}

/// Operator sets. LogExp is {+,-,*,/,log,exp}; Trig adds {sin,cos,tan}.
/// The three single-family sets back the function-family suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorSet {
    LogExp,
    Trig,
    ExpFamily,
    LogFamily,
    TrigFamily,
}

impl OperatorSet {
    pub fn unary_ops(self) -> &'static [UnaryOp] {
        match self {
            OperatorSet::LogExp => &[UnaryOp::Log, UnaryOp::Exp],
            OperatorSet::Trig => &[
                UnaryOp::Log,
                UnaryOp::Exp,
                UnaryOp::Sin,
                UnaryOp::Cos,
                UnaryOp::Tan,
            ],
            OperatorSet::ExpFamily => &[UnaryOp::Exp],
            OperatorSet::LogFamily => &[UnaryOp::Log],
            OperatorSet::TrigFamily => &[UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Tan],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorSet::LogExp => "logexp",
            OperatorSet::Trig => "trig",
            OperatorSet::ExpFamily => "exp-family",
            OperatorSet::LogFamily => "log-family",
            OperatorSet::TrigFamily => "trig-family",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "logexp" => Some(OperatorSet::LogExp),
            "trig" => Some(OperatorSet::Trig),
            "exp-family" => Some(OperatorSet::ExpFamily),
            "log-family" => Some(OperatorSet::LogFamily),
            "trig-family" => Some(OperatorSet::TrigFamily),
            _ => None,
        }
    }
}

/// Generator configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenConfig {
    pub ops: OperatorSet,
    /// Complexity cap (token count of the equation).
    pub max_tokens: usize,
    /// Variables drawn from x0..x(max_vars-1).
    pub max_vars: usize,
    /// Numeric samples paired with each equation.
    pub samples_per_eq: usize,
    /// Uniform input domain per variable, shrunk to a positive interval for
    /// expressions whose evaluation requires positivity.
    pub domain: (f64, f64),
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            ops: OperatorSet::LogExp,
            max_tokens: 15,
            max_vars: 3,
            samples_per_eq: 200,
            domain: (-2.0, 2.0),
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.max_tokens < 1 {
            return Err(GenError::InvalidConfig("max_tokens must be >= 1"));
        }
        if self.max_vars < 1 || self.max_vars > crate::token::MAX_VARS {
            return Err(GenError::InvalidConfig("max_vars must be in 1..=10"));
        }
        if self.samples_per_eq < 1 {
            return Err(GenError::InvalidConfig("samples_per_eq must be >= 1"));
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(GenError::InvalidConfig("domain must be a proper interval"));
        }
        Ok(())
    }
}

/// One corpus record: an expression, its paired samples, and metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusEntry {
    /// Prefix token strings including BOS/EOS.
    pub expr_prefix: Vec<String>,
    /// Sample rows ([x0..x{D-1}], y).
    pub samples: Vec<(Vec<f64>, f64)>,
    pub family: String,
    #[serde(rename = "D")]
    pub dim: usize,
    pub seed: u64,
}

impl CorpusEntry {
    pub fn expr(&self) -> Result<Expr, GenError> {
        let toks: Option<Vec<Token>> = self
            .expr_prefix
            .iter()
            .map(|s| Token::from_text(s))
            .collect();
        let toks = toks.ok_or_else(|| GenError::Io("unknown token in corpus entry".into()))?;
        crate::expr::from_prefix(&toks)
            .map_err(|e| GenError::Io(format!("corpus entry not parseable: {e}")))
    }
}

const MAX_EXPR_REJECTIONS: usize = 10_000;

/// Draw one well-formed expression: complexity <= max_tokens, operators from
/// the configured set, variables below max_vars, constants log-uniform over
/// [0.1, 10) with random sign, snapped to four significant digits so the
/// prefix encoding round-trips exactly.
pub fn sample_expression(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Result<Expr, GenError> {
    cfg.validate()?;
    for _ in 0..MAX_EXPR_REJECTIONS {
        let e = grow(cfg, rng, 0);
        if e.complexity() <= cfg.max_tokens && e.max_var().is_some() {
            return Ok(e);
        }
    }
    Err(GenError::Timeout("expression sampler"))
}

/// Recursive growth. Branch probabilities are tuned so the expected token
/// count sits near 60% of the cap: for target size E, a binary-branch
/// probability b with unary u = b/2 satisfies E = 1/(1 - 2b - u).
fn grow(cfg: &GenConfig, rng: &mut ChaCha8Rng, depth: usize) -> Expr {
    let target = (cfg.max_tokens as f64 * 0.6).max(1.0);
    // E = 1/(1 - 2.5 b)  =>  b = (1 - 1/E)/2.5
    let b = ((1.0 - 1.0 / target) / 2.5).clamp(0.0, 0.38);
    let has_unary = !cfg.ops.unary_ops().is_empty();
    let u = if has_unary { b / 2.0 } else { 0.0 };
    // Hard depth cap keeps the recursion bounded even for generous targets.
    let max_depth = 2 + cfg.max_tokens;
    let roll: f64 = rng.random();
    if depth < max_depth && roll < b {
        let op = BinaryOp::ALL[rng.random_range(0..BinaryOp::ALL.len())];
        let l = grow(cfg, rng, depth + 1);
        let r = grow(cfg, rng, depth + 1);
        Expr::binary(op, l, r)
    } else if depth < max_depth && roll < b + u {
        let ops = cfg.ops.unary_ops();
        let op = ops[rng.random_range(0..ops.len())];
        Expr::unary(op, grow(cfg, rng, depth + 1))
    } else if rng.random::<f64>() < 0.7 {
        Expr::Var(rng.random_range(0..cfg.max_vars) as u8)
    } else {
        Expr::Const(sample_constant(rng))
    }
}

/// Log-uniform magnitude over [0.1, 10), random sign, snapped to the
/// four-significant-digit grid.
fn sample_constant(rng: &mut ChaCha8Rng) -> f64 {
    let mag = 10f64.powf(rng.random_range(-1.0..1.0));
    let v = if rng.random::<bool>() { mag } else { -mag };
    detokenize_float(tokenize_float(v).expect("constant in range"))
}

/// Effective sampling domain for an expression under this config.
pub fn effective_domain(e: &Expr, cfg: &GenConfig) -> (f64, f64) {
    if e.wants_positive_domain() && cfg.domain.0 <= 0.0 {
        (1e-6, cfg.domain.1.max(1e-3))
    } else {
        cfg.domain
    }
}

/// Sample m input points uniformly over the effective domain, rejecting
/// points where evaluation leaves the operator domain, and rejecting y
/// values outside the tokenizable range. Fails when the acceptance rate
/// drops below 1%.
pub fn sample_dataset(
    e: &Expr,
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<f64>, f64)>, GenError> {
    cfg.validate()?;
    let dim = e.max_var().map(|i| i as usize + 1).unwrap_or(1);
    let (lo, hi) = effective_domain(e, cfg);
    let m = cfg.samples_per_eq;
    let max_attempts = (100 * m).max(1000);
    let mut out = Vec::with_capacity(m);
    for _ in 0..max_attempts {
        if out.len() == m {
            break;
        }
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..hi)).collect();
        if let Ok(y) = e.eval(&x) {
            if tokenize_float(y).is_ok() && x.iter().all(|v| tokenize_float(*v).is_ok()) {
                out.push((x, y));
            }
        }
    }
    if out.len() < m {
        return Err(GenError::Timeout("dataset acceptance rate below 1%"));
    }
    Ok(out)
}

/// Add level-scaled Gaussian noise: y' = y + eps * std(y) * eta. With
/// eps = 0 or zero-variance targets the input passes through unchanged.
pub fn add_noise(ys: &[f64], level: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(level >= 0.0, "noise level must be non-negative");
    if level == 0.0 || ys.len() < 2 {
        return ys.to_vec();
    }
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return ys.to_vec();
    }
    ys.iter()
        .map(|y| y + level * sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}

/// Canonical prefix string used for deduplication.
pub fn canonical_prefix_string(e: &Expr) -> String {
    crate::expr::to_prefix(e)
        .iter()
        .map(|t| t.text())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generate `count` unique corpus entries.
pub fn generate_corpus(cfg: &GenConfig, count: usize) -> Result<Vec<CorpusEntry>, GenError> {
    cfg.validate()?;
    let mut seen: HashSet<String> = HashSet::new();
    let mut entries = Vec::with_capacity(count);
    let mut entry_idx: u64 = 0;
    let mut rejections = 0usize;
    while entries.len() < count {
        if rejections > MAX_EXPR_REJECTIONS {
            return Err(GenError::Timeout("could not reach requested corpus size"));
        }
        let entry_seed = rng::derive_seed_indexed(cfg.seed, "corpus-entry", &[entry_idx]);
        entry_idx += 1;
        let mut rng = rng::stream_indexed(cfg.seed, "corpus-entry", &[entry_idx - 1]);
        let e = match sample_expression(cfg, &mut rng) {
            Ok(e) => e,
            Err(_) => {
                rejections += 1;
                continue;
            }
        };
        let key = canonical_prefix_string(&e);
        if seen.contains(&key) {
            rejections += 1;
            continue;
        }
        let samples = match sample_dataset(&e, cfg, &mut rng) {
            Ok(s) => s,
            Err(_) => {
                rejections += 1;
                continue;
            }
        };
        let dim = e.max_var().map(|i| i as usize + 1).unwrap_or(1);
        seen.insert(key);
        rejections = 0;
        entries.push(CorpusEntry {
            expr_prefix: crate::expr::to_prefix(&e).iter().map(|t| t.text()).collect(),
            samples,
            family: cfg.ops.name().to_string(),
            dim,
            seed: entry_seed,
        });
    }
    Ok(entries)
}

/// Generate and stream a corpus to a JSON-lines file. A partial file is
/// removed on failure.
pub fn build_corpus(cfg: &GenConfig, count: usize, path: &Path) -> Result<(), GenError> {
    let entries = match generate_corpus(cfg, count) {
        Ok(e) => e,
        Err(e) => {
            let _ = std::fs::remove_file(path);
            return Err(e);
        }
    };
    let write = || -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        for entry in &entries {
            serde_json::to_writer(&mut w, entry)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(path);
        GenError::Io(e.to_string())
    })
}

/// Load a JSON-lines corpus.
pub fn load_corpus(path: &Path) -> Result<Vec<CorpusEntry>, GenError> {
    let file = std::fs::File::open(path).map_err(|e| GenError::Io(e.to_string()))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GenError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CorpusEntry = serde_json::from_str(&line)
            .map_err(|e| GenError::Io(format!("line {}: {e}", i + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_text;

    fn cfg(ops: OperatorSet, max_tokens: usize, max_vars: usize) -> GenConfig {
        GenConfig {
            ops,
            max_tokens,
            max_vars,
            samples_per_eq: 16,
            domain: (-2.0, 2.0),
            seed: 11,
        }
    }

    #[test]
    fn leaf_only_config() {
        let c = cfg(OperatorSet::LogExp, 1, 1);
        let mut rng = rng::stream(1, "t");
        for _ in 0..50 {
            let e = sample_expression(&c, &mut rng).unwrap();
            assert_eq!(e.complexity(), 1);
            assert_eq!(e, Expr::Var(0));
        }
    }

    #[test]
    fn draws_respect_cap_and_ops() {
        let c = cfg(OperatorSet::LogExp, 15, 3);
        let mut rng = rng::stream(2, "t");
        for _ in 0..2000 {
            let e = sample_expression(&c, &mut rng).unwrap();
            assert!(e.complexity() <= 15);
            assert!(e.max_var().unwrap() < 3);
            fn only_logexp(e: &Expr) -> bool {
                match e {
                    Expr::Var(_) | Expr::Const(_) | Expr::Hole => true,
                    Expr::Unary(op, a) => {
                        matches!(op, UnaryOp::Log | UnaryOp::Exp) && only_logexp(a)
                    }
                    Expr::Binary(_, l, r) => only_logexp(l) && only_logexp(r),
                }
            }
            assert!(only_logexp(&e));
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let c = cfg(OperatorSet::Trig, 12, 2);
        let a: Vec<Expr> = {
            let mut rng = rng::stream(5, "s");
            (0..20)
                .map(|_| sample_expression(&c, &mut rng).unwrap())
                .collect()
        };
        let b: Vec<Expr> = {
            let mut rng = rng::stream(5, "s");
            (0..20)
                .map(|_| sample_expression(&c, &mut rng).unwrap())
                .collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn dataset_exact_pre_noise() {
        let c = cfg(OperatorSet::LogExp, 9, 2);
        let e = parse_text("x0 * x1").unwrap();
        let mut rng = rng::stream(3, "d");
        let data = sample_dataset(&e, &c, &mut rng).unwrap();
        assert_eq!(data.len(), 16);
        for (x, y) in &data {
            assert_eq!(e.eval(x).unwrap(), *y);
            assert!(y.is_finite());
        }
    }

    #[test]
    fn dataset_filters_log_domain() {
        let c = cfg(OperatorSet::LogExp, 9, 1);
        let e = parse_text("log(x0)").unwrap();
        let mut rng = rng::stream(4, "d");
        let data = sample_dataset(&e, &c, &mut rng).unwrap();
        for (x, _) in &data {
            assert!(x[0] > 0.0);
        }
    }

    #[test]
    fn pathological_expression_times_out_or_filters() {
        // 1/x0 around 0: rejected points or finite outputs, never NaN/inf.
        let c = GenConfig {
            domain: (-1e-9, 1e-9),
            ..cfg(OperatorSet::LogExp, 9, 1)
        };
        let e = parse_text("1 / x0").unwrap();
        let mut rng = rng::stream(5, "d");
        match sample_dataset(&e, &c, &mut rng) {
            Ok(data) => assert!(data.iter().all(|(_, y)| y.is_finite())),
            Err(GenError::Timeout(_)) => {}
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn noise_zero_level_and_zero_variance() {
        let ys = [1.0, 2.0, 3.0];
        let mut rng = rng::stream(6, "n");
        assert_eq!(add_noise(&ys, 0.0, &mut rng), ys.to_vec());
        let flat = [4.0; 8];
        assert_eq!(add_noise(&flat, 0.1, &mut rng), flat.to_vec());
    }

    #[test]
    fn noise_scale_matches_level() {
        let mut rng = rng::stream(7, "n");
        let n = 100_000;
        let ys: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let noisy = add_noise(&ys, 0.1, &mut rng);
        let diffs: Vec<f64> = noisy.iter().zip(&ys).map(|(a, b)| a - b).collect();
        let dmean = diffs.iter().sum::<f64>() / n as f64;
        let dsd =
            (diffs.iter().map(|d| (d - dmean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let expected = 0.1 * sd;
        assert!(
            (dsd - expected).abs() / expected < 0.05,
            "dsd={dsd} expected={expected}"
        );
    }

    #[test]
    fn corpus_unique_and_deterministic() {
        let c = cfg(OperatorSet::LogExp, 9, 2);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        build_corpus(&c, 50, &p1).unwrap();
        build_corpus(&c, 50, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let entries = load_corpus(&p1).unwrap();
        assert_eq!(entries.len(), 50);
        let keys: HashSet<String> = entries
            .iter()
            .map(|e| e.expr_prefix.join(" "))
            .collect();
        assert_eq!(keys.len(), 50);
        for entry in &entries {
            let e = entry.expr().unwrap();
            for (x, y) in &entry.samples {
                assert_eq!(e.eval(x).unwrap(), *y);
            }
        }
    }

    #[test]
    fn empty_corpus_is_valid() {
        let c = cfg(OperatorSet::LogExp, 9, 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        build_corpus(&c, 0, &p).unwrap();
        assert_eq!(load_corpus(&p).unwrap().len(), 0);
    }
}
