//! Resolved run configuration: defaults, optional TOML config file, CLI
//! flag overrides — in that order. The resolved view is embedded in every
//! output artifact so a run can be reproduced from one document.

use anyhow::{Context, Result};
use latentsr_core::datagen::{GenConfig, OperatorSet};
use latentsr_core::model::TrainConfig;
use latentsr_core::optim::CmaConfig;
use latentsr_core::pipeline::SearchConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Generation settings as they appear in config files and artifact
/// headers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenSection {
    pub ops: String,
    pub max_tokens: usize,
    pub max_vars: usize,
    pub m: usize,
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub count: usize,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection {
            ops: "logexp".into(),
            max_tokens: 15,
            max_vars: 3,
            m: 200,
            domain_lo: -2.0,
            domain_hi: 2.0,
            count: 2000,
        }
    }
}

impl GenSection {
    pub fn to_gen_config(&self, seed: u64) -> Result<GenConfig> {
        let ops = OperatorSet::from_name(&self.ops)
            .with_context(|| format!("unknown operator set {:?}", self.ops))?;
        Ok(GenConfig {
            ops,
            max_tokens: self.max_tokens,
            max_vars: self.max_vars,
            samples_per_eq: self.m,
            domain: (self.domain_lo, self.domain_hi),
            seed,
        })
    }
}

/// Search settings as they appear in config files and artifact headers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchSection {
    pub population: usize,
    pub parents: usize,
    /// 0 means "half the latent dimension", resolved against the model.
    pub top_k: usize,
    pub initial_step: f64,
    pub max_generations: usize,
    pub omega: f64,
    pub fit_fraction: f64,
    pub patience: usize,
    pub min_improvement: f64,
    pub max_widen_retries: usize,
    pub jobs: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            population: 50,
            parents: 25,
            top_k: 0,
            initial_step: 1.1,
            max_generations: 200,
            omega: 0.005,
            fit_fraction: 0.75,
            patience: 20,
            min_improvement: 1e-6,
            max_widen_retries: 3,
            jobs: 1,
        }
    }
}

impl SearchSection {
    pub fn to_search_config(&self, latent_dim: usize, seed: u64) -> SearchConfig {
        SearchConfig {
            cma: CmaConfig {
                population: self.population,
                parents: self.parents,
                top_k: if self.top_k == 0 {
                    (latent_dim / 2).max(1)
                } else {
                    self.top_k
                },
                initial_step: self.initial_step,
                max_generations: self.max_generations,
                fitness_weight: self.omega,
                seed,
            },
            fit_fraction: self.fit_fraction,
            patience: self.patience,
            min_improvement: self.min_improvement,
            max_widen_retries: self.max_widen_retries,
            jobs: self.jobs,
        }
    }
}

/// Load a TOML document into any deserializable config type.
pub fn load_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Write the resolved config echo next to an artifact:
/// `<artifact>.config.toml`.
pub fn write_sidecar<T: Serialize>(artifact: &Path, cfg: &T) -> Result<PathBuf> {
    let mut name = artifact
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    name.push_str(".config.toml");
    let path = artifact.with_file_name(name);
    let text = toml::to_string_pretty(cfg).context("serializing config echo")?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Merge helper: explicit flag beats config file beats default.
pub fn pick<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Shared header fields embedded in every JSON artifact.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArtifactHeader<T> {
    pub tool_version: String,
    pub command: String,
    pub config: T,
}

impl<T> ArtifactHeader<T> {
    pub fn new(command: &str, config: T) -> Self {
        ArtifactHeader {
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            config,
        }
    }
}

/// Columns x0..x{D-1},y with '.' decimals.
pub fn read_data_csv(path: &Path) -> Result<Vec<(Vec<f64>, f64)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading data {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty data file")?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len().checked_sub(1).context("need at least x0,y")?;
    for (i, c) in cols.iter().take(d).enumerate() {
        anyhow::ensure!(
            *c == format!("x{i}"),
            "expected header column x{i}, found {c:?}"
        );
    }
    anyhow::ensure!(cols[d] == "y", "last header column must be y, found {:?}", cols[d]);
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let vals: Vec<&str> = line.split(',').map(str::trim).collect();
        anyhow::ensure!(
            vals.len() == d + 1,
            "line {}: expected {} columns, found {}",
            lineno + 2,
            d + 1,
            vals.len()
        );
        let mut nums = Vec::with_capacity(d + 1);
        for v in &vals {
            nums.push(
                v.parse::<f64>()
                    .with_context(|| format!("line {}: bad number {v:?}", lineno + 2))?,
            );
        }
        let y = nums.pop().unwrap();
        out.push((nums, y));
    }
    anyhow::ensure!(!out.is_empty(), "data file has no rows");
    Ok(out)
}

pub fn write_data_csv(path: &Path, data: &[(Vec<f64>, f64)]) -> Result<()> {
    use std::fmt::Write as _;
    anyhow::ensure!(!data.is_empty(), "no data to write");
    let d = data[0].0.len();
    let mut s = String::new();
    for i in 0..d {
        let _ = write!(s, "x{i},");
    }
    s.push_str("y\n");
    for (x, y) in data {
        for v in x {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{y}");
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// TrainConfig section defaults for the CLI (same as the library's).
pub fn default_train_config() -> TrainConfig {
    TrainConfig::default()
}
