use std::fs;
use std::path::{Path, PathBuf};

use lowmem_experts::{GeneratorSpec, StreamParams};
use serde::{Deserialize, Serialize};

use crate::checks::CheckLevel;
use crate::error::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case",
    deny_unknown_fields
)]
pub enum LearnerSpec {
    MwuFullMemory,
    Baseline {
        eps: f64,
        /// Defaults to the balanced epoch length.
        #[serde(default)]
        epoch_len: Option<u64>,
    },
    FullHierarchy {
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub learner: LearnerSpec,
    pub n: usize,
    pub horizon: u64,
    pub stream: GeneratorSpec,
    /// One trial per seed. The seed drives the learner and, unless
    /// `stream-seed` is set, the stream too.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub stream_seed: Option<u64>,
    /// Directory for per-trial traces and the summary. Left out of the
    /// summary so reruns into different directories compare equal.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub checks: CheckLevel,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, BenchError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| BenchError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Relative paths inside a config are resolved against the config's
/// directory.
fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let mut cfg: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let GeneratorSpec::CsvFile { path: p } = &mut cfg.stream {
            resolve(base, p);
        }
        if let Some(out) = &mut cfg.output {
            resolve(base, out);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.seeds.is_empty() {
            return Err(BenchError::Invalid("no trial seeds".into()));
        }
        StreamParams::new(self.n, self.horizon, 0)?;
        Ok(())
    }

    pub fn stream_params(&self, seed: u64) -> StreamParams {
        StreamParams {
            n: self.n,
            horizon: self.horizon,
            seed: self.stream_seed.unwrap_or(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case",
    deny_unknown_fields
)]
pub enum DemoLearner {
    MwuFullMemory,
    Baseline {
        eps: f64,
        #[serde(default)]
        epoch_len: Option<u64>,
    },
    /// Uniform over the instance's support.
    FixedEquilibrium,
    /// Uniform over the listed actions, whatever the instance.
    FixedUniformSubset { actions: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DemoConfig {
    pub n: usize,
    pub epsilon_prime: f64,
    pub rounds: u64,
    pub learner: DemoLearner,
    /// One game instance and learner run per seed.
    pub seeds: Vec<u64>,
    /// Fail if any trial's average raw loss exceeds this.
    #[serde(default)]
    pub max_average: Option<f64>,
    /// Fail if any trial whose strategy misses the support averages below
    /// this.
    #[serde(default)]
    pub min_average_when_disjoint: Option<f64>,
}

impl DemoConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.seeds.is_empty() {
            return Err(BenchError::Invalid("no trial seeds".into()));
        }
        if self.rounds == 0 {
            return Err(BenchError::Invalid("rounds must be positive".into()));
        }
        Ok(())
    }
}
