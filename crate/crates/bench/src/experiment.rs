use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use lowmem_experts::{
    BaselineLearner, BaselineParams, Day, ExpertId, FullMemoryMwu, GeneratorSpec,
    HierarchyLearner, HierarchyParams, HierarchyStats, LearnError, Learner, LossOracle,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{check_learner, CheckLevel, Violation};
use crate::config::{ExperimentConfig, LearnerSpec};
use crate::error::BenchError;
use crate::regret::RegretTrace;

/// Violations kept per trial; the rest are only counted.
const KEPT_VIOLATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialMode {
    /// Regret trace plus checks.
    Full,
    /// Checks only; the harness never enumerates all experts.
    ChecksOnly,
}

#[allow(clippy::large_enum_variant)] // one per trial
pub(crate) enum AnyLearner {
    Mwu(FullMemoryMwu),
    Baseline(BaselineLearner),
    Hierarchy(HierarchyLearner),
}

impl AnyLearner {
    pub(crate) fn build(
        spec: &LearnerSpec,
        n: usize,
        horizon: Day,
        seed: u64,
    ) -> Result<Self, LearnError> {
        Ok(match spec {
            LearnerSpec::MwuFullMemory => Self::Mwu(FullMemoryMwu::new(n, horizon, seed)?),
            LearnerSpec::Baseline { eps, epoch_len } => {
                let mut p = BaselineParams::new(n, horizon, *eps, seed)?;
                if let Some(b) = epoch_len {
                    p = p.with_epoch_len(*b)?;
                }
                Self::Baseline(BaselineLearner::new(p)?)
            }
            LearnerSpec::FullHierarchy { delta } => {
                Self::Hierarchy(HierarchyLearner::new(HierarchyParams::new(n, horizon, *delta, seed)?)?)
            }
        })
    }

    pub(crate) fn get(&mut self) -> &mut dyn Learner {
        match self {
            Self::Mwu(l) => l,
            Self::Baseline(l) => l,
            Self::Hierarchy(l) => l,
        }
    }

    fn word_bound(&self) -> Option<u64> {
        match self {
            Self::Mwu(_) => None,
            Self::Baseline(l) => Some(l.params().word_bound()),
            Self::Hierarchy(l) => Some(l.word_bound()),
        }
    }

    fn hierarchy_stats(&self) -> Option<HierarchyStats> {
        match self {
            Self::Hierarchy(l) => Some(l.stats()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub regret: Option<f64>,
    pub alg_loss: Option<f64>,
    pub best_expert: Option<ExpertId>,
    pub best_loss: Option<f64>,
    pub peak_words: u64,
    pub word_bound: Option<u64>,
    /// Largest post-eviction pool per level.
    pub max_pool: Vec<usize>,
    pub epochs_checked: u64,
    pub violation_count: u64,
    pub violations: Vec<Violation>,
    pub hierarchy: Option<HierarchyStats>,
    #[serde(skip)]
    pub trace: Option<RegretTrace>,
}

impl TrialResult {
    pub fn clean(&self) -> bool {
        self.violation_count == 0
    }
}

/// Builds the oracle for one trial.
pub fn make_oracle(cfg: &ExperimentConfig, seed: u64) -> Result<LossOracle, BenchError> {
    Ok(LossOracle::make(cfg.stream_params(seed), &cfg.stream)?)
}

/// Runs one seed end to end against `oracle`.
pub fn run_trial(
    cfg: &ExperimentConfig,
    seed: u64,
    oracle: &LossOracle,
    mode: TrialMode,
) -> Result<TrialResult, BenchError> {
    let mut any = AnyLearner::build(&cfg.learner, cfg.n, cfg.horizon, seed)?;
    let word_bound = any.word_bound();
    let mut trace = (mode == TrialMode::Full).then(|| RegretTrace::new(cfg.n));
    let mut violations = Vec::new();
    let mut violation_count = 0u64;
    let mut epochs_checked = 0u64;
    let mut max_pool: Vec<usize> = Vec::new();
    {
        let l = any.get();
        for t in 1..=cfg.horizon {
            l.begin_day(t)?;
            let pick = l.choose()?;
            l.observe(oracle)?;
            let closes = l.take_epoch_closes();
            if !closes.is_empty() {
                for v in l.pools() {
                    if max_pool.len() < v.level {
                        max_pool.resize(v.level, 0);
                    }
                    max_pool[v.level - 1] = max_pool[v.level - 1].max(v.pool.len());
                }
            }
            let due = match cfg.checks {
                CheckLevel::Off => false,
                CheckLevel::Epoch => !closes.is_empty(),
                CheckLevel::Paranoid => true,
            };
            if due {
                epochs_checked += closes.len() as u64;
                let found = check_learner(l, t, closes.last().map(|c| c.epoch), word_bound);
                violation_count += found.len() as u64;
                for v in found {
                    if violations.len() < KEPT_VIOLATIONS {
                        log::warn!("seed {seed} day {t}: {} {}", v.kind, v.detail);
                        violations.push(v);
                    }
                }
            }
            if let Some(tr) = trace.as_mut() {
                let snap = l.meter();
                let pool_size = l.pools().iter().map(|v| v.pool.len()).sum();
                tr.record(oracle, t, pick, (snap.current, snap.peak), pool_size)?;
            }
        }
    }
    let peak_words = any.get().meter().peak;
    let (regret, alg_loss, best) = match &trace {
        Some(tr) => (
            Some(tr.regret()),
            Some(tr.alg_total()),
            tr.best_so_far(),
        ),
        None => (None, None, None),
    };
    Ok(TrialResult {
        seed,
        regret,
        alg_loss,
        best_expert: best.map(|b| b.0),
        best_loss: best.map(|b| b.1),
        peak_words,
        word_bound,
        max_pool,
        epochs_checked,
        violation_count,
        violations,
        hierarchy: any.hierarchy_stats(),
        trace,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub result: Option<TrialResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub failed_trials: usize,
    pub mean_regret: Option<f64>,
    pub max_regret: Option<f64>,
    pub p99_regret: Option<f64>,
    pub max_peak_words: u64,
    pub violations: u64,
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

impl Summary {
    pub fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let ok: Vec<&TrialResult> = outcomes.iter().filter_map(|o| o.result.as_ref()).collect();
        let mut regrets: Vec<f64> = ok.iter().filter_map(|r| r.regret).collect();
        regrets.sort_by(f64::total_cmp);
        Self {
            trials: outcomes.len(),
            failed_trials: outcomes.len() - ok.len(),
            mean_regret: (!regrets.is_empty())
                .then(|| regrets.iter().sum::<f64>() / regrets.len() as f64),
            max_regret: regrets.last().copied(),
            p99_regret: percentile(&regrets, 0.99),
            max_peak_words: ok.iter().map(|r| r.peak_words).max().unwrap_or(0),
            violations: ok.iter().map(|r| r.violation_count).sum(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub trials: Vec<TrialOutcome>,
}

impl ExperimentReport {
    /// No trial errored and no invariant failed.
    pub fn passed(&self) -> bool {
        self.summary.failed_trials == 0 && self.summary.violations == 0
    }
}

/// Runs every seed (in parallel) and writes traces and the summary when
/// the config names an output directory.
pub fn run_experiment(cfg: &ExperimentConfig, mode: TrialMode) -> Result<ExperimentReport, BenchError> {
    cfg.validate()?;
    let shared = if cfg.stream_seed.is_some() || matches!(cfg.stream, GeneratorSpec::CsvFile { .. }) {
        Some(make_oracle(cfg, cfg.seeds[0])?)
    } else {
        None
    };
    let trials: Vec<TrialOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<TrialResult, BenchError> {
                match &shared {
                    Some(o) => run_trial(cfg, seed, o, mode),
                    None => run_trial(cfg, seed, &make_oracle(cfg, seed)?, mode),
                }
            };
            match run() {
                Ok(r) => TrialOutcome {
                    seed,
                    result: Some(r),
                    error: None,
                },
                Err(e) => {
                    log::error!("seed {seed}: {e}");
                    TrialOutcome {
                        seed,
                        result: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let report = ExperimentReport {
        config: cfg.clone(),
        summary: Summary::from_outcomes(&trials),
        trials,
    };
    if let Some(dir) = &cfg.output {
        write_outputs(&report, dir)?;
    }
    Ok(report)
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace-seed{seed}.csv")
}

fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    for outcome in &report.trials {
        if let Some(tr) = outcome.result.as_ref().and_then(|r| r.trace.as_ref()) {
            let f = File::create(dir.join(trace_file_name(outcome.seed)))?;
            tr.write_csv(BufWriter::new(f))?;
        }
    }
    let f = File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), report)?;
    Ok(())
}
