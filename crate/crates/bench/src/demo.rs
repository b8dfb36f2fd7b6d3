//! Repeated matching-pennies game: each round the learner commits its
//! mixed strategy, the opponent best-responds, and the learner is charged
//! the committed strategy's raw loss.

use lowmem_experts::{
    BaselineParams, BaselineLearner, ExpertId, FixedStrategy, FullMemoryMwu, GameInstance,
    GameOracle, Learner,
};
use serde::Serialize;

use crate::config::{DemoConfig, DemoLearner};
use crate::error::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Game value `1/k`.
    pub value: f64,
    /// `3/(2k)`.
    pub approx: f64,
    /// `19/(10k)`.
    pub failure: f64,
}

impl Thresholds {
    pub fn for_k(k: usize) -> Self {
        let k = k as f64;
        Self {
            value: 1.0 / k,
            approx: 3.0 / (2.0 * k),
            failure: 19.0 / (10.0 * k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoTrial {
    pub seed: u64,
    pub support: Vec<ExpertId>,
    /// Time-averaged raw loss of the committed strategies.
    pub average_raw: f64,
    pub min_round_raw: f64,
    pub max_round_raw: f64,
    /// The learner's first committed strategy puts no mass on the support.
    pub disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub n: usize,
    pub k: usize,
    pub rounds: u64,
    pub thresholds: Thresholds,
    pub trials: Vec<DemoTrial>,
    pub passed: bool,
}

fn build(spec: &DemoLearner, game: &GameInstance, rounds: u64, seed: u64) -> Result<Box<dyn Learner>, BenchError> {
    let n = game.n();
    Ok(match spec {
        DemoLearner::MwuFullMemory => Box::new(FullMemoryMwu::new(n, rounds, seed)?),
        DemoLearner::Baseline { eps, epoch_len } => {
            let mut p = BaselineParams::new(n, rounds, *eps, seed)?;
            if let Some(b) = epoch_len {
                p = p.with_epoch_len(*b)?;
            }
            Box::new(BaselineLearner::new(p)?)
        }
        DemoLearner::FixedEquilibrium => Box::new(FixedStrategy::new(game.equilibrium(), seed)?),
        DemoLearner::FixedUniformSubset { actions } => {
            let ids: Vec<ExpertId> = actions.iter().map(|&a| ExpertId(a)).collect();
            Box::new(FixedStrategy::uniform_over(n, &ids, seed)?)
        }
    })
}

fn run_one(cfg: &DemoConfig, k: usize, seed: u64) -> Result<DemoTrial, BenchError> {
    let game = GameInstance::sample(cfg.n, k, seed)?;
    let support = game.support().to_vec();
    let mut learner = build(&cfg.learner, &game, cfg.rounds, seed)?;
    let mut oracle = GameOracle::new(game, cfg.rounds);
    let mut total = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut disjoint = false;
    for t in 1..=cfg.rounds {
        learner.begin_day(t)?;
        let p = learner.mixed_strategy();
        if t == 1 {
            disjoint = support.iter().all(|s| p[s.index()] == 0.0);
        }
        let (_, raw) = oracle.commit(t, &p)?;
        learner.choose()?;
        learner.observe(&oracle)?;
        total += raw;
        lo = lo.min(raw);
        hi = hi.max(raw);
    }
    Ok(DemoTrial {
        seed,
        support,
        average_raw: total / cfg.rounds as f64,
        min_round_raw: lo,
        max_round_raw: hi,
        disjoint,
    })
}

pub fn run_lowerbound_demo(cfg: &DemoConfig) -> Result<DemoReport, BenchError> {
    cfg.validate()?;
    let k = GameInstance::support_size(cfg.epsilon_prime)?;
    if k < 2 || k > cfg.n {
        return Err(BenchError::Invalid(format!("support size {k} not in [2, {}]", cfg.n)));
    }
    let trials = cfg
        .seeds
        .iter()
        .map(|&s| run_one(cfg, k, s))
        .collect::<Result<Vec<_>, _>>()?;
    let under_max = cfg
        .max_average
        .is_none_or(|m| trials.iter().all(|t| t.average_raw <= m));
    let over_min = cfg.min_average_when_disjoint.is_none_or(|m| {
        trials
            .iter()
            .filter(|t| t.disjoint)
            .all(|t| t.average_raw > m)
    });
    Ok(DemoReport {
        n: cfg.n,
        k,
        rounds: cfg.rounds,
        thresholds: Thresholds::for_k(k),
        trials,
        passed: under_max && over_min,
    })
}
