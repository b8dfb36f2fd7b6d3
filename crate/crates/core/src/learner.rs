//! Day-by-day driving interface shared by every learner.
//!
//! A day is split in three calls so that an adaptive environment can look
//! at the committed mixed strategy before losses exist:
//! [`begin_day`](Learner::begin_day) does the epoch bookkeeping,
//! [`mixed_strategy`](Learner::mixed_strategy) exposes the distribution the
//! draw will come from, [`choose`](Learner::choose) draws, and
//! [`observe`](Learner::observe) queries the oracle and updates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::LearnError;
use crate::meter::{Category, MeterSnapshot, WordMeter};
use crate::mwu::MwuState;
use crate::pool::{EvictionReport, Pool};
use crate::stream::LossQuery;
use crate::{Day, ExpertId};

/// One finished epoch at some level: who survived the sample and who was
/// evicted.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochClose {
    pub level: usize,
    pub epoch: u64,
    pub survivor: Option<ExpertId>,
    pub report: EvictionReport,
}

/// A level's pool together with the constants its invariants use.
#[derive(Debug, Clone, Copy)]
pub struct PoolView<'a> {
    pub level: usize,
    pub pool: &'a Pool,
    /// Eviction threshold.
    pub threshold: f64,
    /// Post-eviction size bound.
    pub cap: usize,
    /// Whether the potential and loss-length properties apply (raw losses
    /// in `[0, 1]`).
    pub raw_losses: bool,
}

pub trait Learner {
    fn n(&self) -> usize;

    /// Days fully or partially processed so far.
    fn day(&self) -> Day;

    fn begin_day(&mut self, t: Day) -> Result<(), LearnError>;

    /// Distribution over `[n]` the upcoming draw follows.
    fn mixed_strategy(&self) -> Vec<f64>;

    fn choose(&mut self) -> Result<ExpertId, LearnError>;

    fn observe(&mut self, oracle: &dyn LossQuery) -> Result<(), LearnError>;

    fn step(&mut self, t: Day, oracle: &dyn LossQuery) -> Result<ExpertId, LearnError> {
        self.begin_day(t)?;
        let pick = self.choose()?;
        self.observe(oracle)?;
        Ok(pick)
    }

    fn meter(&self) -> MeterSnapshot;

    /// Recount of the words held by live state.
    fn audit_words(&self) -> u64;

    /// Epoch closes since the last call.
    fn take_epoch_closes(&mut self) -> Vec<EpochClose> {
        Vec::new()
    }

    fn pools(&self) -> Vec<PoolView<'_>> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Phase {
    Idle,
    Begun,
    Chosen,
}

pub(crate) fn expect_day(done: Day, offset: Day, t: Day) -> Result<(), LearnError> {
    let expected = offset + done + 1;
    if t != expected {
        return Err(LearnError::OutOfOrderDay { expected, got: t });
    }
    Ok(())
}

/// Plain exponential weights over all `n` experts.
#[derive(Debug, Clone)]
pub struct FullMemoryMwu {
    mwu: MwuState<ExpertId>,
    rng: ChaCha8Rng,
    day: Day,
    horizon: Day,
    phase: Phase,
    meter: WordMeter,
}

const FULL_MWU_OVERHEAD: u64 = 2;

impl FullMemoryMwu {
    pub fn new(n: usize, horizon: Day, seed: u64) -> Result<Self, LearnError> {
        let ids = (0..n).map(ExpertId::from_index).collect();
        let mwu = MwuState::new(ids, horizon, (0.0, 1.0))?;
        let mut meter = WordMeter::new();
        meter.charge(Category::Mwu, mwu.words());
        meter.charge(Category::Overhead, FULL_MWU_OVERHEAD);
        Ok(Self {
            mwu,
            rng: ChaCha8Rng::seed_from_u64(seed),
            day: 0,
            horizon,
            phase: Phase::Idle,
            meter,
        })
    }

    pub fn eta(&self) -> f64 {
        self.mwu.eta()
    }
}

impl Learner for FullMemoryMwu {
    fn n(&self) -> usize {
        self.mwu.len()
    }

    fn day(&self) -> Day {
        self.day
    }

    fn begin_day(&mut self, t: Day) -> Result<(), LearnError> {
        expect_day(self.day, 0, t)?;
        if t > self.horizon {
            return Err(LearnError::PastHorizon(t));
        }
        self.day = t;
        self.phase = Phase::Begun;
        Ok(())
    }

    fn mixed_strategy(&self) -> Vec<f64> {
        self.mwu.distribution()
    }

    fn choose(&mut self) -> Result<ExpertId, LearnError> {
        if self.phase != Phase::Begun {
            return Err(LearnError::NoDecision);
        }
        self.phase = Phase::Chosen;
        Ok(self.mwu.sample(&mut self.rng))
    }

    fn observe(&mut self, oracle: &dyn LossQuery) -> Result<(), LearnError> {
        if self.phase != Phase::Chosen {
            return Err(LearnError::NoDecision);
        }
        let losses = self
            .mwu
            .ids()
            .iter()
            .map(|&i| oracle.loss(self.day, i))
            .collect::<Result<Vec<_>, _>>()?;
        self.mwu.update(&losses)?;
        self.phase = Phase::Idle;
        Ok(())
    }

    fn meter(&self) -> MeterSnapshot {
        self.meter.snapshot()
    }

    fn audit_words(&self) -> u64 {
        self.mwu.words() + FULL_MWU_OVERHEAD
    }
}

/// A learner that plays the same mixed strategy every day. Used as a
/// diagnostic in game demonstrations.
#[derive(Debug, Clone)]
pub struct FixedStrategy {
    p: Vec<f64>,
    rng: ChaCha8Rng,
    day: Day,
    meter: WordMeter,
}

impl FixedStrategy {
    pub fn new(p: Vec<f64>, seed: u64) -> Result<Self, LearnError> {
        if p.is_empty() {
            return Err(LearnError::EmptyExpertSet);
        }
        let total: f64 = p.iter().sum();
        if p.iter().any(|x| x.is_nan() || *x < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(LearnError::InvalidParams(format!(
                "fixed strategy is not a distribution (mass {total})"
            )));
        }
        let mut meter = WordMeter::new();
        meter.charge(Category::Overhead, p.len() as u64);
        Ok(Self {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
            day: 0,
            meter,
        })
    }

    /// Uniform over the given actions of `[n]`.
    pub fn uniform_over(n: usize, support: &[ExpertId], seed: u64) -> Result<Self, LearnError> {
        if support.is_empty() {
            return Err(LearnError::EmptyExpertSet);
        }
        let mut p = vec![0.0; n];
        for s in support {
            if s.0 < 1 || s.index() >= n {
                return Err(LearnError::InvalidParams(format!("action {s} outside [1, {n}]")));
            }
            p[s.index()] = 1.0 / support.len() as f64;
        }
        Self::new(p, seed)
    }
}

impl Learner for FixedStrategy {
    fn n(&self) -> usize {
        self.p.len()
    }

    fn day(&self) -> Day {
        self.day
    }

    fn begin_day(&mut self, t: Day) -> Result<(), LearnError> {
        expect_day(self.day, 0, t)?;
        self.day = t;
        Ok(())
    }

    fn mixed_strategy(&self) -> Vec<f64> {
        self.p.clone()
    }

    fn choose(&mut self) -> Result<ExpertId, LearnError> {
        let mut u: f64 = self.rng.gen();
        for (i, &x) in self.p.iter().enumerate() {
            if u < x {
                return Ok(ExpertId::from_index(i));
            }
            u -= x;
        }
        let last = self.p.iter().rposition(|&x| x > 0.0).unwrap_or(0);
        Ok(ExpertId::from_index(last))
    }

    fn observe(&mut self, _oracle: &dyn LossQuery) -> Result<(), LearnError> {
        Ok(())
    }

    fn meter(&self) -> MeterSnapshot {
        self.meter.snapshot()
    }

    fn audit_words(&self) -> u64 {
        self.p.len() as u64
    }
}
