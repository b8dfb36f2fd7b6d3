//! Epoch-based pooled learner.
//!
//! Days are grouped into epochs of `B` days. At the start of each epoch a
//! fresh sample `R` of experts joins the pool and exponential weights are
//! restarted (uniform) over pool and sample. At the end of the epoch only
//! the best member of `R` stays, and the eviction pass removes every entry
//! dominated by an older one.
//!
//! When `B` does not divide the horizon, the final short epoch runs the
//! weights over the existing pool but neither samples (unless the pool is
//! empty) nor evicts.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::LearnError;
use crate::learner::{expect_day, EpochClose, Learner, Phase, PoolView};
use crate::meter::{Category, MeterSnapshot, WordMeter};
use crate::mwu::MwuState;
use crate::pool::Pool;
use crate::stream::LossQuery;
use crate::{Day, ExpertId};

/// Counters the learner keeps besides pool and weights: day, epoch,
/// current epoch length, decision.
const OVERHEAD_WORDS: u64 = 4;

/// `ceil(x)` that ignores floating noise just above an integer.
pub(crate) fn ceil_clean(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as u64
    } else {
        x.ceil() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    pub n: usize,
    pub horizon: Day,
    /// Epoch length `B` in days.
    pub epoch_len: u64,
    /// Eviction threshold.
    pub eps: f64,
    pub seed: u64,
}

impl BaselineParams {
    /// Parameters with the default epoch length
    /// `B = round((T / (eps^2 n))^(2/3))` clamped to `[1, T]`.
    pub fn new(n: usize, horizon: Day, eps: f64, seed: u64) -> Result<Self, LearnError> {
        let p = Self {
            n,
            horizon,
            epoch_len: Self::default_epoch_len(n, horizon, eps),
            eps,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_epoch_len(mut self, epoch_len: u64) -> Result<Self, LearnError> {
        self.epoch_len = epoch_len;
        self.validate()?;
        Ok(self)
    }

    pub fn default_epoch_len(n: usize, horizon: Day, eps: f64) -> u64 {
        let b = (horizon as f64 / (eps * eps * n as f64)).powf(2.0 / 3.0).round();
        if b.is_finite() {
            (b as u64).clamp(1, horizon.max(1))
        } else {
            1
        }
    }

    /// Requires `0 < eps <= 1/2` and `1 <= B <= T`.
    pub fn validate(&self) -> Result<(), LearnError> {
        self.check(false)
    }

    /// `wide` admits any `eps < 1`, for the first level of the hierarchy
    /// where `eps = n^(-delta/2)` can exceed one half.
    pub(crate) fn check(&self, wide: bool) -> Result<(), LearnError> {
        if self.n < 1 {
            return Err(LearnError::InvalidParams("need at least one expert".into()));
        }
        if self.horizon < 1 {
            return Err(LearnError::InvalidParams("horizon must be at least 1".into()));
        }
        let eps_ok = if wide {
            self.eps > 0.0 && self.eps < 1.0
        } else {
            self.eps > 0.0 && self.eps <= 0.5
        };
        if !eps_ok {
            return Err(LearnError::InvalidParams(format!(
                "eps {} out of range",
                self.eps
            )));
        }
        if self.epoch_len < 1 || self.epoch_len > self.horizon {
            return Err(LearnError::InvalidParams(format!(
                "epoch length {} not in [1, {}]",
                self.epoch_len, self.horizon
            )));
        }
        Ok(())
    }

    /// `min(ceil(eps^-2), n)`.
    pub fn sample_size(&self) -> usize {
        (ceil_clean(1.0 / (self.eps * self.eps)) as usize).min(self.n)
    }

    /// Post-eviction pool bound `ceil(4 eps^-1 ln T)`.
    pub fn pool_cap(&self) -> usize {
        ceil_clean(4.0 / self.eps * (self.horizon as f64).ln()) as usize
    }

    /// Metered-word ceiling `2 S^2 + 4 S + 4 m + 16` with
    /// `S = pool_cap + m`.
    pub fn word_bound(&self) -> u64 {
        let m = self.sample_size() as u64;
        let s = self.pool_cap() as u64 + m;
        2 * s * s + 4 * s + 4 * m + 16
    }
}

/// The learner logic; every state change is mirrored on the meter passed
/// in, so the hierarchy can share one meter across levels.
#[derive(Debug, Clone)]
pub(crate) struct BaselineCore {
    params: BaselineParams,
    rng: ChaCha8Rng,
    pool: Pool,
    mwu: Option<MwuState<ExpertId>>,
    /// Days done in the current run.
    day: Day,
    /// Global index of the day before this run's first day.
    offset: Day,
    tail: bool,
    phase: Phase,
    decision: Option<ExpertId>,
    closes: Vec<EpochClose>,
    level: usize,
    configured_epoch_len: u64,
    wide: bool,
}

impl BaselineCore {
    pub(crate) fn new(
        params: BaselineParams,
        level: usize,
        wide: bool,
        meter: &mut WordMeter,
    ) -> Result<Self, LearnError> {
        params.check(wide)?;
        meter.charge(Category::Overhead, OVERHEAD_WORDS);
        Ok(Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            pool: Pool::new(),
            mwu: None,
            day: 0,
            offset: 0,
            tail: false,
            phase: Phase::Idle,
            decision: None,
            closes: Vec::new(),
            level,
            configured_epoch_len: params.epoch_len,
            wide,
        })
    }

    pub(crate) fn params(&self) -> &BaselineParams {
        &self.params
    }

    pub(crate) fn pool(&self) -> &Pool {
        &self.pool
    }

    pub(crate) fn day(&self) -> Day {
        self.offset + self.day
    }

    pub(crate) fn decision(&self) -> Option<ExpertId> {
        self.decision
    }

    /// Fresh run over `horizon` days starting after global day `offset`.
    /// The RNG stream continues.
    pub(crate) fn restart(
        &mut self,
        horizon: Day,
        offset: Day,
        meter: &mut WordMeter,
    ) -> Result<(), LearnError> {
        self.drop_mwu(meter)?;
        self.pool.clear(meter)?;
        self.params.horizon = horizon;
        self.params.epoch_len = self.configured_epoch_len.min(horizon);
        self.params.check(self.wide)?;
        self.day = 0;
        self.offset = offset;
        self.phase = Phase::Idle;
        self.decision = None;
        Ok(())
    }

    fn drop_mwu(&mut self, meter: &mut WordMeter) -> Result<(), LearnError> {
        if let Some(m) = self.mwu.take() {
            meter.release(Category::Mwu, m.words())?;
        }
        Ok(())
    }

    fn epoch_of(&self, local: Day) -> u64 {
        (local - 1) / self.params.epoch_len + 1
    }

    pub(crate) fn begin_day(&mut self, t: Day, meter: &mut WordMeter) -> Result<(), LearnError> {
        expect_day(self.day, self.offset, t)?;
        let local = self.day + 1;
        if local > self.params.horizon {
            return Err(LearnError::PastHorizon(t));
        }
        let b = self.params.epoch_len;
        if (local - 1).is_multiple_of(b) {
            let len = b.min(self.params.horizon - (local - 1));
            self.tail = len < b;
            let sample = if !self.tail || self.pool.is_empty() {
                let mut s: Vec<ExpertId> =
                    index::sample(&mut self.rng, self.params.n, self.params.sample_size())
                        .into_iter()
                        .map(ExpertId::from_index)
                        .collect();
                s.sort();
                s
            } else {
                Vec::new()
            };
            self.pool.begin_epoch(&sample, meter);
            self.drop_mwu(meter)?;
            let mwu = MwuState::new(self.pool.members(), len, (0.0, 1.0))?;
            meter.charge(Category::Mwu, mwu.words());
            self.mwu = Some(mwu);
        }
        self.day = local;
        self.phase = Phase::Begun;
        self.decision = None;
        Ok(())
    }

    pub(crate) fn mixed_strategy(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.params.n];
        if let Some(m) = &self.mwu {
            for (id, q) in m.ids().iter().zip(m.distribution()) {
                p[id.index()] = q;
            }
        }
        p
    }

    pub(crate) fn choose(&mut self) -> Result<ExpertId, LearnError> {
        if self.phase != Phase::Begun {
            return Err(LearnError::NoDecision);
        }
        let pick = self
            .mwu
            .as_ref()
            .ok_or(LearnError::NoDecision)?
            .sample(&mut self.rng);
        self.decision = Some(pick);
        self.phase = Phase::Chosen;
        Ok(pick)
    }

    pub(crate) fn observe(
        &mut self,
        oracle: &dyn LossQuery,
        meter: &mut WordMeter,
    ) -> Result<(), LearnError> {
        if self.phase != Phase::Chosen {
            return Err(LearnError::NoDecision);
        }
        let t = self.offset + self.day;
        let losses = self
            .pool
            .members()
            .into_iter()
            .map(|i| oracle.loss(t, i))
            .collect::<Result<Vec<_>, _>>()?;
        self.pool.record_day(&losses)?;
        self.mwu
            .as_mut()
            .ok_or(LearnError::NoDecision)?
            .update(&losses)?;
        self.phase = Phase::Idle;

        let local = self.day;
        let epoch_end = local.is_multiple_of(self.params.epoch_len) || local == self.params.horizon;
        if epoch_end {
            self.drop_mwu(meter)?;
            if self.tail {
                self.pool.discard_fresh(meter)?;
            } else {
                let epoch = self.epoch_of(local);
                let survivor = self.pool.close_epoch(epoch, meter)?;
                let report = self.pool.evict_pass(self.params.eps, meter)?;
                self.closes.push(EpochClose {
                    level: self.level,
                    epoch,
                    survivor,
                    report,
                });
            }
        }
        Ok(())
    }

    pub(crate) fn take_closes(&mut self) -> Vec<EpochClose> {
        std::mem::take(&mut self.closes)
    }

    pub(crate) fn audit_words(&self) -> u64 {
        OVERHEAD_WORDS + self.pool.audit_words() + self.mwu.as_ref().map_or(0, MwuState::words)
    }

    pub(crate) fn view(&self) -> PoolView<'_> {
        PoolView {
            level: self.level,
            pool: &self.pool,
            threshold: self.params.eps,
            cap: self.params.pool_cap(),
            raw_losses: true,
        }
    }
}

/// The pooled learner with its own word meter.
#[derive(Debug, Clone)]
pub struct BaselineLearner {
    core: BaselineCore,
    meter: WordMeter,
}

impl BaselineLearner {
    pub fn new(params: BaselineParams) -> Result<Self, LearnError> {
        let mut meter = WordMeter::new();
        let core = BaselineCore::new(params, 1, false, &mut meter)?;
        Ok(Self { core, meter })
    }

    pub fn params(&self) -> &BaselineParams {
        self.core.params()
    }

    pub fn pool(&self) -> &Pool {
        self.core.pool()
    }

    /// Ids tracked this epoch: pool entries then the fresh sample.
    pub fn tracked(&self) -> Vec<ExpertId> {
        self.core.pool().members()
    }

    pub fn last_decision(&self) -> Option<ExpertId> {
        self.core.decision()
    }
}

impl Learner for BaselineLearner {
    fn n(&self) -> usize {
        self.core.params().n
    }

    fn day(&self) -> Day {
        self.core.day()
    }

    fn begin_day(&mut self, t: Day) -> Result<(), LearnError> {
        self.core.begin_day(t, &mut self.meter)
    }

    fn mixed_strategy(&self) -> Vec<f64> {
        self.core.mixed_strategy()
    }

    fn choose(&mut self) -> Result<ExpertId, LearnError> {
        self.core.choose()
    }

    fn observe(&mut self, oracle: &dyn LossQuery) -> Result<(), LearnError> {
        self.core.observe(oracle, &mut self.meter)
    }

    fn meter(&self) -> MeterSnapshot {
        self.meter.snapshot()
    }

    fn audit_words(&self) -> u64 {
        self.core.audit_words()
    }

    fn take_epoch_closes(&mut self) -> Vec<EpochClose> {
        self.core.take_closes()
    }

    fn pools(&self) -> Vec<PoolView<'_>> {
        vec![self.core.view()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{GeneratorSpec, ObliviousOracle, StreamParams};

    fn oracle(n: usize, horizon: Day, spec: GeneratorSpec) -> ObliviousOracle {
        ObliviousOracle::new(StreamParams::new(n, horizon, 3).unwrap(), &spec).unwrap()
    }

    #[test]
    fn parameter_rules() {
        let p = BaselineParams::new(8, 64, 0.25, 0).unwrap().with_epoch_len(4).unwrap();
        assert_eq!(p.sample_size(), 8);
        assert!(matches!(
            BaselineParams::new(8, 64, 0.6, 0),
            Err(LearnError::InvalidParams(_))
        ));
        assert!(BaselineParams::new(8, 64, 0.0, 0).is_err());
        assert!(p.with_epoch_len(65).is_err());
        assert!(p.with_epoch_len(0).is_err());

        let big = BaselineParams::new(128, 100_000, 0.1, 0).unwrap();
        assert_eq!(big.pool_cap(), 461);
        assert_eq!(big.sample_size(), 100);
        assert_eq!(BaselineParams::new(128, 100_000, 0.2, 0).unwrap().sample_size(), 25);
        // (1e5 / (0.01 * 128))^(2/3) = 1827.51
        assert_eq!(big.epoch_len, 1828);
    }

    #[test]
    fn first_epoch_tracks_everyone_when_sample_covers_n() {
        let o = oracle(
            6,
            40,
            GeneratorSpec::Constant {
                means: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            },
        );
        let p = BaselineParams::new(6, 40, 0.25, 1).unwrap().with_epoch_len(5).unwrap();
        let mut l = BaselineLearner::new(p).unwrap();
        l.begin_day(1).unwrap();
        let mut tracked = l.tracked();
        tracked.sort();
        assert_eq!(tracked, (1..=6).map(ExpertId).collect::<Vec<_>>());
        l.choose().unwrap();
        l.observe(&o).unwrap();
        assert!(matches!(l.begin_day(3), Err(LearnError::OutOfOrderDay { .. })));
    }

    #[test]
    fn same_seed_same_decisions() {
        let o = oracle(
            20,
            300,
            GeneratorSpec::IidBernoulli {
                means: None,
                mean_range: Some((0.2, 0.8)),
                seed: None,
                overrides: vec![],
            },
        );
        let run = || {
            let p = BaselineParams::new(20, 300, 0.3, 17).unwrap().with_epoch_len(10).unwrap();
            let mut l = BaselineLearner::new(p).unwrap();
            (1..=300).map(|t| l.step(t, &o).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn older_equal_expert_evicts_younger() {
        let o = oracle(4, 12, GeneratorSpec::Constant { means: vec![0.5; 4] });
        let p = BaselineParams::new(4, 12, 0.25, 2).unwrap().with_epoch_len(4).unwrap();
        let mut l = BaselineLearner::new(p).unwrap();
        let mut closes = Vec::new();
        for t in 1..=12 {
            l.step(t, &o).unwrap();
            closes.extend(l.take_epoch_closes());
        }
        assert_eq!(closes.len(), 3);
        // epoch 1: best of R joins, nothing older to compare against
        assert!(closes[0].report.evicted.is_empty());
        // later epochs: the new survivor is dominated by the older entry
        for c in &closes[1..] {
            assert_eq!(c.report.evicted, vec![c.survivor.unwrap()]);
        }
        assert_eq!(l.pool().len(), 1);
        assert_eq!(l.meter().current, l.audit_words());
    }

    #[test]
    fn tail_epoch_skips_sampling_and_eviction() {
        let o = oracle(10, 11, GeneratorSpec::Constant { means: vec![0.5; 10] });
        let p = BaselineParams::new(10, 11, 0.4, 5).unwrap().with_epoch_len(4).unwrap();
        let mut l = BaselineLearner::new(p).unwrap();
        let mut closes = 0;
        for t in 1..=8 {
            l.step(t, &o).unwrap();
            closes += l.take_epoch_closes().len();
        }
        assert_eq!(closes, 2);
        let pool_before = l.pool().members();
        l.begin_day(9).unwrap();
        assert_eq!(l.tracked(), pool_before);
        l.choose().unwrap();
        l.observe(&o).unwrap();
        for t in 10..=11 {
            l.step(t, &o).unwrap();
        }
        assert!(l.take_epoch_closes().is_empty());
        assert!(matches!(l.begin_day(12), Err(LearnError::PastHorizon(12))));
        assert_eq!(l.meter().current, l.audit_words());
    }

    #[test]
    fn choose_requires_begin() {
        let p = BaselineParams::new(4, 8, 0.3, 0).unwrap();
        let mut l = BaselineLearner::new(p).unwrap();
        assert!(matches!(l.choose(), Err(LearnError::NoDecision)));
    }
}
