//! Multi-level learner.
//!
//! Level 1 is the pooled learner restarted every `T_1` days. Level `k >= 2`
//! treats `T_{k-1}` consecutive days as one decision day, and its pool holds
//! merged experts: for expert `i`, a two-way exponential-weights instance
//! choosing between "play `i`" and "do what level `k-1` does". Pool
//! statistics and the level's weights use the truncated loss
//! `max(merged avg - lower avg, -w_k)` per decision day. The learner plays
//! whatever the top level resolves to.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baseline::{ceil_clean, BaselineCore, BaselineParams};
use crate::error::LearnError;
use crate::learner::{expect_day, EpochClose, Learner, Phase, PoolView};
use crate::meter::{Category, MeterSnapshot, WordMeter};
use crate::mwu::MwuState;
use crate::pool::Pool;
use crate::stream::LossQuery;
use crate::{Day, ExpertId};

/// Words held by a merged expert: its two-arm weights plus the decision-day
/// loss sum.
pub const MERGE_WORDS: u64 = 2 * crate::mwu::WORDS_PER_ID + crate::mwu::WORDS_OVERHEAD + 1;

/// Per upper level: episode start, episode length, day in episode, epoch,
/// epoch length, decision, days in decision day, lower-level loss sum.
pub const LEVEL_OVERHEAD_WORDS: u64 = 8;

/// Learner-wide counters: day, level-1 episode start, realized losses.
const HIERARCHY_OVERHEAD_WORDS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelParams {
    pub k: usize,
    pub eps: f64,
    /// Decision days per epoch.
    pub b: u64,
    /// Calendar days per decision day (`T_{k-1}`, 1 at level 1).
    pub decision_day_len: u64,
    pub epochs_per_episode: u64,
    /// `T_k`.
    pub episode_len: u64,
    pub threshold: f64,
    /// Truncation floor magnitude `w_k` (unused at level 1).
    pub floor: f64,
    pub pool_cap: usize,
    pub sample_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyParams {
    pub n: usize,
    pub horizon: Day,
    pub delta: f64,
    pub seed: u64,
    pub eps: f64,
    pub levels: Vec<LevelParams>,
}

impl HierarchyParams {
    pub fn new(n: usize, horizon: Day, delta: f64, seed: u64) -> Result<Self, LearnError> {
        if n < 2 {
            return Err(LearnError::InvalidParams("need at least two experts".into()));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(LearnError::InvalidParams(format!(
                "delta must lie in (0, 1], got {delta}"
            )));
        }
        if horizon < n as u64 {
            return Err(LearnError::InvalidParams(format!(
                "horizon {horizon} shorter than n = {n}"
            )));
        }
        let nf = n as f64;
        let eps = nf.powf(-delta / 2.0);
        let b = ceil_clean(1.0 / (eps * eps));
        let sample_size = (b as usize).min(n);
        let log_nt = (nf * horizon as f64).ln();
        let ln_t = (horizon as f64).ln();

        let first_epochs = ceil_clean(eps * nf * nf);
        let upper_epochs = ceil_clean(eps * nf);
        let mut levels = vec![LevelParams {
            k: 1,
            eps,
            b,
            decision_day_len: 1,
            epochs_per_episode: first_epochs,
            episode_len: first_epochs * b,
            threshold: eps,
            floor: 0.0,
            pool_cap: ceil_clean(4.0 / eps * ln_t) as usize,
            sample_size,
        }];
        if levels[0].episode_len > horizon {
            log::warn!(
                "horizon {horizon} is shorter than the first episode ({} days); \
                 running a single truncated level",
                levels[0].episode_len
            );
        }
        loop {
            let prev = levels.last().expect("level 1 exists");
            let Some(len) = upper_epochs
                .checked_mul(b)
                .and_then(|x| x.checked_mul(prev.episode_len))
            else {
                break;
            };
            if len > horizon {
                break;
            }
            let k = prev.k + 1;
            let kf = k as i32;
            let log_pow = log_nt.powi(2 * kf - 1);
            levels.push(LevelParams {
                k,
                eps,
                b,
                decision_day_len: prev.episode_len,
                epochs_per_episode: upper_epochs,
                episode_len: len,
                threshold: eps.powi(kf) * log_pow,
                floor: eps.powi(kf - 1) * log_pow,
                pool_cap: ceil_clean(8.0 / eps * ln_t) as usize,
                sample_size,
            });
        }
        Ok(Self {
            n,
            horizon,
            delta,
            seed,
            eps,
            levels,
        })
    }

    /// Number of levels `K`.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> Option<&LevelParams> {
        self.levels.get(k.checked_sub(1)?)
    }

    pub fn epoch_len(&self) -> u64 {
        self.levels[0].b
    }

    /// `K` times the pooled-learner word ceiling at the largest level cap,
    /// plus a constant per level.
    pub fn word_bound(&self) -> u64 {
        let cap = self.levels.iter().map(|l| l.pool_cap).max().unwrap_or(0) as u64;
        let m = self.levels[0].sample_size as u64;
        let s = cap + m;
        let per_level = 2 * s * s + 4 * s + 4 * m + 16;
        self.depth() as u64 * (per_level + 16)
    }
}

/// `max(diff, -floor)`.
pub fn truncated_loss(diff: f64, floor: f64) -> f64 {
    diff.max(-floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeArm {
    Expert,
    Descend,
}

/// Merged expert `e_{k,i}` for the current decision day.
#[derive(Debug, Clone)]
pub struct MergeState {
    pub id: ExpertId,
    mwu: MwuState<MergeArm>,
    arm: MergeArm,
    day_sum: f64,
}

impl MergeState {
    fn fresh(id: ExpertId, horizon: Day) -> Result<Self, LearnError> {
        Ok(Self {
            id,
            mwu: MwuState::new(vec![MergeArm::Expert, MergeArm::Descend], horizon, (0.0, 1.0))?,
            arm: MergeArm::Descend,
            day_sum: 0.0,
        })
    }

    pub fn arm(&self) -> MergeArm {
        self.arm
    }

    pub fn expert_probability(&self) -> f64 {
        self.mwu.probability(MergeArm::Expert).unwrap_or(0.0)
    }
}

/// Counters for the truncation and nesting properties.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct HierarchyStats {
    pub truncated_terms: u64,
    /// Terms where the floor was active.
    pub floor_activations: u64,
    /// Terms below `-w_k` after truncation; stays zero.
    pub floor_violations: u64,
    /// Terms above `+w_k`.
    pub width_exceedances: u64,
    pub nesting_checks: u64,
    pub nesting_violations: u64,
}

impl HierarchyStats {
    pub fn width_exceedance_rate(&self) -> f64 {
        if self.truncated_terms == 0 {
            0.0
        } else {
            self.width_exceedances as f64 / self.truncated_terms as f64
        }
    }
}

#[derive(Debug, Clone)]
struct UpperLevel {
    params: LevelParams,
    n: usize,
    horizon: Day,
    rng: ChaCha8Rng,
    pool: Pool,
    mwu: Option<MwuState<ExpertId>>,
    merges: Vec<MergeState>,
    episode_start: Day,
    episode_len: Day,
    local: Day,
    epoch: u64,
    epoch_dd: u64,
    dd_done: u64,
    tail: bool,
    decision: Option<usize>,
    dd_days: u64,
    lower_sum: f64,
    closes: Vec<EpochClose>,
}

impl UpperLevel {
    fn new(params: LevelParams, n: usize, horizon: Day, seed: u64, meter: &mut WordMeter) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(params.k as u64);
        meter.charge(Category::Overhead, LEVEL_OVERHEAD_WORDS);
        Self {
            params,
            n,
            horizon,
            rng,
            pool: Pool::new(),
            mwu: None,
            merges: Vec::new(),
            episode_start: 0,
            episode_len: 0,
            local: 0,
            epoch: 0,
            epoch_dd: 0,
            dd_done: 0,
            tail: false,
            decision: None,
            dd_days: 0,
            lower_sum: 0.0,
            closes: Vec::new(),
        }
    }

    fn drop_epoch_state(&mut self, meter: &mut WordMeter) -> Result<(), LearnError> {
        if let Some(m) = self.mwu.take() {
            meter.release(Category::Mwu, m.words())?;
        }
        meter.release(Category::Merge, MERGE_WORDS * self.merges.len() as u64)?;
        self.merges.clear();
        self.decision = None;
        Ok(())
    }

    fn eta(&self, decision_days: u64) -> f64 {
        let w = self.params.floor;
        let ln = ((self.params.pool_cap + self.params.sample_size) as f64).ln();
        if ln > 0.0 {
            (ln / decision_days as f64).sqrt() / (2.0 * w)
        } else {
            1.0 / (2.0 * w)
        }
    }

    /// `lower_start` is the global day before the current episode of the
    /// level below.
    fn begin_day(
        &mut self,
        t: Day,
        lower_start: Day,
        meter: &mut WordMeter,
        stats: &mut HierarchyStats,
    ) -> Result<(), LearnError> {
        if self.local == self.episode_len {
            self.drop_epoch_state(meter)?;
            self.pool.clear(meter)?;
            self.episode_start = t - 1;
            self.episode_len = self.params.episode_len.min(self.horizon - (t - 1));
            self.local = 0;
            self.epoch = 0;
            self.dd_done = 0;
            self.epoch_dd = 0;
        }
        let dd_len = self.params.decision_day_len;
        if self.local.is_multiple_of(dd_len) {
            stats.nesting_checks += 1;
            if lower_start != t - 1 {
                stats.nesting_violations += 1;
            }
            if self.dd_done == self.epoch_dd {
                self.begin_epoch(meter)?;
            }
            let remaining = self.episode_len - self.local;
            let span = dd_len.min(remaining);
            for m in &mut self.merges {
                *m = MergeState::fresh(m.id, span)?;
            }
            let mwu = self.mwu.as_ref().ok_or(LearnError::NoDecision)?;
            let pick = mwu.sample(&mut self.rng);
            self.decision = mwu.ids().iter().position(|&i| i == pick);
            self.dd_days = 0;
            self.lower_sum = 0.0;
        }
        self.local += 1;
        Ok(())
    }

    fn begin_epoch(&mut self, meter: &mut WordMeter) -> Result<(), LearnError> {
        self.drop_epoch_state(meter)?;
        let dd_len = self.params.decision_day_len;
        let left_dd = (self.episode_len - self.local).div_ceil(dd_len);
        let len = self.params.b.min(left_dd);
        self.tail = len < self.params.b;
        let sample = if !self.tail || self.pool.is_empty() {
            let mut s: Vec<ExpertId> = index::sample(&mut self.rng, self.n, self.params.sample_size)
                .into_iter()
                .map(ExpertId::from_index)
                .collect();
            s.sort();
            s
        } else {
            Vec::new()
        };
        self.pool.begin_epoch(&sample, meter);
        let members = self.pool.members();
        let w = self.params.floor;
        let mwu = MwuState::with_eta(members.clone(), self.eta(len), (-w, w))?;
        meter.charge(Category::Mwu, mwu.words());
        self.mwu = Some(mwu);
        self.merges = members
            .into_iter()
            .map(|id| MergeState::fresh(id, dd_len))
            .collect::<Result<_, _>>()?;
        meter.charge(Category::Merge, MERGE_WORDS * self.merges.len() as u64);
        self.epoch += 1;
        self.epoch_dd = len;
        self.dd_done = 0;
        Ok(())
    }

    fn choose(&mut self, lower: ExpertId) -> Result<ExpertId, LearnError> {
        let decision = self.decision.ok_or(LearnError::NoDecision)?;
        for m in &mut self.merges {
            m.arm = m.mwu.sample(&mut self.rng);
        }
        let m = &self.merges[decision];
        Ok(match m.arm {
            MergeArm::Expert => m.id,
            MergeArm::Descend => lower,
        })
    }

    /// Distribution of today's play given the committed decision.
    fn mix(&self, lower: Vec<f64>) -> Vec<f64> {
        let Some(d) = self.decision else {
            return lower;
        };
        let m = &self.merges[d];
        let a = m.expert_probability();
        let mut q: Vec<f64> = lower.into_iter().map(|x| (1.0 - a) * x).collect();
        q[m.id.index()] += a;
        q
    }

    /// Feeds day `t` and returns this level's realized loss.
    fn observe(
        &mut self,
        oracle: &dyn LossQuery,
        t: Day,
        lower_loss: f64,
        meter: &mut WordMeter,
        stats: &mut HierarchyStats,
    ) -> Result<f64, LearnError> {
        let decision = self.decision.ok_or(LearnError::NoDecision)?;
        let mut realized = lower_loss;
        for (j, m) in self.merges.iter_mut().enumerate() {
            let own = oracle.loss(t, m.id)?;
            let merged = match m.arm {
                MergeArm::Expert => own,
                MergeArm::Descend => lower_loss,
            };
            m.mwu.update(&[own, lower_loss])?;
            m.day_sum += merged;
            if j == decision {
                realized = merged;
            }
        }
        self.lower_sum += lower_loss;
        self.dd_days += 1;

        let dd_end = self.local.is_multiple_of(self.params.decision_day_len) || self.local == self.episode_len;
        if dd_end {
            self.close_decision_day(meter, stats)?;
        }
        Ok(realized)
    }

    fn close_decision_day(
        &mut self,
        meter: &mut WordMeter,
        stats: &mut HierarchyStats,
    ) -> Result<(), LearnError> {
        let w = self.params.floor;
        let days = self.dd_days as f64;
        let lower_avg = self.lower_sum / days;
        let terms: Vec<f64> = self
            .merges
            .iter()
            .map(|m| {
                let diff = m.day_sum / days - lower_avg;
                let v = truncated_loss(diff, w);
                stats.truncated_terms += 1;
                if diff < -w {
                    stats.floor_activations += 1;
                }
                if v < -w {
                    stats.floor_violations += 1;
                }
                if v > w {
                    stats.width_exceedances += 1;
                }
                v
            })
            .collect();
        self.pool.record_day(&terms)?;
        let clamped: Vec<f64> = terms.iter().map(|&v| v.min(w)).collect();
        self.mwu
            .as_mut()
            .ok_or(LearnError::NoDecision)?
            .update(&clamped)?;
        self.decision = None;
        self.dd_done += 1;

        if self.dd_done == self.epoch_dd {
            if let Some(m) = self.mwu.take() {
                meter.release(Category::Mwu, m.words())?;
            }
            meter.release(Category::Merge, MERGE_WORDS * self.merges.len() as u64)?;
            self.merges.clear();
            if self.tail {
                self.pool.discard_fresh(meter)?;
            } else {
                let survivor = self.pool.close_epoch(self.epoch, meter)?;
                let report = self.pool.evict_pass(self.params.threshold, meter)?;
                self.closes.push(EpochClose {
                    level: self.params.k,
                    epoch: self.epoch,
                    survivor,
                    report,
                });
            }
        }
        Ok(())
    }

    fn audit_words(&self) -> u64 {
        LEVEL_OVERHEAD_WORDS
            + self.pool.audit_words()
            + self.mwu.as_ref().map_or(0, MwuState::words)
            + MERGE_WORDS * self.merges.len() as u64
    }

    fn view(&self) -> PoolView<'_> {
        PoolView {
            level: self.params.k,
            pool: &self.pool,
            threshold: self.params.threshold,
            cap: self.params.pool_cap,
            raw_losses: false,
        }
    }
}

/// The full multi-level learner.
#[derive(Debug, Clone)]
pub struct HierarchyLearner {
    params: HierarchyParams,
    first: BaselineCore,
    first_start: Day,
    upper: Vec<UpperLevel>,
    meter: WordMeter,
    stats: HierarchyStats,
    day: Day,
    phase: Phase,
    plays: Vec<ExpertId>,
    realized: Vec<f64>,
    resolved: Option<Day>,
}

impl HierarchyLearner {
    pub fn new(params: HierarchyParams) -> Result<Self, LearnError> {
        let mut meter = WordMeter::new();
        meter.charge(Category::Overhead, HIERARCHY_OVERHEAD_WORDS);
        let l1 = params.levels[0];
        let first_horizon = l1.episode_len.min(params.horizon);
        let base = BaselineParams {
            n: params.n,
            horizon: first_horizon,
            epoch_len: l1.b.min(first_horizon),
            eps: params.eps,
            seed: params.seed,
        };
        let first = BaselineCore::new(base, 1, true, &mut meter)?;
        let upper = params.levels[1..]
            .iter()
            .map(|&lp| UpperLevel::new(lp, params.n, params.horizon, params.seed, &mut meter))
            .collect();
        Ok(Self {
            params,
            first,
            first_start: 0,
            upper,
            meter,
            stats: HierarchyStats::default(),
            day: 0,
            phase: Phase::Idle,
            plays: Vec::new(),
            realized: Vec::new(),
            resolved: None,
        })
    }

    pub fn params(&self) -> &HierarchyParams {
        &self.params
    }

    pub fn stats(&self) -> HierarchyStats {
        self.stats
    }

    pub fn word_bound(&self) -> u64 {
        self.params.word_bound()
    }

    /// Loss of the expert level `k` resolved to on `day`, which must be the
    /// most recently observed day.
    pub fn level_realized_loss(&self, k: usize, day: Day) -> Result<f64, LearnError> {
        if self.resolved != Some(day) {
            return Err(LearnError::Unresolved(day));
        }
        k.checked_sub(1)
            .and_then(|i| self.realized.get(i))
            .copied()
            .ok_or_else(|| LearnError::InvalidParams(format!("no level {k}")))
    }

    /// Expert each level resolved to on the current day, level 1 first.
    pub fn level_plays(&self) -> &[ExpertId] {
        &self.plays
    }
}

impl Learner for HierarchyLearner {
    fn n(&self) -> usize {
        self.params.n
    }

    fn day(&self) -> Day {
        self.day
    }

    fn begin_day(&mut self, t: Day) -> Result<(), LearnError> {
        expect_day(self.day, 0, t)?;
        if t > self.params.horizon {
            return Err(LearnError::PastHorizon(t));
        }
        let t1 = self.params.levels[0].episode_len;
        if (t - 1).is_multiple_of(t1) {
            let len = t1.min(self.params.horizon - (t - 1));
            self.first.restart(len, t - 1, &mut self.meter)?;
            self.first_start = t - 1;
        }
        self.first.begin_day(t, &mut self.meter)?;
        let mut lower_start = self.first_start;
        for level in &mut self.upper {
            level.begin_day(t, lower_start, &mut self.meter, &mut self.stats)?;
            lower_start = level.episode_start;
        }
        self.day = t;
        self.phase = Phase::Begun;
        self.plays.clear();
        Ok(())
    }

    fn mixed_strategy(&self) -> Vec<f64> {
        let mut q = self.first.mixed_strategy();
        for level in &self.upper {
            q = level.mix(q);
        }
        q
    }

    fn choose(&mut self) -> Result<ExpertId, LearnError> {
        if self.phase != Phase::Begun {
            return Err(LearnError::NoDecision);
        }
        let mut play = self.first.choose()?;
        self.plays.clear();
        self.plays.push(play);
        for level in &mut self.upper {
            play = level.choose(play)?;
            self.plays.push(play);
        }
        self.phase = Phase::Chosen;
        Ok(play)
    }

    fn observe(&mut self, oracle: &dyn LossQuery) -> Result<(), LearnError> {
        if self.phase != Phase::Chosen {
            return Err(LearnError::NoDecision);
        }
        let t = self.day;
        self.first.observe(oracle, &mut self.meter)?;
        let mut loss = oracle.loss(t, self.plays[0])?;
        self.realized.clear();
        self.realized.push(loss);
        for level in &mut self.upper {
            loss = level.observe(oracle, t, loss, &mut self.meter, &mut self.stats)?;
            self.realized.push(loss);
        }
        self.resolved = Some(t);
        self.phase = Phase::Idle;
        Ok(())
    }

    fn meter(&self) -> MeterSnapshot {
        self.meter.snapshot()
    }

    fn audit_words(&self) -> u64 {
        HIERARCHY_OVERHEAD_WORDS
            + self.first.audit_words()
            + self.upper.iter().map(UpperLevel::audit_words).sum::<u64>()
    }

    fn take_epoch_closes(&mut self) -> Vec<EpochClose> {
        let mut all = self.first.take_closes();
        for level in &mut self.upper {
            all.append(&mut level.closes);
        }
        all
    }

    fn pools(&self) -> Vec<PoolView<'_>> {
        let mut v = vec![self.first.view()];
        v.extend(self.upper.iter().map(UpperLevel::view));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::BaselineLearner;
    use crate::stream::{GeneratorSpec, ObliviousOracle, StreamParams};

    #[test]
    fn level_parameters() {
        let p = HierarchyParams::new(16, 65_536, 1.0, 0).unwrap();
        assert_eq!(p.eps, 0.25);
        assert_eq!(p.epoch_len(), 16);
        assert_eq!(p.depth(), 2);
        assert_eq!(p.levels[0].episode_len, 1024);
        assert_eq!(p.levels[1].episode_len, 65_536);
        assert_eq!(p.levels[1].decision_day_len, 1024);
        assert_eq!(p.levels[1].epochs_per_episode, 4);

        let p = HierarchyParams::new(4, 256, 1.0, 0).unwrap();
        assert_eq!(p.eps, 0.5);
        assert_eq!(p.epoch_len(), 4);
        assert_eq!(p.levels[0].episode_len, 32);
        assert_eq!(p.levels[1].episode_len, 256);
        assert_eq!(p.depth(), 2);

        let p = HierarchyParams::new(16, 70_000, 1.0, 0).unwrap();
        assert_eq!(p.depth(), 2);
        assert_eq!(p.levels[1].episode_len, 65_536);

        let l = (4.0f64 * 256.0).ln();
        let p = HierarchyParams::new(4, 256, 1.0, 0).unwrap();
        assert!((p.levels[1].threshold - 0.25 * l.powi(3)).abs() < 1e-9);
        assert!((p.levels[1].floor - 0.5 * l.powi(3)).abs() < 1e-9);
        assert_eq!(p.levels[0].threshold, 0.5);

        assert!(HierarchyParams::new(4, 256, 0.0, 0).is_err());
        assert!(HierarchyParams::new(4, 256, 1.5, 0).is_err());
        assert!(HierarchyParams::new(1, 256, 1.0, 0).is_err());
        assert!(HierarchyParams::new(4, 3, 1.0, 0).is_err());
        assert_eq!(HierarchyParams::new(4, 20, 1.0, 0).unwrap().depth(), 1);
    }

    #[test]
    fn truncation_clamps_at_floor() {
        assert_eq!(truncated_loss(0.05, 0.1), 0.05);
        assert_eq!(truncated_loss(-0.3, 0.1), -0.1);
        assert_eq!(truncated_loss(-0.1, 0.1), -0.1);
    }

    fn iid(n: usize, horizon: Day) -> ObliviousOracle {
        ObliviousOracle::new(
            StreamParams::new(n, horizon, 8).unwrap(),
            &GeneratorSpec::IidBernoulli {
                means: None,
                mean_range: Some((0.2, 0.8)),
                seed: None,
                overrides: vec![],
            },
        )
        .unwrap()
    }

    #[test]
    fn single_level_matches_baseline() {
        let o = iid(4, 32);
        let p = HierarchyParams::new(4, 32, 1.0, 21).unwrap();
        assert_eq!(p.depth(), 1);
        let mut h = HierarchyLearner::new(p).unwrap();
        let bp = BaselineParams::new(4, 32, 0.5, 21).unwrap().with_epoch_len(4).unwrap();
        let mut b = BaselineLearner::new(bp).unwrap();
        for t in 1..=32 {
            assert_eq!(h.step(t, &o).unwrap(), b.step(t, &o).unwrap());
            assert_eq!(h.level_realized_loss(1, t).unwrap(), o.loss(t, b.last_decision().unwrap()).unwrap());
        }
        assert!(matches!(h.level_realized_loss(1, 5), Err(LearnError::Unresolved(5))));
    }

    #[test]
    fn identical_losses_keep_floor_and_common_loss() {
        let o = ObliviousOracle::new(
            StreamParams::new(4, 256, 1).unwrap(),
            &GeneratorSpec::Constant { means: vec![0.3; 4] },
        )
        .unwrap();
        let mut h = HierarchyLearner::new(HierarchyParams::new(4, 256, 1.0, 5).unwrap()).unwrap();
        for t in 1..=256 {
            h.step(t, &o).unwrap();
            assert_eq!(h.level_realized_loss(2, t).unwrap(), 0.3);
            assert_eq!(h.meter().current, h.audit_words());
        }
        let s = h.stats();
        assert_eq!(s.floor_violations, 0);
        assert_eq!(s.nesting_violations, 0);
        assert!(s.truncated_terms > 0);
        assert!(h.meter().peak <= h.word_bound());
    }

    #[test]
    fn runs_are_deterministic_and_nested() {
        let o = iid(4, 300);
        let run = || {
            let mut h = HierarchyLearner::new(HierarchyParams::new(4, 300, 1.0, 2).unwrap()).unwrap();
            let picks: Vec<_> = (1..=300).map(|t| h.step(t, &o).unwrap()).collect();
            (picks, h.stats())
        };
        let (a, sa) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert_eq!(sa.nesting_violations, 0);
        assert!(sa.nesting_checks > 0);
    }

    #[test]
    fn mixed_strategy_is_a_distribution() {
        let o = iid(4, 64);
        let mut h = HierarchyLearner::new(HierarchyParams::new(4, 256, 1.0, 3).unwrap()).unwrap();
        for t in 1..=64 {
            h.begin_day(t).unwrap();
            let q = h.mixed_strategy();
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            h.choose().unwrap();
            h.observe(&o).unwrap();
        }
    }
}
