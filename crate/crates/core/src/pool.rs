//! The pool of tracked experts and its triangular loss bookkeeping.
//!
//! Each entry remembers the epoch it joined, its own average loss since
//! then, and, for every strictly younger entry, its own average loss over
//! that younger entry's residence interval. That is exactly what the
//! eviction rule reads; when an entry is evicted, the column of cross
//! accumulators that referenced it goes away with it.
//!
//! Averages are averages of per-epoch averages, so all interval lengths are
//! counted in epochs.

use std::fmt::Write as _;

use crate::error::LearnError;
use crate::meter::{Category, WordMeter};
use crate::ExpertId;

/// Slack on the eviction inequality so exact ties evict.
pub const EVICTION_GUARD: f64 = 1e-12;

/// Words per accumulator: sum and count.
pub const ACCUMULATOR_WORDS: u64 = 2;
/// Words per entry: id, entry epoch, own accumulator, running epoch sum.
pub const ENTRY_WORDS: u64 = 3 + ACCUMULATOR_WORDS;
/// Words per fresh sample member: id and running epoch sum.
pub const FRESH_WORDS: u64 = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntervalAccumulator {
    sum: f64,
    count: u32,
}

impl IntervalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn seeded(epoch_average: f64) -> Self {
        Self {
            sum: epoch_average,
            count: 1,
        }
    }

    pub fn from_parts(sum: f64, count: u32) -> Self {
        Self { sum, count }
    }

    pub fn push(&mut self, epoch_average: f64) {
        self.sum += epoch_average;
        self.count += 1;
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn average(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub id: ExpertId,
    pub entry_epoch: u64,
    pub own: IntervalAccumulator,
    /// This expert's loss over each younger entry's interval, oldest first.
    cross: Vec<(ExpertId, IntervalAccumulator)>,
    epoch_sum: f64,
}

impl PoolEntry {
    pub fn new(
        id: ExpertId,
        entry_epoch: u64,
        own: IntervalAccumulator,
        cross: Vec<(ExpertId, IntervalAccumulator)>,
    ) -> Self {
        Self {
            id,
            entry_epoch,
            own,
            cross,
            epoch_sum: 0.0,
        }
    }

    pub fn cross(&self) -> &[(ExpertId, IntervalAccumulator)] {
        &self.cross
    }

    /// Average over the interval of the younger entry `younger`.
    pub fn cross_average(&self, younger: ExpertId) -> Option<f64> {
        self.cross
            .iter()
            .find(|(id, _)| *id == younger)
            .and_then(|(_, acc)| acc.average())
    }

    fn words(&self) -> u64 {
        ENTRY_WORDS + ACCUMULATOR_WORDS * self.cross.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
struct FreshMember {
    id: ExpertId,
    epoch_sum: f64,
}

/// Result of one eviction pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvictionReport {
    pub before: usize,
    pub evicted: Vec<ExpertId>,
}

/// Entries sorted by entry epoch (oldest first) plus the current epoch's
/// fresh sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pool {
    entries: Vec<PoolEntry>,
    fresh: Vec<FreshMember>,
    epoch_days: u32,
}

/// Returns the id with the lowest epoch average, ties to the lowest id.
pub fn best_of_sample(averages: &[(ExpertId, f64)]) -> Option<ExpertId> {
    averages
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, _)| id)
}

impl Pool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a pool from hand-made entries (oldest first). No metering.
    pub fn from_entries(entries: Vec<PoolEntry>) -> Self {
        Self {
            entries,
            fresh: Vec::new(),
            epoch_days: 0,
        }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fresh_len(&self) -> usize {
        self.fresh.len()
    }

    pub fn fresh_ids(&self) -> Vec<ExpertId> {
        self.fresh.iter().map(|f| f.id).collect()
    }

    pub fn contains(&self, id: ExpertId) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    /// Pool entries then the fresh sample; the order losses are recorded in.
    pub fn members(&self) -> Vec<ExpertId> {
        self.entries
            .iter()
            .map(|e| e.id)
            .chain(self.fresh.iter().map(|f| f.id))
            .collect()
    }

    pub fn member_count(&self) -> usize {
        self.entries.len() + self.fresh.len()
    }

    /// Starts an epoch with `sample` as the fresh set. Ids already in the
    /// pool are dropped from the sample; returns how many were dropped.
    pub fn begin_epoch(&mut self, sample: &[ExpertId], meter: &mut WordMeter) -> usize {
        for e in &mut self.entries {
            e.epoch_sum = 0.0;
        }
        self.epoch_days = 0;
        let mut dropped = 0;
        for &id in sample {
            if self.contains(id) || self.fresh.iter().any(|f| f.id == id) {
                dropped += 1;
                continue;
            }
            self.fresh.push(FreshMember { id, epoch_sum: 0.0 });
            meter.charge(Category::Pool, FRESH_WORDS);
        }
        dropped
    }

    /// Adds one day's (or decision day's) losses in [`members`](Self::members) order.
    pub fn record_day(&mut self, losses: &[f64]) -> Result<(), LearnError> {
        if losses.len() != self.member_count() {
            return Err(LearnError::LossCount {
                expected: self.member_count(),
                got: losses.len(),
            });
        }
        let (pooled, fresh) = losses.split_at(self.entries.len());
        for (e, l) in self.entries.iter_mut().zip(pooled) {
            e.epoch_sum += l;
        }
        for (f, l) in self.fresh.iter_mut().zip(fresh) {
            f.epoch_sum += l;
        }
        self.epoch_days += 1;
        Ok(())
    }

    pub fn epoch_days(&self) -> u32 {
        self.epoch_days
    }

    /// Epoch averages of the fresh sample so far.
    pub fn fresh_averages(&self) -> Vec<(ExpertId, f64)> {
        let d = self.epoch_days.max(1) as f64;
        self.fresh.iter().map(|f| (f.id, f.epoch_sum / d)).collect()
    }

    /// Folds the finished epoch into every interval accumulator, keeps the
    /// best fresh member as a new entry joining at `epoch`, and drops the
    /// rest of the sample. Returns the survivor.
    pub fn close_epoch(
        &mut self,
        epoch: u64,
        meter: &mut WordMeter,
    ) -> Result<Option<ExpertId>, LearnError> {
        if self.epoch_days == 0 {
            return Err(LearnError::InvalidParams("closing an epoch with no days".into()));
        }
        let days = self.epoch_days as f64;
        for e in &mut self.entries {
            let avg = e.epoch_sum / days;
            e.own.push(avg);
            for (_, acc) in &mut e.cross {
                acc.push(avg);
            }
        }
        let survivor = best_of_sample(&self.fresh_averages());
        if let Some(id) = survivor {
            let avg = self
                .fresh
                .iter()
                .find(|f| f.id == id)
                .map(|f| f.epoch_sum / days)
                .expect("survivor comes from the sample");
            for e in &mut self.entries {
                e.cross
                    .push((id, IntervalAccumulator::seeded(e.epoch_sum / days)));
                meter.charge(Category::Pool, ACCUMULATOR_WORDS);
            }
            self.entries.push(PoolEntry {
                id,
                entry_epoch: epoch,
                own: IntervalAccumulator::seeded(avg),
                cross: Vec::new(),
                epoch_sum: avg * days,
            });
            meter.charge(Category::Pool, ENTRY_WORDS);
        }
        self.discard_fresh(meter)?;
        Ok(survivor)
    }

    /// Drops the fresh sample without promoting anyone.
    pub fn discard_fresh(&mut self, meter: &mut WordMeter) -> Result<(), LearnError> {
        meter.release(Category::Pool, FRESH_WORDS * self.fresh.len() as u64)?;
        self.fresh.clear();
        Ok(())
    }

    /// Evicts every entry `i` for which some older entry `j` has
    /// `own(i) >= cross(j over i) - threshold`. All comparisons read the
    /// pool as it was before the pass.
    pub fn evict_pass(
        &mut self,
        threshold: f64,
        meter: &mut WordMeter,
    ) -> Result<EvictionReport, LearnError> {
        let before = self.entries.len();
        let doomed: Vec<bool> = (0..before)
            .map(|pos| {
                let young = &self.entries[pos];
                let own = young.own.average().unwrap_or(f64::INFINITY);
                self.entries[..pos].iter().any(|old| {
                    old.cross_average(young.id)
                        .is_some_and(|c| own >= c - threshold - EVICTION_GUARD)
                })
            })
            .collect();
        let evicted: Vec<ExpertId> = self
            .entries
            .iter()
            .zip(&doomed)
            .filter(|(_, &d)| d)
            .map(|(e, _)| e.id)
            .collect();
        if evicted.is_empty() {
            return Ok(EvictionReport { before, evicted });
        }
        let mut released = 0;
        let mut kept = Vec::with_capacity(before - evicted.len());
        for (mut e, d) in std::mem::take(&mut self.entries).into_iter().zip(doomed) {
            if d {
                released += e.words();
                continue;
            }
            let len = e.cross.len();
            e.cross.retain(|(id, _)| !evicted.contains(id));
            released += ACCUMULATOR_WORDS * (len - e.cross.len()) as u64;
            kept.push(e);
        }
        self.entries = kept;
        meter.release(Category::Pool, released)?;
        Ok(EvictionReport { before, evicted })
    }

    /// Empties the pool and the sample.
    pub fn clear(&mut self, meter: &mut WordMeter) -> Result<(), LearnError> {
        let words = self.audit_words();
        self.entries.clear();
        self.fresh.clear();
        self.epoch_days = 0;
        meter.release(Category::Pool, words)
    }

    /// Recount of the words the pool's live state occupies.
    pub fn audit_words(&self) -> u64 {
        self.entries.iter().map(PoolEntry::words).sum::<u64>()
            + FRESH_WORDS * self.fresh.len() as u64
    }

    /// `2 ln |interval| + own average` per entry, youngest first.
    pub fn potential(&self) -> Vec<f64> {
        self.entries
            .iter()
            .rev()
            .map(|e| 2.0 * (e.own.count() as f64).ln() + e.own.average().unwrap_or(0.0))
            .collect()
    }

    /// Positions `tau` (youngest-first indexing) where
    /// `potential[tau + 1] - potential[tau] < eps - tolerance`.
    pub fn potential_violations(&self, eps: f64, tolerance: f64) -> Vec<usize> {
        self.potential()
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] - w[0] < eps - tolerance)
            .map(|(tau, _)| tau)
            .collect()
    }

    /// Surviving (older, younger) pairs that fail
    /// `cross(older over younger) > own(younger) + threshold`.
    pub fn domination_violations(&self, threshold: f64) -> Vec<(ExpertId, ExpertId)> {
        let mut bad = Vec::new();
        for (pos, young) in self.entries.iter().enumerate() {
            let own = young.own.average().unwrap_or(f64::NAN);
            for old in &self.entries[..pos] {
                let ok = old
                    .cross_average(young.id)
                    .is_some_and(|c| c > own + threshold);
                if !ok {
                    bad.push((old.id, young.id));
                }
            }
        }
        bad
    }

    /// Pairs (older `j`, younger `i`) where neither
    /// `own(j) >= own(i) + eps/2` nor
    /// `|interval j| >= (1 + (eps/2) / (1 - eps/2)) |interval i|` holds.
    pub fn loss_length_violations(&self, eps: f64) -> Vec<(ExpertId, ExpertId)> {
        let alpha = eps / 2.0;
        let stretch = 1.0 + alpha / (1.0 - alpha);
        let mut bad = Vec::new();
        for (pos, young) in self.entries.iter().enumerate() {
            let own_i = young.own.average().unwrap_or(f64::NAN);
            for old in &self.entries[..pos] {
                let own_j = old.own.average().unwrap_or(f64::NAN);
                let loss_gap = own_j >= own_i + alpha - 1e-12;
                let longer = old.own.count() as f64 >= stretch * young.own.count() as f64 - 1e-9;
                if !(loss_gap || longer) {
                    bad.push((old.id, young.id));
                }
            }
        }
        bad
    }

    /// Triangular structure: entry epochs strictly increase and every entry
    /// holds cross accumulators for exactly the younger entries, in order.
    pub fn structure_ok(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].entry_epoch < w[1].entry_epoch)
            && self.entries.iter().enumerate().all(|(pos, e)| {
                let younger: Vec<ExpertId> =
                    self.entries[pos + 1..].iter().map(|y| y.id).collect();
                let held: Vec<ExpertId> = e.cross.iter().map(|(id, _)| *id).collect();
                younger == held
            })
    }

    /// Human-readable dump for invariant failure reports.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = write!(
                s,
                "{} joined@{} |G|={} avg={:.6}",
                e.id,
                e.entry_epoch,
                e.own.count(),
                e.own.average().unwrap_or(f64::NAN)
            );
            for (id, acc) in &e.cross {
                let _ = write!(s, " [{}: {:.6}]", id, acc.average().unwrap_or(f64::NAN));
            }
            s.push('\n');
        }
        s
    }
}
