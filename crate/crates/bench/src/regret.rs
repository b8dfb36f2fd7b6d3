//! Exact regret against the best expert in hindsight. This is harness
//! bookkeeping and is never charged to a learner's meter.

use std::io::Write;

use lowmem_experts::{Day, ExpertId, LossOracle, LossQuery};
use serde::{Deserialize, Serialize};

use crate::error::BenchError;

/// Largest `n * T` the brute-force enumeration accepts.
pub const ENUMERATION_GUARD: u128 = 1_000_000_000;

/// Total loss of every expert over the whole horizon.
pub fn expert_totals(oracle: &dyn LossQuery) -> Result<Vec<f64>, BenchError> {
    let cells = oracle.n() as u128 * oracle.horizon() as u128;
    if cells > ENUMERATION_GUARD {
        return Err(BenchError::Guard(cells));
    }
    let mut totals = vec![0.0; oracle.n()];
    for t in 1..=oracle.horizon() {
        for (i, s) in totals.iter_mut().enumerate() {
            *s += oracle.loss(t, ExpertId::from_index(i))?;
        }
    }
    Ok(totals)
}

/// Minimum total, ties to the lowest id.
pub fn argmin_total(totals: &[f64]) -> Option<(ExpertId, f64)> {
    totals
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, v)| (ExpertId::from_index(i), v))
}

/// Best expert in hindsight by full enumeration.
pub fn oracle_best_expert(oracle: &LossOracle) -> Result<(ExpertId, f64), BenchError> {
    if !oracle.is_oblivious() {
        return Err(BenchError::Adaptive);
    }
    let totals = expert_totals(oracle)?;
    argmin_total(&totals).ok_or_else(|| BenchError::Invalid("no experts".into()))
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub day: Day,
    pub alg_loss_cum: f64,
    pub best_loss_cum: f64,
    pub regret: f64,
    pub words_current: u64,
    pub words_peak: u64,
    pub pool_size: usize,
}

/// Column order of trace files.
pub const TRACE_COLUMNS: [&str; 7] = [
    "day",
    "alg_loss_cum",
    "best_loss_cum",
    "regret",
    "words_current",
    "words_peak",
    "pool_size",
];

/// Running algorithm loss against the running best expert.
#[derive(Debug, Clone, Default)]
pub struct RegretTrace {
    expert_cum: Vec<f64>,
    alg_cum: f64,
    pub rows: Vec<TraceRow>,
}

impl RegretTrace {
    pub fn new(n: usize) -> Self {
        Self {
            expert_cum: vec![0.0; n],
            alg_cum: 0.0,
            rows: Vec::new(),
        }
    }

    /// Adds day `t`, querying every expert. Returns the algorithm's loss.
    pub fn record(
        &mut self,
        oracle: &dyn LossQuery,
        t: Day,
        pick: ExpertId,
        words: (u64, u64),
        pool_size: usize,
    ) -> Result<f64, BenchError> {
        for (i, s) in self.expert_cum.iter_mut().enumerate() {
            *s += oracle.loss(t, ExpertId::from_index(i))?;
        }
        let loss = oracle.loss(t, pick)?;
        self.alg_cum += loss;
        let best = self.best_so_far().map_or(0.0, |(_, v)| v);
        self.rows.push(TraceRow {
            day: t,
            alg_loss_cum: self.alg_cum,
            best_loss_cum: best,
            regret: self.alg_cum - best,
            words_current: words.0,
            words_peak: words.1,
            pool_size,
        });
        Ok(loss)
    }

    pub fn best_so_far(&self) -> Option<(ExpertId, f64)> {
        argmin_total(&self.expert_cum)
    }

    pub fn alg_total(&self) -> f64 {
        self.alg_cum
    }

    pub fn regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.regret)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(TRACE_COLUMNS)?;
        }
        w.flush()?;
        Ok(())
    }
}
