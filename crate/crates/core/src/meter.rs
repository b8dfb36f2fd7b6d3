//! Word-level space accounting.
//!
//! One word is one stored scalar: a loss sum, a count, an id, an epoch
//! index, a cumulative MWU loss. Learners charge the meter whenever they
//! create state and release it when the state is dropped, so the current
//! count can be audited against a recount of the live state. Anything the
//! harness keeps to evaluate a learner (loss matrices, traces) is never
//! charged here.

use serde::Serialize;

use crate::error::LearnError;

/// What a block of words is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    /// Pool entries, cross accumulators and the fresh sample.
    Pool,
    /// Exponential-weights states.
    Mwu,
    /// Per-expert merge learners of the hierarchy.
    Merge,
    /// Counters and per-level scalars.
    Overhead,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Pool,
        Category::Mwu,
        Category::Merge,
        Category::Overhead,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Pool => "pool",
            Category::Mwu => "mwu",
            Category::Merge => "merge",
            Category::Overhead => "overhead",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordMeter {
    by_category: [u64; 4],
    current: u64,
    peak: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MeterSnapshot {
    pub current: u64,
    pub peak: u64,
    pub pool: u64,
    pub mwu: u64,
    pub merge: u64,
    pub overhead: u64,
}

impl MeterSnapshot {
    pub fn category(&self, category: Category) -> u64 {
        match category {
            Category::Pool => self.pool,
            Category::Mwu => self.mwu,
            Category::Merge => self.merge,
            Category::Overhead => self.overhead,
        }
    }
}

impl WordMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, category: Category, words: u64) {
        self.by_category[category.slot()] += words;
        self.current += words;
        self.peak = self.peak.max(self.current);
    }

    pub fn release(&mut self, category: Category, words: u64) -> Result<(), LearnError> {
        let balance = self.by_category[category.slot()];
        if words > balance {
            return Err(LearnError::NegativeBalance {
                category: category.name(),
                requested: words,
                balance,
            });
        }
        self.by_category[category.slot()] -= words;
        self.current -= words;
        Ok(())
    }

    pub fn current(&self) -> u64 {
        self.current
    }

    pub fn peak(&self) -> u64 {
        self.peak
    }

    pub fn category(&self, category: Category) -> u64 {
        self.by_category[category.slot()]
    }

    pub fn snapshot(&self) -> MeterSnapshot {
        MeterSnapshot {
            current: self.current,
            peak: self.peak,
            pool: self.category(Category::Pool),
            mwu: self.category(Category::Mwu),
            merge: self.category(Category::Merge),
            overhead: self.category(Category::Overhead),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charge_then_release_keeps_peak() {
        let mut m = WordMeter::new();
        m.charge(Category::Pool, 5);
        m.release(Category::Pool, 5).unwrap();
        assert_eq!(m.current(), 0);
        assert_eq!(m.peak(), 5);
    }

    #[test]
    fn interleaved_arithmetic() {
        let mut m = WordMeter::new();
        m.charge(Category::Pool, 3);
        m.charge(Category::Mwu, 4);
        m.release(Category::Pool, 2).unwrap();
        assert_eq!(m.current(), 5);
        assert_eq!(m.peak(), 7);
        let s = m.snapshot();
        assert_eq!((s.pool, s.mwu), (1, 4));
    }

    #[test]
    fn overdraw_is_an_error() {
        let mut m = WordMeter::new();
        m.charge(Category::Mwu, 2);
        assert!(matches!(
            m.release(Category::Mwu, 3),
            Err(LearnError::NegativeBalance { .. })
        ));
        // balances are per category
        assert!(m.release(Category::Pool, 1).is_err());
        assert_eq!(m.current(), 2);
    }

    #[test]
    fn fresh_meter_is_zero() {
        let s = WordMeter::new().snapshot();
        assert_eq!(
            s,
            MeterSnapshot {
                current: 0,
                peak: 0,
                pool: 0,
                mwu: 0,
                merge: 0,
                overhead: 0
            }
        );
    }
}
