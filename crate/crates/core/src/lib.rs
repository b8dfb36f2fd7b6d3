//! Learning with expert advice in sub-linear memory.
//!
//! The crate keeps a small pool of experts, runs multiplicative weights over
//! the pool inside fixed-length epochs, and prunes the pool with a
//! domination rule that never lets a younger expert evict an older one.
//! Stacking that learner into a level hierarchy with truncated losses
//! shrinks the loss width level by level.
//!
//! Module map:
//!
//! - [`stream`]: loss oracles (seeded generators, CSV files, the zero-sum
//!   game adversary).
//! - [`mwu`]: exponential weights over a dynamic expert set.
//! - [`pool`]: interval accumulators, the triangular cross-loss table and
//!   the eviction pass.
//! - [`baseline`]: the epoch-based pooled learner.
//! - [`hierarchy`]: merged experts, truncated losses and the level stack.
//! - [`meter`]: word-level space accounting.
//! - [`learner`]: the common day-by-day driving interface plus the
//!   full-memory and fixed-strategy reference learners.

pub mod baseline;
pub mod error;
pub mod hierarchy;
pub mod learner;
pub mod meter;
pub mod mwu;
pub mod pool;
pub mod stream;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use baseline::{BaselineLearner, BaselineParams};
pub use error::{LearnError, StreamError};
pub use hierarchy::{truncated_loss, HierarchyLearner, HierarchyParams, HierarchyStats, LevelParams};
pub use learner::{EpochClose, FixedStrategy, FullMemoryMwu, Learner, PoolView};
pub use meter::{Category, MeterSnapshot, WordMeter};
pub use mwu::MwuState;
pub use pool::{EvictionReport, IntervalAccumulator, Pool, PoolEntry};
pub use stream::{
    GameInstance, GameOracle, GeneratorSpec, LossOracle, LossQuery, ObliviousOracle, StreamParams,
};

/// A 1-based expert (or action) identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpertId(pub u32);

impl ExpertId {
    /// Builds an id from a 0-based index.
    pub fn from_index(index: usize) -> Self {
        ExpertId(index as u32 + 1)
    }

    /// 0-based position of this expert.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ExpertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// 1-based day (round) index.
pub type Day = u64;
