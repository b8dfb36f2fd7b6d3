//! Exponential weights over a dynamic, finite expert set.
//!
//! The state stores cumulative losses, never weights. Losses are kept
//! relative to the running minimum so every exponent lies in
//! `[-eta * T * (hi - lo), 0]`; the subtracted amount is tracked in
//! `floor` so absolute cumulative losses stay recoverable.

use std::fmt::Debug;

use rand::Rng;

use crate::error::LearnError;

/// Words charged per tracked id: the id and its cumulative loss.
pub const WORDS_PER_ID: u64 = 2;
/// Words charged per state: the learning rate and the floor.
pub const WORDS_OVERHEAD: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct MwuState<I> {
    ids: Vec<I>,
    relative: Vec<f64>,
    floor: f64,
    eta: f64,
    lo: f64,
    hi: f64,
}

const RANGE_TOLERANCE: f64 = 1e-12;

impl<I: Copy + Eq + Debug> MwuState<I> {
    /// Uniform start with `eta = sqrt(ln m / horizon) / (hi - lo)`, or
    /// `1 / (hi - lo)` for a single expert.
    pub fn new(ids: Vec<I>, horizon: u64, range: (f64, f64)) -> Result<Self, LearnError> {
        if horizon == 0 {
            return Err(LearnError::InvalidParams("horizon must be at least 1".into()));
        }
        let width = range.1 - range.0;
        let m = ids.len();
        let eta = if m <= 1 {
            1.0 / width
        } else {
            ((m as f64).ln() / horizon as f64).sqrt() / width
        };
        Self::with_eta(ids, eta, range)
    }

    pub fn with_eta(ids: Vec<I>, eta: f64, range: (f64, f64)) -> Result<Self, LearnError> {
        let (lo, hi) = range;
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(LearnError::InvalidParams(format!(
                "degenerate loss range [{lo}, {hi}]"
            )));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(LearnError::InvalidParams(format!("eta must be positive, got {eta}")));
        }
        if ids.is_empty() {
            return Err(LearnError::EmptyExpertSet);
        }
        for (pos, id) in ids.iter().enumerate() {
            if ids[..pos].contains(id) {
                return Err(LearnError::DuplicateId(format!("{id:?}")));
            }
        }
        let m = ids.len();
        Ok(Self {
            ids,
            relative: vec![0.0; m],
            floor: 0.0,
            eta,
            lo,
            hi,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn ids(&self) -> &[I] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: I) -> bool {
        self.ids.contains(&id)
    }

    /// Absolute cumulative loss of `id`.
    pub fn cumulative(&self, id: I) -> Option<f64> {
        self.position(id).map(|p| self.floor + self.relative[p])
    }

    pub fn words(&self) -> u64 {
        WORDS_PER_ID * self.ids.len() as u64 + WORDS_OVERHEAD
    }

    fn position(&self, id: I) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    fn weights(&self) -> Vec<f64> {
        self.relative.iter().map(|&c| (-self.eta * c).exp()).collect()
    }

    /// Probabilities in the order of [`ids`](Self::ids).
    pub fn distribution(&self) -> Vec<f64> {
        let w = self.weights();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    pub fn probability(&self, id: I) -> Option<f64> {
        self.position(id).map(|p| self.distribution()[p])
    }

    /// Adds one loss per tracked id, in [`ids`](Self::ids) order.
    pub fn update(&mut self, losses: &[f64]) -> Result<(), LearnError> {
        if losses.len() != self.ids.len() {
            return Err(LearnError::LossCount {
                expected: self.ids.len(),
                got: losses.len(),
            });
        }
        if let Some(&bad) = losses.iter().find(|&&l| {
            !(l >= self.lo - RANGE_TOLERANCE && l <= self.hi + RANGE_TOLERANCE)
        }) {
            return Err(LearnError::LossOutOfRange {
                loss: bad,
                lo: self.lo,
                hi: self.hi,
            });
        }
        for (c, &l) in self.relative.iter_mut().zip(losses) {
            *c += l;
        }
        self.renormalize();
        Ok(())
    }

    fn renormalize(&mut self) {
        let min = self.relative.iter().copied().fold(f64::INFINITY, f64::min);
        if min.is_finite() && min != 0.0 {
            for c in &mut self.relative {
                *c -= min;
            }
            self.floor += min;
        }
    }

    /// Draws one id with probability proportional to its weight. Consumes
    /// exactly one `f64` from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> I {
        let w = self.weights();
        let total: f64 = w.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (id, x) in self.ids.iter().zip(&w) {
            if u < *x {
                return *id;
            }
            u -= x;
        }
        // rounding left a sliver past the last bucket
        *self.ids.last().expect("state is never empty")
    }

    pub fn remove(&mut self, id: I) -> Result<(), LearnError> {
        let pos = self
            .position(id)
            .ok_or_else(|| LearnError::NotTracked(format!("{id:?}")))?;
        if self.ids.len() == 1 {
            return Err(LearnError::LastExpert);
        }
        self.ids.remove(pos);
        self.relative.remove(pos);
        self.renormalize();
        Ok(())
    }

    /// Tracks `id` with a cumulative loss equal to the current minimum.
    pub fn add(&mut self, id: I) -> Result<(), LearnError> {
        if self.contains(id) {
            return Err(LearnError::AlreadyTracked(format!("{id:?}")));
        }
        self.ids.push(id);
        self.relative.push(0.0);
        Ok(())
    }
}
