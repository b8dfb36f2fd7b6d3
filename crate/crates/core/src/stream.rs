//! Loss oracles.
//!
//! Oblivious oracles answer `loss(t, i)` as a pure function of
//! `(seed, t, i)`: generators hash the triple instead of advancing a shared
//! RNG, so answers never depend on query order. The adaptive oracle wraps a
//! [`GameInstance`] and only answers for a round once the learner's mixed
//! strategy for that round has been committed.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use itertools::Itertools;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::StreamError;
use crate::{Day, ExpertId};

/// Tolerance on the total mass of a committed distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamParams {
    pub n: usize,
    pub horizon: Day,
    pub seed: u64,
}

impl StreamParams {
    pub fn new(n: usize, horizon: Day, seed: u64) -> Result<Self, StreamError> {
        let p = Self { n, horizon, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.n < 2 {
            return Err(StreamError::InvalidParameter(format!(
                "need at least 2 experts, got {}",
                self.n
            )));
        }
        if self.horizon < 1 {
            return Err(StreamError::InvalidParameter("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Query access to `loss(t, i)` in `[0, 1]`.
pub trait LossQuery {
    fn n(&self) -> usize;
    fn horizon(&self) -> Day;
    fn loss(&self, t: Day, i: ExpertId) -> Result<f64, StreamError>;

    fn check_index(&self, t: Day, i: ExpertId) -> Result<(), StreamError> {
        if t < 1 || t > self.horizon() {
            return Err(StreamError::DayOutOfRange {
                day: t,
                horizon: self.horizon(),
            });
        }
        if i.0 < 1 || i.index() >= self.n() {
            return Err(StreamError::ExpertOutOfRange { id: i, n: self.n() });
        }
        Ok(())
    }
}

/// Generator descriptor as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "kebab-case",
    rename_all_fields = "kebab-case",
    deny_unknown_fields
)]
pub enum GeneratorSpec {
    /// Expert `i` loses `means[i]` every day.
    Constant { means: Vec<f64> },
    /// Independent Bernoulli losses. Means come either from `means` or
    /// uniformly from `mean_range` under `seed` (default: the stream
    /// seed); `overrides` pins individual experts afterwards.
    IidBernoulli {
        #[serde(default)]
        means: Option<Vec<f64>>,
        #[serde(default)]
        mean_range: Option<(f64, f64)>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        overrides: Vec<(u32, f64)>,
    },
    /// One steady expert at `base_loss`; every third epoch a seed-keyed
    /// half of the other experts drop to `decoy_loss`, the rest sit at
    /// `other_loss`.
    EpochSpoiler {
        best_id: u32,
        base_loss: f64,
        decoy_loss: f64,
        epoch_length: u64,
        #[serde(default = "default_other_loss")]
        other_loss: f64,
    },
    CsvFile { path: PathBuf },
}

fn default_other_loss() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
enum Source {
    Constant(Vec<f64>),
    Bernoulli(Vec<f64>),
    Spoiler {
        best: ExpertId,
        base: f64,
        decoy: f64,
        other: f64,
        epoch_length: u64,
    },
    Matrix(Arc<Vec<f64>>),
}

/// An oblivious loss stream. Cheap to clone; file-backed matrices are
/// shared.
#[derive(Debug, Clone)]
pub struct ObliviousOracle {
    params: StreamParams,
    source: Source,
}

fn check_unit(what: &str, x: f64) -> Result<(), StreamError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(StreamError::InvalidParameter(format!(
            "{what} = {x} outside [0, 1]"
        )))
    }
}

const SALT_BERNOULLI: u64 = 0x6265_726e_6f75_6c6c;
const SALT_DECOY: u64 = 0x6465_636f_7973_6574;

fn mix64(z: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform `[0, 1)` value keyed by `(seed, salt, a, b)`.
fn keyed_unit(seed: u64, salt: u64, a: u64, b: u64) -> f64 {
    let h = mix64(mix64(mix64(seed ^ salt) ^ a) ^ b);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl ObliviousOracle {
    /// Builds an oracle from a generator descriptor.
    pub fn new(params: StreamParams, spec: &GeneratorSpec) -> Result<Self, StreamError> {
        params.validate()?;
        let n = params.n;
        let source = match spec {
            GeneratorSpec::Constant { means } => {
                if means.len() != n {
                    return Err(StreamError::InvalidParameter(format!(
                        "constant generator needs {n} means, got {}",
                        means.len()
                    )));
                }
                for &m in means {
                    check_unit("constant loss", m)?;
                }
                Source::Constant(means.clone())
            }
            GeneratorSpec::IidBernoulli {
                means,
                mean_range,
                seed,
                overrides,
            } => {
                let mut resolved = match (means, mean_range) {
                    (Some(m), None) => {
                        if m.len() != n {
                            return Err(StreamError::InvalidParameter(format!(
                                "iid-bernoulli needs {n} means, got {}",
                                m.len()
                            )));
                        }
                        m.clone()
                    }
                    (None, Some((lo, hi))) => {
                        check_unit("mean range start", *lo)?;
                        check_unit("mean range end", *hi)?;
                        if lo > hi {
                            return Err(StreamError::InvalidParameter(format!(
                                "empty mean range [{lo}, {hi}]"
                            )));
                        }
                        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(params.seed));
                        (0..n)
                            .map(|_| if lo == hi { *lo } else { rng.gen_range(*lo..=*hi) })
                            .collect()
                    }
                    _ => {
                        return Err(StreamError::InvalidParameter(
                            "iid-bernoulli needs exactly one of `means` or `mean_range`".into(),
                        ))
                    }
                };
                for &(id, mean) in overrides {
                    if id < 1 || id as usize > n {
                        return Err(StreamError::ExpertOutOfRange { id: ExpertId(id), n });
                    }
                    resolved[id as usize - 1] = mean;
                }
                for &m in &resolved {
                    check_unit("bernoulli mean", m)?;
                }
                Source::Bernoulli(resolved)
            }
            GeneratorSpec::EpochSpoiler {
                best_id,
                base_loss,
                decoy_loss,
                epoch_length,
                other_loss,
            } => {
                if *best_id < 1 || *best_id as usize > n {
                    return Err(StreamError::ExpertOutOfRange {
                        id: ExpertId(*best_id),
                        n,
                    });
                }
                check_unit("base loss", *base_loss)?;
                check_unit("decoy loss", *decoy_loss)?;
                check_unit("other loss", *other_loss)?;
                if *epoch_length == 0 {
                    return Err(StreamError::InvalidParameter(
                        "epoch length must be positive".into(),
                    ));
                }
                Source::Spoiler {
                    best: ExpertId(*best_id),
                    base: *base_loss,
                    decoy: *decoy_loss,
                    other: *other_loss,
                    epoch_length: *epoch_length,
                }
            }
            GeneratorSpec::CsvFile { path } => {
                let (file_n, file_t, cells) = read_matrix_csv(path)?;
                if file_n != n || file_t != params.horizon {
                    return Err(StreamError::MalformedFile {
                        path: path.display().to_string(),
                        message: format!(
                            "file holds {file_n} experts x {file_t} days, config expects {n} x {}",
                            params.horizon
                        ),
                    });
                }
                Source::Matrix(Arc::new(cells))
            }
        };
        Ok(Self { params, source })
    }

    /// Wraps an in-memory `horizon x n` row-major matrix.
    pub fn from_rows(rows: &[Vec<f64>], seed: u64) -> Result<Self, StreamError> {
        let horizon = rows.len() as Day;
        let n = rows.first().map_or(0, Vec::len);
        let params = StreamParams::new(n, horizon, seed)?;
        let mut cells = Vec::with_capacity(rows.len() * n);
        for row in rows {
            if row.len() != n {
                return Err(StreamError::InvalidParameter("ragged loss matrix".into()));
            }
            for &x in row {
                check_unit("loss", x)?;
            }
            cells.extend_from_slice(row);
        }
        Ok(Self {
            params,
            source: Source::Matrix(Arc::new(cells)),
        })
    }

    pub fn params(&self) -> StreamParams {
        self.params
    }

    /// Per-expert means for generators that have them.
    pub fn means(&self) -> Option<&[f64]> {
        match &self.source {
            Source::Constant(m) | Source::Bernoulli(m) => Some(m),
            _ => None,
        }
    }

    fn raw(&self, t: Day, i: ExpertId) -> f64 {
        let seed = self.params.seed;
        match &self.source {
            Source::Constant(means) => means[i.index()],
            Source::Bernoulli(means) => {
                let u = keyed_unit(seed, SALT_BERNOULLI, t, i.0 as u64);
                if u < means[i.index()] {
                    1.0
                } else {
                    0.0
                }
            }
            Source::Spoiler {
                best,
                base,
                decoy,
                other,
                epoch_length,
            } => {
                if i == *best {
                    return *base;
                }
                let epoch = (t - 1) / epoch_length;
                if epoch % 3 == 2 && keyed_unit(seed, SALT_DECOY, epoch, i.0 as u64) < 0.5 {
                    *decoy
                } else {
                    *other
                }
            }
            Source::Matrix(cells) => cells[(t as usize - 1) * self.params.n + i.index()],
        }
    }
}

impl LossQuery for ObliviousOracle {
    fn n(&self) -> usize {
        self.params.n
    }

    fn horizon(&self) -> Day {
        self.params.horizon
    }

    fn loss(&self, t: Day, i: ExpertId) -> Result<f64, StreamError> {
        self.check_index(t, i)?;
        Ok(self.raw(t, i))
    }
}

/// Parses a loss file: header `t,e1,...,en`, then one row per day.
pub fn read_matrix_csv(path: &Path) -> Result<(usize, Day, Vec<f64>), StreamError> {
    let file = std::fs::File::open(path)?;
    read_matrix(file, &path.display().to_string())
}

pub fn read_matrix<R: Read>(reader: R, label: &str) -> Result<(usize, Day, Vec<f64>), StreamError> {
    let malformed = |message: String| StreamError::MalformedFile {
        path: label.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let n = header.len().saturating_sub(1);
    if header.get(0) != Some("t") || n < 2 {
        return Err(malformed("header must be `t,e1,...,en` with n >= 2".into()));
    }
    for (pos, name) in header.iter().skip(1).enumerate() {
        if name != format!("e{}", pos + 1) {
            return Err(malformed(format!("unexpected column `{name}`")));
        }
    }
    let mut cells = Vec::new();
    let mut days: Day = 0;
    for record in rdr.records() {
        let record = record?;
        days += 1;
        if record.len() != n + 1 {
            return Err(malformed(format!("row {days} has {} fields", record.len())));
        }
        let t: Day = record[0]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("row {days}: bad day `{}`", &record[0])))?;
        if t != days {
            return Err(malformed(format!("expected day {days}, found {t}")));
        }
        for field in record.iter().skip(1) {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| malformed(format!("day {t}: bad loss `{field}`")))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(malformed(format!("day {t}: loss {x} outside [0, 1]")));
            }
            cells.push(x);
        }
    }
    if days == 0 {
        return Err(malformed("no rows".into()));
    }
    Ok((n, days, cells))
}

/// Writes the full loss matrix in the loss-file format.
pub fn write_matrix_csv<Q: LossQuery + ?Sized, W: Write>(
    oracle: &Q,
    out: W,
) -> Result<(), StreamError> {
    let mut w = csv::Writer::from_writer(out);
    let n = oracle.n();
    let mut row = Vec::with_capacity(n + 1);
    row.push("t".to_string());
    row.extend((1..=n).map(|i| format!("e{i}")));
    w.write_record(&row)?;
    for t in 1..=oracle.horizon() {
        row.clear();
        row.push(t.to_string());
        for i in 0..n {
            row.push(oracle.loss(t, ExpertId::from_index(i))?.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `n x n` zero-sum game in which Alice loses 4 off the support `S`, 1 when
/// Bob matches her action inside `S`, and 0 otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameInstance {
    n: usize,
    support: Vec<ExpertId>,
    in_support: Vec<bool>,
}

/// Raw loss for an action outside the support.
pub const OFF_SUPPORT_LOSS: f64 = 4.0;

impl GameInstance {
    pub fn with_support(n: usize, support: &[ExpertId]) -> Result<Self, StreamError> {
        if support.is_empty() || support.len() > n {
            return Err(StreamError::InvalidParameter(format!(
                "support size {} not in [1, {n}]",
                support.len()
            )));
        }
        let mut in_support = vec![false; n];
        for &s in support {
            if s.0 < 1 || s.index() >= n {
                return Err(StreamError::ExpertOutOfRange { id: s, n });
            }
            if in_support[s.index()] {
                return Err(StreamError::InvalidParameter(format!("repeated action {s}")));
            }
            in_support[s.index()] = true;
        }
        let mut support = support.to_vec();
        support.sort();
        Ok(Self {
            n,
            support,
            in_support,
        })
    }

    /// Support size `round(1 / (2 epsilon'))`.
    pub fn support_size(epsilon_prime: f64) -> Result<usize, StreamError> {
        if !(epsilon_prime > 0.0 && epsilon_prime.is_finite()) {
            return Err(StreamError::InvalidParameter(format!(
                "epsilon' must be positive, got {epsilon_prime}"
            )));
        }
        Ok((1.0 / (2.0 * epsilon_prime)).round() as usize)
    }

    /// Draws `S` uniformly among size-`k` subsets of `[n]`.
    pub fn sample(n: usize, k: usize, seed: u64) -> Result<Self, StreamError> {
        if k < 1 || k > n {
            return Err(StreamError::InvalidParameter(format!(
                "support size {k} not in [1, {n}]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let support: Vec<ExpertId> = index::sample(&mut rng, n, k)
            .into_iter()
            .map(ExpertId::from_index)
            .collect();
        Self::with_support(n, &support)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[ExpertId] {
        &self.support
    }

    pub fn contains(&self, i: ExpertId) -> bool {
        i.0 >= 1 && i.index() < self.n && self.in_support[i.index()]
    }

    fn check_action(&self, a: ExpertId) -> Result<(), StreamError> {
        if a.0 < 1 || a.index() >= self.n {
            Err(StreamError::ExpertOutOfRange { id: a, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Raw loss `A_S[i, j]` in `{0, 1, 4}`.
    pub fn loss_entry(&self, i: ExpertId, j: ExpertId) -> Result<f64, StreamError> {
        self.check_action(i)?;
        self.check_action(j)?;
        Ok(if !self.in_support[i.index()] {
            OFF_SUPPORT_LOSS
        } else if i == j {
            1.0
        } else {
            0.0
        })
    }

    pub fn check_distribution(&self, p: &[f64]) -> Result<(), StreamError> {
        if p.len() != self.n {
            return Err(StreamError::NotADistribution(format!(
                "length {} != {}",
                p.len(),
                self.n
            )));
        }
        if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(StreamError::NotADistribution(format!("entry {x}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(StreamError::NotADistribution(format!("mass {total}")));
        }
        Ok(())
    }

    /// `(p^T A_S)_j` for every column `j`.
    fn column_losses(&self, p: &[f64]) -> Vec<f64> {
        let off_mass: f64 = p
            .iter()
            .zip(&self.in_support)
            .filter(|(_, &inside)| !inside)
            .map(|(x, _)| x)
            .sum();
        let base = OFF_SUPPORT_LOSS * off_mass;
        p.iter()
            .zip(&self.in_support)
            .map(|(&x, &inside)| if inside { base + x } else { base })
            .collect()
    }

    /// Bob's best response: the column maximizing Alice's loss, ties to the
    /// lowest index. Returns the column and the raw loss.
    pub fn best_response(&self, p: &[f64]) -> Result<(ExpertId, f64), StreamError> {
        self.check_distribution(p)?;
        let cols = self.column_losses(p);
        let mut best = 0;
        for (j, &c) in cols.iter().enumerate() {
            if c > cols[best] {
                best = j;
            }
        }
        Ok((ExpertId::from_index(best), cols[best]))
    }

    /// `max_j p^T A_S e_j` on the raw scale.
    pub fn worst_case_loss(&self, p: &[f64]) -> Result<f64, StreamError> {
        self.best_response(p).map(|(_, loss)| loss)
    }

    /// One adversarial round: Bob's column and the column divided by 4.
    pub fn adversary_step(&self, p: &[f64]) -> Result<(ExpertId, Vec<f64>), StreamError> {
        let (y, _) = self.best_response(p)?;
        let column = (0..self.n)
            .map(|i| {
                self.loss_entry(ExpertId::from_index(i), y)
                    .map(|x| x / OFF_SUPPORT_LOSS)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((y, column))
    }

    /// The equilibrium strategy `1_S / k`.
    pub fn equilibrium(&self) -> Vec<f64> {
        let k = self.k() as f64;
        self.in_support
            .iter()
            .map(|&inside| if inside { 1.0 / k } else { 0.0 })
            .collect()
    }
}

/// `C(n, k)` saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(x) => x / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Largest subset enumeration `count_covered_sets` accepts.
pub const COVER_GUARD: u128 = 1_000_000;

/// Number of size-`k` supports `S` with `worst_case_loss(p, S) < 2/k`,
/// by exhaustive enumeration.
pub fn count_covered_sets(n: usize, k: usize, p: &[f64]) -> Result<u64, StreamError> {
    if k < 1 || k > n {
        return Err(StreamError::InvalidParameter(format!(
            "support size {k} not in [1, {n}]"
        )));
    }
    let total = binomial(n as u64, k as u64);
    if total > COVER_GUARD {
        return Err(StreamError::GuardExceeded(format!(
            "C({n}, {k}) = {total} subsets"
        )));
    }
    let threshold = 2.0 / k as f64;
    let mut covered = 0;
    for subset in (0..n).combinations(k) {
        let support: Vec<ExpertId> = subset.into_iter().map(ExpertId::from_index).collect();
        let game = GameInstance::with_support(n, &support)?;
        if game.worst_case_loss(p)? < threshold {
            covered += 1;
        }
    }
    Ok(covered)
}

/// Round-committed adaptive oracle over a game.
#[derive(Debug, Clone)]
pub struct GameOracle {
    game: GameInstance,
    horizon: Day,
    committed: Option<(Day, ExpertId)>,
}

impl GameOracle {
    pub fn new(game: GameInstance, horizon: Day) -> Self {
        Self {
            game,
            horizon,
            committed: None,
        }
    }

    pub fn game(&self) -> &GameInstance {
        &self.game
    }

    /// Commits Alice's strategy for round `t`; Bob best-responds. Returns
    /// his column and Alice's raw loss.
    pub fn commit(&mut self, t: Day, p: &[f64]) -> Result<(ExpertId, f64), StreamError> {
        if t < 1 || t > self.horizon {
            return Err(StreamError::DayOutOfRange {
                day: t,
                horizon: self.horizon,
            });
        }
        let (y, raw) = self.game.best_response(p)?;
        self.committed = Some((t, y));
        Ok((y, raw))
    }
}

impl LossQuery for GameOracle {
    fn n(&self) -> usize {
        self.game.n()
    }

    fn horizon(&self) -> Day {
        self.horizon
    }

    fn loss(&self, t: Day, i: ExpertId) -> Result<f64, StreamError> {
        self.check_index(t, i)?;
        match self.committed {
            Some((day, y)) if day == t => Ok(self.game.loss_entry(i, y)? / OFF_SUPPORT_LOSS),
            _ => Err(StreamError::UncommittedRound(t)),
        }
    }
}

/// Any oracle mode behind one query interface.
#[derive(Debug, Clone)]
pub enum LossOracle {
    Oblivious(ObliviousOracle),
    Game(GameOracle),
}

impl LossOracle {
    pub fn make(params: StreamParams, spec: &GeneratorSpec) -> Result<Self, StreamError> {
        ObliviousOracle::new(params, spec).map(LossOracle::Oblivious)
    }

    pub fn is_oblivious(&self) -> bool {
        matches!(self, LossOracle::Oblivious(_))
    }
}

impl LossQuery for LossOracle {
    fn n(&self) -> usize {
        match self {
            LossOracle::Oblivious(o) => o.n(),
            LossOracle::Game(g) => g.n(),
        }
    }

    fn horizon(&self) -> Day {
        match self {
            LossOracle::Oblivious(o) => o.horizon(),
            LossOracle::Game(g) => g.horizon(),
        }
    }

    fn loss(&self, t: Day, i: ExpertId) -> Result<f64, StreamError> {
        match self {
            LossOracle::Oblivious(o) => o.loss(t, i),
            LossOracle::Game(g) => g.loss(t, i),
        }
    }
}
