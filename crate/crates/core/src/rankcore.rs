//! One-time global ranking of a population.
//!
//! Ranks are ascending (smallest value gets rank 1) and always distinct.
//! Equal metric values are ordered by a seeded 64-bit hash of the user id,
//! which behaves like a random permutation of each tied block while staying
//! reproducible and independent of input order.

use std::borrow::Borrow;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rayon::slice::ParallelSliceMut;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this size a sequential sort is used.
const PARALLEL_SORT_THRESHOLD: usize = 1 << 15;

static POPULATION_SORTS: AtomicU64 = AtomicU64::new(0);

/// Number of population sorts performed by [`compute_global_ranks`] in this
/// process.
pub fn population_sorts() -> u64 {
    POPULATION_SORTS.load(AtomicOrdering::Relaxed)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        UserId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for UserId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for UserId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_owned())
    }
}

impl From<String> for UserId {
    fn from(s: String) -> Self {
        UserId(s)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One user's metric observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub user_id: UserId,
    pub value: f64,
}

impl MetricRecord {
    pub fn new(user_id: impl Into<UserId>, value: f64) -> Self {
        MetricRecord {
            user_id: user_id.into(),
            value,
        }
    }
}

/// Seeded tie-break key for a user. Stable across platforms and releases.
pub fn tiebreak_key(user_id: &str, seed: u64) -> u64 {
    // FNV-1a over the id bytes, then a splitmix64 finalizer keyed by the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in user_id.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h ^ splitmix64(seed))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Composite sort key: metric value, then seeded tiebreaker.
///
/// `-0.0` is folded into `0.0` so that numerically equal values tie.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankKey {
    pub value: f64,
    pub tiebreak: u64,
}

impl RankKey {
    pub fn new(value: f64, tiebreak: u64) -> Self {
        RankKey {
            value: value + 0.0,
            tiebreak,
        }
    }

    // Not `Ord`: the key holds an f64.
    #[allow(clippy::should_implement_trait)]
    pub fn cmp(&self, other: &RankKey) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.tiebreak.cmp(&other.tiebreak))
    }
}

/// Population-wide distinct ranks produced by one seeded sort.
///
/// Immutable once built; share it by reference across evaluation workers.
#[derive(Clone, Debug)]
pub struct GlobalRankTable {
    user_ids: Vec<UserId>,
    ranks: Vec<u64>,
    index: HashMap<UserId, usize>,
    tiebreak_seed: u64,
}

impl PartialEq for GlobalRankTable {
    fn eq(&self, other: &Self) -> bool {
        self.tiebreak_seed == other.tiebreak_seed
            && self.user_ids.len() == other.user_ids.len()
            && self
                .iter()
                .all(|(id, rank)| other.rank_of(id.as_str()) == Some(rank))
    }
}

impl GlobalRankTable {
    /// Builds a table from already-computed ranks, checking that they form a
    /// bijection onto `1..=N` and that ids are unique.
    pub fn from_parts(user_ids: Vec<UserId>, ranks: Vec<u64>, tiebreak_seed: u64) -> Result<Self> {
        if user_ids.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if user_ids.len() != ranks.len() {
            return Err(Error::InvalidConfig(format!(
                "{} user ids but {} ranks",
                user_ids.len(),
                ranks.len()
            )));
        }
        let n = ranks.len() as u64;
        let mut seen = vec![false; ranks.len()];
        for (id, &r) in user_ids.iter().zip(&ranks) {
            if r == 0 || r > n || std::mem::replace(&mut seen[(r - 1) as usize], true) {
                return Err(Error::InvalidLocalRanks(format!(
                    "rank {r} for user '{id}' breaks the bijection onto 1..={n}"
                )));
            }
        }
        let index = build_index(&user_ids)?;
        Ok(GlobalRankTable {
            user_ids,
            ranks,
            index,
            tiebreak_seed,
        })
    }

    pub fn population_size(&self) -> usize {
        self.ranks.len()
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn tiebreak_seed(&self) -> u64 {
        self.tiebreak_seed
    }

    pub fn rank_of(&self, user_id: &str) -> Option<u64> {
        self.index.get(user_id).map(|&i| self.ranks[i])
    }

    /// Position of a user in the original record order.
    pub fn position(&self, user_id: &str) -> Option<usize> {
        self.index.get(user_id).copied()
    }

    /// Rank of the record at `position` in the original input order.
    pub fn rank_at(&self, position: usize) -> u64 {
        self.ranks[position]
    }

    /// Ranks aligned with the input record order.
    pub fn ranks(&self) -> &[u64] {
        &self.ranks
    }

    pub fn user_ids(&self) -> &[UserId] {
        &self.user_ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UserId, u64)> + '_ {
        self.user_ids.iter().zip(self.ranks.iter().copied())
    }

    /// Record positions in ascending rank order (the inverse permutation).
    pub fn by_rank(&self) -> Vec<usize> {
        let mut order = vec![0usize; self.ranks.len()];
        for (pos, &r) in self.ranks.iter().enumerate() {
            order[(r - 1) as usize] = pos;
        }
        order
    }
}

fn build_index(user_ids: &[UserId]) -> Result<HashMap<UserId, usize>> {
    let mut index = HashMap::with_capacity(user_ids.len());
    for (i, id) in user_ids.iter().enumerate() {
        if index.insert(id.clone(), i).is_some() {
            return Err(Error::DuplicateUser(id.to_string()));
        }
    }
    Ok(index)
}

/// Ranks the whole population once.
///
/// Sorts by `(value, tiebreak_key(user_id, seed))`, falling back to the user
/// id itself on the (astronomically unlikely) event of a hash collision, so
/// the order is total and the result does not depend on thread count.
pub fn compute_global_ranks(records: &[MetricRecord], tiebreak_seed: u64) -> Result<GlobalRankTable> {
    if records.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if let Some(bad) = records.iter().find(|r| !r.value.is_finite()) {
        return Err(Error::NonFiniteValue(bad.user_id.to_string()));
    }
    let user_ids: Vec<UserId> = records.iter().map(|r| r.user_id.clone()).collect();
    let index = build_index(&user_ids)?;

    let mut keyed: Vec<(RankKey, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (RankKey::new(r.value, tiebreak_key(r.user_id.as_str(), tiebreak_seed)), i))
        .collect();
    let compare = |a: &(RankKey, usize), b: &(RankKey, usize)| {
        a.0.cmp(&b.0)
            .then_with(|| records[a.1].user_id.cmp(&records[b.1].user_id))
    };
    if keyed.len() >= PARALLEL_SORT_THRESHOLD {
        keyed.par_sort_unstable_by(compare);
    } else {
        keyed.sort_unstable_by(compare);
    }
    POPULATION_SORTS.fetch_add(1, AtomicOrdering::Relaxed);

    let mut ranks = vec![0u64; records.len()];
    for (r, &(_, pos)) in keyed.iter().enumerate() {
        ranks[pos] = r as u64 + 1;
    }
    Ok(GlobalRankTable {
        user_ids,
        ranks,
        index,
        tiebreak_seed,
    })
}

/// Within-experiment ranks `1..=users.len()`, ordered by global rank.
///
/// The output is aligned with `users`.
pub fn local_ranks<S: AsRef<str>>(table: &GlobalRankTable, users: &[S]) -> Result<Vec<u64>> {
    let global = users
        .iter()
        .map(|u| {
            let u = u.as_ref();
            table
                .rank_of(u)
                .ok_or_else(|| Error::UnknownUser(u.to_owned()))
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(densify(&global))
}

/// Replaces distinct ranks with their order statistics `1..=len`.
pub fn densify(global_ranks: &[u64]) -> Vec<u64> {
    let mut order: Vec<(u64, usize)> = global_ranks
        .iter()
        .copied()
        .enumerate()
        .map(|(i, r)| (r, i))
        .collect();
    order.sort_unstable();
    let mut local = vec![0u64; global_ranks.len()];
    for (r, &(_, pos)) in order.iter().enumerate() {
        local[pos] = r as u64 + 1;
    }
    local
}
