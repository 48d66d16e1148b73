use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::population::gen_lognormal_population;
use super::sampling::{sample_split, Split};
use super::{stream_rng, RankingBase, SimulationConfig};
use crate::error::{Error, Result};
use crate::hypotest::{decide, global_rank_sum_statistic, rank_sum_statistic, welch_t_statistic, Decision, Method};
use crate::rankcore::{compute_global_ranks, tiebreak_key, GlobalRankTable, MetricRecord, RankKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Calibration,
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub method: Method,
    pub alpha: f64,
    pub rejections: usize,
    /// Replications where the statistic could not be computed.
    pub failures: usize,
    pub rejection_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub population_seconds: f64,
    pub ranking_seconds: f64,
    pub replication_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub config: SimulationConfig,
    pub replications: usize,
    pub cells: Vec<RateCell>,
    /// Wall-clock only; left out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub timings: PhaseTimings,
}

impl StudyReport {
    pub fn rate(&self, method: Method, alpha: f64) -> Option<f64> {
        self.cell(method, alpha).map(|c| c.rejection_rate)
    }

    pub fn cell(&self, method: Method, alpha: f64) -> Option<&RateCell> {
        self.cells.iter().find(|c| c.method == method && c.alpha == alpha)
    }
}

/// A generated population together with its one global ranking, reusable
/// across studies that share `(population_size, mu, sigma, seed)`.
pub struct PreparedPopulation {
    records: Vec<MetricRecord>,
    table: GlobalRankTable,
    /// Population keys in ascending rank order.
    sorted_keys: Vec<SimKey>,
    /// `(mu, sigma, seed)` when generated from a config.
    origin: Option<(f64, f64, u64)>,
    timings: PhaseTimings,
}

impl PreparedPopulation {
    pub fn generate(config: &SimulationConfig) -> Result<Self> {
        let start = Instant::now();
        let records = gen_lognormal_population(config.population_size, config.mu, config.sigma, config.seed)?;
        let population_seconds = start.elapsed().as_secs_f64();
        let mut prepared = Self::from_records(records, config.seed)?;
        prepared.origin = Some((config.mu, config.sigma, config.seed));
        prepared.timings.population_seconds = population_seconds;
        Ok(prepared)
    }

    /// Ranks an arbitrary population with `tiebreak_seed`.
    pub fn from_records(records: Vec<MetricRecord>, tiebreak_seed: u64) -> Result<Self> {
        let start = Instant::now();
        let table = compute_global_ranks(&records, tiebreak_seed)?;
        let ranking_seconds = start.elapsed().as_secs_f64();
        let sorted_keys = table
            .by_rank()
            .into_iter()
            .map(|pos| SimKey::new(records[pos].value, tiebreak_key(records[pos].user_id.as_str(), tiebreak_seed), pos))
            .collect();
        Ok(PreparedPopulation {
            records,
            table,
            sorted_keys,
            origin: None,
            timings: PhaseTimings {
                population_seconds: 0.0,
                ranking_seconds,
                replication_seconds: 0.0,
            },
        })
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    pub fn table(&self) -> &GlobalRankTable {
        &self.table
    }

    fn matches(&self, config: &SimulationConfig) -> bool {
        self.records.len() == config.population_size
            && self
                .origin
                .is_none_or(|o| o == (config.mu, config.sigma, config.seed))
    }

    /// Global ranks of the experiment's users after multiplying treatment
    /// values by `factor`, as if the whole population were re-sorted with
    /// those observed values. Also returns within-experiment ranks.
    ///
    /// Runs in O(N + M log M) without sorting the population again.
    pub(crate) fn lifted_ranks(&self, split: &Split, factor: f64) -> LiftedRanks {
        let ranks = self.table.ranks();
        let n = ranks.len();
        let sorted_by_rank = |positions: &[usize]| {
            sort_distinct_ranks(positions.iter().map(|&p| ranks[p]), n)
                .into_iter()
                .map(|r| self.sorted_keys[(r - 1) as usize])
                .collect::<Vec<SimKey>>()
        };
        let t_orig = sorted_by_rank(&split.treatment);
        let control = sorted_by_rank(&split.control);
        let mut t_lift: Vec<SimKey> = t_orig.iter().map(|k| k.scaled(factor)).collect();
        // Already ordered unless rounding merged neighbouring values.
        t_lift.sort_unstable_by(SimKey::cmp);

        let m = t_lift.len() + control.len();
        let mut t = RankPair::with_capacity(t_lift.len());
        let mut c = RankPair::with_capacity(control.len());
        let (mut ti, mut ci) = (0, 0);
        let (mut all, mut below_orig, mut below_lift) = (0usize, 0usize, 0usize);
        for local in 1..=m as u64 {
            let take_t = ci == control.len() || (ti < t_lift.len() && t_lift[ti].cmp(&control[ci]) == Ordering::Less);
            let key = if take_t { t_lift[ti] } else { control[ci] };
            all = gallop_past(&self.sorted_keys, all, &key);
            while below_orig < t_orig.len() && t_orig[below_orig].cmp(&key) != Ordering::Greater {
                below_orig += 1;
            }
            while below_lift < t_lift.len() && t_lift[below_lift].cmp(&key) != Ordering::Greater {
                below_lift += 1;
            }
            let global = (all - below_orig + below_lift) as u64;
            if take_t {
                t.global.push(global);
                t.local.push(local);
                ti += 1;
            } else {
                c.global.push(global);
                c.local.push(local);
                ci += 1;
            }
        }
        LiftedRanks { treatment: t, control: c }
    }
}

/// Population sort key: value, seeded tiebreaker, then position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SimKey {
    key: RankKey,
    pos: usize,
}

impl SimKey {
    fn new(value: f64, tiebreak: u64, pos: usize) -> Self {
        SimKey {
            key: RankKey::new(value, tiebreak),
            pos,
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        SimKey::new(self.key.value * factor, self.key.tiebreak, self.pos)
    }

    fn cmp(&self, other: &SimKey) -> Ordering {
        self.key.cmp(&other.key).then(self.pos.cmp(&other.pos))
    }
}

#[derive(Debug, Default)]
pub(crate) struct RankPair {
    pub global: Vec<u64>,
    pub local: Vec<u64>,
}

impl RankPair {
    fn with_capacity(n: usize) -> Self {
        RankPair {
            global: Vec::with_capacity(n),
            local: Vec::with_capacity(n),
        }
    }
}

#[derive(Debug)]
pub(crate) struct LiftedRanks {
    pub treatment: RankPair,
    pub control: RankPair,
}

/// Sorts distinct values from `0..n` with a bitmap scan.
fn sort_distinct(values: impl Iterator<Item = usize>, n: usize) -> Vec<usize> {
    let mut bits = vec![0u64; n / 64 + 1];
    let mut count = 0;
    for v in values {
        bits[v / 64] |= 1 << (v % 64);
        count += 1;
    }
    let mut out = Vec::with_capacity(count);
    for (w, &word) in bits.iter().enumerate() {
        let mut word = word;
        while word != 0 {
            out.push(w * 64 + word.trailing_zeros() as usize);
            word &= word - 1;
        }
    }
    out
}

fn sort_distinct_ranks(ranks: impl Iterator<Item = u64>, n: usize) -> Vec<u64> {
    sort_distinct(ranks.map(|r| (r - 1) as usize), n)
        .into_iter()
        .map(|i| i as u64 + 1)
        .collect()
}

/// First index at or after `from` whose key is greater than `key`.
fn gallop_past(keys: &[SimKey], from: usize, key: &SimKey) -> usize {
    let le = |i: usize| keys[i].cmp(key) != Ordering::Greater;
    if from >= keys.len() || !le(from) {
        return from;
    }
    let mut step = 1;
    let mut lo = from;
    while lo + step < keys.len() && le(lo + step) {
        lo += step;
        step *= 2;
    }
    let hi = (lo + step).min(keys.len());
    lo + 1 + keys[lo + 1..hi].partition_point(|k| k.cmp(key) != Ordering::Greater)
}

/// Local ranks from two sorted lists of distinct global ranks.
fn merge_local(t_sorted: &[u64], c_sorted: &[u64]) -> (Vec<u64>, Vec<u64>) {
    let mut t = Vec::with_capacity(t_sorted.len());
    let mut c = Vec::with_capacity(c_sorted.len());
    let (mut i, mut j) = (0, 0);
    for local in 1..=(t_sorted.len() + c_sorted.len()) as u64 {
        if j == c_sorted.len() || (i < t_sorted.len() && t_sorted[i] < c_sorted[j]) {
            t.push(local);
            i += 1;
        } else {
            c.push(local);
            j += 1;
        }
    }
    (t, c)
}

/// Reject flags per alpha for each of the three methods; `None` marks a failed test.
type RepOutcome = [Option<Vec<bool>>; 3];

fn verdicts(stat: Result<f64>, alphas: &[f64]) -> Option<Vec<bool>> {
    let stat = stat.ok()?;
    let v = decide(stat, alphas).ok()?;
    Some(v.decisions.iter().map(|d| d.decision == Decision::Reject).collect())
}

fn replicate(prepared: &PreparedPopulation, config: &SimulationConfig, kind: StudyKind, rep: u64) -> Result<RepOutcome> {
    let mut rng = stream_rng(config.seed, rep);
    let n = prepared.records.len();
    let split = sample_split(n, config.split(), &mut rng)?;
    // Group membership is all that matters; ordered positions keep the
    // gathers below cache friendly.
    let split = Split {
        treatment: sort_distinct(split.treatment.into_iter(), n),
        control: sort_distinct(split.control.into_iter(), n),
    };
    let factor = 1.0 + config.lift_ratio;
    let values = |positions: &[usize], f: f64| positions.iter().map(|&p| prepared.records[p].value * f).collect::<Vec<f64>>();

    let (t_global, c_global, t_local, c_local, t_values) = match kind {
        StudyKind::Calibration => {
            let ranks = prepared.table.ranks();
            let t_global: Vec<u64> = split.treatment.iter().map(|&p| ranks[p]).collect();
            let c_global: Vec<u64> = split.control.iter().map(|&p| ranks[p]).collect();
            let ts = sort_distinct_ranks(t_global.iter().copied(), n);
            let cs = sort_distinct_ranks(c_global.iter().copied(), n);
            let (t_local, c_local) = merge_local(&ts, &cs);
            (t_global, c_global, t_local, c_local, values(&split.treatment, 1.0))
        }
        StudyKind::Power => {
            let lifted = prepared.lifted_ranks(&split, factor);
            (
                lifted.treatment.global,
                lifted.control.global,
                lifted.treatment.local,
                lifted.control.local,
                values(&split.treatment, factor),
            )
        }
    };
    let c_values = values(&split.control, 1.0);

    let alphas = &config.alphas;
    let grs = match config.ranking_base {
        RankingBase::LiftedPopulation => global_rank_sum_statistic(&t_global, &c_global),
        RankingBase::ExperimentOnly => global_rank_sum_statistic(&t_local, &c_local),
    };
    Ok([
        verdicts(welch_t_statistic(&t_values, &c_values), alphas),
        verdicts(rank_sum_statistic(&t_local, &c_local), alphas),
        verdicts(grs, alphas),
    ])
}

/// Runs a study against an already prepared population.
pub fn run_study_on(prepared: &PreparedPopulation, config: &SimulationConfig, kind: StudyKind) -> Result<StudyReport> {
    config.validate()?;
    if !prepared.matches(config) {
        return Err(Error::InvalidConfig(
            "prepared population does not match the configuration".into(),
        ));
    }
    if kind == StudyKind::Calibration && config.lift_ratio != 0.0 {
        return Err(Error::InvalidConfig("calibration study requires lift_ratio = 0".into()));
    }

    let start = Instant::now();
    let outcomes = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| replicate(prepared, config, kind, rep))
        .collect::<Result<Vec<RepOutcome>>>()?;
    let replication_seconds = start.elapsed().as_secs_f64();

    let reps = config.replications;
    let mut cells = Vec::with_capacity(3 * config.alphas.len());
    for (mi, method) in Method::ALL.into_iter().enumerate() {
        for (ai, &alpha) in config.alphas.iter().enumerate() {
            let rejections = outcomes
                .iter()
                .filter(|o| o[mi].as_ref().is_some_and(|flags| flags[ai]))
                .count();
            let failures = outcomes.iter().filter(|o| o[mi].is_none()).count();
            cells.push(RateCell {
                method,
                alpha,
                rejections,
                failures,
                rejection_rate: rejections as f64 / reps as f64,
            });
        }
    }
    Ok(StudyReport {
        kind,
        config: config.clone(),
        replications: reps,
        cells,
        timings: PhaseTimings {
            replication_seconds,
            ..prepared.timings.clone()
        },
    })
}

/// Type-I error study: no lift, one global ranking reused by every replication.
pub fn run_calibration_study(config: &SimulationConfig) -> Result<StudyReport> {
    config.validate()?;
    if config.lift_ratio != 0.0 {
        return Err(Error::InvalidConfig("calibration study requires lift_ratio = 0".into()));
    }
    let prepared = PreparedPopulation::generate(config)?;
    run_study_on(&prepared, config, StudyKind::Calibration)
}

/// Power study: treatment values are scaled by `1 + lift_ratio` before ranking.
///
/// `lift_ratio = 0` is accepted and reproduces the calibration report.
pub fn run_power_study(config: &SimulationConfig) -> Result<StudyReport> {
    config.validate()?;
    let prepared = PreparedPopulation::generate(config)?;
    run_study_on(&prepared, config, StudyKind::Power)
}
