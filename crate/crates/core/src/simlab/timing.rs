//! Wall-clock comparison of per-experiment sorting against one global sort.

use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::population::gen_lognormal_population;
use super::sampling::{sample_split, Split};
use super::{stream_rng, SimulationConfig};
use crate::error::{Error, Result};
use crate::hypotest::{global_rank_sum_statistic, rank_sum_statistic};
use crate::rankcore::{compute_global_ranks, tiebreak_key, MetricRecord, RankKey};

/// Streams for benchmark experiments start here, clear of replication streams.
const BENCH_STREAM_BASE: u64 = 1 << 62;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingOptions {
    /// Timed runs per path; the median is reported.
    pub runs: usize,
    /// Worker threads for both paths.
    pub threads: usize,
}

impl Default for TimingOptions {
    fn default() -> Self {
        TimingOptions { runs: 3, threads: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n_experiments: usize,
    pub population_size: usize,
    pub experiment_size: usize,
    /// Per-experiment sort + rank-sum, summed over experiments.
    pub traditional_seconds: f64,
    /// One population sort + per-experiment rank lookups.
    pub global_seconds: f64,
    /// (global − traditional) / traditional.
    pub diff_ratio: f64,
}

fn experiment(config: &SimulationConfig, index: usize) -> Result<Split> {
    let mut rng = stream_rng(config.seed, BENCH_STREAM_BASE + index as u64);
    sample_split(config.population_size, config.split(), &mut rng)
}

/// Sorts the experiment's raw values and computes the classic statistic.
fn traditional_one(records: &[MetricRecord], split: &Split, seed: u64) -> Result<f64> {
    let mut keyed: Vec<(RankKey, usize, bool)> = split
        .treatment
        .iter()
        .map(|&p| (p, true))
        .chain(split.control.iter().map(|&p| (p, false)))
        .map(|(p, is_t)| {
            let r = &records[p];
            (RankKey::new(r.value, tiebreak_key(r.user_id.as_str(), seed)), p, is_t)
        })
        .collect();
    keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut t = Vec::with_capacity(split.treatment.len());
    let mut c = Vec::with_capacity(split.control.len());
    for (i, &(_, _, is_t)) in keyed.iter().enumerate() {
        if is_t {
            t.push(i as u64 + 1);
        } else {
            c.push(i as u64 + 1);
        }
    }
    rank_sum_statistic(&t, &c)
}

fn traditional_path(records: &[MetricRecord], config: &SimulationConfig, n: usize) -> Result<Duration> {
    let mut total = Duration::ZERO;
    for e in 0..n {
        let split = experiment(config, e)?;
        let start = Instant::now();
        black_box(traditional_one(records, &split, config.seed)?);
        total += start.elapsed();
    }
    Ok(total)
}

fn global_path(records: &[MetricRecord], config: &SimulationConfig, n: usize) -> Result<Duration> {
    let start = Instant::now();
    let table = black_box(compute_global_ranks(records, config.seed)?);
    let mut total = start.elapsed();
    let ranks = table.ranks();
    for e in 0..n {
        let split = experiment(config, e)?;
        let start = Instant::now();
        let t: Vec<u64> = split.treatment.iter().map(|&p| ranks[p]).collect();
        let c: Vec<u64> = split.control.iter().map(|&p| ranks[p]).collect();
        black_box(global_rank_sum_statistic(&t, &c)?);
        total += start.elapsed();
    }
    Ok(total)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

fn time_on(records: &[MetricRecord], n_experiments: usize, config: &SimulationConfig, options: &TimingOptions) -> Result<TimingRow> {
    if n_experiments == 0 {
        return Err(Error::InvalidConfig("n_experiments must be at least 1".into()));
    }
    if options.runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    // Warm-up, not timed.
    traditional_path(records, config, 1)?;
    global_path(records, config, 1)?;

    let mut trad = Vec::with_capacity(options.runs);
    let mut glob = Vec::with_capacity(options.runs);
    for _ in 0..options.runs {
        trad.push(traditional_path(records, config, n_experiments)?.as_secs_f64());
        glob.push(global_path(records, config, n_experiments)?.as_secs_f64());
    }
    let (traditional_seconds, global_seconds) = (median(trad), median(glob));
    Ok(TimingRow {
        n_experiments,
        population_size: records.len(),
        experiment_size: config.split().size(),
        traditional_seconds,
        global_seconds,
        diff_ratio: (global_seconds - traditional_seconds) / traditional_seconds,
    })
}

/// Times both paths for several experiment counts over one generated population.
pub fn run_timing_sweep(counts: &[usize], config: &SimulationConfig, options: &TimingOptions) -> Result<Vec<TimingRow>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let records = gen_lognormal_population(config.population_size, config.mu, config.sigma, config.seed)?;
    pool.install(|| {
        counts
            .iter()
            .map(|&n| time_on(&records, n, config, options))
            .collect()
    })
}

pub fn run_timing_benchmark(n_experiments: usize, config: &SimulationConfig) -> Result<TimingRow> {
    let mut rows = run_timing_sweep(&[n_experiments], config, &TimingOptions::default())?;
    Ok(rows.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree_on_statistics() {
        let config = SimulationConfig {
            population_size: 5_000,
            n_treatment: 400,
            n_control: 600,
            seed: 12,
            ..Default::default()
        };
        let records = gen_lognormal_population(5_000, -3.0, 3.0, 12).unwrap();
        let table = compute_global_ranks(&records, 12).unwrap();
        for e in 0..5 {
            let split = experiment(&config, e).unwrap();
            let rs = traditional_one(&records, &split, 12).unwrap();
            let t: Vec<u64> = split.treatment.iter().map(|&p| table.rank_at(p)).collect();
            let c: Vec<u64> = split.control.iter().map(|&p| table.rank_at(p)).collect();
            let local = crate::rankcore::densify(&t.iter().chain(&c).copied().collect::<Vec<_>>());
            let (lt, lc) = local.split_at(t.len());
            assert_eq!(rs, rank_sum_statistic(lt, lc).unwrap());
        }
    }

    #[test]
    fn reports_a_row() {
        let config = SimulationConfig {
            population_size: 2_000,
            n_treatment: 200,
            n_control: 200,
            ..Default::default()
        };
        let row = run_timing_sweep(&[2], &config, &TimingOptions { runs: 1, threads: 1 }).unwrap().remove(0);
        assert_eq!(row.n_experiments, 2);
        assert_eq!(row.experiment_size, 400);
        assert!(row.traditional_seconds > 0.0 && row.global_seconds > 0.0);
        assert!(run_timing_benchmark(0, &config).is_err());
    }

    #[test]
    fn median_of_runs() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0]), 2.5);
    }
}
