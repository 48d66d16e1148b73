//! The three two-sample statistics: Welch-style t, classic rank-sum on local
//! ranks, and global-rank-sum on raw population ranks.

use crate::error::{Error, Result};

/// M below which the normal approximation is flagged as rough.
pub const SMALL_SAMPLE_WARNING: usize = 30;

pub(crate) fn warn_if_small(method: &str, m: usize) {
    if m < SMALL_SAMPLE_WARNING {
        log::warn!("{method}: experiment size {m} is below {SMALL_SAMPLE_WARNING}; normal approximation may be poor");
    }
}

fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    // Second-pass correction for rounding in the mean.
    let comp: f64 = values.iter().map(|v| v - mean).sum();
    (mean, (ss - comp * comp / n) / (n - 1.0))
}

/// t = Δ/σ with Δ = Ȳ_t − Ȳ_c and σ² = s²_t/N_t + s²_c/N_c.
pub fn welch_t_statistic(treatment: &[f64], control: &[f64]) -> Result<f64> {
    if treatment.len() < 2 || control.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "t-test needs at least 2 values per group (got {} and {})",
            treatment.len(),
            control.len()
        )));
    }
    if treatment.iter().chain(control).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("<sample>".into()));
    }
    let (mt, vt) = mean_and_variance(treatment);
    let (mc, vc) = mean_and_variance(control);
    let se2 = vt / treatment.len() as f64 + vc / control.len() as f64;
    if se2.is_nan() || se2 <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((mt - mc) / se2.sqrt())
}

/// Classic rank-sum statistic on within-experiment ranks:
/// rs = (R̄_t − R̄_c) / √(M(M²−1) / (12·N_t·N_c)).
///
/// The two lists together must be exactly `{1, …, M}`.
pub fn rank_sum_statistic(treatment: &[u64], control: &[u64]) -> Result<f64> {
    let (nt, nc) = (treatment.len(), control.len());
    if nt == 0 || nc == 0 {
        return Err(Error::InsufficientSamples("rank-sum needs both groups non-empty".into()));
    }
    let m = nt + nc;
    let mut seen = vec![false; m];
    for &r in treatment.iter().chain(control) {
        if r == 0 || r > m as u64 || std::mem::replace(&mut seen[(r - 1) as usize], true) {
            return Err(Error::InvalidLocalRanks(format!("rank {r} is not a unique member of 1..={m}")));
        }
    }
    warn_if_small("rank_sum", m);
    let st: u128 = treatment.iter().map(|&r| r as u128).sum();
    let sc: u128 = control.iter().map(|&r| r as u128).sum();
    let diff = st as f64 / nt as f64 - sc as f64 / nc as f64;
    let (m, nt, nc) = (m as f64, nt as f64, nc as f64);
    Ok(diff / (m * (m * m - 1.0) / (12.0 * nt * nc)).sqrt())
}

/// Global-rank-sum statistic on raw population ranks:
/// grs = (R̄_t − R̄_c) / (σ·√(1/N_t + 1/N_c)), σ² = Σ(R_i − R̄)²/(M − 1).
///
/// Ranks are used as given, without re-densifying to `1..=M`. All sums are
/// exact in 128-bit integers; only the final scaling is floating point.
pub fn global_rank_sum_statistic(treatment: &[u64], control: &[u64]) -> Result<f64> {
    let (nt, nc) = (treatment.len() as u128, control.len() as u128);
    if nt == 0 || nc == 0 {
        return Err(Error::InsufficientSamples(
            "global-rank-sum needs both groups non-empty".into(),
        ));
    }
    if treatment.iter().chain(control).any(|&r| r == 0) {
        return Err(Error::InvalidLocalRanks("ranks must be positive".into()));
    }
    let m = nt + nc;
    warn_if_small("global_rank_sum", m as usize);

    let (st, qt) = sums(treatment)?;
    let (sc, qc) = sums(control)?;
    let s = st.checked_add(sc).ok_or(Error::RankOverflow)?;
    let q = qt.checked_add(qc).ok_or(Error::RankOverflow)?;
    // M·Σ(R_i − R̄)² = M·ΣR² − (ΣR)²
    let d = m
        .checked_mul(q)
        .and_then(|mq| s.checked_mul(s).and_then(|s2| mq.checked_sub(s2)))
        .ok_or(Error::RankOverflow)?;
    if d == 0 {
        return Err(Error::ZeroRankVariance);
    }
    // N_c·S_t − N_t·S_c = N_t·N_c·(R̄_t − R̄_c)
    let lhs = nc.checked_mul(st).ok_or(Error::RankOverflow)?;
    let rhs = nt.checked_mul(sc).ok_or(Error::RankOverflow)?;
    let num = if lhs >= rhs {
        (lhs - rhs) as f64
    } else {
        -((rhs - lhs) as f64)
    };
    let (m, nt, nc, d) = (m as f64, nt as f64, nc as f64, d as f64);
    Ok(num * ((m - 1.0) / (d * nt * nc)).sqrt())
}

fn sums(ranks: &[u64]) -> Result<(u128, u128)> {
    let mut s: u128 = 0;
    let mut q: u128 = 0;
    for &r in ranks {
        let r = r as u128;
        s += r;
        q = q.checked_add(r * r).ok_or(Error::RankOverflow)?;
    }
    Ok((s, q))
}
