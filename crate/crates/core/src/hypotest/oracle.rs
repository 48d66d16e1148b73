//! Exact permutation-null moments of R̄_t − R̄_c by full enumeration.
//!
//! Every size-`n_treatment` subset of the experiment's ranks is taken as the
//! treatment group once. Used to check the closed-form variance
//! (1/N_t + 1/N_c)·σ² on small instances.

use crate::error::{Error, Result};

/// Largest number of splits the oracle will enumerate.
pub const ORACLE_BUDGET: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitMoments {
    pub mean: f64,
    pub variance: f64,
    pub splits: u64,
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

pub fn exact_split_moments(ranks: &[u64], n_treatment: usize) -> Result<SplitMoments> {
    let m = ranks.len();
    if m < 2 || n_treatment == 0 || n_treatment >= m {
        return Err(Error::InsufficientSamples(format!(
            "need 1 <= n_treatment < M with M >= 2 (got n_treatment={n_treatment}, M={m})"
        )));
    }
    let count = binomial(m, n_treatment).unwrap_or(u128::MAX);
    if count > ORACLE_BUDGET as u128 {
        return Err(Error::OracleBudget {
            m,
            k: n_treatment,
            budget: ORACLE_BUDGET,
        });
    }
    let total: i128 = ranks.iter().map(|&r| r as i128).sum();
    let (mi, nt) = (m as i128, n_treatment as i128);

    // For each split, M·S_t − N_t·S equals N_t·N_c·(R̄_t − R̄_c).
    let mut sum: i128 = 0;
    let mut sum_sq: u128 = 0;
    let mut idx: Vec<usize> = (0..n_treatment).collect();
    loop {
        let st: i128 = idx.iter().map(|&i| ranks[i] as i128).sum();
        let num = mi * st - nt * total;
        sum += num;
        sum_sq = sum_sq
            .checked_add(num.unsigned_abs().checked_mul(num.unsigned_abs()).ok_or(Error::RankOverflow)?)
            .ok_or(Error::RankOverflow)?;
        if !next_combination(&mut idx, m) {
            break;
        }
    }

    let count_f = count as f64;
    let scale = (n_treatment * (m - n_treatment)) as f64;
    let mean = sum as f64 / (count_f * scale);
    // count·Σnum² − (Σnum)², exact in integers
    let centered = (count)
        .checked_mul(sum_sq)
        .and_then(|a| a.checked_sub(sum.unsigned_abs() * sum.unsigned_abs()))
        .ok_or(Error::RankOverflow)?;
    let variance = centered as f64 / (count_f * count_f * scale * scale);
    Ok(SplitMoments {
        mean,
        variance,
        splits: count as u64,
    })
}

/// Advances `idx` to the next k-subset of 0..n in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_ranks_even_split() {
        let m = exact_split_moments(&[1, 2, 3, 4], 2).unwrap();
        assert_eq!(m.splits, 6);
        assert_eq!(m.mean, 0.0);
        // splits give diffs ±2, ±1, ±0 → mean square (8+2+0)/6
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn worked_example_first_experiment() {
        let m = exact_split_moments(&[4, 3, 10, 8, 7, 1], 3).unwrap();
        assert_eq!(m.splits, 20);
        assert_eq!(m.mean, 0.0);
        assert!((m.variance - 23.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn budget_guard() {
        let ranks: Vec<u64> = (1..=30).collect();
        assert!(matches!(exact_split_moments(&ranks, 15), Err(Error::OracleBudget { .. })));
        // C(30, 2) = 435 is fine
        assert!(exact_split_moments(&ranks, 2).is_ok());
    }

    #[test]
    fn invalid_split() {
        assert!(exact_split_moments(&[1, 2, 3], 0).is_err());
        assert!(exact_split_moments(&[1, 2, 3], 3).is_err());
        assert!(exact_split_moments(&[1], 1).is_err());
    }

    #[test]
    fn enumerates_every_subset_once() {
        let mut idx = vec![0, 1];
        let mut seen = vec![idx.clone()];
        while next_combination(&mut idx, 5) {
            seen.push(idx.clone());
        }
        assert_eq!(seen.len(), 10);
        assert_eq!(seen.last().unwrap(), &vec![3, 4]);
    }
}
