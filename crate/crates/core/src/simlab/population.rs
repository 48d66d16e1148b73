use rand::RngCore;

use crate::error::{Error, Result};
use crate::hypotest::normal_quantile;
use crate::rankcore::MetricRecord;

/// Stream reserved for population generation; replications use streams `0..reps`.
pub(crate) const POPULATION_STREAM: u64 = u64::MAX;

/// Uniform draw in the open interval (0, 1) with 53 bits of resolution.
pub(crate) fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw by inversion.
pub(crate) fn standard_normal(rng: &mut impl RngCore) -> f64 {
    // open_unit never returns 0 or 1, so the quantile is always defined.
    normal_quantile(open_unit(rng)).expect("open unit interval")
}

/// `n` users with `log(value) ~ N(mu, sigma²)` and ids `"1"..="n"`.
pub fn gen_lognormal_population(n: usize, mu: f64, sigma: f64, seed: u64) -> Result<Vec<MetricRecord>> {
    if n == 0 {
        return Err(Error::InvalidConfig("population size must be at least 1".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "log-normal parameters must be finite with sigma > 0 (got mu={mu}, sigma={sigma})"
        )));
    }
    let mut rng = super::stream_rng(seed, POPULATION_STREAM);
    let records = (1..=n)
        .map(|i| {
            let z = standard_normal(&mut rng);
            MetricRecord::new(i.to_string(), (mu + sigma * z).exp())
        })
        .collect::<Vec<_>>();
    if let Some(bad) = records.iter().find(|r| !r.value.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "log-normal draw overflowed for user {} (mu={mu}, sigma={sigma})",
            bad.user_id
        )));
    }
    Ok(records)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_scale() {
        let pop = gen_lognormal_population(1000, 0.0, 1e-9, 3).unwrap();
        assert!(pop.iter().all(|r| (r.value - 1.0).abs() < 1e-6));
        assert_eq!(pop[0].user_id.as_str(), "1");
        assert_eq!(pop[999].user_id.as_str(), "1000");
    }

    #[test]
    fn deterministic() {
        let a = gen_lognormal_population(500, -3.0, 3.0, 9).unwrap();
        let b = gen_lognormal_population(500, -3.0, 3.0, 9).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.value.to_bits() == y.value.to_bits()));
        let c = gen_lognormal_population(500, -3.0, 3.0, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn log_moments_at_scale() {
        let pop = gen_lognormal_population(1_000_000, -3.0, 3.0, 42).unwrap();
        let logs: Vec<f64> = pop.iter().map(|r| r.value.ln()).collect();
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let sd = (logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // 3σ Monte Carlo bands: 3·3/1000 = 0.009 for the mean, ≈ 3·3/√(2·10⁶) ≈ 0.0064 for the sd.
        assert!((mean + 3.0).abs() < 0.01, "mean {mean}");
        assert!((sd - 3.0).abs() < 0.01, "sd {sd}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(gen_lognormal_population(0, 0.0, 1.0, 1).is_err());
        assert!(gen_lognormal_population(10, 0.0, 0.0, 1).is_err());
        assert!(gen_lognormal_population(10, 0.0, -1.0, 1).is_err());
        assert!(gen_lognormal_population(10, f64::NAN, 1.0, 1).is_err());
    }

    #[test]
    fn open_unit_stays_inside() {
        let mut rng = crate::simlab::stream_rng(0, 0);
        for _ in 0..10_000 {
            let u = open_unit(&mut rng);
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
