//! Standard normal reference distribution.

use std::f64::consts::SQRT_2;

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Φ(z), the standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Upper tail 1 − Φ(z), without cancellation for large z.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Φ⁻¹(q) for q in (0, 1).
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidProbability(q));
    }
    let z = -SQRT_2 * erfc_inv(2.0 * q);
    // One Newton step against the CDF above; the residual is taken from the
    // nearer tail so it keeps full relative precision.
    let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 {
        let residual = if q < 0.5 {
            normal_cdf(z) - q
        } else {
            (1.0 - q) - normal_sf(z)
        };
        let refined = z - residual / density;
        if refined.is_finite() {
            return Ok(refined);
        }
    }
    Ok(z)
}

/// Two-sided p-value 2·(1 − Φ(|z|)).
pub fn two_sided_p_value(z: f64) -> f64 {
    (2.0 * normal_sf(z.abs())).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// erf via the everywhere-positive series
    /// erf(x) = 2/√π · e^{−x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1)).
    fn erf_series(x: f64) -> f64 {
        let (sign, x) = if x < 0.0 { (-1.0, -x) } else { (1.0, x) };
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term > 1e-18 * sum {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        sign * 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    }

    fn cdf_oracle(z: f64) -> f64 {
        0.5 * (1.0 + erf_series(z / SQRT_2))
    }

    fn bisect_quantile(q: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf_oracle(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn cdf_matches_series_oracle() {
        let mut z = -6.0;
        while z <= 6.0 {
            let d = (normal_cdf(z) - cdf_oracle(z)).abs();
            assert!(d <= 1e-12, "z={z} diff={d}");
            z += 0.037;
        }
    }

    #[test]
    fn cdf_fixed_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        for z in [0.1, 0.7, 1.3, 2.5, 4.0, 8.0] {
            assert!((normal_cdf(z) + normal_cdf(-z) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn quantile_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        let z = normal_quantile(0.975).unwrap();
        assert!((z - 1.959964).abs() < 1e-5);
        assert!((z - bisect_quantile(0.975)).abs() < 1e-9);
        for q in [0.95, 0.975, 0.995, 0.001, 0.3] {
            assert!((normal_cdf(normal_quantile(q).unwrap()) - q).abs() < 1e-9, "q={q}");
        }
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(q).is_err());
        }
    }

    #[test]
    fn p_value_bounds() {
        assert_eq!(two_sided_p_value(0.0), 1.0);
        assert!((two_sided_p_value(1.959964) - 0.05).abs() < 1e-6);
        assert_eq!(two_sided_p_value(-3.0), two_sided_p_value(3.0));
        assert!(two_sided_p_value(50.0) >= 0.0);
    }
}
