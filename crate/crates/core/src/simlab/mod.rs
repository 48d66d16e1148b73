//! Simulation studies on log-normal populations: type-I calibration, power
//! under a multiplicative lift, and the sort-once timing crossover.
//!
//! Every replication draws from its own ChaCha stream (stream id = replication
//! index), so reports do not depend on how replications are scheduled.

mod population;
mod report;
mod sampling;
mod study;
mod timing;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypotest::validate_alphas;

pub use population::gen_lognormal_population;
pub use report::{render_study_csv, render_study_json, render_study_table, render_timing_csv, render_timing_json, render_timing_table};
pub use sampling::{apply_lift, sample_experiment, sample_split, Split, SplitSpec};
pub use study::{
    run_calibration_study, run_power_study, run_study_on, PhaseTimings, PreparedPopulation, RateCell, StudyKind,
    StudyReport,
};
pub use timing::{run_timing_benchmark, run_timing_sweep, TimingOptions, TimingRow};

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Which ranks feed the global-rank-sum test once treatment values are lifted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingBase {
    /// Re-rank the whole population with treatment values lifted.
    #[default]
    LiftedPopulation,
    /// Rank only the experiment's own observed values.
    ExperimentOnly,
}

impl std::str::FromStr for RankingBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lifted_population" | "population" => Ok(RankingBase::LiftedPopulation),
            "experiment_only" | "experiment" => Ok(RankingBase::ExperimentOnly),
            other => Err(Error::InvalidConfig(format!("unknown ranking base '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub mu: f64,
    pub sigma: f64,
    pub population_size: usize,
    pub n_treatment: usize,
    pub n_control: usize,
    pub replications: usize,
    pub lift_ratio: f64,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub ranking_base: RankingBase,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            mu: -3.0,
            sigma: 3.0,
            population_size: 1_000_000,
            n_treatment: 100_000,
            n_control: 100_000,
            replications: 5_000,
            lift_ratio: 0.0,
            alphas: vec![0.01, 0.05, 0.10],
            seed: 0,
            ranking_base: RankingBase::LiftedPopulation,
        }
    }
}

impl SimulationConfig {
    pub fn split(&self) -> SplitSpec {
        SplitSpec::new(self.n_treatment, self.n_control)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) || !self.mu.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "need finite mu and sigma > 0 (got mu={}, sigma={})",
                self.mu, self.sigma
            )));
        }
        if self.population_size == 0 {
            return Err(Error::InvalidConfig("population_size must be at least 1".into()));
        }
        self.split().validate(self.population_size)?;
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if !(self.lift_ratio >= 0.0 && self.lift_ratio.is_finite()) {
            return Err(Error::InvalidConfig(format!("lift_ratio must be >= 0 (got {})", self.lift_ratio)));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidConfig("at least one alpha is required".into()));
        }
        validate_alphas(&self.alphas)?;
        if self.alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("alphas must be sorted ascending without repeats".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimulationConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let base = SimulationConfig {
            population_size: 100,
            n_treatment: 10,
            n_control: 10,
            ..Default::default()
        };
        base.validate().unwrap();
        let bad = [
            SimulationConfig { sigma: 0.0, ..base.clone() },
            SimulationConfig { n_treatment: 95, ..base.clone() },
            SimulationConfig { n_control: 0, ..base.clone() },
            SimulationConfig { replications: 0, ..base.clone() },
            SimulationConfig { lift_ratio: -0.1, ..base.clone() },
            SimulationConfig { alphas: vec![0.1, 0.05], ..base.clone() },
            SimulationConfig { alphas: vec![0.05, 1.0], ..base.clone() },
            SimulationConfig { alphas: vec![], ..base.clone() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn config_from_toml() {
        let cfg: SimulationConfig = toml::from_str("mu = -5.0\nsigma = 7.0\nlift_ratio = 0.2\nranking_base = \"experiment_only\"").unwrap();
        assert_eq!(cfg.mu, -5.0);
        assert_eq!(cfg.population_size, 1_000_000);
        assert_eq!(cfg.ranking_base, RankingBase::ExperimentOnly);
        assert!(toml::from_str::<SimulationConfig>("bogus = 1").is_err());
    }
}
