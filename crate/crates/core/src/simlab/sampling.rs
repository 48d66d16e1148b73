use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypotest::{ExperimentAssignment, Group};
use crate::rankcore::MetricRecord;

/// Group sizes of a randomly split experiment. Every experiment user is in
/// treatment with the same probability `p = N_t / (N_t + N_c)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_treatment: usize,
    pub n_control: usize,
}

impl SplitSpec {
    pub fn new(n_treatment: usize, n_control: usize) -> Self {
        SplitSpec {
            n_treatment,
            n_control,
        }
    }

    pub fn size(&self) -> usize {
        self.n_treatment + self.n_control
    }

    pub fn treatment_probability(&self) -> f64 {
        self.n_treatment as f64 / self.size() as f64
    }

    pub fn validate(&self, population_size: usize) -> Result<()> {
        if self.n_treatment == 0 || self.n_control == 0 {
            return Err(Error::InvalidConfig(format!(
                "both groups must be non-empty (n_treatment={}, n_control={})",
                self.n_treatment, self.n_control
            )));
        }
        if self.size() > population_size {
            return Err(Error::InvalidConfig(format!(
                "experiment of {} users exceeds population of {population_size}",
                self.size()
            )));
        }
        Ok(())
    }
}

/// Population positions of one sampled experiment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub treatment: Vec<usize>,
    pub control: Vec<usize>,
}

/// Uniform subset of size `N_t + N_c`, then a uniform split into groups.
pub fn sample_split<R: Rng + ?Sized>(population_size: usize, spec: SplitSpec, rng: &mut R) -> Result<Split> {
    spec.validate(population_size)?;
    let mut chosen = index::sample(rng, population_size, spec.size()).into_vec();
    chosen.shuffle(rng);
    let control = chosen.split_off(spec.n_treatment);
    Ok(Split {
        treatment: chosen,
        control,
    })
}

pub fn sample_experiment(
    population: &[MetricRecord],
    n_treatment: usize,
    n_control: usize,
    seed: u64,
) -> Result<ExperimentAssignment> {
    let mut rng = super::stream_rng(seed, 0);
    let split = sample_split(population.len(), SplitSpec::new(n_treatment, n_control), &mut rng)?;
    let mut assignment = ExperimentAssignment::new(format!("sim-{seed}"));
    for (positions, group) in [(&split.treatment, Group::Treatment), (&split.control, Group::Control)] {
        for &p in positions {
            assignment.assign(population[p].user_id.clone(), group)?;
        }
    }
    Ok(assignment)
}

/// Observed records of the experiment's users: treatment values scaled by
/// `1 + gamma`, control values unchanged. Output follows population order.
pub fn apply_lift(
    assignment: &ExperimentAssignment,
    population: &[MetricRecord],
    gamma: f64,
) -> Result<Vec<MetricRecord>> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("lift ratio must be finite and >= 0 (got {gamma})")));
    }
    let factor = 1.0 + gamma;
    let observed: Vec<MetricRecord> = population
        .iter()
        .filter_map(|r| {
            assignment.groups.get(r.user_id.as_str()).map(|g| match g {
                Group::Treatment => MetricRecord::new(r.user_id.clone(), r.value * factor),
                Group::Control => r.clone(),
            })
        })
        .collect();
    if observed.len() != assignment.size() {
        let missing = assignment
            .groups
            .keys()
            .find(|u| !population.iter().any(|r| &r.user_id == *u))
            .map(|u| u.to_string())
            .unwrap_or_default();
        return Err(Error::UnknownUser(missing));
    }
    Ok(observed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pop(n: usize) -> Vec<MetricRecord> {
        (1..=n).map(|i| MetricRecord::new(i.to_string(), i as f64)).collect()
    }

    #[test]
    fn rejects_oversized_and_empty_groups() {
        let p = pop(10);
        assert!(sample_experiment(&p, 10, 0, 1).is_err());
        assert!(sample_experiment(&p, 0, 3, 1).is_err());
        assert!(sample_experiment(&p, 6, 5, 1).is_err());
        assert!(sample_experiment(&p, 5, 5, 1).is_ok());
    }

    #[test]
    fn deterministic_and_disjoint() {
        let p = pop(100);
        let a = sample_experiment(&p, 10, 10, 77).unwrap();
        assert_eq!(a, sample_experiment(&p, 10, 10, 77).unwrap());
        assert_eq!((a.n_treatment(), a.n_control()), (10, 10));
        assert_ne!(a.groups, sample_experiment(&p, 10, 10, 78).unwrap().groups);
    }

    #[test]
    fn inclusion_frequency_is_uniform() {
        let n = 100;
        let mut counts = vec![0u32; n];
        let mut treat = 0u32;
        let draws = 1000;
        for seed in 0..draws {
            let mut rng = crate::simlab::stream_rng(seed, 0);
            let s = sample_split(n, SplitSpec::new(10, 10), &mut rng).unwrap();
            let all: HashSet<usize> = s.treatment.iter().chain(&s.control).copied().collect();
            assert_eq!(all.len(), 20);
            for p in all {
                counts[p] += 1;
            }
            treat += s.treatment.iter().filter(|&&p| p < 50).count() as u32;
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((0.14..=0.26).contains(&f), "inclusion frequency {f}");
        }
        // Half of the treatment seats go to the lower half on average.
        let frac = treat as f64 / (draws as f64 * 10.0);
        assert!((frac - 0.5).abs() < 0.03);
    }

    #[test]
    fn lift_values() {
        let p = vec![MetricRecord::new("a", 2.0), MetricRecord::new("b", 2.0), MetricRecord::new("z", 5.0)];
        let mut e = ExperimentAssignment::new("e");
        e.assign("a", Group::Treatment).unwrap();
        e.assign("b", Group::Control).unwrap();
        let obs = apply_lift(&e, &p, 0.1).unwrap();
        assert_eq!(obs.len(), 2);
        assert!((obs[0].value - 2.2).abs() < 1e-15);
        assert_eq!(obs[1].value, 2.0);
        let same = apply_lift(&e, &p, 0.0).unwrap();
        assert_eq!(same, vec![p[0].clone(), p[1].clone()]);
        assert!(apply_lift(&e, &p, -0.5).is_err());
    }

    #[test]
    fn lift_reports_missing_user() {
        let p = vec![MetricRecord::new("a", 2.0)];
        let mut e = ExperimentAssignment::new("e");
        e.assign("ghost", Group::Treatment).unwrap();
        assert!(matches!(apply_lift(&e, &p, 0.1), Err(Error::UnknownUser(u)) if u == "ghost"));
    }
}
