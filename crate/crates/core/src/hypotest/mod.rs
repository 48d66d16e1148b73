//! Two-sample tests under the normal reference distribution.

mod normal;
mod oracle;
mod statistics;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rankcore::UserId;

pub use normal::{normal_cdf, normal_quantile, normal_sf, two_sided_p_value};
pub use oracle::{exact_split_moments, SplitMoments, ORACLE_BUDGET};
pub use statistics::{
    global_rank_sum_statistic, rank_sum_statistic, welch_t_statistic, SMALL_SAMPLE_WARNING,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TTest,
    RankSum,
    GlobalRankSum,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::TTest, Method::RankSum, Method::GlobalRankSum];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::TTest => "t_test",
            Method::RankSum => "rank_sum",
            Method::GlobalRankSum => "global_rank_sum",
        }
    }

    pub fn uses_ranks(self) -> bool {
        !matches!(self, Method::TTest)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t_test" | "t" => Ok(Method::TTest),
            "rank_sum" | "rs" => Ok(Method::RankSum),
            "global_rank_sum" | "grs" => Ok(Method::GlobalRankSum),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Treatment,
    Control,
}

impl Group {
    pub fn label(self) -> &'static str {
        match self {
            Group::Treatment => "t",
            Group::Control => "c",
        }
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" => Ok(Group::Treatment),
            "c" => Ok(Group::Control),
            other => Err(Error::UnknownGroup(other.to_owned())),
        }
    }
}

/// One experiment's user → group labelling. Users outside the experiment are
/// simply absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentAssignment {
    pub experiment_id: String,
    pub groups: BTreeMap<UserId, Group>,
}

impl ExperimentAssignment {
    pub fn new(experiment_id: impl Into<String>) -> Self {
        ExperimentAssignment {
            experiment_id: experiment_id.into(),
            groups: BTreeMap::new(),
        }
    }

    /// Adds a user; a second assignment of the same user is an error.
    pub fn assign(&mut self, user: impl Into<UserId>, group: Group) -> Result<()> {
        let user = user.into();
        if self.groups.contains_key(&user) {
            return Err(Error::DuplicateAssignment {
                experiment: self.experiment_id.clone(),
                user: user.to_string(),
            });
        }
        self.groups.insert(user, group);
        Ok(())
    }

    pub fn users_in(&self, group: Group) -> impl Iterator<Item = &UserId> + '_ {
        self.groups
            .iter()
            .filter(move |(_, &g)| g == group)
            .map(|(u, _)| u)
    }

    pub fn n_treatment(&self) -> usize {
        self.users_in(Group::Treatment).count()
    }

    pub fn n_control(&self) -> usize {
        self.users_in(Group::Control).count()
    }

    pub fn size(&self) -> usize {
        self.groups.len()
    }

    /// Both groups non-empty.
    pub fn is_testable(&self) -> bool {
        self.n_treatment() > 0 && self.n_control() > 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    Accept,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Reject => "reject",
            Decision::Accept => "accept",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaDecision {
    pub alpha: f64,
    pub decision: Decision,
}

/// Two-sided p-value plus a reject/accept call per α.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub p_value: f64,
    pub decisions: Vec<AlphaDecision>,
}

pub fn validate_alphas(alphas: &[f64]) -> Result<()> {
    match alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        Some(&a) => Err(Error::InvalidAlpha(a)),
        None => Ok(()),
    }
}

/// Reject at level α iff |z| > z_{1−α/2}, evaluated as p < α so that the
/// p-value and the decisions can never disagree.
pub fn decide(statistic: f64, alphas: &[f64]) -> Result<Verdict> {
    validate_alphas(alphas)?;
    let p_value = two_sided_p_value(statistic);
    let decisions = alphas
        .iter()
        .map(|&alpha| AlphaDecision {
            alpha,
            decision: if p_value < alpha {
                Decision::Reject
            } else {
                Decision::Accept
            },
        })
        .collect();
    Ok(Verdict { p_value, decisions })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub n_treatment: usize,
    pub n_control: usize,
    pub decisions: Vec<AlphaDecision>,
}

impl TestResult {
    pub fn from_statistic(
        method: Method,
        statistic: f64,
        n_treatment: usize,
        n_control: usize,
        alphas: &[f64],
    ) -> Result<Self> {
        let Verdict { p_value, decisions } = decide(statistic, alphas)?;
        Ok(TestResult {
            method,
            statistic,
            p_value,
            n_treatment,
            n_control,
            decisions,
        })
    }

    pub fn rejects_at(&self, alpha: f64) -> Option<bool> {
        self.decisions
            .iter()
            .find(|d| d.alpha == alpha)
            .map(|d| d.decision == Decision::Reject)
    }
}

/// Runs the t-test on raw values.
pub fn t_test(treatment: &[f64], control: &[f64], alphas: &[f64]) -> Result<TestResult> {
    let stat = welch_t_statistic(treatment, control)?;
    TestResult::from_statistic(Method::TTest, stat, treatment.len(), control.len(), alphas)
}

/// Runs the classic rank-sum test on within-experiment ranks.
pub fn rank_sum_test(treatment: &[u64], control: &[u64], alphas: &[f64]) -> Result<TestResult> {
    let stat = rank_sum_statistic(treatment, control)?;
    TestResult::from_statistic(Method::RankSum, stat, treatment.len(), control.len(), alphas)
}

/// Runs the global-rank-sum test on population ranks.
pub fn global_rank_sum_test(treatment: &[u64], control: &[u64], alphas: &[f64]) -> Result<TestResult> {
    let stat = global_rank_sum_statistic(treatment, control)?;
    TestResult::from_statistic(Method::GlobalRankSum, stat, treatment.len(), control.len(), alphas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decide_examples() {
        let v = decide(0.0, &[0.05]).unwrap();
        assert_eq!(v.p_value, 1.0);
        assert_eq!(v.decisions[0].decision, Decision::Accept);

        let z05 = normal_quantile(0.975).unwrap();
        assert!(2.5 > z05);
        assert_eq!(decide(2.5, &[0.05]).unwrap().decisions[0].decision, Decision::Reject);
        assert_eq!(decide(-2.5, &[0.05]).unwrap().decisions[0].decision, Decision::Reject);

        let v = decide(1.2, &[0.01, 0.05, 0.10]).unwrap();
        for (d, q) in v.decisions.iter().zip([0.995, 0.975, 0.95]) {
            assert!(1.2 < normal_quantile(q).unwrap());
            assert_eq!(d.decision, Decision::Accept);
        }
    }

    #[test]
    fn decide_rejects_bad_alpha() {
        assert!(matches!(decide(1.0, &[0.05, 1.0]), Err(Error::InvalidAlpha(_))));
        assert!(decide(1.0, &[0.0]).is_err());
        assert!(decide(1.0, &[f64::NAN]).is_err());
    }

    #[test]
    fn assignment_bookkeeping() {
        let mut e = ExperimentAssignment::new("e1");
        e.assign("u1", Group::Treatment).unwrap();
        assert!(!e.is_testable());
        e.assign("u2", Group::Control).unwrap();
        assert!(e.is_testable());
        assert!(matches!(e.assign("u1", Group::Control), Err(Error::DuplicateAssignment { .. })));
        assert_eq!((e.n_treatment(), e.n_control(), e.size()), (1, 1, 2));
    }

    #[test]
    fn parse_labels() {
        assert_eq!("t".parse::<Group>().unwrap(), Group::Treatment);
        match "x".parse::<Group>() {
            Err(e) => assert_eq!(e.to_string(), "unknown group label 'x'"),
            Ok(_) => panic!(),
        }
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }

    proptest! {
        #[test]
        fn p_value_decision_coherence(z in -6.0f64..6.0, alpha in 1e-4f64..0.9999) {
            let v = decide(z, &[alpha]).unwrap();
            prop_assert!((0.0..=1.0).contains(&v.p_value));
            let reject = v.decisions[0].decision == Decision::Reject;
            prop_assert_eq!(reject, v.p_value < alpha);
            let crit = normal_quantile(1.0 - alpha / 2.0).unwrap();
            if (z.abs() - crit).abs() > 1e-9 {
                prop_assert_eq!(reject, z.abs() > crit);
            }
        }
    }
}
