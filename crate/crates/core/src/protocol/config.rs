//! Auction configuration: model, budget, declared domains, deadline,
//! verification policy, and crypto parameter sizes.

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::protocol::suite::CryptoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobModel {
    Homogeneous,
    Heterogeneous,
    Submodular,
}

impl JobModel {
    pub fn tag(&self) -> &'static str {
        match self {
            JobModel::Homogeneous => "h",
            JobModel::Heterogeneous => "het",
            JobModel::Submodular => "sub",
        }
    }

    pub fn parse(s: &str) -> Result<JobModel> {
        match s {
            "h" => Ok(JobModel::Homogeneous),
            "het" => Ok(JobModel::Heterogeneous),
            "sub" => Ok(JobModel::Submodular),
            other => Err(Error::Usage(format!(
                "unknown model '{other}' (expected h, het, or sub)"
            ))),
        }
    }
}

/// Random-audit policy: audit each participant with probability α; a
/// detected misreport costs the platform `fine`. `p_max` bounds what a
/// single cheat can gain (defaults to the budget).
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationPolicy {
    pub alpha: BigRational,
    pub fine: BigRational,
    pub p_max: BigRational,
}

impl VerificationPolicy {
    /// Deterrence condition: α ≥ p_max / (fine + p_max) makes the expected
    /// utility of cheating nonpositive.
    pub fn deterrence_holds(&self) -> bool {
        let denom = &self.fine + &self.p_max;
        if denom.is_zero() {
            return true;
        }
        self.alpha >= &self.p_max / denom
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionConfig {
    /// Task identifier, bound into commitments and receipts.
    pub tid: u64,
    pub model: JobModel,
    pub budget: BigRational,
    /// Commitment deadline T; the decommitment key releases at T+1.
    pub deadline: u64,
    /// Declared discrete bid domain β, strictly increasing, positive.
    pub bid_domain: Vec<BigRational>,
    /// Declared job-limit domain χ, strictly increasing, ≥ 1.
    pub limit_domain: Vec<u64>,
    /// Ground-set size m (submodular model).
    pub ground_set_size: u32,
    pub verification: VerificationPolicy,
    pub seed: u64,
    pub crypto: CryptoConfig,
    /// Extra headroom factor folded into the fixed-point scale Q.
    pub headroom: u64,
}

fn strictly_increasing<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl AuctionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.budget.is_positive() {
            return Err(Error::Domain("budget must be positive".into()));
        }
        if self.deadline == 0 {
            return Err(Error::Domain("deadline must be at least 1".into()));
        }
        if self.bid_domain.is_empty() || !strictly_increasing(&self.bid_domain) {
            return Err(Error::Domain(
                "bid domain must be nonempty and strictly increasing".into(),
            ));
        }
        if self.bid_domain.iter().any(|b| !b.is_positive()) {
            return Err(Error::Domain("bids must be positive".into()));
        }
        if self.limit_domain.is_empty()
            || !strictly_increasing(&self.limit_domain)
            || self.limit_domain[0] == 0
        {
            return Err(Error::Domain(
                "limit domain must be nonempty, strictly increasing, and ≥ 1".into(),
            ));
        }
        if self.model == JobModel::Submodular && self.ground_set_size == 0 {
            return Err(Error::Domain(
                "submodular model needs a nonempty ground set".into(),
            ));
        }
        let alpha = &self.verification.alpha;
        if alpha.is_negative() || alpha > &BigRational::from_integer(1.into()) {
            return Err(Error::Domain("alpha must be in [0, 1]".into()));
        }
        if self.verification.fine.is_negative() {
            return Err(Error::Domain("fine must be nonnegative".into()));
        }
        if self.headroom == 0 {
            return Err(Error::Domain("headroom must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    pub fn base_config() -> AuctionConfig {
        AuctionConfig {
            tid: 1,
            model: JobModel::Homogeneous,
            budget: ratio(6, 1),
            deadline: 2,
            bid_domain: vec![ratio(1, 1), ratio(2, 1), ratio(3, 1), ratio(4, 1)],
            limit_domain: vec![1],
            ground_set_size: 0,
            verification: VerificationPolicy {
                alpha: ratio(1, 10),
                fine: ratio(900, 1),
                p_max: ratio(100, 1),
            },
            seed: 7,
            crypto: CryptoConfig::small(),
            headroom: 10_000,
        }
    }

    #[test]
    fn valid_config_passes() {
        assert!(base_config().validate().is_ok());
    }

    #[test]
    fn bad_domains_rejected() {
        let mut c = base_config();
        c.bid_domain = vec![ratio(2, 1), ratio(1, 1)];
        assert!(c.validate().is_err());
        let mut c = base_config();
        c.limit_domain = vec![0, 1];
        assert!(c.validate().is_err());
        let mut c = base_config();
        c.budget = ratio(0, 1);
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterrence_threshold() {
        // α = p_max/(F+p_max) = 100/1000 = 1/10 exactly: holds.
        let v = base_config().verification;
        assert!(v.deterrence_holds());
        let weak = VerificationPolicy {
            alpha: ratio(1, 20),
            ..v
        };
        assert!(!weak.deterrence_holds());
    }

    #[test]
    fn model_tags_round_trip() {
        for m in [JobModel::Homogeneous, JobModel::Heterogeneous, JobModel::Submodular] {
            assert_eq!(JobModel::parse(m.tag()).unwrap(), m);
        }
        assert!(JobModel::parse("x").is_err());
    }
}
