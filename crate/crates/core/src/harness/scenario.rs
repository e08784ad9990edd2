//! Scenario files: a small `key = value` text format describing a campaign
//! (model, sizes, domains, policy, generator parameters).
//!
//! Example:
//! ```text
//! # four-user homogeneous campaign
//! model = h
//! n = 10
//! budget = 6
//! bids = 1,2,3,4,5,6
//! instances = 200
//! seed = 7
//! ```

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::protocol::{AuctionConfig, CryptoConfig, JobModel, VerificationPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub model: JobModel,
    /// Maximum user count per generated instance.
    pub n: u32,
    /// Ground-set size (submodular model).
    pub m: u32,
    pub budget: BigRational,
    pub bid_domain: Vec<BigRational>,
    pub limit_domain: Vec<u64>,
    /// Per-element inclusion probability when sampling Γ.
    pub gamma_prob: f64,
    pub instances: u64,
    pub seed: u64,
    pub deadline: u64,
    pub alpha: BigRational,
    pub fine: BigRational,
    pub p_max: BigRational,
    pub headroom: u64,
    pub crypto: CryptoConfig,
    /// User-count sweep for overhead campaigns.
    pub sweep: Vec<u32>,
}

/// Parse "a/b" or "a" as an exact rational.
pub fn parse_ratio(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s, "1"),
    };
    let n: BigInt = num
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational '{s}'")))?;
    let d: BigInt = den
        .parse()
        .map_err(|_| Error::Parse(format!("bad rational '{s}'")))?;
    if d.is_zero() {
        return Err(Error::Parse(format!("zero denominator in '{s}'")));
    }
    Ok(BigRational::new(n, d))
}

/// Render a rational as "num/den" ("num" when integral).
pub fn ratio_str(x: &BigRational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

impl ScenarioSpec {
    pub fn defaults(model: JobModel) -> ScenarioSpec {
        let (n, m, budget, bids, limits) = match model {
            JobModel::Homogeneous => (10, 0, 6i64, 6i64, vec![1]),
            JobModel::Heterogeneous => (10, 0, 12, 6, vec![1, 2, 3]),
            JobModel::Submodular => (8, 6, 5, 4, vec![1]),
        };
        let budget = BigRational::from_integer(BigInt::from(budget));
        ScenarioSpec {
            model,
            n,
            m,
            budget: budget.clone(),
            bid_domain: (1..=bids)
                .map(|i| BigRational::from_integer(BigInt::from(i)))
                .collect(),
            limit_domain: limits,
            gamma_prob: 0.4,
            instances: 100,
            seed: 7,
            deadline: 2,
            alpha: BigRational::new(BigInt::from(1), BigInt::from(10)),
            fine: BigRational::from_integer(BigInt::from(900)),
            // No single payment can exceed the budget.
            p_max: budget,
            headroom: 10_000,
            crypto: CryptoConfig::default(),
            sweep: vec![25, 50, 100, 200],
        }
    }

    /// Parse a scenario file; unknown keys are errors.
    pub fn parse(text: &str) -> Result<ScenarioSpec> {
        // The model line decides the defaults, so find it first.
        let mut model = JobModel::Homogeneous;
        let mut saw_model = false;
        let kv: Vec<(String, String)> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                let (k, v) = l
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("expected 'key = value', got '{l}'")))?;
                Ok((k.trim().to_string(), v.trim().to_string()))
            })
            .collect::<Result<_>>()?;
        for (k, v) in &kv {
            if k == "model" {
                model = JobModel::parse(v)?;
                saw_model = true;
            }
        }
        if !saw_model {
            return Err(Error::Parse("scenario needs a 'model' line".into()));
        }
        let mut spec = ScenarioSpec::defaults(model);
        let mut explicit_p_max = false;
        for (k, v) in &kv {
            match k.as_str() {
                "model" => {}
                "n" => spec.n = parse_num(v)?,
                "m" => spec.m = parse_num(v)?,
                "budget" => spec.budget = parse_ratio(v)?,
                "bids" => {
                    spec.bid_domain = v
                        .split(',')
                        .map(parse_ratio)
                        .collect::<Result<Vec<_>>>()?;
                }
                "limits" => {
                    spec.limit_domain = v
                        .split(',')
                        .map(|x| parse_num(x.trim()))
                        .collect::<Result<Vec<u64>>>()?;
                }
                "gamma_prob" => {
                    let r = parse_ratio(v)?;
                    if r.is_negative() || r > BigRational::from_integer(1.into()) {
                        return Err(Error::Parse("gamma_prob must be in [0,1]".into()));
                    }
                    spec.gamma_prob = r.to_f64().unwrap_or(0.4);
                }
                "instances" | "trials" => spec.instances = parse_num(v)?,
                "seed" => spec.seed = parse_num(v)?,
                "deadline" => spec.deadline = parse_num(v)?,
                "alpha" => spec.alpha = parse_ratio(v)?,
                "fine" => spec.fine = parse_ratio(v)?,
                "p_max" => {
                    spec.p_max = parse_ratio(v)?;
                    explicit_p_max = true;
                }
                "headroom" => spec.headroom = parse_num(v)?,
                "p_bits" => spec.crypto.p_bits = parse_num(v)?,
                "q_bits" => spec.crypto.q_bits = parse_num(v)?,
                "paillier_bits" => spec.crypto.paillier_bits = parse_num(v)?,
                "code_bits" => spec.crypto.code_bits = parse_num(v)?,
                "sweep" => {
                    spec.sweep = v
                        .split(',')
                        .map(|x| parse_num(x.trim()))
                        .collect::<Result<Vec<u32>>>()?;
                }
                other => return Err(Error::Parse(format!("unknown scenario key '{other}'"))),
            }
        }
        if !explicit_p_max {
            spec.p_max = spec.budget.clone();
        }
        spec.to_config(0).validate()?;
        Ok(spec)
    }

    /// The per-instance auction configuration (tid doubles as instance id).
    pub fn to_config(&self, tid: u64) -> AuctionConfig {
        AuctionConfig {
            tid,
            model: self.model,
            budget: self.budget.clone(),
            deadline: self.deadline,
            bid_domain: self.bid_domain.clone(),
            limit_domain: self.limit_domain.clone(),
            ground_set_size: self.m,
            verification: VerificationPolicy {
                alpha: self.alpha.clone(),
                fine: self.fine.clone(),
                p_max: self.p_max.clone(),
            },
            seed: self.seed,
            crypto: self.crypto,
            headroom: self.headroom,
        }
    }

    /// One-line echo embedded in reports so any run can be replayed.
    pub fn echo(&self) -> String {
        format!(
            "model={} n={} m={} budget={} bids={} limits={} instances={} seed={}",
            self.model.tag(),
            self.n,
            self.m,
            ratio_str(&self.budget),
            self.bid_domain
                .iter()
                .map(ratio_str)
                .collect::<Vec<_>>()
                .join(","),
            self.limit_domain
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(","),
            self.instances,
            self.seed,
        )
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad number '{s}'")))
}
