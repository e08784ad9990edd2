//! Seeded random instance generation: bids uniform over β, limits uniform
//! over χ, assignment sets by independent per-element inclusion (empty
//! sets rejected).

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::crypto::group::derive_rng;
use crate::harness::scenario::ScenarioSpec;
use crate::mechanisms::{SensingProfile, UserId};
use crate::protocol::JobModel;

/// Deterministic generator stream for instance `index` of a campaign.
pub fn instance_rng(spec: &ScenarioSpec, label: &str, index: u64) -> ChaCha20Rng {
    derive_rng(spec.seed, &format!("{label}-{index}"))
}

pub fn gen_profile(spec: &ScenarioSpec, user: UserId, rng: &mut ChaCha20Rng) -> SensingProfile {
    let bid = spec.bid_domain[rng.gen_range(0..spec.bid_domain.len())].clone();
    match spec.model {
        JobModel::Homogeneous => SensingProfile::homogeneous(user, bid),
        JobModel::Heterogeneous => {
            let limit = spec.limit_domain[rng.gen_range(0..spec.limit_domain.len())];
            SensingProfile::heterogeneous(user, bid, limit)
        }
        JobModel::Submodular => {
            let gamma = loop {
                let g: BTreeSet<u32> =
                    (0..spec.m).filter(|_| rng.gen_bool(spec.gamma_prob)).collect();
                if !g.is_empty() || spec.m == 0 {
                    break g;
                }
            };
            SensingProfile::submodular(user, bid, gamma)
        }
    }
}

/// `count` profiles with user ids 0..count.
pub fn gen_profiles(spec: &ScenarioSpec, count: u32, rng: &mut ChaCha20Rng) -> Vec<SensingProfile> {
    (0..count).map(|i| gen_profile(spec, UserId(i), rng)).collect()
}

/// A random instance: user count uniform in 0..=n (so degenerate empty
/// instances are exercised too).
pub fn gen_instance(spec: &ScenarioSpec, label: &str, index: u64) -> Vec<SensingProfile> {
    let mut rng = instance_rng(spec, label, index);
    let n = rng.gen_range(0..=spec.n);
    gen_profiles(spec, n, &mut rng)
}
