//! Plaintext budget-feasible auction mechanisms for the three job models.
//! These are the exact-arithmetic ground truth that every encrypted
//! protocol run must reproduce field-for-field.
//!
//! All tie-breaks are by lowest user_id; all arithmetic is exact rational.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

impl std::fmt::Display for UserId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "u{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensingProfile {
    pub user_id: UserId,
    /// Cost per job (H models) or cost for the full subset (S model).
    pub bid: BigRational,
    /// Max jobs this user can take; 1 in the homogeneous and S models.
    pub limit: u64,
    /// Assignment subset Γ_i (S model only; empty otherwise).
    pub assignments: BTreeSet<u32>,
}

impl SensingProfile {
    pub fn homogeneous(user_id: UserId, bid: BigRational) -> SensingProfile {
        SensingProfile {
            user_id,
            bid,
            limit: 1,
            assignments: BTreeSet::new(),
        }
    }

    pub fn heterogeneous(user_id: UserId, bid: BigRational, limit: u64) -> SensingProfile {
        SensingProfile {
            user_id,
            bid,
            limit,
            assignments: BTreeSet::new(),
        }
    }

    pub fn submodular(user_id: UserId, bid: BigRational, assignments: BTreeSet<u32>) -> SensingProfile {
        SensingProfile {
            user_id,
            bid,
            limit: 1,
            assignments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuctionOutcome {
    /// Winners in admission order.
    pub winners: Vec<UserId>,
    pub allocation: BTreeMap<UserId, u64>,
    pub payments: BTreeMap<UserId, BigRational>,
    /// Uniform per-job price (H models only).
    pub per_job_price: Option<BigRational>,
}

impl AuctionOutcome {
    pub fn total_paid(&self) -> BigRational {
        self.payments
            .values()
            .fold(BigRational::zero(), |acc, p| acc + p)
    }

    pub fn payment_of(&self, u: UserId) -> BigRational {
        self.payments.get(&u).cloned().unwrap_or_else(BigRational::zero)
    }
}

fn check_positive_budget(b: &BigRational) -> bool {
    b.is_positive()
}

/// Sort profiles ascending by (bid, user_id); returns indices into `profiles`.
fn sorted_order(profiles: &[SensingProfile]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..profiles.len()).collect();
    order.sort_by(|&a, &b| {
        profiles[a]
            .bid
            .cmp(&profiles[b].bid)
            .then(profiles[a].user_id.cmp(&profiles[b].user_id))
    });
    order
}

/// Homogeneous jobs: largest k with b_(k) ≤ B/k; uniform price
/// min(B/k, b_(k+1)), with the missing (k+1)-th bid treated as +∞.
pub fn run_homogeneous(profiles: &[SensingProfile], budget: &BigRational) -> AuctionOutcome {
    let unit: Vec<SensingProfile> = profiles
        .iter()
        .map(|p| SensingProfile::heterogeneous(p.user_id, p.bid.clone(), 1))
        .collect();
    run_heterogeneous(&unit, budget)
}

/// Heterogeneous jobs: sort by bid; admit the largest prefix where each
/// winner's bid stays within the proportional budget share B/Σ_{j≤i} l_j
/// (full limits are allocated); uniform per-job price
/// min(B/Σ_{j∈S} l_j, b_(k+1)).
pub fn run_heterogeneous(profiles: &[SensingProfile], budget: &BigRational) -> AuctionOutcome {
    let mut outcome = AuctionOutcome::default();
    if profiles.is_empty() || !check_positive_budget(budget) {
        return outcome;
    }
    let order = sorted_order(profiles);
    let mut cum_jobs: u64 = 0;
    let mut k = 0usize;
    for (rank, &idx) in order.iter().enumerate() {
        let p = &profiles[idx];
        let next_cum = cum_jobs + p.limit;
        // admission: b_(i) ≤ B / Σ_{j≤i} l_j
        if &p.bid * BigInt::from(next_cum) <= *budget {
            cum_jobs = next_cum;
            k = rank + 1;
        } else {
            break;
        }
    }
    if k == 0 {
        return outcome;
    }
    let share = budget / BigRational::from_integer(BigInt::from(cum_jobs));
    let price = if k < order.len() {
        let next_bid = &profiles[order[k]].bid;
        share.min(next_bid.clone())
    } else {
        share
    };
    for &idx in order.iter().take(k) {
        let p = &profiles[idx];
        outcome.winners.push(p.user_id);
        outcome.allocation.insert(p.user_id, p.limit);
        outcome
            .payments
            .insert(p.user_id, &price * BigInt::from(p.limit));
    }
    outcome.per_job_price = Some(price);
    outcome
}

/// Coverage utility U(S) = |∪_{i∈S} Γ_i| over a ground set of size m.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageUtility {
    pub ground_set: BTreeSet<u32>,
    pub assignments: BTreeMap<UserId, BTreeSet<u32>>,
}

impl CoverageUtility {
    pub fn from_profiles(ground_set: BTreeSet<u32>, profiles: &[SensingProfile]) -> CoverageUtility {
        let assignments = profiles
            .iter()
            .map(|p| (p.user_id, p.assignments.clone()))
            .collect();
        CoverageUtility {
            ground_set,
            assignments,
        }
    }

    pub fn covered(&self, s: &BTreeSet<UserId>) -> BTreeSet<u32> {
        let mut acc = BTreeSet::new();
        for u in s {
            if let Some(g) = self.assignments.get(u) {
                acc.extend(g.iter().copied());
            }
        }
        acc
    }

    pub fn value(&self, s: &BTreeSet<UserId>) -> u64 {
        self.covered(s).len() as u64
    }
}

/// U(S ∪ {i}) − U(S) = |Γ_i ∖ ∪_{j∈S} Γ_j|.
pub fn marginal_utility(utility: &CoverageUtility, s: &BTreeSet<UserId>, i: UserId) -> Result<u64> {
    if s.contains(&i) {
        return Err(Error::Usage(format!("{i} already in S")));
    }
    let gamma_i = utility
        .assignments
        .get(&i)
        .ok_or_else(|| Error::Usage(format!("unknown user {i}")))?;
    let covered = utility.covered(s);
    Ok(gamma_i.difference(&covered).count() as u64)
}

fn ratio_u64(x: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// Greedy argmax of U_j(S)/b_j over candidates; ties to lowest user_id.
/// Returns (index into profiles, marginal).
fn best_candidate(
    utility: &CoverageUtility,
    profiles: &[SensingProfile],
    taken: &BTreeSet<UserId>,
) -> Option<(usize, u64)> {
    let mut best: Option<(usize, u64, BigRational)> = None;
    for (idx, p) in profiles.iter().enumerate() {
        if taken.contains(&p.user_id) {
            continue;
        }
        let mu = marginal_utility(utility, taken, p.user_id).ok()?;
        let score = ratio_u64(mu) / &p.bid;
        match &best {
            Some((_, _, s)) if *s >= score => {}
            _ => best = Some((idx, mu, score)),
        }
    }
    best.map(|(i, mu, _)| (i, mu))
}

/// Submodular model, proportional-share greedy with critical payments.
///
/// Phase 1: admit argmax-marginal-per-bid candidates while
/// U_i(S)/b_i ≥ U(S∪{i})/B.
/// Phase 2 (per winner i): replay the greedy over U∖{i}; each round with
/// selected reference i_j contributes min(b-term, η-term) to p_i, where
/// b-term = U_i(T_{j−1})·b_{i_j}/U_{i_j}(T_{j−1}) and
/// η-term = U_i(T_{j−1})·B/U(T_{j−1}∪{i}); the loop ends once the selected
/// reference fails its own admission check (b_{i_j} > U_{i_j}(T_{j−1})·B/U(T_j),
/// after its terms are taken). If instead a zero-marginal reference is
/// selected or candidates run out, the winner can still take that final
/// position unopposed, so a last η-only term is taken before stopping.
/// p_i is then exactly the critical bid: the largest bid at which i still
/// wins some position of the greedy.
pub fn run_submodular(
    profiles: &[SensingProfile],
    budget: &BigRational,
    utility: &CoverageUtility,
) -> AuctionOutcome {
    let mut outcome = AuctionOutcome::default();
    if profiles.is_empty() || !check_positive_budget(budget) || utility.ground_set.is_empty() {
        return outcome;
    }
    // Phase 1: winner set.
    let mut s_ids: BTreeSet<UserId> = BTreeSet::new();
    let mut winners: Vec<UserId> = Vec::new();
    loop {
        let Some((idx, mu)) = best_candidate(utility, profiles, &s_ids) else {
            break;
        };
        let cand = &profiles[idx];
        // U_i(S)/b_i ≥ U(S∪{i})/B
        let mut s_with = s_ids.clone();
        s_with.insert(cand.user_id);
        let u_with = utility.value(&s_with);
        let lhs = ratio_u64(mu) / &cand.bid;
        let rhs = ratio_u64(u_with) / budget;
        if lhs >= rhs {
            s_ids = s_with;
            winners.push(cand.user_id);
        } else {
            break;
        }
    }
    // Phase 2: critical payment per winner.
    for &winner in &winners {
        let others: Vec<SensingProfile> = profiles
            .iter()
            .filter(|p| p.user_id != winner)
            .cloned()
            .collect();
        let p_i = submodular_payment(&others, winner, budget, utility);
        outcome.payments.insert(winner, p_i);
        outcome.allocation.insert(winner, 1);
    }
    outcome.winners = winners;
    outcome
}

/// Phase-2 payment for `winner`, replaying the greedy over `others` = U∖{i}.
/// Exposed for the audit path, which replays the same arithmetic from
/// decrypted board values.
pub fn submodular_payment(
    others: &[SensingProfile],
    winner: UserId,
    budget: &BigRational,
    utility: &CoverageUtility,
) -> BigRational {
    let mut p_i = BigRational::zero();
    let mut t_ids: BTreeSet<UserId> = BTreeSet::new();
    // η over the current T: U_i(T)·B/U(T∪{i}), the admission bound at the
    // position the winner would take next.
    let eta_at = |t_ids: &BTreeSet<UserId>| -> BigRational {
        let mu_i = marginal_utility(utility, t_ids, winner).unwrap_or(0);
        let mut t_with_i = t_ids.clone();
        t_with_i.insert(winner);
        let u_t_with_i = utility.value(&t_with_i);
        if u_t_with_i == 0 {
            BigRational::zero()
        } else {
            ratio_u64(mu_i) * budget / ratio_u64(u_t_with_i)
        }
    };
    loop {
        let Some((ref_idx, mu_ref)) = best_candidate(utility, others, &t_ids) else {
            // T = U′ exhausted: the final position is unopposed, only the
            // admission bound constrains the winner there.
            p_i = p_i.max(eta_at(&t_ids));
            break;
        };
        if mu_ref == 0 {
            // Remaining references add nothing, so the winner outranks
            // them at any bid; again only the admission bound applies.
            p_i = p_i.max(eta_at(&t_ids));
            break;
        }
        let reference = &others[ref_idx];
        let mu_i = marginal_utility(utility, &t_ids, winner).unwrap_or(0);
        // b-term = U_i(T_{j−1}) · b_{i_j} / U_{i_j}(T_{j−1})
        let b_term = ratio_u64(mu_i) * &reference.bid / ratio_u64(mu_ref);
        // η-term = U_i(T_{j−1}) · B / U(T_{j−1} ∪ {i})
        let eta = eta_at(&t_ids);
        let round_term = b_term.min(eta);
        if round_term > p_i {
            p_i = round_term;
        }
        t_ids.insert(reference.user_id);
        // until b_{i_j} > U_{i_j}(T_{j−1})·B/U(T_j): the reference fails its
        // own admission, so the greedy without i ends here and no later
        // position is reachable.
        let u_t = utility.value(&t_ids);
        debug_assert!(u_t > 0);
        let threshold = ratio_u64(mu_ref) * budget / ratio_u64(u_t);
        if reference.bid > threshold {
            break;
        }
    }
    p_i
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn homog(bids: &[i64]) -> Vec<SensingProfile> {
        bids.iter()
            .enumerate()
            .map(|(i, &b)| SensingProfile::homogeneous(UserId(i as u32), ratio(b, 1)))
            .collect()
    }

    fn het(specs: &[(i64, u64)]) -> Vec<SensingProfile> {
        specs
            .iter()
            .enumerate()
            .map(|(i, &(b, l))| SensingProfile::heterogeneous(UserId(i as u32), ratio(b, 1), l))
            .collect()
    }

    fn sub_instance(users: &[(&[u32], i64)], m: u32) -> (Vec<SensingProfile>, CoverageUtility) {
        let profiles: Vec<SensingProfile> = users
            .iter()
            .enumerate()
            .map(|(i, (gamma, b))| {
                SensingProfile::submodular(
                    UserId(i as u32),
                    ratio(*b, 1),
                    gamma.iter().copied().collect(),
                )
            })
            .collect();
        let ground: BTreeSet<u32> = (0..m).collect();
        let utility = CoverageUtility::from_profiles(ground, &profiles);
        (profiles, utility)
    }

    #[test]
    fn homogeneous_reference_instance() {
        // bids [1,2,3,4], B=6: k=2, price min(6/2, 3) = 3
        let out = run_homogeneous(&homog(&[1, 2, 3, 4]), &ratio(6, 1));
        assert_eq!(out.winners, vec![UserId(0), UserId(1)]);
        assert_eq!(out.per_job_price, Some(ratio(3, 1)));
        assert_eq!(out.payment_of(UserId(0)), ratio(3, 1));
        assert_eq!(out.payment_of(UserId(1)), ratio(3, 1));
        assert_eq!(out.payment_of(UserId(2)), ratio(0, 1));
    }

    #[test]
    fn homogeneous_single_user_gets_budget_share() {
        // bids [5], B=10: k=1, no b_2, price = B/1 = 10
        let out = run_homogeneous(&homog(&[5]), &ratio(10, 1));
        assert_eq!(out.winners, vec![UserId(0)]);
        assert_eq!(out.payment_of(UserId(0)), ratio(10, 1));
    }

    #[test]
    fn homogeneous_no_winner_when_budget_too_small() {
        let out = run_homogeneous(&homog(&[10, 20]), &ratio(5, 1));
        assert!(out.winners.is_empty());
        assert!(out.payments.is_empty());
    }

    #[test]
    fn heterogeneous_admits_by_proportional_share_over_full_limits() {
        // bids [1,2], limits [3,2], B=8: rank 1 admitted (1 ≤ 8/3), rank 2
        // rejected (2 > 8/5). Price = min(8/3, b_2 = 2) = 2, total 6.
        let out = run_heterogeneous(&het(&[(1, 3), (2, 2)]), &ratio(8, 1));
        assert_eq!(out.winners, vec![UserId(0)]);
        assert_eq!(out.allocation[&UserId(0)], 3);
        assert_eq!(out.per_job_price, Some(ratio(2, 1)));
        assert_eq!(out.payment_of(UserId(0)), ratio(6, 1));
        assert!(out.total_paid() <= ratio(8, 1));
    }

    #[test]
    fn heterogeneous_unit_limits_reduce_to_homogeneous() {
        let h = run_homogeneous(&homog(&[1, 2, 3, 4]), &ratio(6, 1));
        let het_out = run_heterogeneous(&het(&[(1, 1), (2, 1), (3, 1), (4, 1)]), &ratio(6, 1));
        assert_eq!(h, het_out);
    }

    #[test]
    fn heterogeneous_single_user_full_limit_or_nothing() {
        // bid 2, limit 10, B=8: admission needs 2 ≤ 8/10 — fails, so no
        // winners (full-limit allocation; no partial fills).
        let out = run_heterogeneous(&het(&[(2, 10)]), &ratio(8, 1));
        assert!(out.winners.is_empty());
        // With B=20 the same user wins all 10 jobs at price B/10 = 2.
        let out = run_heterogeneous(&het(&[(2, 10)]), &ratio(20, 1));
        assert_eq!(out.allocation[&UserId(0)], 10);
        assert_eq!(out.payment_of(UserId(0)), ratio(20, 1));
    }

    #[test]
    fn submodular_winner_selection() {
        let (profiles, utility) =
            sub_instance(&[(&[0, 1], 1), (&[1, 2], 1), (&[2], 1)], 3);
        let out = run_submodular(&profiles, &ratio(4, 1), &utility);
        assert_eq!(out.winners, vec![UserId(0), UserId(1)]);
    }

    #[test]
    fn submodular_critical_payments() {
        let (profiles, utility) = sub_instance(&[(&[0, 1], 1), (&[1, 2], 1)], 3);
        let out = run_submodular(&profiles, &ratio(4, 1), &utility);
        assert_eq!(out.winners, vec![UserId(0), UserId(1)]);
        // For u0: reference run over {u1}: round 1 gives min(b-term 2·1/2,
        // η-term 2·4/2) = 1; u1 is admitted, candidates run out, and the
        // final unopposed position adds η = 1·4/3 = 4/3. p = 4/3, which is
        // the critical bid (at bid x ≤ 4/3 u0 still wins the second slot:
        // 1/x ≥ U({u0,u1})/B = 3/4). Symmetric for u1; total 8/3 ≤ B.
        assert_eq!(out.payment_of(UserId(0)), ratio(4, 3));
        assert_eq!(out.payment_of(UserId(1)), ratio(4, 3));
    }

    #[test]
    fn submodular_payment_covers_position_after_failing_reference() {
        // Regression: u1 (bid 1, Γ={0}) wins second. Its reference run over
        // {u0,u2,u3} takes u0 first (term min(2/3, 5) = 2/3), then selects
        // u3, whose own admission fails (3 > 1·5/4) — but u1 can still take
        // that position, so round 2's min(b-term 3, η 5/4) = 5/4 counts.
        // p = 5/4 is the critical bid; stopping a round earlier would pay
        // 2/3 < cost and break individual rationality.
        let (profiles, utility) = sub_instance(
            &[(&[1, 2, 3], 2), (&[0], 1), (&[0, 1, 2], 4), (&[0], 3)],
            4,
        );
        let out = run_submodular(&profiles, &ratio(5, 1), &utility);
        assert_eq!(out.winners, vec![UserId(0), UserId(1)]);
        assert_eq!(out.payment_of(UserId(0)), ratio(15, 4));
        assert_eq!(out.payment_of(UserId(1)), ratio(5, 4));
        // Budget-feasible with equality here: 15/4 + 5/4 = 5.
    }

    #[test]
    fn submodular_empty_inputs() {
        let (profiles, utility) = sub_instance(&[], 3);
        let out = run_submodular(&profiles, &ratio(4, 1), &utility);
        assert!(out.winners.is_empty());
        let (profiles, utility) = sub_instance(&[(&[0], 1)], 1);
        let out = run_submodular(&profiles, &ratio(0, 1), &utility);
        assert!(out.winners.is_empty());
    }

    #[test]
    fn submodular_single_user_payment_capped_by_budget_share() {
        let (profiles, utility) = sub_instance(&[(&[0], 1)], 1);
        let out = run_submodular(&profiles, &ratio(1, 1), &utility);
        assert_eq!(out.winners, vec![UserId(0)]);
        // Reference loop exhausts U′ = ∅ immediately; the final η-only
        // term pays the proportional budget share U_1(∅)·B/U({u1}) = B = 1.
        assert_eq!(out.payment_of(UserId(0)), ratio(1, 1));
    }

    #[test]
    fn marginal_utility_definition() {
        let (profiles, utility) = sub_instance(&[(&[0, 1], 1), (&[1, 2], 1)], 3);
        let _ = profiles;
        let empty = BTreeSet::new();
        assert_eq!(marginal_utility(&utility, &empty, UserId(0)).unwrap(), 2);
        let mut s = BTreeSet::new();
        s.insert(UserId(0));
        assert_eq!(marginal_utility(&utility, &s, UserId(1)).unwrap(), 1);
        assert!(marginal_utility(&utility, &s, UserId(0)).is_err());
    }
}
