//! The PVI-S protocol: submodular (coverage) model with greedy winner
//! selection over order-preserving marginal-per-bid codes and encrypted
//! critical-payment determination.
//!
//! Winner phase (one logical round per admitted winner): every remaining
//! candidate gets its marginal-per-bid ω_j from the aggregation service,
//! fetches the matching code by OT, seals it (Paillier + TLC) onto its
//! public list l_w[j], and submits the ciphertext to the platform. The
//! platform takes the argmax code, learns U(S∪{i}) by a count-only private
//! set union with the candidate, fetches the threshold code for
//! ω_p = U(S∪{i})/B, seals it onto l_w[p], and admits iff code_i ≥ code_p.
//!
//! Payment phase (per winner i): the greedy is replayed over U∖{i} with all
//! values under the AI's Paillier key. References post E(Q·ω_j(T)) to
//! l_p[j,i]; the AI posts the per-round aggregates to l_S[i]; selection,
//! min/max chaining, and the stop condition are ordering tokens. The
//! platform ends holding E(Q·p_i), which the AI decrypts to the payment.
//!
//! The TLC key for the sealed lists is released only after payments, so
//! audits can replay both phases from board data.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;
use rand::RngCore;

use crate::bulletin::{ListId, Party, Payload, PayloadTag};
use crate::crypto::group::derive_rng;
use crate::crypto::opes::opes_build;
use crate::crypto::paillier::paillier_scale;
use crate::crypto::tlc::TlcService;
use crate::crypto::{EncodingTable, PaillierCiphertext};
use crate::error::{Error, Result};
use crate::mechanisms::{CoverageUtility, SensingProfile, UserId};
use crate::protocol::{
    audit_coin, ot_fetch, AuditSecrets, AuctionConfig, Ctx, JobModel, LearnedLabel, Misbehavior,
    Phase, RunOptions, RunTranscript,
};
use crate::protocol::suite::CryptoSuite;
use crate::secure_compute::{
    encrypted_payment_terms, encode_assignment, encrypted_set_poly, fixed_point_scale,
    from_scaled_integer, mpep_coverage, mpep_marginal, set_union_tuples, to_scaled_integer,
    ComparisonAuthority, CoverageIndicator, PaymentTermsInput,
};
use crate::wire;

/// Sentinel release time: the sealed lists open only for the audit phase.
const LIST_RELEASE: u64 = 1 << 40;

/// Shared ω-code domain: every reachable marginal-per-bid u/b and every
/// reachable threshold u/B, deduplicated and sorted.
pub fn omega_domain(m: u32, bid_domain: &[BigRational], budget: &BigRational) -> Vec<BigRational> {
    let mut vals: BTreeSet<BigRational> = BTreeSet::new();
    for u in 0..=m {
        let u_r = BigRational::from_integer(BigInt::from(u));
        for b in bid_domain {
            vals.insert(&u_r / b);
        }
        vals.insert(&u_r / budget);
    }
    vals.into_iter().collect()
}

pub(crate) fn omega_table(cfg: &AuctionConfig) -> Result<EncodingTable> {
    let dom = omega_domain(cfg.ground_set_size, &cfg.bid_domain, &cfg.budget);
    opes_build(
        &dom,
        &[1],
        cfg.crypto.code_bits,
        &mut derive_rng(cfg.seed, &format!("opes-omega-{}", cfg.tid)),
    )
}

fn pack_code(code: u64, nonce: u64, tid: u64) -> Vec<u8> {
    let mut out = Vec::new();
    wire::put_u64(&mut out, code);
    wire::put_u64(&mut out, nonce);
    wire::put_u64(&mut out, tid);
    out
}

pub(crate) fn unpack_code(m: &BigUint, tid: u64) -> Result<(u64, u64)> {
    let raw = m.to_bytes_be();
    if raw.len() > 24 {
        return Err(Error::Parse("packed code too long".into()));
    }
    let mut bytes = vec![0u8; 24 - raw.len()];
    bytes.extend_from_slice(&raw);
    let f = |i: usize| u64::from_be_bytes(bytes[i..i + 8].try_into().unwrap());
    if f(16) != tid {
        return Err(Error::Integrity("packed code bound to wrong task".into()));
    }
    Ok((f(0), f(8)))
}

fn fixed_width(value: &BigUint, len: usize) -> Vec<u8> {
    let raw = value.to_bytes_be();
    let mut out = vec![0u8; len - raw.len()];
    out.extend_from_slice(&raw);
    out
}

/// MPEP round: members of `s` plus the candidate send their indicator
/// shares to the aggregation service; only the addressed party gets the
/// result. Returns the candidate's marginal utility.
fn mpep_round(
    ctx: &mut Ctx,
    indicators: &[CoverageIndicator],
    s: &BTreeSet<UserId>,
    candidate: UserId,
    m: u32,
) -> Result<u64> {
    let share_bytes = (m as u64 + 7) / 8 + 8;
    for k in s.iter().chain(std::iter::once(&candidate)) {
        ctx.send(Party::User(*k), Party::Ai, "mpep-share", share_bytes);
    }
    let mu = mpep_marginal(indicators, s, candidate)?;
    ctx.learn(Party::Ai, LearnedLabel::AggregateCardinality, "mpep marginal");
    ctx.send(Party::Ai, Party::User(candidate), "mpep-result", 16);
    ctx.learn(Party::User(candidate), LearnedLabel::OwnValue, "own marginal per bid");
    Ok(mu)
}

pub fn run_pvi_s(cfg: &AuctionConfig, profiles: &[SensingProfile]) -> Result<RunTranscript> {
    run_pvi_s_opts(cfg, profiles, RunOptions::default())
}

pub fn run_pvi_s_opts(
    cfg: &AuctionConfig,
    profiles: &[SensingProfile],
    opts: RunOptions,
) -> Result<RunTranscript> {
    cfg.validate()?;
    if cfg.model != JobModel::Submodular {
        return Err(Error::Usage("run_pvi_s requires the submodular model".into()));
    }
    let mut profiles = profiles.to_vec();
    profiles.sort_by_key(|p| p.user_id);
    if profiles.windows(2).any(|w| w[0].user_id == w[1].user_id) {
        return Err(Error::Usage("duplicate user ids".into()));
    }
    for p in &profiles {
        if !cfg.bid_domain.contains(&p.bid) {
            return Err(Error::Domain(format!("{}: bid {} outside declared domain", p.user_id, p.bid)));
        }
        if p.assignments.iter().any(|&t| t >= cfg.ground_set_size) {
            return Err(Error::Domain(format!("{}: assignment outside ground set", p.user_id)));
        }
    }
    let users: Vec<UserId> = profiles.iter().map(|p| p.user_id).collect();
    let suite = match &opts.suite {
        Some(s) => Arc::clone(s),
        None => Arc::new(CryptoSuite::generate(cfg.seed, &users, &cfg.crypto)?),
    };
    for u in &users {
        suite.user_key(*u)?;
    }
    let table = omega_table(cfg)?;
    let scale = fixed_point_scale(
        cfg.headroom,
        cfg.ground_set_size as u64,
        &cfg.bid_domain,
        &cfg.budget,
    );
    let ground: BTreeSet<u32> = (0..cfg.ground_set_size).collect();
    let utility = CoverageUtility::from_profiles(ground, &profiles);
    let indicators: Vec<CoverageIndicator> = profiles
        .iter()
        .map(|p| CoverageIndicator::from_utility(&utility, p.user_id))
        .collect::<Result<_>>()?;
    let bid_of: BTreeMap<UserId, BigRational> =
        profiles.iter().map(|p| (p.user_id, p.bid.clone())).collect();

    let mut ctx = Ctx::new(
        suite.new_board(),
        derive_rng(cfg.seed, &format!("run-s-{}", cfg.tid)),
    );
    let mut tlc = TlcService::new(LIST_RELEASE, &mut ctx.rng);
    let group = suite.group.clone();
    let plat_pk = &suite.platform_paillier;
    let ai_auth = ComparisonAuthority::new(suite.ai_paillier.clone());
    let ct_len = ((cfg.crypto.paillier_bits * 2) / 8) as usize;
    let omega_msgs: Vec<BigUint> = table.bid_codes.iter().map(|&c| BigUint::from(c)).collect();
    let m = cfg.ground_set_size;
    let mut audit_secrets: BTreeMap<UserId, AuditSecrets> = users
        .iter()
        .map(|&u| (u, AuditSecrets::default()))
        .collect();

    // ---- round 0: auction details ----
    let mut details = Vec::new();
    wire::put_u64(&mut details, cfg.tid);
    wire::put_str(&mut details, cfg.model.tag());
    wire::put_ratio(&mut details, &cfg.budget);
    wire::put_u64(&mut details, cfg.deadline);
    wire::put_ratio(&mut details, &cfg.verification.alpha);
    details.extend_from_slice(&wire::sha256(&[&table.canonical_bytes()]));
    ctx.post(Party::Platform, &suite.sig_platform, Payload::new(PayloadTag::AuctionDetails, details))?;
    for &u in &users {
        ctx.send(Party::Platform, Party::User(u), "auction-details", 96);
    }

    // ---- winner phase: one round per admission attempt ----
    let mut s_ids: BTreeSet<UserId> = BTreeSet::new();
    let mut covered: BTreeSet<u32> = BTreeSet::new();
    let mut winners: Vec<UserId> = Vec::new();
    loop {
        let candidates: Vec<UserId> = users
            .iter()
            .copied()
            .filter(|u| !s_ids.contains(u))
            .collect();
        if candidates.is_empty() {
            break;
        }
        ctx.round += 1;
        // Each candidate seals and submits its ω code.
        let mut submitted: Vec<(UserId, u64)> = Vec::new(); // (user, code)
        for &j in &candidates {
            let mu = mpep_round(&mut ctx, &indicators, &s_ids, j, m)?;
            let omega = BigRational::from_integer(BigInt::from(mu)) / &bid_of[&j];
            let rank = table.bid_rank(&omega)?;
            let code = ot_fetch(&mut ctx, &group, Party::User(j), Party::Ai, &omega_msgs, rank)?;
            let code = u64::try_from(code).map_err(|_| Error::Parse("oversized code".into()))?;
            let nonce = ctx.rng.next_u64();
            let randomness = plat_pk.random_randomness(&mut ctx.rng);
            let packed = BigUint::from_bytes_be(&pack_code(code, nonce, cfg.tid));
            let e_j = plat_pk.encrypt(&packed, &randomness)?;
            ctx.ops(Party::User(j)).paillier_enc += 1;
            let sealed = tlc.commit(&fixed_width(&e_j.value, ct_len), &mut ctx.rng)?;
            let mut body = Vec::new();
            wire::put_bytes(&mut body, &sealed.canonical_bytes());
            let seq = ctx.post(
                Party::User(j),
                suite.user_key(j)?,
                Payload::in_list(PayloadTag::ListAppend, body, ListId::UserOmega(j)),
            )?;
            audit_secrets.get_mut(&j).unwrap().randomness.insert(seq, randomness);
            ctx.send(Party::User(j), Party::Platform, "omega-submit", ct_len as u64);
            let dec = plat_pk.decrypt(&e_j)?;
            ctx.ops(Party::Platform).paillier_dec += 1;
            let (code_rx, _nonce) = unpack_code(&dec, cfg.tid)?;
            ctx.learn(Party::Platform, LearnedLabel::OpesCode { owner: Some(j) }, "candidate ω code");
            submitted.push((j, code_rx));
        }
        // Argmax code; ties keep the earliest (lowest user id).
        let mut best = submitted[0];
        for &(j, code) in &submitted[1..] {
            ctx.ops(Party::Platform).compares += 1;
            if code > best.1 {
                best = (j, code);
            }
        }
        let (cand, cand_code) = best;
        // Count-only private set union: U(S ∪ {cand}) without seeing Γ.
        let covered_enc: Vec<BigUint> = covered.iter().map(|&t| encode_assignment(t)).collect();
        let cand_gamma: Vec<BigUint> = utility.assignments[&cand]
            .iter()
            .map(|&t| encode_assignment(t))
            .collect();
        let u_with = if cand_gamma.is_empty() {
            covered.len() as u64
        } else {
            let coeffs = encrypted_set_poly(&covered_enc, plat_pk, &mut ctx.rng)?;
            ctx.ops(Party::Platform).paillier_enc += coeffs.len() as u64;
            ctx.send(Party::Platform, Party::User(cand), "set-union-poly", (coeffs.len() * ct_len) as u64);
            let tuples = set_union_tuples(&coeffs, &cand_gamma, plat_pk, &mut ctx.rng)?;
            ctx.ops(Party::User(cand)).modexp +=
                (coeffs.len() as u64 + 2) * cand_gamma.len() as u64;
            ctx.send(Party::User(cand), Party::Platform, "set-union-tuples", (tuples.len() * 2 * ct_len) as u64);
            let mut new_count = 0u64;
            for (x_ct, y_ct) in &tuples {
                let x = plat_pk.decrypt(x_ct)?;
                let y = plat_pk.decrypt(y_ct)?;
                ctx.ops(Party::Platform).paillier_dec += 2;
                if !(x.is_zero() && y.is_zero()) {
                    new_count += 1;
                }
            }
            ctx.learn(
                Party::Platform,
                LearnedLabel::SetUnionCount { candidate: cand },
                format!("{new_count} new elements"),
            );
            covered.len() as u64 + new_count
        };
        // Threshold code for ω_p = U(S∪{i})/B, sealed onto l_w[p].
        let omega_p = BigRational::from_integer(BigInt::from(u_with)) / &cfg.budget;
        let p_rank = table.bid_rank(&omega_p)?;
        let code_p = ot_fetch(&mut ctx, &group, Party::Platform, Party::Ai, &omega_msgs, p_rank)?;
        let code_p = u64::try_from(code_p).map_err(|_| Error::Parse("oversized code".into()))?;
        ctx.learn(Party::Platform, LearnedLabel::OwnValue, "threshold code");
        let sealed_p = tlc.commit(&pack_code(code_p, 0, cfg.tid), &mut ctx.rng)?;
        let mut body = Vec::new();
        wire::put_bytes(&mut body, &sealed_p.canonical_bytes());
        ctx.post(
            Party::Platform,
            &suite.sig_platform,
            Payload::in_list(PayloadTag::PlatformCommitment, body, ListId::PlatformOmega),
        )?;
        // Admission: rank-preserving codes compare like the values.
        ctx.ops(Party::Platform).compares += 1;
        if cand_code >= code_p {
            ctx.send(Party::Platform, Party::User(cand), "winner-notice", 16);
            ctx.learn(Party::User(cand), LearnedLabel::WinnerNotice, "admitted");
            // Acknowledgment: the winner reveals (b_i, Γ_i) to the platform.
            let gamma_len = utility.assignments[&cand].len() as u64;
            ctx.send(Party::User(cand), Party::Platform, "winner-ack", 32 + gamma_len * 8);
            ctx.learn(
                Party::Platform,
                LearnedLabel::PlaintextBid { owner: Some(cand), rank: None },
                "winner acknowledged",
            );
            ctx.learn(
                Party::Platform,
                LearnedLabel::PlaintextAssignments { owner: Some(cand) },
                "winner acknowledged",
            );
            covered.extend(utility.assignments[&cand].iter().copied());
            s_ids.insert(cand);
            winners.push(cand);
        } else {
            break;
        }
    }

    // ---- payment phase: one reference round per logical time step ----
    ctx.phase = Phase::PaymentDetermination;
    let mut paid: BTreeMap<UserId, BigRational> = BTreeMap::new();
    let mut outcome = crate::mechanisms::AuctionOutcome::default();
    let underpay = match &opts.misbehavior {
        Misbehavior::Underpay { victim, delta } => Some((*victim, delta.clone())),
        _ => None,
    };
    let zero_ct = |ctx: &mut Ctx| -> Result<PaillierCiphertext> {
        let c = ai_auth.key.encrypt_rng(&BigUint::zero(), &mut ctx.rng)?;
        ctx.ops(Party::Platform).paillier_enc += 1;
        Ok(c)
    };
    // Q·den(B)/num(B): scales E(U(T∪{i})) to E(Q·ω_{p,j}).
    let b_to_q = {
        let q_int = BigInt::from(scale.clone());
        let k = q_int * cfg.budget.denom() / cfg.budget.numer();
        k.to_biguint().ok_or_else(|| Error::Arithmetic("negative scale".into()))?
    };
    for (w_pos, &winner) in winners.iter().enumerate() {
        let others: Vec<UserId> = users.iter().copied().filter(|&u| u != winner).collect();
        let mut p_hat = zero_ct(&mut ctx)?;
        let mut t_ids: BTreeSet<UserId> = BTreeSet::new();
        let mut rounds = 0u32;
        // Set when the run ends with the winner's final position unopposed
        // (candidates exhausted or only zero-marginal references left): an
        // η-only term is then taken over the current T.
        let mut final_eta = false;
        loop {
            let cands: Vec<UserId> = others
                .iter()
                .copied()
                .filter(|u| !t_ids.contains(u))
                .collect();
            if cands.is_empty() {
                final_eta = true;
                break;
            }
            ctx.round += 1;
            // References post E(Q·ω_j(T)) to their payment lists.
            let mut posted: Vec<(UserId, PaillierCiphertext)> = Vec::new();
            for &j in &cands {
                let mu = mpep_round(&mut ctx, &indicators, &t_ids, j, m)?;
                let omega = BigRational::from_integer(BigInt::from(mu)) / &bid_of[&j];
                let q_omega = to_scaled_integer(&omega, &scale)?;
                let ct = ai_auth.key.encrypt_rng(&q_omega, &mut ctx.rng)?;
                ctx.ops(Party::User(j)).paillier_enc += 1;
                let mut body = Vec::new();
                wire::put_bytes(&mut body, &ct.canonical_bytes());
                ctx.post(
                    Party::User(j),
                    suite.user_key(j)?,
                    Payload::in_list(
                        PayloadTag::ListAppend,
                        body,
                        ListId::PaymentRef { reference: j, winner },
                    ),
                )?;
                ctx.send(Party::User(j), Party::Platform, "payment-omega", ct_len as u64);
                posted.push((j, ct));
            }
            // Argmax by ordering tokens; ties keep the lowest user id.
            let mut best = posted[0].clone();
            for item in &posted[1..] {
                ctx.send(Party::Platform, Party::Ai, "compare-request", 2 * ct_len as u64);
                let ord = ai_auth.compare(&item.1, &best.1)?;
                {
                    let ops = ctx.ops(Party::Ai);
                    ops.paillier_dec += 2;
                    ops.compares += 1;
                }
                ctx.send(Party::Ai, Party::Platform, "ordering-token", 8);
                ctx.learn(Party::Platform, LearnedLabel::OrderingToken, "argmax step");
                if ord == std::cmp::Ordering::Greater {
                    best = item.clone();
                }
            }
            let (i_j, e_ij) = best;
            // Zero-marginal reference ends the run (before any term).
            let qw_ij = ai_auth.key.decrypt(&e_ij)?;
            ctx.ops(Party::Ai).paillier_dec += 1;
            if qw_ij.is_zero() {
                let mut body = Vec::new();
                wire::put_u64(&mut body, winner.0 as u64);
                wire::put_u64(&mut body, rounds as u64);
                wire::put_u64(&mut body, u64::MAX); // zero-marginal flag
                ctx.post(Party::Ai, &suite.sig_ai, Payload::new(PayloadTag::OrderingToken, body))?;
                final_eta = true;
                break;
            }
            // Aggregates for this round, sealed under the AI key and posted
            // to l_S[winner] for the audit replay.
            let mu_i = mpep_marginal(&indicators, &t_ids, winner)?;
            let mu_ij = mpep_marginal(&indicators, &t_ids, i_j)?;
            let mut with_i = t_ids.clone();
            with_i.insert(winner);
            let u_with_i = mpep_coverage(&indicators, &with_i);
            let mut t_after = t_ids.clone();
            t_after.insert(i_j);
            let u_after = mpep_coverage(&indicators, &t_after);
            // Share traffic for the three aggregates.
            let share_bytes = (m as u64 + 7) / 8 + 8;
            for k in t_ids.iter().chain([&winner, &i_j]) {
                ctx.send(Party::User(*k), Party::Ai, "mpep-share", share_bytes);
            }
            let enc = |ctx: &mut Ctx, v: u64| -> Result<PaillierCiphertext> {
                let c = ai_auth.key.encrypt_rng(&BigUint::from(v), &mut ctx.rng)?;
                ctx.ops(Party::Ai).paillier_enc += 1;
                Ok(c)
            };
            let e_mu_i = enc(&mut ctx, mu_i)?;
            let e_mu_ij = enc(&mut ctx, mu_ij)?;
            let e_u_with_i = enc(&mut ctx, u_with_i)?;
            let e_u_after = enc(&mut ctx, u_after)?;
            let mut agg = Vec::new();
            wire::put_u64(&mut agg, rounds as u64);
            wire::put_u64(&mut agg, 0); // kind: normal round
            wire::put_u64(&mut agg, i_j.0 as u64);
            wire::put_bytes(&mut agg, &e_mu_i.canonical_bytes());
            wire::put_bytes(&mut agg, &e_mu_ij.canonical_bytes());
            wire::put_bytes(&mut agg, &e_u_with_i.canonical_bytes());
            wire::put_bytes(&mut agg, &e_u_after.canonical_bytes());
            ctx.post(
                Party::Ai,
                &suite.sig_ai,
                Payload::in_list(PayloadTag::ListAppend, agg, ListId::WinnerAgg(winner)),
            )?;
            // Platform derives E(Q·ω_{p,j}) from the posted aggregate.
            let e_pj = paillier_scale(&e_u_with_i, &b_to_q, &ai_auth.key)?;
            ctx.ops(Party::Platform).modexp += 1;
            ctx.send(Party::Platform, Party::Ai, "payment-terms", 3 * ct_len as u64);
            let (e_b, e_eta) = encrypted_payment_terms(
                &PaymentTermsInput {
                    e_u_ij: &e_mu_i,
                    e_ij: &e_ij,
                    e_pj: &e_pj,
                },
                &scale,
                &ai_auth,
                &mut ctx.rng,
            )?;
            {
                let ops = ctx.ops(Party::Ai);
                ops.paillier_dec += 3;
                ops.paillier_enc += 2;
            }
            ctx.send(Party::Ai, Party::Platform, "payment-term-cts", 2 * ct_len as u64);
            // round term = min(b-term, η-term); p̂ = max(p̂, round term)
            let ord = ai_auth.compare(&e_b, &e_eta)?;
            let round_ct = if ord == std::cmp::Ordering::Greater { &e_eta } else { &e_b };
            let ord2 = ai_auth.compare(&p_hat, round_ct)?;
            {
                let ops = ctx.ops(Party::Ai);
                ops.paillier_dec += 4;
                ops.compares += 2;
            }
            ctx.learn(Party::Platform, LearnedLabel::OrderingToken, "min/max step");
            if ord2 == std::cmp::Ordering::Less {
                p_hat = round_ct.clone();
            }
            rounds += 1;
            t_ids.insert(i_j);
            // Stop condition: the reference fails its own admission check,
            // b_{i_j} > U_{i_j}(T_{j−1})·B/U(T_j); checked by the AI on
            // exact values and posted as a condition token. No later
            // position is reachable, so no final η term either.
            let w_ij = from_scaled_integer(&qw_ij, &scale);
            let b_ij = BigRational::from_integer(BigInt::from(mu_ij)) / &w_ij;
            let threshold = BigRational::from_integer(BigInt::from(mu_ij)) * &cfg.budget
                / BigRational::from_integer(BigInt::from(u_after));
            if b_ij > threshold {
                let mut body = Vec::new();
                wire::put_u64(&mut body, winner.0 as u64);
                wire::put_u64(&mut body, rounds as u64 - 1);
                wire::put_u64(&mut body, 1); // stop-condition flag
                ctx.post(Party::Ai, &suite.sig_ai, Payload::new(PayloadTag::OrderingToken, body))?;
                break;
            }
        }
        if final_eta {
            // Final unopposed position: η-only term U_i(T)·B/U(T∪{i}),
            // from the aggregates E(U_i(T)) and E(U(T∪{i})).
            ctx.round += 1;
            let mu_i = mpep_marginal(&indicators, &t_ids, winner)?;
            let mut with_i = t_ids.clone();
            with_i.insert(winner);
            let u_with_i = mpep_coverage(&indicators, &with_i);
            let share_bytes = (m as u64 + 7) / 8 + 8;
            for k in t_ids.iter().chain([&winner]) {
                ctx.send(Party::User(*k), Party::Ai, "mpep-share", share_bytes);
            }
            let enc = |ctx: &mut Ctx, v: u64| -> Result<PaillierCiphertext> {
                let c = ai_auth.key.encrypt_rng(&BigUint::from(v), &mut ctx.rng)?;
                ctx.ops(Party::Ai).paillier_enc += 1;
                Ok(c)
            };
            let e_mu_i = enc(&mut ctx, mu_i)?;
            let e_u_with_i = enc(&mut ctx, u_with_i)?;
            let mut agg = Vec::new();
            wire::put_u64(&mut agg, rounds as u64);
            wire::put_u64(&mut agg, 1); // kind: final η-only position
            wire::put_u64(&mut agg, winner.0 as u64);
            wire::put_bytes(&mut agg, &e_mu_i.canonical_bytes());
            wire::put_bytes(&mut agg, &e_u_with_i.canonical_bytes());
            ctx.post(
                Party::Ai,
                &suite.sig_ai,
                Payload::in_list(PayloadTag::ListAppend, agg, ListId::WinnerAgg(winner)),
            )?;
            if u_with_i > 0 {
                let eta = BigRational::from_integer(BigInt::from(mu_i)) * &cfg.budget
                    / BigRational::from_integer(BigInt::from(u_with_i));
                let q_eta = to_scaled_integer(&eta, &scale)?;
                let e_eta = ai_auth.key.encrypt_rng(&q_eta, &mut ctx.rng)?;
                ctx.ops(Party::Ai).paillier_enc += 1;
                let ord = ai_auth.compare(&p_hat, &e_eta)?;
                {
                    let ops = ctx.ops(Party::Ai);
                    ops.paillier_dec += 2;
                    ops.compares += 1;
                }
                ctx.learn(Party::Platform, LearnedLabel::OrderingToken, "final-eta step");
                if ord == std::cmp::Ordering::Less {
                    p_hat = e_eta;
                }
            }
        }
        // Final decryption of E(Q·p_i).
        ctx.send(Party::Platform, Party::Ai, "payment-finalize", ct_len as u64);
        let q_p = ai_auth.key.decrypt(&p_hat)?;
        ctx.ops(Party::Ai).paillier_dec += 1;
        ctx.send(Party::Ai, Party::Platform, "payment-value", 32);
        let honest = from_scaled_integer(&q_p, &scale);
        let amount = match &underpay {
            Some((victim, delta)) if victim.map_or(w_pos == 0, |v| v == winner) => {
                (&honest - delta).max(BigRational::zero())
            }
            _ => honest.clone(),
        };
        let mut record = Vec::new();
        wire::put_u64(&mut record, winner.0 as u64);
        wire::put_u64(&mut record, 1);
        wire::put_ratio(&mut record, &honest);
        ctx.post(Party::Platform, &suite.sig_platform, Payload::new(PayloadTag::OutcomeRecord, record))?;
        ctx.send(Party::Platform, Party::User(winner), "payment", 16);
        ctx.learn(Party::User(winner), LearnedLabel::PaymentReceived, format!("amount {amount}"));
        outcome.allocation.insert(winner, 1);
        outcome.payments.insert(winner, amount.clone());
        paid.insert(winner, amount);
    }
    outcome.winners = winners;

    // ---- key release: the sealed lists open for the audit phase ----
    ctx.round += 1;
    ctx.phase = Phase::Verification;
    tlc.advance_to(LIST_RELEASE);
    let key = tlc.release_key()?;
    let mut body = Vec::new();
    wire::put_bytes(&mut body, &key);
    ctx.post(Party::Ai, &suite.sig_ai, Payload::new(PayloadTag::KeyRelease, body))?;
    let release_round = ctx.round;

    let audit_round = ctx.round + 1;
    let mut transcript = RunTranscript {
        config: cfg.clone(),
        suite,
        profiles,
        opes: table,
        scale_q: Some(scale),
        board: ctx.board,
        messages: ctx.messages,
        views: ctx.views,
        counts: ctx.counts,
        outcome,
        paid,
        audits: Vec::new(),
        audit_secrets,
        excluded: Vec::new(),
        release_round,
        audit_round,
        released_key: Some(key),
        commitment_len: None,
        misbehavior: opts.misbehavior.clone(),
    };
    for &u in &users {
        let forced = opts.force_audit.contains(&u);
        let coin = !opts.skip_coin_audits
            && audit_coin(cfg.seed, cfg.tid, u, &cfg.verification.alpha);
        if forced || coin {
            let _ = crate::protocol::verify::verify_payment(&mut transcript, u)?;
        }
    }
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::run_submodular;
    use crate::protocol::config::VerificationPolicy;
    use crate::protocol::CryptoConfig;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    pub fn sub_config(m: u32, budget: BigRational, bids: &[BigRational]) -> AuctionConfig {
        AuctionConfig {
            tid: 21,
            model: JobModel::Submodular,
            budget,
            deadline: 2,
            bid_domain: bids.to_vec(),
            limit_domain: vec![1],
            ground_set_size: m,
            verification: VerificationPolicy {
                alpha: ratio(1, 10),
                fine: ratio(900, 1),
                p_max: ratio(100, 1),
            },
            seed: 42,
            crypto: CryptoConfig::small(),
            headroom: 100,
        }
    }

    fn profile(id: u32, bid: BigRational, gamma: &[u32]) -> SensingProfile {
        SensingProfile::submodular(UserId(id), bid, gamma.iter().copied().collect())
    }

    fn no_audits() -> RunOptions {
        RunOptions {
            skip_coin_audits: true,
            ..RunOptions::default()
        }
    }

    fn oracle(cfg: &AuctionConfig, profiles: &[SensingProfile]) -> crate::mechanisms::AuctionOutcome {
        let utility = CoverageUtility::from_profiles((0..cfg.ground_set_size).collect(), profiles);
        run_submodular(profiles, &cfg.budget, &utility)
    }

    #[test]
    fn reference_two_user_instance_matches_oracle() {
        let cfg = sub_config(3, ratio(4, 1), &[ratio(1, 1)]);
        let profiles = vec![profile(0, ratio(1, 1), &[0, 1]), profile(1, ratio(1, 1), &[1, 2])];
        let t = run_pvi_s_opts(&cfg, &profiles, no_audits()).unwrap();
        assert_eq!(t.outcome, oracle(&cfg, &profiles));
        assert_eq!(t.outcome.payment_of(UserId(0)), ratio(4, 3));
        assert_eq!(t.outcome.payment_of(UserId(1)), ratio(4, 3));
        assert!(t.board.replay_check().is_ok());
    }

    #[test]
    fn single_user_instance_pays_budget() {
        let cfg = sub_config(1, ratio(1, 1), &[ratio(1, 1)]);
        let profiles = vec![profile(0, ratio(1, 1), &[0])];
        let t = run_pvi_s_opts(&cfg, &profiles, no_audits()).unwrap();
        assert_eq!(t.outcome, oracle(&cfg, &profiles));
        assert_eq!(t.outcome.payment_of(UserId(0)), ratio(1, 1));
    }

    #[test]
    fn three_user_instance_with_loser_matches_oracle() {
        let cfg = sub_config(3, ratio(4, 1), &[ratio(1, 1), ratio(2, 1)]);
        let profiles = vec![
            profile(0, ratio(1, 1), &[0, 1]),
            profile(1, ratio(1, 1), &[1, 2]),
            profile(2, ratio(2, 1), &[2]),
        ];
        let t = run_pvi_s_opts(&cfg, &profiles, no_audits()).unwrap();
        assert_eq!(t.outcome, oracle(&cfg, &profiles));
    }

    #[test]
    fn fractional_bids_stay_exact() {
        let cfg = sub_config(4, ratio(7, 2), &[ratio(1, 2), ratio(3, 2)]);
        let profiles = vec![
            profile(0, ratio(1, 2), &[0, 1, 2]),
            profile(1, ratio(3, 2), &[2, 3]),
            profile(2, ratio(1, 2), &[3]),
        ];
        let t = run_pvi_s_opts(&cfg, &profiles, no_audits()).unwrap();
        assert_eq!(t.outcome, oracle(&cfg, &profiles));
    }

    #[test]
    fn losers_learn_no_winner_assignments_and_platform_sees_no_loser_bids() {
        let cfg = sub_config(3, ratio(4, 1), &[ratio(1, 1), ratio(2, 1)]);
        let profiles = vec![
            profile(0, ratio(1, 1), &[0, 1]),
            profile(1, ratio(1, 1), &[1, 2]),
            profile(2, ratio(2, 1), &[2]),
        ];
        let t = run_pvi_s_opts(&cfg, &profiles, no_audits()).unwrap();
        let winners: BTreeSet<UserId> = t.outcome.winners.iter().copied().collect();
        let view = t.view(Party::Platform).unwrap();
        for l in &view.learned {
            match &l.label {
                LearnedLabel::PlaintextBid { owner: Some(u), .. }
                | LearnedLabel::PlaintextAssignments { owner: Some(u) } => {
                    assert!(winners.contains(u), "platform learned loser {u} plaintext");
                }
                _ => {}
            }
        }
    }

    #[test]
    fn underpay_reduces_paid_only() {
        let cfg = sub_config(3, ratio(4, 1), &[ratio(1, 1)]);
        let profiles = vec![profile(0, ratio(1, 1), &[0, 1]), profile(1, ratio(1, 1), &[1, 2])];
        let opts = RunOptions {
            misbehavior: Misbehavior::Underpay {
                victim: Some(UserId(1)),
                delta: ratio(1, 2),
            },
            skip_coin_audits: true,
            ..RunOptions::default()
        };
        let t = run_pvi_s_opts(&cfg, &profiles, opts).unwrap();
        assert_eq!(t.paid[&UserId(1)], ratio(5, 6));
        assert_eq!(t.paid[&UserId(0)], ratio(4, 3));
    }

    #[test]
    fn empty_instance_runs() {
        let cfg = sub_config(2, ratio(4, 1), &[ratio(1, 1)]);
        let t = run_pvi_s_opts(&cfg, &[], no_audits()).unwrap();
        assert!(t.outcome.winners.is_empty());
    }

    #[test]
    fn omega_domain_covers_all_reachable_values() {
        let dom = omega_domain(3, &[ratio(1, 1), ratio(2, 1)], &ratio(4, 1));
        for u in 0..=3i64 {
            for b in [ratio(1, 1), ratio(2, 1), ratio(4, 1)] {
                assert!(dom.contains(&(ratio(u, 1) / b)));
            }
        }
        assert!(dom.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn random_instances_match_oracle() {
        use rand::Rng;
        let mut rng = derive_rng(99, "pvi-s-random");
        let bids = [ratio(1, 1), ratio(2, 1), ratio(3, 1)];
        let cfg_base = sub_config(4, ratio(5, 1), &bids);
        let users: Vec<UserId> = (0..4).map(UserId).collect();
        let suite =
            Arc::new(CryptoSuite::generate(cfg_base.seed, &users, &cfg_base.crypto).unwrap());
        for trial in 0..6 {
            let n = rng.gen_range(1..5usize);
            let profiles: Vec<SensingProfile> = (0..n)
                .map(|i| {
                    let gamma: Vec<u32> = (0..4).filter(|_| rng.gen_bool(0.5)).collect();
                    profile(i as u32, bids[rng.gen_range(0..3)].clone(), &gamma)
                })
                .collect();
            let mut cfg = cfg_base.clone();
            cfg.tid = 100 + trial;
            let opts = RunOptions {
                suite: Some(Arc::clone(&suite)),
                skip_coin_audits: true,
                ..RunOptions::default()
            };
            let t = run_pvi_s_opts(&cfg, &profiles, opts).unwrap();
            assert_eq!(t.outcome, oracle(&cfg, &profiles), "trial {trial}: {profiles:?}");
        }
    }
}
