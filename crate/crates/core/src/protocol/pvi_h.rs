//! The PVI-H protocol: sealed order-preserving commitments for the
//! homogeneous and heterogeneous job models.
//!
//! Round plan (logical time):
//!   0    — platform posts auction details
//!   1    — users fetch OPES codes by OT, seal profiles (Paillier + TLC),
//!          obtain blind-signed bidding requests, submit anonymously
//!   T    — platform posts the sealed commitments; dropped users appeal
//!   T+1  — key release, decommitment, sorting, winner determination
//!   T+2  — identity-free outcome records, payment claims, transfers
//!   T+3  — randomized audits (see `verify`)
//!
//! Anonymity: commitments carry no user id; the blind signature proves
//! "some registered user" without linking. Winners de-anonymize themselves
//! when claiming payment; the first failing rank never does.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;
use rand::RngCore;

use crate::bulletin::{Party, Payload, PayloadTag};
use crate::crypto::blind_sig::{self, BlindSignature};
use crate::crypto::group::derive_rng;
use crate::crypto::opes::opes_build;
use crate::crypto::tlc::{open_with_key, TlcCommitment, TlcService};
use crate::crypto::PaillierCiphertext;
use crate::error::{Error, Result};
use crate::mechanisms::{SensingProfile, UserId};
use crate::protocol::{
    audit_coin, blind_request, insertion_sort_counting, ot_fetch, AuditSecrets, AuctionConfig,
    Ctx, JobModel, LearnedLabel, Misbehavior, Phase, RunOptions, RunTranscript,
};
use crate::protocol::suite::CryptoSuite;
use crate::wire;

/// Fixed-width ciphertext bytes so all commitments look alike.
fn fixed_width(value: &BigUint, len: usize) -> Vec<u8> {
    let raw = value.to_bytes_be();
    let mut out = vec![0u8; len - raw.len()];
    out.extend_from_slice(&raw);
    out
}

fn pack_profile(code_b: u64, code_l: u64, nonce: u64) -> BigUint {
    let mut bytes = Vec::with_capacity(24);
    bytes.extend_from_slice(&code_b.to_be_bytes());
    bytes.extend_from_slice(&code_l.to_be_bytes());
    bytes.extend_from_slice(&nonce.to_be_bytes());
    BigUint::from_bytes_be(&bytes)
}

pub(crate) fn unpack_profile(m: &BigUint) -> Result<(u64, u64, u64)> {
    let raw = m.to_bytes_be();
    if raw.len() > 24 {
        return Err(Error::Parse("packed profile too long".into()));
    }
    let mut bytes = vec![0u8; 24 - raw.len()];
    bytes.extend_from_slice(&raw);
    let f = |i: usize| u64::from_be_bytes(bytes[i..i + 8].try_into().unwrap());
    Ok((f(0), f(8), f(16)))
}

/// Bidding-request message: m = H(c ‖ tid) as a nonzero element mod p.
pub(crate) fn request_message(group: &crate::crypto::GroupParams, c: &TlcCommitment, tid: u64) -> BigUint {
    let d = wire::sha256(&[b"bidding-request", &c.canonical_bytes(), &tid.to_be_bytes()]);
    let m = BigUint::from_bytes_be(&d) % &group.p;
    if m.is_zero() {
        BigUint::from(1u32)
    } else {
        m
    }
}

/// One sealed submission as tracked by the simulator.
pub(crate) struct Submission {
    pub user: UserId,
    pub commitment: TlcCommitment,
    pub m_br: BigUint,
    pub br_sig: BlindSignature,
    pub randomness: BigUint,
    pub nonce: u64,
    pub dropped: bool,
    pub board_seq: Option<u64>,
}

pub fn run_pvi_h(cfg: &AuctionConfig, profiles: &[SensingProfile]) -> Result<RunTranscript> {
    run_pvi_h_opts(cfg, profiles, RunOptions::default())
}

pub fn run_pvi_h_opts(
    cfg: &AuctionConfig,
    profiles: &[SensingProfile],
    opts: RunOptions,
) -> Result<RunTranscript> {
    cfg.validate()?;
    if cfg.model == JobModel::Submodular {
        return Err(Error::Usage("submodular model runs under the S protocol".into()));
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
        if !cfg.limit_domain.contains(&p.limit) {
            return Err(Error::Domain(format!("{}: limit {} outside declared domain", p.user_id, p.limit)));
        }
        if cfg.model == JobModel::Homogeneous && p.limit != 1 {
            return Err(Error::Domain(format!("{}: homogeneous jobs have limit 1", p.user_id)));
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
    let opes = opes_build(
        &cfg.bid_domain,
        &cfg.limit_domain,
        cfg.crypto.code_bits,
        &mut derive_rng(cfg.seed, &format!("opes-{}", cfg.tid)),
    )?;
    let mut ctx = Ctx::new(
        suite.new_board(),
        derive_rng(cfg.seed, &format!("run-h-{}", cfg.tid)),
    );
    let tee = cfg.deadline;
    let mut tlc = TlcService::new(tee + 1, &mut ctx.rng);
    let group = suite.group.clone();
    let plat_pk = &suite.platform_paillier;
    let ct_len = ((cfg.crypto.paillier_bits * 2) / 8) as usize;

    // ---- round 0: auction details ----
    let mut details = Vec::new();
    wire::put_u64(&mut details, cfg.tid);
    wire::put_str(&mut details, cfg.model.tag());
    wire::put_ratio(&mut details, &cfg.budget);
    wire::put_u64(&mut details, tee);
    wire::put_ratio(&mut details, &cfg.verification.alpha);
    details.extend_from_slice(&wire::sha256(&[&opes.canonical_bytes()]));
    ctx.post(
        Party::Platform,
        &suite.sig_platform,
        Payload::new(PayloadTag::AuctionDetails, details),
    )?;
    for &u in &users {
        ctx.send(Party::Platform, Party::User(u), "auction-details", 96);
    }

    // ---- round 1: sealed submissions ----
    ctx.round = 1;
    let bid_msgs: Vec<BigUint> = opes.bid_codes.iter().map(|&c| BigUint::from(c)).collect();
    let limit_msgs: Vec<BigUint> = opes.limit_codes.iter().map(|&c| BigUint::from(c)).collect();
    let mut submissions: Vec<Submission> = Vec::with_capacity(profiles.len());
    let mut audit_secrets: BTreeMap<UserId, AuditSecrets> = BTreeMap::new();
    for p in &profiles {
        let party = Party::User(p.user_id);
        let code_b = ot_fetch(&mut ctx, &group, party, Party::Ai, &bid_msgs, opes.bid_rank(&p.bid)?)?;
        let code_l = ot_fetch(&mut ctx, &group, party, Party::Ai, &limit_msgs, opes.limit_rank(p.limit)?)?;
        ctx.learn(party, LearnedLabel::OwnValue, "fetched own OPES codes");
        let code_b = u64::try_from(code_b).map_err(|_| Error::Parse("oversized code".into()))?;
        let code_l = u64::try_from(code_l).map_err(|_| Error::Parse("oversized code".into()))?;
        let nonce = ctx.rng.next_u64();
        let randomness = plat_pk.random_randomness(&mut ctx.rng);
        let e = plat_pk.encrypt(&pack_profile(code_b, code_l, nonce), &randomness)?;
        ctx.ops(party).paillier_enc += 1;
        let mut sealed = Vec::new();
        wire::put_bytes(&mut sealed, &fixed_width(&e.value, ct_len));
        let mut s_i = [0u8; 16];
        ctx.rng.fill_bytes(&mut s_i);
        wire::put_bytes(&mut sealed, &s_i);
        wire::put_u64(&mut sealed, cfg.tid);
        let c = tlc.commit(&sealed, &mut ctx.rng)?;
        let m_br = request_message(&group, &c, cfg.tid);
        let br_sig = blind_request(&mut ctx, &group, &suite.blind_key, party, Party::Platform, &m_br)?;
        // Anonymous submission: the platform verifies the blind signature
        // but learns no identity.
        ctx.send(party, Party::Platform, "commitment-submit", c.byte_len() as u64 + 64);
        if !blind_sig::verify(&group, &suite.blind_key.y, &m_br, &br_sig) {
            return Err(Error::Integrity("bidding request rejected".into()));
        }
        {
            let ops = ctx.ops(Party::Platform);
            ops.verifies += 1;
            ops.modexp += 3;
        }
        // Receipt: ordinary signature over (m_br, tid, T), returned on the
        // same anonymous channel.
        let mut receipt_msg = Vec::new();
        wire::put_biguint(&mut receipt_msg, &m_br);
        wire::put_u64(&mut receipt_msg, cfg.tid);
        wire::put_u64(&mut receipt_msg, tee);
        let receipt = crate::crypto::schnorr::sign(&group, &suite.sig_platform, &receipt_msg, &mut ctx.rng);
        ctx.ops(Party::Platform).signs += 1;
        ctx.send(Party::Platform, party, "receipt", 64);
        {
            let ops = ctx.ops(party);
            ops.verifies += 1;
            ops.modexp += 2;
        }
        let dropped = opts.misbehavior == Misbehavior::DropCommitment { user: p.user_id };
        submissions.push(Submission {
            user: p.user_id,
            commitment: c,
            m_br,
            br_sig,
            randomness: randomness.clone(),
            nonce,
            dropped,
            board_seq: None,
        });
        audit_secrets.insert(
            p.user_id,
            AuditSecrets {
                randomness: BTreeMap::new(), // keyed by seq once posted
                nonce,
                receipt: receipt.canonical_bytes(),
            },
        );
    }

    // ---- round T: commitments on the board ----
    ctx.round = tee;
    let mut commitment_len: Option<usize> = None;
    for sub in submissions.iter_mut() {
        if sub.dropped {
            continue;
        }
        let mut body = Vec::new();
        wire::put_bytes(&mut body, &sub.commitment.canonical_bytes());
        wire::put_biguint(&mut body, &sub.m_br);
        wire::put_biguint(&mut body, &sub.br_sig.r);
        wire::put_biguint(&mut body, &sub.br_sig.s);
        let seq = ctx.post(Party::Platform, &suite.sig_platform, Payload::new(PayloadTag::Commitment, body))?;
        sub.board_seq = Some(seq);
        audit_secrets
            .get_mut(&sub.user)
            .unwrap()
            .randomness
            .insert(seq, sub.randomness.clone());
        let len = sub.commitment.byte_len();
        if let Some(l) = commitment_len {
            debug_assert_eq!(l, len, "commitments must be length-uniform");
        }
        commitment_len = Some(len);
    }
    // Dropped users see no commitment of theirs and appeal with the receipt.
    let mut excluded: Vec<UserId> = Vec::new();
    for sub in &submissions {
        if !sub.dropped {
            continue;
        }
        let mut body = Vec::new();
        wire::put_u64(&mut body, sub.user.0 as u64);
        wire::put_biguint(&mut body, &sub.m_br);
        wire::put_bytes(&mut body, &audit_secrets[&sub.user].receipt);
        ctx.post(
            Party::User(sub.user),
            suite.user_key(sub.user)?,
            Payload::new(PayloadTag::Appeal, body),
        )?;
        excluded.push(sub.user);
    }

    // ---- round T+1: decommitment and winner determination ----
    ctx.round = tee + 1;
    tlc.advance_to(tee + 1);
    let key = tlc.release_key()?;
    let mut body = Vec::new();
    wire::put_bytes(&mut body, &key);
    ctx.post(Party::Ai, &suite.sig_ai, Payload::new(PayloadTag::KeyRelease, body))?;
    ctx.send(Party::Ai, Party::Platform, "tlc-key", 32);
    for &u in &users {
        ctx.send(Party::Ai, Party::User(u), "tlc-key", 32);
    }

    // Platform opens every posted commitment (identity-free records).
    struct Opened {
        code_b: u64,
        code_l: u64,
        nonce: u64,
        sub_idx: usize,
    }
    let mut opened: Vec<Opened> = Vec::new();
    for (idx, sub) in submissions.iter().enumerate() {
        if sub.dropped {
            continue;
        }
        let sealed = open_with_key(&key, &sub.commitment)?;
        ctx.learn(Party::Platform, LearnedLabel::TlcOpened, format!("seq {}", sub.board_seq.unwrap()));
        let mut r = wire::Reader::new(&sealed);
        let e_bytes = r.bytes()?.to_vec();
        let _s = r.bytes()?;
        let tid = r.u64()?;
        if tid != cfg.tid {
            excluded.push(sub.user);
            continue;
        }
        let e = PaillierCiphertext {
            value: BigUint::from_bytes_be(&e_bytes),
            key_id: plat_pk.key_id,
        };
        let m = plat_pk.decrypt(&e)?;
        ctx.ops(Party::Platform).paillier_dec += 1;
        let (code_b, code_l, nonce) = unpack_profile(&m)?;
        opened.push(Opened { code_b, code_l, nonce, sub_idx: idx });
    }
    // Rank by code; ties by arrival order (= user-id order of submission).
    let cmp_count = insertion_sort_counting(&mut opened, |a, b| {
        a.code_b.cmp(&b.code_b).then(a.sub_idx.cmp(&b.sub_idx))
    });
    ctx.ops(Party::Platform).sort_cmp += cmp_count;

    // Admission over ranked codes, decoding each via the AI until the first
    // failure. Returns (winner ranks, total jobs, bid after the cut).
    let admission = |ctx: &mut Ctx, order: &[Opened]| -> Result<(Vec<(usize, BigRational, u64)>, u64, Option<BigRational>)> {
        let mut winners = Vec::new();
        let mut cum: u64 = 0;
        let mut next_bid = None;
        for (rank, o) in order.iter().enumerate() {
            ctx.send(Party::Platform, Party::Ai, "code-decode", 16);
            let bid = opes.decode_bid(o.code_b)?;
            let limit = opes.decode_limit(o.code_l)?;
            ctx.send(Party::Ai, Party::Platform, "decoded-profile", 48);
            ctx.learn(Party::Ai, LearnedLabel::OpesCode { owner: None }, format!("rank {}", rank + 1));
            ctx.learn(
                Party::Platform,
                LearnedLabel::PlaintextBid { owner: None, rank: Some(rank as u32 + 1) },
                "decoded rank",
            );
            ctx.learn(
                Party::Platform,
                LearnedLabel::PlaintextLimit { owner: None, rank: Some(rank as u32 + 1) },
                "decoded rank",
            );
            if &bid * BigInt::from(cum + limit) <= cfg.budget {
                cum += limit;
                winners.push((rank, bid, limit));
            } else {
                next_bid = Some(bid);
                break;
            }
        }
        Ok((winners, cum, next_bid))
    };
    let (mut winners, mut cum, mut next_bid) = admission(&mut ctx, &opened)?;
    if opts.misbehavior == Misbehavior::ForgeRank {
        // Swap the marginal winner with the first loser and redo admission.
        let k = winners.len();
        if k >= 1 && k < opened.len() {
            opened.swap(k - 1, k);
            let redo = admission(&mut ctx, &opened)?;
            winners = redo.0;
            cum = redo.1;
            next_bid = redo.2;
        }
    }
    let price: Option<BigRational> = if winners.is_empty() {
        None
    } else {
        let share = &cfg.budget / BigRational::from_integer(BigInt::from(cum));
        Some(match next_bid {
            Some(nb) => share.min(nb),
            None => share,
        })
    };

    // ---- round T+2: outcome records, claims, transfers ----
    ctx.round = tee + 2;
    ctx.phase = Phase::PaymentDetermination;
    let mut outcome = crate::mechanisms::AuctionOutcome::default();
    let mut paid: BTreeMap<UserId, BigRational> = BTreeMap::new();
    let underpay = match &opts.misbehavior {
        Misbehavior::Underpay { victim, delta } => Some((*victim, delta.clone())),
        _ => None,
    };
    for (pos, (rank, _bid, limit)) in winners.iter().enumerate() {
        let o = &opened[*rank];
        let sub = &submissions[o.sub_idx];
        let honest = price.clone().unwrap() * BigInt::from(*limit);
        let mut record = Vec::new();
        wire::put_u64(&mut record, *rank as u64 + 1);
        wire::put_u64(&mut record, sub.board_seq.unwrap());
        wire::put_u64(&mut record, *limit);
        wire::put_ratio(&mut record, &honest);
        ctx.post(Party::Platform, &suite.sig_platform, Payload::new(PayloadTag::OutcomeRecord, record))?;
        // Claim: the winner recognizes its commitment and de-anonymizes by
        // revealing the packed nonce.
        let party = Party::User(sub.user);
        ctx.send(party, Party::Platform, "payment-claim", 48);
        if o.nonce != sub.nonce {
            return Err(Error::Integrity("claim nonce mismatch".into()));
        }
        ctx.learn(
            Party::Platform,
            LearnedLabel::PlaintextBid { owner: Some(sub.user), rank: Some(*rank as u32 + 1) },
            "winner claimed payment",
        );
        ctx.learn(
            Party::Platform,
            LearnedLabel::PlaintextLimit { owner: Some(sub.user), rank: Some(*rank as u32 + 1) },
            "winner claimed payment",
        );
        let amount = match &underpay {
            Some((victim, delta))
                if victim.map_or(pos == 0, |v| v == sub.user) =>
            {
                (&honest - delta).max(BigRational::zero())
            }
            _ => honest.clone(),
        };
        ctx.send(Party::Platform, party, "payment", 16);
        ctx.learn(party, LearnedLabel::PaymentReceived, format!("amount {amount}"));
        outcome.winners.push(sub.user);
        outcome.allocation.insert(sub.user, *limit);
        outcome.payments.insert(sub.user, amount.clone());
        paid.insert(sub.user, amount);
    }
    outcome.per_job_price = price;

    let mut transcript = RunTranscript {
        config: cfg.clone(),
        suite,
        profiles,
        opes,
        scale_q: None,
        board: ctx.board,
        messages: ctx.messages,
        views: ctx.views,
        counts: ctx.counts,
        outcome,
        paid,
        audits: Vec::new(),
        audit_secrets,
        excluded,
        release_round: tee + 1,
        audit_round: tee + 3,
        released_key: Some(key),
        commitment_len,
        misbehavior: opts.misbehavior.clone(),
    };

    // ---- round T+3: randomized verification ----
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
