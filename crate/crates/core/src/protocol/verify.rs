//! Randomized payment verification. An audited user asks the AI to replay
//! the run from board data: commitments are re-opened with the released
//! TLC key, profile ciphertexts with revealed Paillier randomness, and the
//! payment rule is recomputed exactly. The finding is posted as a signed
//! audit report.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;

use crate::bulletin::{ListId, Party, Payload, PayloadTag};
use crate::crypto::group::derive_rng;
use crate::crypto::tlc::{open_with_key, TlcCommitment};
use crate::crypto::PaillierCiphertext;
use crate::error::{Error, Result};
use crate::mechanisms::{run_heterogeneous, run_homogeneous, SensingProfile, UserId};
use crate::protocol::{
    insertion_sort_counting, AuditFinding, AuditRecord, JobModel, LearnedLabel, Learned,
    MessageRecord, OpCounts, Phase, RunTranscript,
};
use crate::secure_compute::from_scaled_integer;
use crate::wire;

/// Outcome of a single audit.
#[derive(Debug, Clone, PartialEq)]
pub enum VerifyResult {
    Confirmed,
    Discrepancy {
        expected: BigRational,
        observed: BigRational,
    },
}

impl VerifyResult {
    fn to_finding(&self) -> AuditFinding {
        match self {
            VerifyResult::Confirmed => AuditFinding::Confirmed,
            VerifyResult::Discrepancy { expected, observed } => AuditFinding::Discrepancy {
                expected: expected.clone(),
                observed: observed.clone(),
            },
        }
    }
}

fn ops<'a>(t: &'a mut RunTranscript, p: Party) -> &'a mut OpCounts {
    t.counts.entry((p, Phase::Verification)).or_default()
}

fn send(t: &mut RunTranscript, from: Party, to: Party, kind: &'static str, bytes: u64) {
    let round = t.audit_round;
    t.messages.push(MessageRecord {
        round,
        from,
        to,
        kind,
        bytes,
    });
    let c = ops(t, from);
    c.messages += 1;
    c.bytes += bytes;
}

fn learn(t: &mut RunTranscript, p: Party, label: LearnedLabel, note: impl Into<String>) {
    let round = t.audit_round;
    t.views.entry(p).or_default().learned.push(Learned {
        round,
        label,
        note: note.into(),
    });
}

fn ratio_u(x: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(x.clone()))
}

/// Replay the payment rule for `user` from board data and compare against
/// the actual transfer. Appends verification-phase messages and counters
/// to the transcript and posts a signed audit report.
///
/// Errors with [`Error::Verification`] when the board is missing entries
/// the audit needs (a platform fault, e.g. a dropped commitment).
pub fn verify_payment(t: &mut RunTranscript, user: UserId) -> Result<VerifyResult> {
    if !t.audit_secrets.contains_key(&user) {
        return Err(Error::Usage(format!("{user} did not participate")));
    }
    send(t, Party::User(user), Party::Ai, "audit-request", 16);
    let expected = match t.config.model {
        JobModel::Submodular => replay_submodular(t, user)?,
        _ => replay_ranked(t, user)?,
    };
    let observed = t.paid.get(&user).cloned().unwrap_or_else(BigRational::zero);
    let result = if expected == observed {
        VerifyResult::Confirmed
    } else {
        VerifyResult::Discrepancy {
            expected: expected.clone(),
            observed: observed.clone(),
        }
    };
    // Signed audit report on the board.
    let mut body = Vec::new();
    wire::put_u64(&mut body, user.0 as u64);
    wire::put_u64(&mut body, matches!(result, VerifyResult::Discrepancy { .. }) as u64);
    wire::put_ratio(&mut body, &expected);
    wire::put_ratio(&mut body, &observed);
    let report_len = body.len() as u64;
    ops(t, Party::Ai).signs += 1;
    let mut rng = derive_rng(
        t.config.seed,
        &format!("audit-{}-{}", t.config.tid, user.0),
    );
    let round = t.audit_round;
    let suite = t.suite.clone();
    t.board.post_as(
        Party::Ai,
        &suite.sig_ai,
        round,
        Payload::new(PayloadTag::AuditReport, body),
        &mut rng,
    )?;
    send(t, Party::Ai, Party::User(user), "audit-report", 64 + report_len);
    t.audits.push(AuditRecord {
        user,
        finding: result.to_finding(),
    });
    Ok(result)
}

/// H-model replay: reveal all profile ciphertexts, re-run the ranking
/// mechanism exactly, and return the audited user's honest payment.
fn replay_ranked(t: &mut RunTranscript, user: UserId) -> Result<BigRational> {
    let key = t
        .released_key
        .ok_or_else(|| Error::Verification("audit before key release".into()))?;
    // Every participant reveals (seq, randomness, nonce) for its own
    // ciphertext; the AI matches reveals to posted commitments.
    let participants: Vec<UserId> = t.audit_secrets.keys().copied().collect();
    for &u in &participants {
        send(t, Party::Ai, Party::User(u), "reveal-request", 16);
        send(t, Party::User(u), Party::Ai, "reveal", 80);
    }
    if t.audit_secrets[&user].randomness.is_empty() {
        // The user holds a receipt but no commitment made the board.
        return Err(Error::Verification(format!(
            "no commitment on the board for audited {user}"
        )));
    }
    let mut by_seq: BTreeMap<u64, (UserId, BigUint, u64)> = BTreeMap::new();
    for &u in &participants {
        let secrets = &t.audit_secrets[&u];
        for (&seq, r) in &secrets.randomness {
            by_seq.insert(seq, (u, r.clone(), secrets.nonce));
        }
    }
    let suite = t.suite.clone();
    let plat_pk = &suite.platform_paillier;
    let mut recovered: Vec<(UserId, u64, u64)> = Vec::new(); // (user, code_b, code_l)
    let mut codes: Vec<u64> = Vec::new();
    let mut opened = 0u64;
    for entry in t.board.entries().to_vec() {
        if entry.payload.tag != PayloadTag::Commitment {
            continue;
        }
        let (owner, randomness, nonce) = by_seq
            .get(&entry.sequence_no)
            .cloned()
            .ok_or_else(|| Error::Verification("unclaimed commitment on the board".into()))?;
        let mut r = wire::Reader::new(&entry.payload.body);
        let c_bytes = r.bytes()?.to_vec();
        let commitment = TlcCommitment::from_reader(&mut wire::Reader::new(&c_bytes))?;
        let sealed = open_with_key(&key, &commitment)?;
        let mut sr = wire::Reader::new(&sealed);
        let e_bytes = sr.bytes()?.to_vec();
        let _s = sr.bytes()?;
        let tid = sr.u64()?;
        if tid != t.config.tid {
            continue; // excluded during the run; not part of the outcome
        }
        let e = PaillierCiphertext {
            value: BigUint::from_bytes_be(&e_bytes),
            key_id: plat_pk.key_id,
        };
        let packed = plat_pk.recover_with_randomness(&e, &randomness)?;
        let (code_b, code_l, n) = crate::protocol::pvi_h::unpack_profile(&packed)?;
        if n != nonce {
            return Err(Error::Verification(format!(
                "reveal for {owner} does not open its commitment"
            )));
        }
        opened += 1;
        recovered.push((owner, code_b, code_l));
        codes.push(code_b);
    }
    {
        let c = ops(t, Party::Ai);
        c.paillier_dec += opened;
        c.verifies += opened;
    }
    learn(t, Party::Ai, LearnedLabel::TlcOpened, "audit decommitment");
    // The auditing user independently re-sorts the recovered code list.
    send(t, Party::Ai, Party::User(user), "code-list", 8 * codes.len() as u64);
    let cmp = insertion_sort_counting(&mut codes, |a, b| a.cmp(b));
    ops(t, Party::User(user)).sort_cmp += cmp;
    // Exact recomputation of the outcome from the recovered profiles.
    let mut profiles: Vec<SensingProfile> = Vec::with_capacity(recovered.len());
    for (owner, code_b, code_l) in recovered {
        let bid = t.opes.decode_bid(code_b)?;
        let limit = t.opes.decode_limit(code_l)?;
        profiles.push(SensingProfile::heterogeneous(owner, bid, limit));
    }
    profiles.sort_by_key(|p| p.user_id);
    let outcome = match t.config.model {
        JobModel::Homogeneous => run_homogeneous(&profiles, &t.config.budget),
        _ => run_heterogeneous(&profiles, &t.config.budget),
    };
    Ok(outcome.payment_of(user))
}

/// S-model replay: re-open the sealed winner-phase lists, replay the
/// greedy over codes, then recompute the audited winner's payment from
/// the encrypted payment lists (all under the AI's own key).
fn replay_submodular(t: &mut RunTranscript, user: UserId) -> Result<BigRational> {
    let key = t
        .released_key
        .ok_or_else(|| Error::Verification("audit before key release".into()))?;
    let scale = t
        .scale_q
        .clone()
        .ok_or_else(|| Error::Verification("missing fixed-point scale".into()))?;
    let participants: Vec<UserId> = t.audit_secrets.keys().copied().collect();
    for &u in &participants {
        send(t, Party::Ai, Party::User(u), "reveal-request", 16);
        send(t, Party::User(u), Party::Ai, "reveal", 80);
    }
    let suite = t.suite.clone();
    let plat_pk = &suite.platform_paillier;
    let ai_pk = &suite.ai_paillier;
    let mut ai_ops = OpCounts::default();

    // ---- winner-phase replay from the sealed lists ----
    // round → sorted (user, code) submissions of that round
    let mut submissions: BTreeMap<u64, Vec<(UserId, u64)>> = BTreeMap::new();
    for &u in &participants {
        let entries: Vec<(u64, u64, Vec<u8>)> = t
            .board
            .read_list(ListId::UserOmega(u))
            .iter()
            .map(|e| (e.logical_time, e.sequence_no, e.payload.body.clone()))
            .collect();
        for (round, seq, body) in entries {
            let mut r = wire::Reader::new(&body);
            let c_bytes = r.bytes()?.to_vec();
            let commitment = TlcCommitment::from_reader(&mut wire::Reader::new(&c_bytes))?;
            let e_bytes = open_with_key(&key, &commitment)?;
            let randomness = t.audit_secrets[&u]
                .randomness
                .get(&seq)
                .cloned()
                .ok_or_else(|| Error::Verification(format!("{u} reveal missing for seq {seq}")))?;
            let e = PaillierCiphertext {
                value: BigUint::from_bytes_be(&e_bytes),
                key_id: plat_pk.key_id,
            };
            let packed = plat_pk.recover_with_randomness(&e, &randomness)?;
            ai_ops.paillier_dec += 1;
            let (code, _nonce) = crate::protocol::pvi_s::unpack_code(&packed, t.config.tid)?;
            submissions.entry(round).or_default().push((u, code));
        }
    }
    // round → platform threshold code
    let mut thresholds: BTreeMap<u64, u64> = BTreeMap::new();
    let plat_entries: Vec<(u64, Vec<u8>)> = t
        .board
        .read_list(ListId::PlatformOmega)
        .iter()
        .map(|e| (e.logical_time, e.payload.body.clone()))
        .collect();
    for (round, body) in plat_entries {
        let mut r = wire::Reader::new(&body);
        let c_bytes = r.bytes()?.to_vec();
        let c = TlcCommitment::from_reader(&mut wire::Reader::new(&c_bytes))?;
        let raw = open_with_key(&key, &c)?;
        if raw.len() != 24 {
            return Err(Error::Verification("malformed threshold commitment".into()));
        }
        thresholds.insert(round, u64::from_be_bytes(raw[0..8].try_into().unwrap()));
    }
    learn(t, Party::Ai, LearnedLabel::TlcOpened, "audit decommitment");
    let mut winners: Vec<UserId> = Vec::new();
    let mut first_round_codes: Vec<u64> = Vec::new();
    for (round, subs) in &submissions {
        if first_round_codes.is_empty() {
            first_round_codes = subs.iter().map(|&(_, c)| c).collect();
        }
        let mut best = subs[0];
        for &(u, c) in &subs[1..] {
            if c > best.1 {
                best = (u, c);
            }
        }
        let code_p = *thresholds
            .get(round)
            .ok_or_else(|| Error::Verification(format!("no threshold for round {round}")))?;
        if best.1 >= code_p {
            winners.push(best.0);
        } else {
            break;
        }
    }
    if winners != t.outcome.winners {
        // Posted outcome contradicts the sealed lists; the audited user's
        // honest entitlement follows the replay below.
        learn(t, Party::Ai, LearnedLabel::OrderingToken, "winner replay mismatch");
    }

    // ---- payment replay from the AI-key lists ----
    let expected = if !winners.contains(&user) {
        BigRational::zero()
    } else {
        let mut p = BigRational::zero();
        let agg_entries: Vec<(u64, Vec<u8>)> = t
            .board
            .read_list(ListId::WinnerAgg(user))
            .iter()
            .map(|e| (e.logical_time, e.payload.body.clone()))
            .collect();
        for (round, body) in agg_entries {
            let mut r = wire::Reader::new(&body);
            let _round_idx = r.u64()?;
            let kind = r.u64()?;
            let id = r.u64()?;
            if kind == 1 {
                // final unopposed position: η-only term U_i(T)·B/U(T∪{i})
                let mu_i = ai_pk.decrypt(&ct_from(&mut r, ai_pk.key_id)?)?;
                let u_with_i = ai_pk.decrypt(&ct_from(&mut r, ai_pk.key_id)?)?;
                ai_ops.paillier_dec += 2;
                if !u_with_i.is_zero() {
                    let eta = ratio_u(&mu_i) * &t.config.budget / ratio_u(&u_with_i);
                    if eta > p {
                        p = eta;
                    }
                }
                continue;
            }
            let i_j = UserId(id as u32);
            let mu_i = ai_pk.decrypt(&ct_from(&mut r, ai_pk.key_id)?)?;
            let mu_ij = ai_pk.decrypt(&ct_from(&mut r, ai_pk.key_id)?)?;
            let u_with_i = ai_pk.decrypt(&ct_from(&mut r, ai_pk.key_id)?)?;
            let _u_after = ai_pk.decrypt(&ct_from(&mut r, ai_pk.key_id)?)?;
            ai_ops.paillier_dec += 4;
            // Check the round's argmax against all posted references and
            // recover Q·ω for the selected one.
            let mut q_omega: Option<BigUint> = None;
            let mut max_seen: Option<BigUint> = None;
            for &j in &participants {
                if j == user {
                    continue;
                }
                for e in t.board.read_list(ListId::PaymentRef { reference: j, winner: user }) {
                    if e.logical_time != round {
                        continue;
                    }
                    let mut er = wire::Reader::new(&e.payload.body);
                    let ct = ct_from(&mut er, ai_pk.key_id)?;
                    let v = ai_pk.decrypt(&ct)?;
                    ai_ops.paillier_dec += 1;
                    if max_seen.as_ref().map_or(true, |m| &v > m) {
                        max_seen = Some(v.clone());
                    }
                    if j == i_j {
                        q_omega = Some(v);
                    }
                }
            }
            let q_omega =
                q_omega.ok_or_else(|| Error::Verification("selected reference never posted".into()))?;
            if max_seen.as_ref() != Some(&q_omega) {
                return Err(Error::Verification("posted selection is not the argmax".into()));
            }
            let omega_ij = from_scaled_integer(&q_omega, &scale);
            if omega_ij.is_zero() || mu_ij.is_zero() {
                return Err(Error::Verification("zero-marginal reference carried a term".into()));
            }
            let b_term = ratio_u(&mu_i) / &omega_ij;
            let eta = if u_with_i.is_zero() {
                BigRational::zero()
            } else {
                ratio_u(&mu_i) * &t.config.budget / ratio_u(&u_with_i)
            };
            let term = b_term.min(eta);
            if term > p {
                p = term;
            }
        }
        p
    };
    let c = ops(t, Party::Ai);
    c.add(&ai_ops);
    // The auditing user independently re-sorts the first-round code list.
    send(t, Party::Ai, Party::User(user), "code-list", 8 * first_round_codes.len() as u64);
    let cmp = insertion_sort_counting(&mut first_round_codes, |a, b| a.cmp(b));
    ops(t, Party::User(user)).sort_cmp += cmp;
    Ok(expected)
}

fn ct_from(r: &mut wire::Reader, key_id: u64) -> Result<PaillierCiphertext> {
    let bytes = r.bytes()?.to_vec();
    let ct = PaillierCiphertext::from_reader(&mut wire::Reader::new(&bytes))?;
    if ct.key_id != key_id {
        return Err(Error::Verification("list ciphertext under wrong key".into()));
    }
    Ok(ct)
}
