//! Party state machines, message bus, and the end-to-end PVI-H / PVI-S
//! protocol runs, including commitment, decommitment, winner selection,
//! payment, and the probabilistic verification game.

pub mod config;
pub mod game;
pub mod pvi_h;
pub mod pvi_s;
pub mod suite;
pub mod verify;

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigUint;
use num_rational::BigRational;
use rand_chacha::ChaCha20Rng;

use crate::bulletin::{Board, Party};
use crate::mechanisms::{AuctionOutcome, UserId};

pub use config::{AuctionConfig, JobModel, VerificationPolicy};
pub use game::{cheating_game, GameStats};
pub use pvi_h::run_pvi_h;
pub use pvi_s::run_pvi_s;
pub use suite::{CryptoConfig, CryptoSuite};
pub use verify::{verify_payment, VerifyResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    WinnerSelection,
    PaymentDetermination,
    Verification,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::WinnerSelection => "winner selection",
            Phase::PaymentDetermination => "payment determination",
            Phase::Verification => "verification",
        }
    }
}

/// Per-(party, phase) operation counters for overhead accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub messages: u64,
    pub bytes: u64,
    pub modexp: u64,
    pub paillier_enc: u64,
    pub paillier_dec: u64,
    pub signs: u64,
    pub verifies: u64,
    pub sort_cmp: u64,
    pub compares: u64,
    pub ot_transfers: u64,
}

impl OpCounts {
    pub fn add(&mut self, other: &OpCounts) {
        self.messages += other.messages;
        self.bytes += other.bytes;
        self.modexp += other.modexp;
        self.paillier_enc += other.paillier_enc;
        self.paillier_dec += other.paillier_dec;
        self.signs += other.signs;
        self.verifies += other.verifies;
        self.sort_cmp += other.sort_cmp;
        self.compares += other.compares;
        self.ot_transfers += other.ot_transfers;
    }
}

#[derive(Debug, Clone)]
pub struct MessageRecord {
    pub round: u64,
    pub from: Party,
    pub to: Party,
    pub kind: &'static str,
    pub bytes: u64,
}

/// Labels for values a party actually learned (vs. opaque ciphertext).
/// The privacy assertions are predicates over these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LearnedLabel {
    /// A decoded bid; owner None means the record is identity-free
    /// (known only by sort rank).
    PlaintextBid { owner: Option<UserId>, rank: Option<u32> },
    PlaintextLimit { owner: Option<UserId>, rank: Option<u32> },
    PlaintextAssignments { owner: Option<UserId> },
    /// An OPES code (not plaintext; rank-preserving only).
    OpesCode { owner: Option<UserId> },
    /// A TLC commitment was opened (round recorded in the entry).
    TlcOpened,
    /// A party's own value (bid, code, marginal, ...) — never a leak.
    OwnValue,
    WinnerNotice,
    PaymentReceived,
    OrderingToken,
    /// AI-internal decrypted aggregate (a cardinality, not a profile).
    AggregateCardinality,
    /// Count of new elements from a set-union round (no values).
    SetUnionCount { candidate: UserId },
    KeyRelease,
}

#[derive(Debug, Clone)]
pub struct Learned {
    pub round: u64,
    pub label: LearnedLabel,
    pub note: String,
}

#[derive(Debug, Clone, Default)]
pub struct PartyView {
    pub learned: Vec<Learned>,
}

/// Platform misbehavior policies injected by tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Misbehavior {
    #[default]
    None,
    /// Pay the victim (first winner if None) delta less than computed.
    Underpay {
        victim: Option<UserId>,
        delta: BigRational,
    },
    /// "Lose" one user's commitment (never post it).
    DropCommitment { user: UserId },
    /// Swap the marginal winner with the first loser in the sorted order
    /// before determining winners (PVI-H).
    ForgeRank,
}

/// Knobs for a single protocol run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub misbehavior: Misbehavior,
    /// Reuse pre-generated key material across a campaign of runs.
    pub suite: Option<Arc<CryptoSuite>>,
    /// Users audited unconditionally (in addition to the coin).
    pub force_audit: Vec<UserId>,
    /// Disable the random audit coin (campaigns control audits directly).
    pub skip_coin_audits: bool,
}

/// What a user retains locally for a later audit.
#[derive(Debug, Clone, Default)]
pub struct AuditSecrets {
    /// Paillier randomness for each profile ciphertext this user produced,
    /// keyed by board sequence number of the commitment/list entry.
    pub randomness: BTreeMap<u64, BigUint>,
    /// The packed nonce r_i (PVI-H).
    pub nonce: u64,
    /// Receipt signature bytes (PVI-H non-repudiation).
    pub receipt: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AuditFinding {
    Confirmed,
    Discrepancy {
        expected: BigRational,
        observed: BigRational,
    },
}

#[derive(Debug, Clone)]
pub struct AuditRecord {
    pub user: UserId,
    pub finding: AuditFinding,
}

#[derive(Debug, Clone)]
pub struct RunTranscript {
    pub config: AuctionConfig,
    pub suite: Arc<CryptoSuite>,
    /// Inputs as sorted by user id at the start of the run.
    pub profiles: Vec<crate::mechanisms::SensingProfile>,
    /// The AI's order-preserving codebook for this run.
    pub opes: crate::crypto::EncodingTable,
    /// Fixed-point scale Q (submodular payment pipeline).
    pub scale_q: Option<BigUint>,
    pub board: Board,
    pub messages: Vec<MessageRecord>,
    pub views: BTreeMap<Party, PartyView>,
    pub counts: BTreeMap<(Party, Phase), OpCounts>,
    /// The outcome the platform posted and paid.
    pub outcome: AuctionOutcome,
    /// Actual transfers (differs from the honest rule under misbehavior).
    pub paid: BTreeMap<UserId, BigRational>,
    pub audits: Vec<AuditRecord>,
    pub audit_secrets: BTreeMap<UserId, AuditSecrets>,
    /// Users excluded during the run (malformed/missing commitments).
    pub excluded: Vec<UserId>,
    /// Round at which the TLC key was released (decommitment legality).
    pub release_round: u64,
    /// Round at which verification-phase events are logged.
    pub audit_round: u64,
    /// TLC key as released (audits re-open commitments with it).
    pub released_key: Option<[u8; 32]>,
    /// Uniform byte length of the posted profile commitments (PVI-H
    /// k-anonymity surrogate: all candidates syntactically alike).
    pub commitment_len: Option<usize>,
    pub misbehavior: Misbehavior,
}

impl RunTranscript {
    pub fn total_bytes(&self) -> u64 {
        self.messages.iter().map(|m| m.bytes).sum()
    }

    pub fn counts_total(&self) -> OpCounts {
        let mut acc = OpCounts::default();
        for c in self.counts.values() {
            acc.add(c);
        }
        acc
    }

    pub fn view(&self, p: Party) -> Option<&PartyView> {
        self.views.get(&p)
    }
}

/// Run-internal context: bus, board, views, counters, scheduler round.
pub(crate) struct Ctx {
    pub round: u64,
    pub phase: Phase,
    pub board: Board,
    pub messages: Vec<MessageRecord>,
    pub views: BTreeMap<Party, PartyView>,
    pub counts: BTreeMap<(Party, Phase), OpCounts>,
    pub rng: ChaCha20Rng,
}

impl Ctx {
    pub fn new(board: Board, rng: ChaCha20Rng) -> Ctx {
        Ctx {
            round: 0,
            phase: Phase::WinnerSelection,
            board,
            messages: Vec::new(),
            views: BTreeMap::new(),
            counts: BTreeMap::new(),
            rng,
        }
    }

    pub fn send(&mut self, from: Party, to: Party, kind: &'static str, bytes: u64) {
        self.messages.push(MessageRecord {
            round: self.round,
            from,
            to,
            kind,
            bytes,
        });
        let c = self.ops(from);
        c.messages += 1;
        c.bytes += bytes;
    }

    pub fn ops(&mut self, p: Party) -> &mut OpCounts {
        self.counts.entry((p, self.phase)).or_default()
    }

    pub fn learn(&mut self, p: Party, label: LearnedLabel, note: impl Into<String>) {
        let round = self.round;
        self.views.entry(p).or_default().learned.push(Learned {
            round,
            label,
            note: note.into(),
        });
    }

    /// Sign (counted) and post a payload at the current round.
    pub fn post(
        &mut self,
        author: Party,
        keypair: &crate::crypto::schnorr::SchnorrKeypair,
        payload: crate::bulletin::Payload,
    ) -> crate::Result<u64> {
        self.ops(author).signs += 1;
        let t = self.round;
        self.board.post_as(author, keypair, t, payload, &mut self.rng)
    }
}

/// One counted 1-out-of-z OT between two simulated parties.
pub(crate) fn ot_fetch(
    ctx: &mut Ctx,
    group: &crate::crypto::GroupParams,
    receiver: Party,
    sender: Party,
    messages: &[BigUint],
    choice: usize,
) -> crate::Result<BigUint> {
    use crate::crypto::ot;
    let elem = (group.p.bits() as u64 + 7) / 8;
    let (req, secret) = ot::receiver_request(group, choice, messages.len(), &mut ctx.rng)?;
    ctx.ops(receiver).modexp += 2;
    ctx.send(receiver, sender, "ot-request", elem);
    let resp = ot::sender_respond(group, messages, &req, &mut ctx.rng)?;
    ctx.ops(sender).modexp += 2 * messages.len() as u64;
    ctx.send(sender, receiver, "ot-response", resp.byte_len(group) as u64);
    let m = ot::receiver_recover(group, &resp, &secret)?;
    let c = ctx.ops(receiver);
    c.modexp += 1;
    c.ot_transfers += 1;
    Ok(m)
}

/// One counted blind-signature session: requester obtains the signer's
/// signature on `m` without the signer seeing `m`.
pub(crate) fn blind_request(
    ctx: &mut Ctx,
    group: &crate::crypto::GroupParams,
    key: &crate::crypto::blind_sig::SignerKey,
    requester: Party,
    signer: Party,
    m: &BigUint,
) -> crate::Result<crate::crypto::blind_sig::BlindSignature> {
    use crate::crypto::blind_sig as bs;
    let elem = (group.p.bits() as u64 + 7) / 8;
    ctx.send(requester, signer, "blind-sig-init", 8);
    let (k, r_tilde) = bs::signer_commit(group, &mut ctx.rng);
    ctx.ops(signer).modexp += 1;
    ctx.send(signer, requester, "blind-sig-commit", elem);
    let blinding = bs::blind(group, m, &r_tilde, &mut ctx.rng)?;
    ctx.ops(requester).modexp += 3;
    ctx.send(requester, signer, "blind-sig-challenge", elem);
    let s_tilde = bs::signer_sign(group, key, &k, &blinding.m_tilde);
    ctx.ops(signer).signs += 1;
    ctx.send(signer, requester, "blind-sig-response", elem);
    let sig = bs::unblind(group, &blinding, &s_tilde);
    if !bs::verify(group, &key.y, m, &sig) {
        return Err(crate::Error::Integrity("blind signature failed to verify".into()));
    }
    let c = ctx.ops(requester);
    c.verifies += 1;
    c.modexp += 3;
    Ok(sig)
}

/// Insertion sort with a comparison counter (quadratic by design — the
/// sorting-cost counters must reflect the O(n²) shape).
pub fn insertion_sort_counting<T, F: Fn(&T, &T) -> std::cmp::Ordering>(
    v: &mut [T],
    cmp: F,
) -> u64 {
    let mut count = 0u64;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 {
            count += 1;
            if cmp(&v[j - 1], &v[j]) == std::cmp::Ordering::Greater {
                v.swap(j - 1, j);
                j -= 1;
            } else {
                break;
            }
        }
    }
    count
}

/// Per-user audit coin for a run: derived from the run seed; audit iff
/// coin < α as an exact rational on 64 bits.
pub fn audit_coin(seed: u64, tid: u64, user: UserId, alpha: &BigRational) -> bool {
    use num_bigint::BigInt;
    let mut rng = crate::crypto::group::derive_rng(
        seed,
        &format!("audit-coin-{tid}-{}", user.0),
    );
    use rand::RngCore;
    let x = rng.next_u64();
    let frac = BigRational::new(BigInt::from(x), BigInt::from(2u128.pow(64)));
    frac < *alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn insertion_sort_counts_quadratically_on_reversed_input() {
        let mut v: Vec<u32> = (0..10).rev().collect();
        let c = insertion_sort_counting(&mut v, |a, b| a.cmp(b));
        assert_eq!(v, (0..10).collect::<Vec<_>>());
        assert_eq!(c, 45); // n(n−1)/2
    }

    #[test]
    fn audit_coin_is_deterministic_and_tracks_alpha() {
        let alpha = BigRational::new(BigInt::from(1), BigInt::from(10));
        let a = audit_coin(7, 1, UserId(3), &alpha);
        let b = audit_coin(7, 1, UserId(3), &alpha);
        assert_eq!(a, b);
        let hits = (0..10_000)
            .filter(|&s| audit_coin(s, 1, UserId(0), &alpha))
            .count();
        // 3σ band around 1000 for p=0.1, n=10⁴ is ±90
        assert!((910..=1090).contains(&hits), "hits={hits}");
    }
}
