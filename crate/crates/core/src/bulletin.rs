//! Signed, append-only, publicly readable bulletin board, including the
//! dynamic lists used by the submodular protocol's verification phase.

use std::collections::BTreeMap;

use crate::crypto::group::GroupParams;
use crate::crypto::schnorr::{self, SchnorrKeypair, SchnorrSig};
use crate::error::{Error, Result};
use crate::mechanisms::UserId;
use crate::wire;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    Platform,
    Ai,
    User(UserId),
}

impl std::fmt::Display for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Party::Platform => write!(f, "platform"),
            Party::Ai => write!(f, "ai"),
            Party::User(u) => write!(f, "{u}"),
        }
    }
}

impl Party {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Party::Platform => wire::put_u64(&mut out, 0),
            Party::Ai => wire::put_u64(&mut out, 1),
            Party::User(u) => {
                wire::put_u64(&mut out, 2);
                wire::put_u64(&mut out, u.0 as u64);
            }
        }
        out
    }
}

/// Dynamic-list identifiers: per-user winner-phase list, the platform's
/// winner-phase list, per-(reference, winner) payment lists, and the
/// per-winner aggregate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ListId {
    /// l_i^w — user i's marginal-per-bid commitments, winner phase.
    UserOmega(UserId),
    /// l_p^w — the platform's threshold commitments, winner phase.
    PlatformOmega,
    /// l_{j,i}^p — reference j's encrypted marginals during winner i's
    /// payment run.
    PaymentRef { reference: UserId, winner: UserId },
    /// l_i^S — winner i's per-round encrypted aggregates, payment phase.
    WinnerAgg(UserId),
}

impl std::fmt::Display for ListId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ListId::UserOmega(u) => write!(f, "l_w[{u}]"),
            ListId::PlatformOmega => write!(f, "l_w[p]"),
            ListId::PaymentRef { reference, winner } => write!(f, "l_p[{reference},{winner}]"),
            ListId::WinnerAgg(u) => write!(f, "l_S[{u}]"),
        }
    }
}

impl ListId {
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            ListId::UserOmega(u) => {
                wire::put_u64(&mut out, 0);
                wire::put_u64(&mut out, u.0 as u64);
            }
            ListId::PlatformOmega => wire::put_u64(&mut out, 1),
            ListId::PaymentRef { reference, winner } => {
                wire::put_u64(&mut out, 2);
                wire::put_u64(&mut out, reference.0 as u64);
                wire::put_u64(&mut out, winner.0 as u64);
            }
            ListId::WinnerAgg(u) => {
                wire::put_u64(&mut out, 3);
                wire::put_u64(&mut out, u.0 as u64);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PayloadTag {
    AuctionDetails,
    Commitment,
    PlatformCommitment,
    ListAppend,
    OutcomeRecord,
    OrderingToken,
    Receipt,
    Appeal,
    KeyRelease,
    AuditReport,
}

impl PayloadTag {
    pub fn name(&self) -> &'static str {
        match self {
            PayloadTag::AuctionDetails => "auction-details",
            PayloadTag::Commitment => "commitment",
            PayloadTag::PlatformCommitment => "platform-commitment",
            PayloadTag::ListAppend => "list-append",
            PayloadTag::OutcomeRecord => "outcome-record",
            PayloadTag::OrderingToken => "ordering-token",
            PayloadTag::Receipt => "receipt",
            PayloadTag::Appeal => "appeal",
            PayloadTag::KeyRelease => "key-release",
            PayloadTag::AuditReport => "audit-report",
        }
    }
}

/// Typed record: a tag, canonical body bytes, and an optional dynamic-list
/// membership. Body layouts are defined by the protocol module; the board
/// stores and hashes them opaquely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub tag: PayloadTag,
    pub body: Vec<u8>,
    pub list: Option<ListId>,
}

impl Payload {
    pub fn new(tag: PayloadTag, body: Vec<u8>) -> Payload {
        Payload {
            tag,
            body,
            list: None,
        }
    }

    pub fn in_list(tag: PayloadTag, body: Vec<u8>, list: ListId) -> Payload {
        Payload {
            tag,
            body,
            list: Some(list),
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        let list_bytes = self
            .list
            .as_ref()
            .map(|l| l.canonical_bytes())
            .unwrap_or_default();
        wire::sha256(&[self.tag.name().as_bytes(), &list_bytes, &self.body])
    }
}

#[derive(Debug, Clone)]
pub struct BulletinEntry {
    pub sequence_no: u64,
    pub logical_time: u64,
    pub author: Party,
    pub payload: Payload,
    pub signature: SchnorrSig,
}

impl BulletinEntry {
    pub fn signed_bytes(sequence_no: u64, logical_time: u64, author: Party, payload: &Payload) -> Vec<u8> {
        let mut out = Vec::new();
        wire::put_u64(&mut out, sequence_no);
        wire::put_u64(&mut out, logical_time);
        out.extend_from_slice(&author.canonical_bytes());
        out.extend_from_slice(&payload.digest());
        out
    }

    pub fn byte_len(&self) -> usize {
        8 + 8 + self.payload.body.len() + 64
    }
}

#[derive(Debug, Clone)]
pub struct Board {
    pub group: GroupParams,
    keys: BTreeMap<Party, num_bigint::BigUint>,
    entries: Vec<BulletinEntry>,
    lists: BTreeMap<ListId, Vec<u64>>,
    /// Rejected postings (invalid signatures), kept for diagnostics.
    pub rejected: u64,
}

impl Board {
    pub fn new(group: GroupParams) -> Board {
        Board {
            group,
            keys: BTreeMap::new(),
            entries: Vec::new(),
            lists: BTreeMap::new(),
            rejected: 0,
        }
    }

    pub fn register_key(&mut self, party: Party, public: num_bigint::BigUint) {
        self.keys.insert(party, public);
    }

    pub fn next_seq(&self) -> u64 {
        self.entries.len() as u64
    }

    /// Append a pre-signed entry; rejects invalid signatures.
    pub fn post(
        &mut self,
        author: Party,
        logical_time: u64,
        payload: Payload,
        signature: SchnorrSig,
    ) -> Result<u64> {
        let seq = self.next_seq();
        let key = self
            .keys
            .get(&author)
            .ok_or_else(|| Error::Usage(format!("no registered key for {author}")))?;
        let msg = BulletinEntry::signed_bytes(seq, logical_time, author, &payload);
        if !schnorr::verify(&self.group, key, &msg, &signature) {
            self.rejected += 1;
            return Err(Error::Integrity(format!(
                "invalid signature on {} from {author}",
                payload.tag.name()
            )));
        }
        if let Some(list) = payload.list {
            self.lists.entry(list).or_default().push(seq);
        }
        self.entries.push(BulletinEntry {
            sequence_no: seq,
            logical_time,
            author,
            payload,
            signature,
        });
        Ok(seq)
    }

    /// Sign-and-post helper for a party holding its own keypair.
    pub fn post_as(
        &mut self,
        author: Party,
        keypair: &SchnorrKeypair,
        logical_time: u64,
        payload: Payload,
        rng: &mut ChaCha20Rng,
    ) -> Result<u64> {
        let msg = BulletinEntry::signed_bytes(self.next_seq(), logical_time, author, &payload);
        let sig = schnorr::sign(&self.group, keypair, &msg, rng);
        self.post(author, logical_time, payload, sig)
    }

    pub fn entries(&self) -> &[BulletinEntry] {
        &self.entries
    }

    pub fn read_range(&self, from_seq: u64, to_seq: u64) -> Vec<&BulletinEntry> {
        self.entries
            .iter()
            .filter(|e| e.sequence_no >= from_seq && e.sequence_no <= to_seq)
            .collect()
    }

    pub fn read_list(&self, list: ListId) -> Vec<&BulletinEntry> {
        self.lists
            .get(&list)
            .map(|seqs| {
                seqs.iter()
                    .map(|&s| &self.entries[s as usize])
                    .collect::<Vec<_>>()
            })
            .unwrap_or_default()
    }

    /// Replay check: every digest/signature verifies and sequence numbers
    /// are dense. Detects any post-hoc alteration of entries.
    pub fn replay_check(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.sequence_no != i as u64 {
                return Err(Error::Integrity(format!(
                    "sequence gap at {} (found {})",
                    i, e.sequence_no
                )));
            }
            let key = self
                .keys
                .get(&e.author)
                .ok_or_else(|| Error::Integrity(format!("unknown author {}", e.author)))?;
            let msg =
                BulletinEntry::signed_bytes(e.sequence_no, e.logical_time, e.author, &e.payload);
            if !schnorr::verify(&self.group, key, &msg, &e.signature) {
                return Err(Error::Integrity(format!(
                    "signature mismatch at seq {}",
                    e.sequence_no
                )));
            }
        }
        Ok(())
    }

    /// One line per entry: seq, time, author, tag, payload digest, signature.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                e.sequence_no,
                e.logical_time,
                e.author,
                e.payload.tag.name(),
                wire::hex(&e.payload.digest()),
                e.signature.hex(),
            ));
        }
        out
    }

    /// First entry for a (author, tag) pair — duplicate policy: first wins.
    pub fn first_entry(&self, author: Party, tag: PayloadTag) -> Option<&BulletinEntry> {
        self.entries
            .iter()
            .find(|e| e.author == author && e.payload.tag == tag)
    }
}
