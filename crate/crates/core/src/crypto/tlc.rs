//! Simulated time-lapse cryptography: a trusted service holds a symmetric
//! key and a logical clock; commitments made before the release time can be
//! opened by anyone only once the clock reaches release_time and the key is
//! published.

use rand::RngCore;
use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};

use crate::error::{Error, Result};
use crate::wire;

#[derive(Debug, Clone)]
pub struct TlcService {
    key: [u8; 32],
    pub release_time: u64,
    pub current_time: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TlcCommitment {
    pub nonce: [u8; 16],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; 32],
}

impl TlcCommitment {
    pub fn byte_len(&self) -> usize {
        16 + self.ciphertext.len() + 32
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        wire::put_bytes(&mut out, &self.nonce);
        wire::put_bytes(&mut out, &self.ciphertext);
        wire::put_bytes(&mut out, &self.tag);
        out
    }

    pub fn from_reader(r: &mut wire::Reader) -> Result<TlcCommitment> {
        let nonce: [u8; 16] = r
            .bytes()?
            .try_into()
            .map_err(|_| Error::Parse("bad nonce".into()))?;
        let ciphertext = r.bytes()?.to_vec();
        let tag: [u8; 32] = r
            .bytes()?
            .try_into()
            .map_err(|_| Error::Parse("bad tag".into()))?;
        Ok(TlcCommitment {
            nonce,
            ciphertext,
            tag,
        })
    }
}

fn keystream(key: &[u8; 32], nonce: &[u8; 16], len: usize) -> Vec<u8> {
    let seed = wire::sha256(&[b"tlc-stream", key, nonce]);
    let mut rng = ChaCha20Rng::from_seed(seed);
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

fn mac(key: &[u8; 32], nonce: &[u8; 16], ct: &[u8]) -> [u8; 32] {
    wire::sha256(&[b"tlc-mac", key, nonce, ct])
}

impl TlcService {
    pub fn new(release_time: u64, rng: &mut ChaCha20Rng) -> TlcService {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        TlcService {
            key,
            release_time,
            current_time: 0,
        }
    }

    pub fn advance_to(&mut self, t: u64) {
        self.current_time = self.current_time.max(t);
    }

    pub fn commit(&self, payload: &[u8], rng: &mut ChaCha20Rng) -> Result<TlcCommitment> {
        if self.current_time >= self.release_time {
            return Err(Error::Timing("commitment window closed".into()));
        }
        let mut nonce = [0u8; 16];
        rng.fill_bytes(&mut nonce);
        let ks = keystream(&self.key, &nonce, payload.len());
        let ciphertext: Vec<u8> = payload.iter().zip(&ks).map(|(a, b)| a ^ b).collect();
        let tag = mac(&self.key, &nonce, &ciphertext);
        Ok(TlcCommitment {
            nonce,
            ciphertext,
            tag,
        })
    }

    /// The private key, obtainable only at/after release_time.
    pub fn release_key(&self) -> Result<[u8; 32]> {
        if self.current_time < self.release_time {
            return Err(Error::Timing(format!(
                "key release at t={}, now t={}",
                self.release_time, self.current_time
            )));
        }
        Ok(self.key)
    }

    pub fn open(&self, c: &TlcCommitment) -> Result<Vec<u8>> {
        open_with_key(&self.release_key()?, c)
    }
}

/// Decrypt with a released key; available to any party holding the key.
pub fn open_with_key(key: &[u8; 32], c: &TlcCommitment) -> Result<Vec<u8>> {
    if mac(key, &c.nonce, &c.ciphertext) != c.tag {
        return Err(Error::Integrity("TLC commitment failed MAC check".into()));
    }
    let ks = keystream(key, &c.nonce, c.ciphertext.len());
    Ok(c.ciphertext.iter().zip(&ks).map(|(a, b)| a ^ b).collect())
}
