//! Long-lived key material shared by a campaign of runs: group parameters,
//! Paillier keypairs for platform and AI, the platform's blind-signature
//! key, and per-party Schnorr keys for the bulletin board.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;

use crate::bulletin::{Board, Party};
use crate::crypto::blind_sig::SignerKey;
use crate::crypto::group::{derive_rng, GroupParams};
use crate::crypto::paillier::{paillier_keygen, PaillierKeypair};
use crate::crypto::schnorr::SchnorrKeypair;
use crate::error::Result;
use crate::mechanisms::UserId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CryptoConfig {
    pub p_bits: u64,
    pub q_bits: u64,
    pub paillier_bits: u64,
    pub code_bits: u32,
}

impl Default for CryptoConfig {
    fn default() -> CryptoConfig {
        CryptoConfig {
            p_bits: 512,
            q_bits: 160,
            paillier_bits: 512,
            code_bits: 32,
        }
    }
}

impl CryptoConfig {
    /// Reduced sizes for unit tests (not cryptographically meaningful).
    /// Paillier stays ≥ 256 bits so the 192-bit packed profile fits.
    pub fn small() -> CryptoConfig {
        CryptoConfig {
            p_bits: 256,
            q_bits: 64,
            paillier_bits: 256,
            code_bits: 24,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CryptoSuite {
    pub config: CryptoConfig,
    pub group: GroupParams,
    /// Profile ciphertexts e_i are encrypted under the platform's key.
    pub platform_paillier: PaillierKeypair,
    /// Payment-phase aggregates live under the AI's key.
    pub ai_paillier: PaillierKeypair,
    /// Platform's blind-signature key for bidding requests.
    pub blind_key: SignerKey,
    pub sig_platform: SchnorrKeypair,
    pub sig_ai: SchnorrKeypair,
    pub sig_users: BTreeMap<UserId, SchnorrKeypair>,
}

impl CryptoSuite {
    pub fn generate(seed: u64, users: &[UserId], config: &CryptoConfig) -> Result<CryptoSuite> {
        let mut rng: ChaCha20Rng = derive_rng(seed, "crypto-suite");
        let group = GroupParams::generate(config.p_bits, config.q_bits, &mut rng)?;
        let platform_paillier = paillier_keygen(config.paillier_bits, &mut rng)?;
        let ai_paillier = loop {
            let k = paillier_keygen(config.paillier_bits, &mut rng)?;
            if k.key_id != platform_paillier.key_id {
                break k;
            }
        };
        let blind_key = SignerKey::generate(&group, &mut rng);
        let sig_platform = SchnorrKeypair::generate(&group, &mut rng);
        let sig_ai = SchnorrKeypair::generate(&group, &mut rng);
        let sig_users = users
            .iter()
            .map(|&u| (u, SchnorrKeypair::generate(&group, &mut rng)))
            .collect();
        Ok(CryptoSuite {
            config: *config,
            group,
            platform_paillier,
            ai_paillier,
            blind_key,
            sig_platform,
            sig_ai,
            sig_users,
        })
    }

    /// Fresh board with every party's verification key registered.
    pub fn new_board(&self) -> Board {
        let mut board = Board::new(self.group.clone());
        board.register_key(Party::Platform, self.sig_platform.y.clone());
        board.register_key(Party::Ai, self.sig_ai.y.clone());
        for (u, kp) in &self.sig_users {
            board.register_key(Party::User(*u), kp.y.clone());
        }
        board
    }

    pub fn user_key(&self, u: UserId) -> Result<&SchnorrKeypair> {
        self.sig_users
            .get(&u)
            .ok_or_else(|| crate::Error::Usage(format!("no key material for {u}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_deterministic_and_complete() {
        let users: Vec<UserId> = (0..3).map(UserId).collect();
        let a = CryptoSuite::generate(5, &users, &CryptoConfig::small()).unwrap();
        let b = CryptoSuite::generate(5, &users, &CryptoConfig::small()).unwrap();
        assert_eq!(a.group, b.group);
        assert_eq!(a.platform_paillier, b.platform_paillier);
        assert_ne!(a.platform_paillier.key_id, a.ai_paillier.key_id);
        assert_eq!(a.sig_users.len(), 3);
        let board = a.new_board();
        assert_eq!(board.next_seq(), 0);
    }
}
