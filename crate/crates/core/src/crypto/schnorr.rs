//! Plain Schnorr signatures over GroupParams, used for bulletin-board
//! entries and receipts (the board needs ordinary, non-blind signatures).

use num_bigint::BigUint;
use rand_chacha::ChaCha20Rng;

use crate::crypto::group::{hash_to_scalar, GroupParams};
use crate::wire;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchnorrKeypair {
    pub x: BigUint,
    pub y: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchnorrSig {
    pub e: BigUint,
    pub s: BigUint,
}

impl SchnorrKeypair {
    pub fn generate(group: &GroupParams, rng: &mut ChaCha20Rng) -> SchnorrKeypair {
        let x = group.random_scalar(rng);
        let y = group.pow_g(&x);
        SchnorrKeypair { x, y }
    }
}

pub fn sign(
    group: &GroupParams,
    key: &SchnorrKeypair,
    msg: &[u8],
    rng: &mut ChaCha20Rng,
) -> SchnorrSig {
    let k = group.random_scalar(rng);
    let r = group.pow_g(&k);
    let e = hash_to_scalar(&group.q, &[&r.to_bytes_be(), msg]);
    // s = k − x·e mod q
    let xe = (&key.x * &e) % &group.q;
    let s = (&k + &group.q - xe) % &group.q;
    SchnorrSig { e, s }
}

pub fn verify(group: &GroupParams, y: &BigUint, msg: &[u8], sig: &SchnorrSig) -> bool {
    if sig.e >= group.q || sig.s >= group.q {
        return false;
    }
    // R' = g^s · y^e; accept iff H(R' || m) = e
    let r = group.pow_g(&sig.s) * y.modpow(&sig.e, &group.p) % &group.p;
    hash_to_scalar(&group.q, &[&r.to_bytes_be(), msg]) == sig.e
}

impl SchnorrSig {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        wire::put_biguint(&mut out, &self.e);
        wire::put_biguint(&mut out, &self.s);
        out
    }

    pub fn hex(&self) -> String {
        wire::hex(&self.canonical_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::group::derive_rng;

    #[test]
    fn sign_verify_and_tamper() {
        let mut rng = derive_rng(17, "schnorr-tests");
        let group = GroupParams::generate(256, 64, &mut rng).unwrap();
        let key = SchnorrKeypair::generate(&group, &mut rng);
        let sig = sign(&group, &key, b"entry 7", &mut rng);
        assert!(verify(&group, &key.y, b"entry 7", &sig));
        assert!(!verify(&group, &key.y, b"entry 8", &sig));
        let bad = SchnorrSig {
            e: sig.e.clone(),
            s: (&sig.s + 1u32) % &group.q,
        };
        assert!(!verify(&group, &key.y, b"entry 7", &bad));
        let other = SchnorrKeypair::generate(&group, &mut rng);
        assert!(!verify(&group, &other.y, b"entry 7", &sig));
    }
}
