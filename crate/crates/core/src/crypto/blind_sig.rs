//! Blinded Nyberg-Rueppel signatures over GroupParams.
//!
//! Requester blinds with (α, β): r = m·r̃^β·g^α mod p, m̃ = r·β⁻¹ mod q.
//! Signer returns s̃ = m̃·x + k̃ mod q; requester unblinds s = s̃·β + α mod q.
//! Verification: m ≡ g^(−s)·y^r·r (mod p).

use num_bigint::BigUint;
use num_traits::Zero;
use rand_chacha::ChaCha20Rng;

use crate::crypto::group::{modinv, GroupParams};
use crate::error::{Error, Result};
use num_rational::BigRational;
use num_traits::Signed;
use num_traits::ToPrimitive;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindSignature {
    pub r: BigUint,
    pub s: BigUint,
}

#[derive(Debug, Clone)]
pub struct SignerKey {
    pub x: BigUint,
    pub y: BigUint,
}

impl SignerKey {
    pub fn generate(group: &GroupParams, rng: &mut ChaCha20Rng) -> SignerKey {
        let x = group.random_scalar(rng);
        let y = group.pow_g(&x);
        SignerKey { x, y }
    }
}

/// Signer step 2: commitment k̃, r̃ = g^k̃.
pub fn signer_commit(group: &GroupParams, rng: &mut ChaCha20Rng) -> (BigUint, BigUint) {
    let k = group.random_scalar(rng);
    let r_tilde = group.pow_g(&k);
    (k, r_tilde)
}

#[derive(Debug, Clone)]
pub struct Blinding {
    pub alpha: BigUint,
    pub beta: BigUint,
    pub r: BigUint,
    pub m_tilde: BigUint,
}

/// Requester step 3: blind message m with fresh (α, β).
pub fn blind(
    group: &GroupParams,
    m: &BigUint,
    r_tilde: &BigUint,
    rng: &mut ChaCha20Rng,
) -> Result<Blinding> {
    if m.is_zero() || m >= &group.p {
        return Err(Error::Domain("message must be in [1, p)".into()));
    }
    for _ in 0..64 {
        let alpha = group.random_scalar(rng);
        let beta = group.random_scalar(rng);
        let r = (m * r_tilde.modpow(&beta, &group.p) % &group.p) * group.pow_g(&alpha) % &group.p;
        let beta_inv = match modinv(&beta, &group.q) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let m_tilde = (&r % &group.q) * beta_inv % &group.q;
        if m_tilde.is_zero() {
            continue;
        }
        return Ok(Blinding {
            alpha,
            beta,
            r,
            m_tilde,
        });
    }
    Err(Error::Generation("blinding retries exhausted".into()))
}

/// Signer step 4: s̃ = m̃·x + k̃ mod q.
pub fn signer_sign(group: &GroupParams, key: &SignerKey, k: &BigUint, m_tilde: &BigUint) -> BigUint {
    (m_tilde * &key.x + k) % &group.q
}

/// Requester step 5: unblind to the final signature (r, s).
pub fn unblind(group: &GroupParams, blinding: &Blinding, s_tilde: &BigUint) -> BlindSignature {
    let s = (s_tilde * &blinding.beta + &blinding.alpha) % &group.q;
    BlindSignature {
        r: blinding.r.clone(),
        s,
    }
}

/// Step 6: check m ≡ g^(−s)·y^r·r (mod p).
pub fn verify(group: &GroupParams, y: &BigUint, m: &BigUint, sig: &BlindSignature) -> bool {
    if m.is_zero() || m >= &group.p || sig.r.is_zero() || sig.r >= group.p {
        return false;
    }
    let lhs = group.pow_g_neg(&sig.s) * y.modpow(&(&sig.r % &group.q), &group.p) % &group.p;
    (lhs * &sig.r) % &group.p == *m
}

/// Signer-side transcript of one signing session: what a curious signer sees.
#[derive(Debug, Clone)]
pub struct SignerTranscript {
    pub m_tilde: BigUint,
    pub s_tilde: BigUint,
}

/// Run a full blind-signing session.
pub fn blind_sign(
    group: &GroupParams,
    key: &SignerKey,
    m: &BigUint,
    rng: &mut ChaCha20Rng,
) -> Result<(BlindSignature, SignerTranscript)> {
    let (k, r_tilde) = signer_commit(group, rng);
    let blinding = blind(group, m, &r_tilde, rng)?;
    let s_tilde = signer_sign(group, key, &k, &blinding.m_tilde);
    let sig = unblind(group, &blinding, &s_tilde);
    Ok((
        sig,
        SignerTranscript {
            m_tilde: blinding.m_tilde.clone(),
            s_tilde,
        },
    ))
}

/// Pre-scale a rational message to an integer: ⌊10^k · m⌋ with k ≥ 3.
pub fn scale_message(m: &BigRational, k: u32) -> Result<BigUint> {
    if m.is_negative() {
        return Err(Error::Domain("message must be nonnegative".into()));
    }
    let scaled = m * BigRational::from_integer(num_bigint::BigInt::from(10u64.pow(k)));
    let floored = scaled.floor().to_integer();
    floored
        .to_biguint()
        .ok_or_else(|| Error::Domain("negative scaled message".into()))
}

#[allow(unused)]
fn _to_u64(m: &BigRational) -> Option<u64> {
    m.to_integer().to_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::group::derive_rng;
    use num_bigint::RandBigInt;
    use num_traits::One;

    fn setup() -> (GroupParams, SignerKey, ChaCha20Rng) {
        let mut rng = derive_rng(11, "blind-sig-tests");
        let group = GroupParams::generate(256, 64, &mut rng).unwrap();
        let key = SignerKey::generate(&group, &mut rng);
        (group, key, rng)
    }

    #[test]
    fn sign_verify_round_trip() {
        let (group, key, mut rng) = setup();
        for _ in 0..20 {
            let m = rng.gen_biguint_range(&BigUint::one(), &group.p);
            let (sig, _) = blind_sign(&group, &key, &m, &mut rng).unwrap();
            assert!(verify(&group, &key.y, &m, &sig));
        }
    }

    #[test]
    fn tampering_rejected() {
        let (group, key, mut rng) = setup();
        let m = rng.gen_biguint_range(&BigUint::one(), &group.p);
        let (sig, _) = blind_sign(&group, &key, &m, &mut rng).unwrap();
        let bumped_s = BlindSignature {
            r: sig.r.clone(),
            s: (&sig.s + 1u32) % &group.q,
        };
        assert!(!verify(&group, &key.y, &m, &bumped_s));
        let bumped_r = BlindSignature {
            r: (&sig.r + 1u32) % &group.p,
            s: sig.s.clone(),
        };
        assert!(!verify(&group, &key.y, &m, &bumped_r));
        let bumped_m = (&m + 1u32) % &group.p;
        if !bumped_m.is_zero() {
            assert!(!verify(&group, &key.y, &bumped_m, &sig));
        }
    }

    #[test]
    fn scale_message_floors() {
        use num_bigint::BigInt;
        let m = BigRational::new(BigInt::from(1), BigInt::from(3));
        assert_eq!(scale_message(&m, 4).unwrap(), BigUint::from(3333u32));
    }
}
