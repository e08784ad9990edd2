//! Paillier additively homomorphic encryption over n = p·q,
//! with g_n = n + 1 so that g_n^m = 1 + m·n (mod n²).

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand_chacha::ChaCha20Rng;

use crate::crypto::group::{gen_prime, modinv};
use crate::error::{Error, Result};
use crate::wire;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierKeypair {
    pub n: BigUint,
    pub n2: BigUint,
    pub g_n: BigUint,
    pub lambda: BigUint,
    pub mu: BigUint,
    pub key_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierCiphertext {
    pub value: BigUint,
    pub key_id: u64,
}

impl PaillierCiphertext {
    pub fn byte_len(&self) -> usize {
        (self.value.bits() as usize + 7) / 8
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        wire::put_biguint(&mut out, &self.value);
        wire::put_u64(&mut out, self.key_id);
        out
    }

    pub fn from_reader(r: &mut wire::Reader) -> Result<PaillierCiphertext> {
        let value = r.biguint()?;
        let key_id = r.u64()?;
        Ok(PaillierCiphertext { value, key_id })
    }
}

pub fn paillier_keygen(bit_length: u64, rng: &mut ChaCha20Rng) -> Result<PaillierKeypair> {
    if bit_length < 64 || bit_length % 2 != 0 {
        return Err(Error::Domain(
            "bit_length must be even and at least 64".into(),
        ));
    }
    let half = bit_length / 2;
    let (p, q) = loop {
        let p = gen_prime(half, rng)?;
        let q = gen_prime(half, rng)?;
        if p == q {
            continue;
        }
        // gcd(pq, (p−1)(q−1)) = 1 is automatic for same-length primes of
        // this size, but check anyway.
        let n = &p * &q;
        let lam = (&p - 1u32) * (&q - 1u32);
        if n.gcd(&lam).is_one() {
            break (p, q);
        }
    };
    let n = &p * &q;
    let n2 = &n * &n;
    let g_n = &n + 1u32;
    let lambda = (&p - 1u32) * (&q - 1u32);
    let mu = modinv(&(&lambda % &n), &n)
        .map_err(|_| Error::Generation("lambda not invertible mod n".into()))?;
    let key_id = key_id_of(&n);
    Ok(PaillierKeypair {
        n,
        n2,
        g_n,
        lambda,
        mu,
        key_id,
    })
}

fn key_id_of(n: &BigUint) -> u64 {
    let d = wire::sha256(&[b"paillier-key", &n.to_bytes_be()]);
    u64::from_be_bytes(d[..8].try_into().unwrap())
}

impl PaillierKeypair {
    /// Uniform encryption randomness coprime to n.
    pub fn random_randomness(&self, rng: &mut ChaCha20Rng) -> BigUint {
        loop {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    pub fn encrypt(&self, m: &BigUint, randomness: &BigUint) -> Result<PaillierCiphertext> {
        if m >= &self.n {
            return Err(Error::Domain("plaintext out of range".into()));
        }
        if !randomness.gcd(&self.n).is_one() || randomness.is_zero() {
            return Err(Error::Domain("randomness not coprime to n".into()));
        }
        // (1 + m·n) · r^n mod n²
        let gm = (BigUint::one() + m * &self.n) % &self.n2;
        let rn = randomness.modpow(&self.n, &self.n2);
        Ok(PaillierCiphertext {
            value: (gm * rn) % &self.n2,
            key_id: self.key_id,
        })
    }

    pub fn encrypt_rng(&self, m: &BigUint, rng: &mut ChaCha20Rng) -> Result<PaillierCiphertext> {
        let r = self.random_randomness(rng);
        self.encrypt(m, &r)
    }

    pub fn decrypt(&self, c: &PaillierCiphertext) -> Result<BigUint> {
        if c.key_id != self.key_id {
            return Err(Error::Usage("ciphertext under different key".into()));
        }
        let x = c.value.modpow(&self.lambda, &self.n2);
        let l = (x - 1u32) / &self.n;
        Ok((l * &self.mu) % &self.n)
    }

    /// Recover the plaintext of `c` given its encryption randomness, without
    /// the private key: c · r^(−n) = 1 + m·n (mod n²). This is the audit
    /// path — a user reveals its randomness and anyone can open e_i.
    pub fn recover_with_randomness(
        &self,
        c: &PaillierCiphertext,
        randomness: &BigUint,
    ) -> Result<BigUint> {
        if c.key_id != self.key_id {
            return Err(Error::Usage("ciphertext under different key".into()));
        }
        let rn = randomness.modpow(&self.n, &self.n2);
        let rn_inv = modinv(&rn, &self.n2)?;
        let gm = (&c.value * rn_inv) % &self.n2;
        let body = &gm - 1u32;
        let (m, rem) = body.div_rem(&self.n);
        if !rem.is_zero() || m >= self.n {
            return Err(Error::Integrity(
                "randomness does not open this ciphertext".into(),
            ));
        }
        Ok(m)
    }

    pub fn public_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        wire::put_biguint(&mut out, &self.n);
        wire::put_u64(&mut out, self.key_id);
        out
    }
}

pub fn paillier_add(
    a: &PaillierCiphertext,
    b: &PaillierCiphertext,
    key: &PaillierKeypair,
) -> Result<PaillierCiphertext> {
    if a.key_id != b.key_id || a.key_id != key.key_id {
        return Err(Error::Usage("key_id mismatch in add".into()));
    }
    Ok(PaillierCiphertext {
        value: (&a.value * &b.value) % &key.n2,
        key_id: a.key_id,
    })
}

pub fn paillier_scale(
    a: &PaillierCiphertext,
    k: &BigUint,
    key: &PaillierKeypair,
) -> Result<PaillierCiphertext> {
    if a.key_id != key.key_id {
        return Err(Error::Usage("key_id mismatch in scale".into()));
    }
    Ok(PaillierCiphertext {
        value: a.value.modpow(k, &key.n2),
        key_id: a.key_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::group::derive_rng;

    fn key() -> (PaillierKeypair, ChaCha20Rng) {
        let mut rng = derive_rng(1, "paillier-tests");
        let k = paillier_keygen(128, &mut rng).unwrap();
        (k, rng)
    }

    #[test]
    fn zero_round_trip() {
        let (k, mut rng) = key();
        let c = k.encrypt_rng(&BigUint::zero(), &mut rng).unwrap();
        assert_eq!(k.decrypt(&c).unwrap(), BigUint::zero());
    }

    #[test]
    fn boundary_round_trip() {
        let (k, mut rng) = key();
        let m = &k.n - 1u32;
        let c = k.encrypt_rng(&m, &mut rng).unwrap();
        assert_eq!(k.decrypt(&c).unwrap(), m);
        assert!(k.encrypt_rng(&k.n.clone(), &mut rng).is_err());
    }

    #[test]
    fn same_plaintext_distinct_ciphertexts() {
        let (k, mut rng) = key();
        let c1 = k.encrypt_rng(&BigUint::from(5u32), &mut rng).unwrap();
        let c2 = k.encrypt_rng(&BigUint::from(5u32), &mut rng).unwrap();
        assert_ne!(c1.value, c2.value);
        assert_eq!(k.decrypt(&c1).unwrap(), k.decrypt(&c2).unwrap());
    }

    #[test]
    fn additive_identity() {
        let (k, mut rng) = key();
        let c3 = k.encrypt_rng(&BigUint::from(3u32), &mut rng).unwrap();
        let c4 = k.encrypt_rng(&BigUint::from(4u32), &mut rng).unwrap();
        let sum = paillier_add(&c3, &c4, &k).unwrap();
        assert_eq!(k.decrypt(&sum).unwrap(), BigUint::from(7u32));
    }

    #[test]
    fn scalar_identity() {
        let (k, mut rng) = key();
        let c2 = k.encrypt_rng(&BigUint::from(2u32), &mut rng).unwrap();
        let c6 = paillier_scale(&c2, &BigUint::from(3u32), &k).unwrap();
        assert_eq!(k.decrypt(&c6).unwrap(), BigUint::from(6u32));
        let c7 = k.encrypt_rng(&BigUint::from(7u32), &mut rng).unwrap();
        let c0 = paillier_scale(&c7, &BigUint::zero(), &k).unwrap();
        assert_eq!(k.decrypt(&c0).unwrap(), BigUint::zero());
    }

    #[test]
    fn add_scale_against_plaintext_oracle() {
        let (k, mut rng) = key();
        for _ in 0..1000 {
            let a = rng.gen_biguint_range(&BigUint::zero(), &k.n);
            let b = rng.gen_biguint_range(&BigUint::zero(), &k.n);
            let c = rng.gen_biguint_range(&BigUint::zero(), &k.n);
            let ea = k.encrypt_rng(&a, &mut rng).unwrap();
            let eb = k.encrypt_rng(&b, &mut rng).unwrap();
            let combined = paillier_add(&ea, &paillier_scale(&eb, &c, &k).unwrap(), &k).unwrap();
            assert_eq!(k.decrypt(&combined).unwrap(), (&a + &b * &c) % &k.n);
        }
    }

    #[test]
    fn key_mismatch_rejected() {
        let (k1, mut rng) = key();
        let k2 = paillier_keygen(128, &mut rng).unwrap();
        let c1 = k1.encrypt_rng(&BigUint::one(), &mut rng).unwrap();
        let c2 = k2.encrypt_rng(&BigUint::one(), &mut rng).unwrap();
        assert!(paillier_add(&c1, &c2, &k1).is_err());
        assert!(k2.decrypt(&c1).is_err());
    }

    #[test]
    fn randomness_recovery_opens_ciphertext() {
        let (k, mut rng) = key();
        let m = BigUint::from(987654u32);
        let r = k.random_randomness(&mut rng);
        let c = k.encrypt(&m, &r).unwrap();
        assert_eq!(k.recover_with_randomness(&c, &r).unwrap(), m);
        let wrong = k.random_randomness(&mut rng);
        assert_ne!(k.recover_with_randomness(&c, &wrong).ok(), Some(m));
    }
}
