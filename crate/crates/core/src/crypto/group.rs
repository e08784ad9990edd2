//! Schnorr-style group parameters: primes p, q with q | p−1 and two
//! independent generators g, h of the order-q subgroup.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::wire;

const SMALL_PRIMES: [u32; 46] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199,
];

/// Miller-Rabin with `rounds` random bases (64 rounds in protocol use).
pub fn is_probable_prime(n: &BigUint, rounds: u32, rng: &mut ChaCha20Rng) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for sp in SMALL_PRIMES {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Random prime with exactly `bits` bits.
pub fn gen_prime(bits: u64, rng: &mut ChaCha20Rng) -> Result<BigUint> {
    if bits < 8 {
        return Err(Error::Generation("prime size too small".into()));
    }
    for _ in 0..100_000 {
        let mut cand = rng.gen_biguint(bits);
        cand.set_bit(bits - 1, true);
        cand.set_bit(0, true);
        if is_probable_prime(&cand, 64, rng) {
            return Ok(cand);
        }
    }
    Err(Error::Generation("prime generation retries exhausted".into()))
}

/// Modular inverse of `a` mod `m`, if gcd(a, m) = 1.
pub fn modinv(a: &BigUint, m: &BigUint) -> Result<BigUint> {
    let a = BigInt::from(a.clone());
    let m_int = BigInt::from(m.clone());
    let e = a.extended_gcd(&m_int);
    if !e.gcd.is_one() {
        return Err(Error::Arithmetic("non-invertible element".into()));
    }
    let mut x = e.x % &m_int;
    if x < BigInt::zero() {
        x += &m_int;
    }
    Ok(x.to_biguint().unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupParams {
    pub p: BigUint,
    pub q: BigUint,
    pub g: BigUint,
    pub h: BigUint,
}

impl GroupParams {
    /// Generate p = q·r + 1 with q prime of `q_bits` bits, p prime of
    /// `p_bits` bits, and two independently sampled generators of the
    /// order-q subgroup (trusted setup is assumed for h).
    pub fn generate(p_bits: u64, q_bits: u64, rng: &mut ChaCha20Rng) -> Result<GroupParams> {
        if q_bits + 8 > p_bits {
            return Err(Error::Generation("q_bits too close to p_bits".into()));
        }
        let q = gen_prime(q_bits, rng)?;
        let one = BigUint::one();
        let p = loop {
            let mut r = rng.gen_biguint(p_bits - q_bits);
            r.set_bit(p_bits - q_bits - 1, true);
            if r.is_odd() {
                r += 1u32; // keep p−1 = q·r even
            }
            let cand = &q * &r + &one;
            if cand.bits() == p_bits && is_probable_prime(&cand, 64, rng) {
                break cand;
            }
        };
        let cofactor = (&p - &one) / &q;
        let sample_gen = |rng: &mut ChaCha20Rng| -> BigUint {
            loop {
                let x = rng.gen_biguint_range(&BigUint::from(2u32), &(&p - &one));
                let cand = x.modpow(&cofactor, &p);
                if !cand.is_one() {
                    return cand;
                }
            }
        };
        let g = sample_gen(rng);
        let h = loop {
            let cand = sample_gen(rng);
            if cand != g {
                break cand;
            }
        };
        Ok(GroupParams { p, q, g, h })
    }

    /// Uniform exponent in [1, q).
    pub fn random_scalar(&self, rng: &mut ChaCha20Rng) -> BigUint {
        rng.gen_biguint_range(&BigUint::one(), &self.q)
    }

    pub fn pow_g(&self, e: &BigUint) -> BigUint {
        self.g.modpow(e, &self.p)
    }

    pub fn pow_h(&self, e: &BigUint) -> BigUint {
        self.h.modpow(e, &self.p)
    }

    /// g^(−e) mod p via the subgroup order.
    pub fn pow_g_neg(&self, e: &BigUint) -> BigUint {
        let e = e % &self.q;
        self.g.modpow(&(&self.q - e), &self.p)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        wire::put_biguint(&mut out, &self.p);
        wire::put_biguint(&mut out, &self.q);
        wire::put_biguint(&mut out, &self.g);
        wire::put_biguint(&mut out, &self.h);
        out
    }
}

/// Hash arbitrary bytes to a scalar mod q (for signatures).
pub fn hash_to_scalar(q: &BigUint, parts: &[&[u8]]) -> BigUint {
    let d = wire::sha256(parts);
    BigUint::from_bytes_be(&d) % q
}

/// Derive a child ChaCha20 RNG from a seed and a domain-separation label.
pub fn derive_rng(seed: u64, label: &str) -> ChaCha20Rng {
    let d = wire::sha256(&[&seed.to_be_bytes(), label.as_bytes()]);
    rand_chacha::ChaCha20Rng::from_seed(d)
}

use rand::SeedableRng;

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha20Rng {
        derive_rng(7, "group-tests")
    }

    #[test]
    fn miller_rabin_agrees_with_small_sieve() {
        let mut r = rng();
        let mut sieve = vec![true; 2000];
        sieve[0] = false;
        sieve[1] = false;
        for i in 2..2000usize {
            if sieve[i] {
                for j in (2 * i..2000).step_by(i) {
                    sieve[j] = false;
                }
            }
        }
        for n in 2..2000usize {
            assert_eq!(
                is_probable_prime(&BigUint::from(n), 32, &mut r),
                sieve[n],
                "mismatch at {n}"
            );
        }
    }

    #[test]
    fn group_structure_holds() {
        let mut r = rng();
        let gp = GroupParams::generate(256, 64, &mut r).unwrap();
        assert!(((&gp.p - 1u32) % &gp.q).is_zero());
        assert!(gp.g.modpow(&gp.q, &gp.p).is_one());
        assert!(gp.h.modpow(&gp.q, &gp.p).is_one());
        assert!(!gp.g.is_one());
        assert!(!gp.h.is_one());
        assert_ne!(gp.g, gp.h);
    }

    #[test]
    fn modinv_round_trip() {
        let mut r = rng();
        let gp = GroupParams::generate(256, 64, &mut r).unwrap();
        for _ in 0..20 {
            let a = r.gen_biguint_range(&BigUint::from(2u32), &gp.p);
            let inv = modinv(&a, &gp.p).unwrap();
            assert!(((a * inv) % &gp.p).is_one());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = GroupParams::generate(256, 64, &mut derive_rng(3, "x")).unwrap();
        let b = GroupParams::generate(256, 64, &mut derive_rng(3, "x")).unwrap();
        assert_eq!(a, b);
    }
}
