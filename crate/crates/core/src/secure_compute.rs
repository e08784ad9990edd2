//! Privacy-preserving subcomputations: marginal-utility-per-bid evaluation
//! (one-aggregator contract), Paillier polynomial set union, encrypted
//! payment-term arithmetic on fixed-point integers, and the comparison
//! authority that returns ordering tokens without exposing plaintexts.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand_chacha::ChaCha20Rng;

use crate::crypto::paillier::{paillier_add, paillier_scale, PaillierCiphertext, PaillierKeypair};
use crate::error::{Error, Result};
use crate::mechanisms::{CoverageUtility, UserId};

/// Per-user coverage indicator bits: c_{j,k} = 1 iff τ_k ∈ Γ_j. The
/// aggregation over a set S computes c_{k,S} = 1 − Π_{j∈S}(1 − c_{j,k}),
/// so Σ_k c_{k,S} = U(S) under the coverage utility.
#[derive(Debug, Clone)]
pub struct CoverageIndicator {
    pub user: UserId,
    pub bits: Vec<bool>,
}

impl CoverageIndicator {
    pub fn from_utility(utility: &CoverageUtility, user: UserId) -> Result<CoverageIndicator> {
        let gamma = utility
            .assignments
            .get(&user)
            .ok_or_else(|| Error::Usage(format!("unknown user {user}")))?;
        let bits = utility
            .ground_set
            .iter()
            .map(|t| gamma.contains(t))
            .collect();
        Ok(CoverageIndicator { user, bits })
    }
}

/// Aggregate indicator over a user set: one bit per ground-set element.
fn aggregate_bits(indicators: &[CoverageIndicator], s: &BTreeSet<UserId>) -> Vec<bool> {
    let m = indicators.first().map(|i| i.bits.len()).unwrap_or(0);
    let mut acc = vec![false; m];
    for ind in indicators.iter().filter(|i| s.contains(&i.user)) {
        for (a, b) in acc.iter_mut().zip(&ind.bits) {
            *a |= *b;
        }
    }
    acc
}

fn count_true(bits: &[bool]) -> u64 {
    bits.iter().filter(|b| **b).count() as u64
}

/// MPEP contract: the candidate's marginal utility per bid,
/// (U(S∪{i}) − U(S))/b_i, computed from per-user local indicator bits.
/// Only the candidate's result record is addressed to the candidate.
pub fn mpep_marginal_per_bid(
    all_user_indicators: &[CoverageIndicator],
    s: &BTreeSet<UserId>,
    i: UserId,
    b_i: &BigRational,
) -> Result<BigRational> {
    if s.contains(&i) {
        return Err(Error::Usage(format!("{i} already in S")));
    }
    if b_i.is_zero() || b_i.is_negative() {
        return Err(Error::Domain("bid must be positive".into()));
    }
    let mu = mpep_marginal(all_user_indicators, s, i)?;
    Ok(BigRational::from_integer(BigInt::from(mu)) / b_i)
}

/// Marginal utility U(S∪{i}) − U(S) from indicator bits.
pub fn mpep_marginal(
    all_user_indicators: &[CoverageIndicator],
    s: &BTreeSet<UserId>,
    i: UserId,
) -> Result<u64> {
    let ind_i = all_user_indicators
        .iter()
        .find(|x| x.user == i)
        .ok_or_else(|| Error::Usage(format!("no indicator for {i}")))?;
    let base = aggregate_bits(all_user_indicators, s);
    let gained = ind_i
        .bits
        .iter()
        .zip(&base)
        .filter(|(own, covered)| **own && !**covered)
        .count() as u64;
    Ok(gained)
}

/// Coverage of a set, U(S), from indicator bits.
pub fn mpep_coverage(all_user_indicators: &[CoverageIndicator], s: &BTreeSet<UserId>) -> u64 {
    count_true(&aggregate_bits(all_user_indicators, s))
}

/// Result of the polynomial set-union dance, platform side.
#[derive(Debug, Clone)]
pub struct SetUnionOutcome {
    /// Values recovered as x·y⁻¹ mod n (user ∖ platform).
    pub added: Vec<BigUint>,
    /// Tuples that decrypted to (0,0) — elements already held.
    pub skipped: usize,
    /// Total tuples exchanged (for byte accounting).
    pub tuples: usize,
    /// Encrypted polynomial degree + 1 (coefficient count sent).
    pub coefficients: usize,
}

fn check_encodable(v: &BigUint, n: &BigUint) -> Result<()> {
    if v.is_zero() || v >= n {
        return Err(Error::Domain(
            "assignment value must be a nonzero integer < n".into(),
        ));
    }
    Ok(())
}

/// Encrypted coefficients of f_S(x) = Π_{τ∈platform_set}(x − τ) mod n,
/// low-order first (empty set → the constant polynomial 1).
pub fn encrypted_set_poly(
    platform_set: &[BigUint],
    key: &PaillierKeypair,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<PaillierCiphertext>> {
    let n = &key.n;
    let mut coeffs: Vec<BigUint> = vec![BigUint::one()];
    for tau in platform_set {
        check_encodable(tau, n)?;
        let neg_tau = n - (tau % n);
        let mut next = vec![BigUint::zero(); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] = (&next[k + 1] + c) % n;
            next[k] = (&next[k] + c * &neg_tau) % n;
        }
        coeffs = next;
    }
    coeffs.iter().map(|c| key.encrypt_rng(c, rng)).collect()
}

/// User-side homomorphic evaluation: E(f_S(τ)) = Π E(c_k)^(τ^k).
fn eval_encrypted_poly(
    coeffs: &[PaillierCiphertext],
    tau: &BigUint,
    key: &PaillierKeypair,
) -> Result<PaillierCiphertext> {
    let n = &key.n;
    let mut acc: Option<PaillierCiphertext> = None;
    let mut power = BigUint::one();
    for c in coeffs {
        let term = paillier_scale(c, &power, key)?;
        acc = Some(match acc {
            None => term,
            Some(a) => paillier_add(&a, &term, key)?,
        });
        power = power * tau % n;
    }
    acc.ok_or_else(|| Error::Usage("empty polynomial".into()))
}

/// One blinded tuple per user element: (E(f_S(τ)·τ·r), E(f_S(τ)·r)).
pub fn set_union_tuples(
    coeffs: &[PaillierCiphertext],
    user_set: &[BigUint],
    key: &PaillierKeypair,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<(PaillierCiphertext, PaillierCiphertext)>> {
    let n = &key.n;
    let mut tuples = Vec::with_capacity(user_set.len());
    for tau in user_set {
        check_encodable(tau, n)?;
        let f_tau = eval_encrypted_poly(coeffs, tau, key)?;
        let r = key.random_randomness(rng);
        let x = paillier_scale(&f_tau, &(tau * &r % n), key)?;
        let y = paillier_scale(&f_tau, &r, key)?;
        tuples.push((x, y));
    }
    // Random permutation (Fisher-Yates) so tuple order leaks nothing.
    use rand::Rng;
    for i in (1..tuples.len()).rev() {
        let j = rng.gen_range(0..=i);
        tuples.swap(i, j);
    }
    Ok(tuples)
}

/// Platform-side recovery: full mode, learns the added element values.
pub fn private_set_union(
    platform_set: &[BigUint],
    user_set: &[BigUint],
    key: &PaillierKeypair,
    rng: &mut ChaCha20Rng,
) -> Result<SetUnionOutcome> {
    let coeffs = encrypted_set_poly(platform_set, key, rng)?;
    let tuples = set_union_tuples(&coeffs, user_set, key, rng)?;
    let mut added = Vec::new();
    let mut skipped = 0usize;
    for (x_ct, y_ct) in &tuples {
        let x = key.decrypt(x_ct)?;
        let y = key.decrypt(y_ct)?;
        if x.is_zero() && y.is_zero() {
            skipped += 1;
            continue;
        }
        let y_inv = crate::crypto::group::modinv(&y, &key.n)
            .map_err(|_| Error::Arithmetic("set-union blinding not invertible".into()))?;
        added.push(x * y_inv % &key.n);
    }
    added.sort();
    Ok(SetUnionOutcome {
        added,
        skipped,
        tuples: tuples.len(),
        coefficients: coeffs.len(),
    })
}

/// Count-only mode: the platform learns |user ∖ platform| but not which
/// values; used in the winner phase where the candidate's elements must
/// stay hidden unless it is admitted.
pub fn private_set_union_count(
    platform_set: &[BigUint],
    user_set: &[BigUint],
    key: &PaillierKeypair,
    rng: &mut ChaCha20Rng,
) -> Result<SetUnionOutcome> {
    let coeffs = encrypted_set_poly(platform_set, key, rng)?;
    let tuples = set_union_tuples(&coeffs, user_set, key, rng)?;
    let mut new_count = 0usize;
    let mut skipped = 0usize;
    for (x_ct, y_ct) in &tuples {
        let x = key.decrypt(x_ct)?;
        let y = key.decrypt(y_ct)?;
        if x.is_zero() && y.is_zero() {
            skipped += 1;
        } else {
            new_count += 1;
        }
    }
    Ok(SetUnionOutcome {
        added: Vec::new(),
        skipped,
        tuples: new_count, // reused as the count in this mode
        coefficients: coeffs.len(),
    })
}

/// Encode an assignment element as a 1-based integer with a
/// domain-separation offset (never zero).
pub fn encode_assignment(tau: u32) -> BigUint {
    BigUint::from(tau as u64 + 1)
}

/// The AI-side comparison/decryption authority for Paillier ciphertexts:
/// requesters only ever see ordering tokens or freshly encrypted results.
#[derive(Debug, Clone)]
pub struct ComparisonAuthority {
    pub key: PaillierKeypair,
}

impl ComparisonAuthority {
    pub fn new(key: PaillierKeypair) -> ComparisonAuthority {
        ComparisonAuthority { key }
    }

    pub fn compare(
        &self,
        a: &PaillierCiphertext,
        b: &PaillierCiphertext,
    ) -> Result<std::cmp::Ordering> {
        if a.key_id != self.key.key_id || b.key_id != self.key.key_id {
            return Err(Error::Usage("compare under mismatched key".into()));
        }
        Ok(self.key.decrypt(a)?.cmp(&self.key.decrypt(b)?))
    }
}

pub fn encrypted_compare(
    a: &PaillierCiphertext,
    b: &PaillierCiphertext,
    ai: &ComparisonAuthority,
) -> Result<std::cmp::Ordering> {
    ai.compare(a, b)
}

/// Exact fixed-point interface for the payment pipeline: `scale` is the
/// global Q; encrypted values hold Q·ω or raw marginals.
pub struct PaymentTermsInput<'a> {
    /// E_AI(U_{i(j)}(T_{j−1})) — the paid winner's marginal (unscaled).
    pub e_u_ij: &'a PaillierCiphertext,
    /// E_AI(Q·ω_{i_j}) — the selected reference's marginal per bid.
    pub e_ij: &'a PaillierCiphertext,
    /// E_AI(Q·ω_{p,j}) — the platform threshold U(T_{j−1}∪{i})/B.
    pub e_pj: &'a PaillierCiphertext,
}

/// AI-side computation of the two scaled payment terms:
/// Q·b-term = Q²·U_{i(j)}/（Q·ω_{i_j}) and Q·η-term = Q²·U_{i(j)}/(Q·ω_{p,j}),
/// both exact by construction of Q. Returns fresh ciphertexts.
pub fn encrypted_payment_terms(
    input: &PaymentTermsInput,
    scale: &BigUint,
    ai: &ComparisonAuthority,
    rng: &mut ChaCha20Rng,
) -> Result<(PaillierCiphertext, PaillierCiphertext)> {
    let key = &ai.key;
    let u_ij = key.decrypt(input.e_u_ij)?;
    let w_ij = key.decrypt(input.e_ij)?;
    let w_pj = key.decrypt(input.e_pj)?;
    let term = |w: &BigUint| -> Result<BigUint> {
        if u_ij.is_zero() {
            return Ok(BigUint::zero());
        }
        if w.is_zero() {
            return Err(Error::Arithmetic("zero divisor in payment term".into()));
        }
        let num = scale * scale * &u_ij;
        let (q, r) = num.div_rem(w);
        if !r.is_zero() {
            return Err(Error::Arithmetic(
                "inexact division in payment term (scale too small)".into(),
            ));
        }
        Ok(q)
    };
    let b_term = term(&w_ij)?;
    let eta_term = term(&w_pj)?;
    Ok((
        key.encrypt_rng(&b_term, rng)?,
        key.encrypt_rng(&eta_term, rng)?,
    ))
}

/// The global fixed-point scale Q: headroom × lcm(1..m) ×
/// lcm over the bid domain of num·den × num(B)·den(B). Chosen so every
/// division in the payment formulas is exact in integers.
pub fn fixed_point_scale(
    headroom: u64,
    m: u64,
    bid_domain: &[BigRational],
    budget: &BigRational,
) -> BigUint {
    let mut q = BigInt::from(headroom.max(1));
    let mut l = BigInt::one();
    for k in 1..=m.max(1) {
        l = l.lcm(&BigInt::from(k));
    }
    q *= &l;
    let mut dom = BigInt::one();
    for b in bid_domain {
        dom = dom.lcm(&(b.numer() * b.denom()));
    }
    q *= dom.abs();
    q *= (budget.numer() * budget.denom()).abs();
    q.to_biguint().unwrap_or_else(BigUint::one)
}

/// Exact rational → scaled integer (errors if not integral).
pub fn to_scaled_integer(value: &BigRational, scale: &BigUint) -> Result<BigUint> {
    let scaled = value * BigRational::from_integer(BigInt::from(scale.clone()));
    if !scaled.is_integer() {
        return Err(Error::Arithmetic(format!(
            "value {value} does not scale to an integer under Q"
        )));
    }
    scaled
        .to_integer()
        .to_biguint()
        .ok_or_else(|| Error::Arithmetic("negative scaled value".into()))
}

/// Scaled integer → exact rational.
pub fn from_scaled_integer(value: &BigUint, scale: &BigUint) -> BigRational {
    BigRational::new(BigInt::from(value.clone()), BigInt::from(scale.clone()))
}

#[allow(unused)]
fn _unused_to_f64(x: &BigRational) -> Option<f64> {
    x.to_f64()
}
