//! Order-preserving encoding: a seeded random strictly-increasing codebook
//! over the declared discrete bid and limit domains. Sorting codes is
//! equivalent to sorting the underlying values.

use num_rational::BigRational;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::wire;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingTable {
    pub bid_domain: Vec<BigRational>,
    pub limit_domain: Vec<u64>,
    pub bid_codes: Vec<u64>,
    pub limit_codes: Vec<u64>,
    pub code_bits: u32,
}

fn strictly_increasing<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

/// Sample `count` distinct codes in [1, 2^bits), sorted ascending.
fn sample_codes(count: usize, bits: u32, rng: &mut ChaCha20Rng) -> Vec<u64> {
    let ceiling: u64 = if bits >= 64 { u64::MAX } else { 1u64 << bits };
    let mut set = std::collections::BTreeSet::new();
    while set.len() < count {
        set.insert(rng.gen_range(1..ceiling));
    }
    set.into_iter().collect()
}

pub fn opes_build(
    bid_domain: &[BigRational],
    limit_domain: &[u64],
    code_bits: u32,
    rng: &mut ChaCha20Rng,
) -> Result<EncodingTable> {
    if !strictly_increasing(bid_domain) || !strictly_increasing(limit_domain) {
        return Err(Error::Domain("domains must be strictly increasing".into()));
    }
    let z = bid_domain.len().max(limit_domain.len()) as u128;
    let capacity: u128 = if code_bits >= 64 {
        u128::from(u64::MAX)
    } else {
        1u128 << code_bits
    };
    if capacity < 4 * z.max(1) {
        return Err(Error::Domain(
            "code_bits too small: need 2^code_bits >= 4*max(z, v)".into(),
        ));
    }
    Ok(EncodingTable {
        bid_domain: bid_domain.to_vec(),
        limit_domain: limit_domain.to_vec(),
        bid_codes: sample_codes(bid_domain.len(), code_bits, rng),
        limit_codes: sample_codes(limit_domain.len(), code_bits, rng),
        code_bits,
    })
}

impl EncodingTable {
    pub fn encode_bid(&self, bid: &BigRational) -> Result<u64> {
        match self.bid_domain.binary_search_by(|x| x.cmp(bid)) {
            Ok(i) => Ok(self.bid_codes[i]),
            Err(_) => Err(Error::Domain(format!("bid {bid} not in domain"))),
        }
    }

    pub fn decode_bid(&self, code: u64) -> Result<BigRational> {
        match self.bid_codes.binary_search(&code) {
            Ok(i) => Ok(self.bid_domain[i].clone()),
            Err(_) => Err(Error::Domain(format!("code {code} is not a bid code"))),
        }
    }

    pub fn encode_limit(&self, limit: u64) -> Result<u64> {
        match self.limit_domain.binary_search(&limit) {
            Ok(i) => Ok(self.limit_codes[i]),
            Err(_) => Err(Error::Domain(format!("limit {limit} not in domain"))),
        }
    }

    pub fn decode_limit(&self, code: u64) -> Result<u64> {
        match self.limit_codes.binary_search(&code) {
            Ok(i) => Ok(self.limit_domain[i]),
            Err(_) => Err(Error::Domain(format!("code {code} is not a limit code"))),
        }
    }

    /// Rank (1-based) of a bid in the domain, used as an OT choice index.
    pub fn bid_rank(&self, bid: &BigRational) -> Result<usize> {
        match self.bid_domain.binary_search_by(|x| x.cmp(bid)) {
            Ok(i) => Ok(i + 1),
            Err(_) => Err(Error::Domain(format!("bid {bid} not in domain"))),
        }
    }

    pub fn limit_rank(&self, limit: u64) -> Result<usize> {
        match self.limit_domain.binary_search(&limit) {
            Ok(i) => Ok(i + 1),
            Err(_) => Err(Error::Domain(format!("limit {limit} not in domain"))),
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        wire::put_u64(&mut out, self.bid_domain.len() as u64);
        for (b, c) in self.bid_domain.iter().zip(&self.bid_codes) {
            wire::put_ratio(&mut out, b);
            wire::put_u64(&mut out, *c);
        }
        wire::put_u64(&mut out, self.limit_domain.len() as u64);
        for (l, c) in self.limit_domain.iter().zip(&self.limit_codes) {
            wire::put_u64(&mut out, *l);
            wire::put_u64(&mut out, *c);
        }
        wire::put_u64(&mut out, self.code_bits as u64);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::group::derive_rng;
    use num_bigint::BigInt;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn table() -> EncodingTable {
        let mut rng = derive_rng(5, "opes-tests");
        let bids = vec![ratio(1, 1), ratio(3, 1), ratio(7, 1)];
        let limits = vec![1, 2, 5];
        opes_build(&bids, &limits, 24, &mut rng).unwrap()
    }

    #[test]
    fn codes_preserve_order() {
        let t = table();
        assert!(t.bid_codes[0] < t.bid_codes[1] && t.bid_codes[1] < t.bid_codes[2]);
        assert!(t.encode_bid(&ratio(3, 1)).unwrap() < t.encode_bid(&ratio(7, 1)).unwrap());
    }

    #[test]
    fn round_trip_all_domain_values() {
        let t = table();
        for b in &t.bid_domain {
            assert_eq!(&t.decode_bid(t.encode_bid(b).unwrap()).unwrap(), b);
        }
        for l in t.limit_domain.clone() {
            assert_eq!(t.decode_limit(t.encode_limit(l).unwrap()).unwrap(), l);
        }
    }

    #[test]
    fn non_code_lookup_fails() {
        let t = table();
        let mut probe = 1u64;
        while t.bid_codes.contains(&probe) {
            probe += 1;
        }
        assert!(t.decode_bid(probe).is_err());
        assert!(t.encode_bid(&ratio(2, 1)).is_err());
    }

    #[test]
    fn too_narrow_code_space_rejected() {
        let mut rng = derive_rng(5, "opes-tests2");
        let bids: Vec<BigRational> = (1..=8).map(|i| ratio(i, 1)).collect();
        assert!(opes_build(&bids, &[1], 4, &mut rng).is_err());
        assert!(opes_build(&bids, &[1], 5, &mut rng).is_ok());
    }

    #[test]
    fn unsorted_domain_rejected() {
        let mut rng = derive_rng(5, "opes-tests3");
        let bids = vec![ratio(3, 1), ratio(1, 1)];
        assert!(opes_build(&bids, &[1], 24, &mut rng).is_err());
    }
}
