//! Canonical big-endian serialization with length prefixes.
//!
//! Every value that is hashed, signed, or posted to the bulletin board goes
//! through this module so that digests are reproducible across replays.

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_be_bytes());
}

pub fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u64(out, b.len() as u64);
    out.extend_from_slice(b);
}

pub fn put_str(out: &mut Vec<u8>, s: &str) {
    put_bytes(out, s.as_bytes());
}

pub fn put_biguint(out: &mut Vec<u8>, x: &BigUint) {
    put_bytes(out, &x.to_bytes_be());
}

pub fn put_bigint(out: &mut Vec<u8>, x: &BigInt) {
    let (sign, mag) = x.clone().into_parts();
    out.push(match sign {
        Sign::Minus => 0,
        Sign::NoSign => 1,
        Sign::Plus => 2,
    });
    put_biguint(out, &mag);
}

pub fn put_ratio(out: &mut Vec<u8>, r: &BigRational) {
    put_bigint(out, r.numer());
    put_bigint(out, r.denom());
}

/// Streaming reader matching the `put_*` encoders.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse("truncated record".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let len = self.u64()? as usize;
        self.take(len)
    }

    pub fn str(&mut self) -> Result<String> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Parse("invalid utf8".into()))
    }

    pub fn biguint(&mut self) -> Result<BigUint> {
        Ok(BigUint::from_bytes_be(self.bytes()?))
    }

    pub fn bigint(&mut self) -> Result<BigInt> {
        let tag = self.take(1)?[0];
        let mag = self.biguint()?;
        let sign = match tag {
            0 => Sign::Minus,
            1 => Sign::NoSign,
            2 => Sign::Plus,
            _ => return Err(Error::Parse("bad sign tag".into())),
        };
        Ok(BigInt::from_biguint(sign, mag))
    }

    pub fn ratio(&mut self) -> Result<BigRational> {
        let n = self.bigint()?;
        let d = self.bigint()?;
        if d == BigInt::from(0) {
            return Err(Error::Parse("zero denominator".into()));
        }
        Ok(BigRational::new(n, d))
    }

    pub fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn round_trip() {
        let mut out = Vec::new();
        put_u64(&mut out, 42);
        put_bytes(&mut out, b"hello");
        put_biguint(&mut out, &BigUint::from(123456789u64));
        put_ratio(&mut out, &BigRational::new(BigInt::from(-3), BigInt::from(7)));
        let mut r = Reader::new(&out);
        assert_eq!(r.u64().unwrap(), 42);
        assert_eq!(r.bytes().unwrap(), b"hello");
        assert_eq!(r.biguint().unwrap(), BigUint::from(123456789u64));
        let q = r.ratio().unwrap();
        assert_eq!(q, BigRational::new(BigInt::from(-3), BigInt::from(7)));
        assert!(r.done());
    }

    #[test]
    fn truncated_input_rejected() {
        let mut out = Vec::new();
        put_bytes(&mut out, b"abc");
        out.truncate(out.len() - 1);
        let mut r = Reader::new(&out);
        assert!(r.bytes().is_err());
    }

    #[test]
    fn ratio_is_canonical() {
        // BigRational::new reduces, so 2/4 and 1/2 serialize identically.
        let mut a = Vec::new();
        let mut b = Vec::new();
        put_ratio(&mut a, &BigRational::new(BigInt::from(2), BigInt::from(4)));
        put_ratio(&mut b, &BigRational::new(BigInt::one(), BigInt::from(2)));
        assert_eq!(a, b);
    }
}
