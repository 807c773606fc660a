//! Pseudo-one-time pad driven by the x² mod n generator.
//!
//! `x0 = (H(key) mod n)²`, then `x_{i+1} = x_i² mod n`; every iterate
//! contributes its least significant bit. Bits are packed most significant
//! first, eight per byte.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use super::arith::mulmod_u64;
use super::suite::AlgorithmSuite;
use super::SymmetricKey;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeystreamError {
    #[error("generator seed shares a factor with the modulus; rekey")]
    Rekey,
    #[error("keystream of {stream} bytes cannot cover {data} bytes")]
    LengthMismatch { stream: usize, data: usize },
}

#[derive(Debug, Clone)]
enum State {
    Small { n: u64, x: u64 },
    Big { n: BigUint, x: BigUint },
}

/// The squaring generator itself, independent of how its seed is derived.
#[derive(Debug, Clone)]
pub struct SquaringGenerator {
    state: State,
}

impl SquaringGenerator {
    /// Starts from an explicit `x0` (not squared again).
    pub fn from_state(n: &BigUint, x0: &BigUint) -> Self {
        let state = match (n.to_u64(), x0.to_u64()) {
            (Some(nv), Some(xv)) if nv < (1 << 63) => State::Small { n: nv, x: xv % nv },
            _ => State::Big {
                n: n.clone(),
                x: x0 % n,
            },
        };
        SquaringGenerator { state }
    }

    /// Advances one iteration and returns the LSB of the new iterate.
    pub fn next_bit(&mut self) -> bool {
        match &mut self.state {
            State::Small { n, x } => {
                *x = mulmod_u64(*x, *x, *n);
                *x & 1 == 1
            }
            State::Big { n, x } => {
                *x = (&*x * &*x) % &*n;
                x.bit(0)
            }
        }
    }

    pub fn fill(&mut self, out: &mut [u8]) {
        for byte in out.iter_mut() {
            let mut b = 0u8;
            for _ in 0..8 {
                b = (b << 1) | self.next_bit() as u8;
            }
            *byte = b;
        }
    }

    pub fn state(&self) -> BigUint {
        match &self.state {
            State::Small { x, .. } => BigUint::from(*x),
            State::Big { x, .. } => x.clone(),
        }
    }
}

/// The squared starting value for `key` under `suite`.
pub fn initial_state(
    key: &SymmetricKey,
    suite: &AlgorithmSuite,
) -> Result<BigUint, KeystreamError> {
    let n = &suite.stream.modulus;
    let h = suite.hash().digest(&[b"potp/seed", key.as_bytes()]);
    let s = BigUint::from_bytes_be(&h) % n;
    if s.is_zero() || !s.gcd(n).is_one() {
        return Err(KeystreamError::Rekey);
    }
    Ok((&s * &s) % n)
}

pub fn keystream(
    key: &SymmetricKey,
    suite: &AlgorithmSuite,
    length: usize,
) -> Result<Vec<u8>, KeystreamError> {
    let x0 = initial_state(key, suite)?;
    let mut gen = SquaringGenerator::from_state(&suite.stream.modulus, &x0);
    let mut out = vec![0u8; length];
    gen.fill(&mut out);
    Ok(out)
}

pub fn potp_xor(stream: &[u8], data: &[u8]) -> Result<Vec<u8>, KeystreamError> {
    if stream.len() < data.len() {
        return Err(KeystreamError::LengthMismatch {
            stream: stream.len(),
            data: data.len(),
        });
    }
    Ok(data.iter().zip(stream).map(|(d, s)| d ^ s).collect())
}

/// Encrypts or decrypts `data` in one step.
pub fn apply_keystream(
    key: &SymmetricKey,
    suite: &AlgorithmSuite,
    data: &[u8],
) -> Result<Vec<u8>, KeystreamError> {
    let stream = keystream(key, suite, data.len())?;
    potp_xor(&stream, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cryptosuite::arith::big;
    use crate::cryptosuite::suite::{generate_suite, toy_suite};

    #[test]
    fn hand_iterated_mod_77() {
        let mut g = SquaringGenerator::from_state(&big(77), &big(2));
        let mut iterates = Vec::new();
        let mut bits = Vec::new();
        for _ in 0..5 {
            bits.push(g.next_bit() as u8);
            iterates.push(g.state());
        }
        assert_eq!(iterates, [4u64, 16, 25, 9, 4].map(big).to_vec());
        assert_eq!(bits, vec![0, 0, 1, 1, 0]);
    }

    #[test]
    fn big_and_small_paths_agree() {
        let n = big(1_000_003) * big(999_983);
        let mut a = SquaringGenerator::from_state(&n, &big(12345));
        let mut b = SquaringGenerator {
            state: State::Big {
                n: n.clone(),
                x: big(12345),
            },
        };
        for _ in 0..500 {
            assert_eq!(a.next_bit(), b.next_bit());
        }
    }

    #[test]
    fn empty_stream() {
        let suite = generate_suite(32, [1; 32]).unwrap();
        let key = SymmetricKey::new([3; 32], suite.suite_id);
        assert!(keystream(&key, &suite, 0).unwrap().is_empty());
    }

    #[test]
    fn xor_is_an_involution() {
        let suite = generate_suite(32, [1; 32]).unwrap();
        let key = SymmetricKey::new([3; 32], suite.suite_id);
        let data = b"net key material in transit".to_vec();
        let s = keystream(&key, &suite, data.len()).unwrap();
        let once = potp_xor(&s, &data).unwrap();
        assert_ne!(once, data);
        assert_eq!(potp_xor(&s, &once).unwrap(), data);
    }

    #[test]
    fn short_stream_is_an_error() {
        assert!(potp_xor(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn toy_modulus_reaches_rekey() {
        // With n = 77 some keys hash onto multiples of 7 or 11.
        let suite = toy_suite();
        let hits = (0..=255u8)
            .filter(|&b| {
                keystream(&SymmetricKey::new([b; 32], suite.suite_id), &suite, 4)
                    == Err(KeystreamError::Rekey)
            })
            .count();
        assert!(hits > 0);
    }
}
