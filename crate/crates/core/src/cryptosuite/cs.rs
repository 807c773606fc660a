//! Cramer-Shoup used as a key encapsulation mechanism.
//!
//! Encapsulation picks a random subgroup element `M = g1^s`, encrypts it as
//! `(u1, u2, e, v) = (g1^r, g2^r, h^r·M, c^r·d^(rα))` with
//! `α = H(u1 ‖ u2 ‖ e) mod q`, and derives the shared key as `KDF(M)`.
//! Decapsulation refuses anything outside the subgroup and anything whose
//! `v` fails the validity check before it touches `M`.

use num_bigint::{BigUint, RandBigInt};
use num_traits::One;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::arith::{derive_rng, mod_inverse};
use super::suite::{AlgorithmSuite, GroupParams, HashId, SuiteId};
use super::SymmetricKey;
use crate::wire::{to_fixed_be, Reader, WireError, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DecapError {
    #[error("ciphertext encoding is malformed")]
    Malformed,
    #[error("ciphertext element outside the prime-order subgroup")]
    NotInSubgroup,
    #[error("ciphertext validity check failed")]
    CheckFailed,
    #[error("ciphertext belongs to a different suite")]
    SuiteMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncapsPublicKey {
    pub suite_id: SuiteId,
    pub group: GroupParams,
    pub c: BigUint,
    pub d: BigUint,
    pub h: BigUint,
}

#[derive(Clone, PartialEq, Eq)]
pub struct EncapsSecretKey {
    pub public: EncapsPublicKey,
    x1: BigUint,
    x2: BigUint,
    y1: BigUint,
    y2: BigUint,
    z: BigUint,
}

impl std::fmt::Debug for EncapsSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EncapsSecretKey")
            .field("suite_id", &self.public.suite_id)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncapsKeyPair {
    pub public: EncapsPublicKey,
    pub secret: EncapsSecretKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsCiphertext {
    pub u1: BigUint,
    pub u2: BigUint,
    pub e: BigUint,
    pub v: BigUint,
}

impl CsCiphertext {
    /// Four fields, each a 32-bit length followed by a fixed-width big-endian
    /// element.
    pub fn encode(&self, group: &GroupParams) -> Vec<u8> {
        let width = group.element_width();
        let mut w = Writer::new();
        for x in [&self.u1, &self.u2, &self.e, &self.v] {
            w.bytes32(&to_fixed_be(x, width));
        }
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8], group: &GroupParams) -> Result<Self, DecapError> {
        let width = group.element_width();
        let mut r = Reader::new(bytes);
        let mut next = || -> Result<BigUint, DecapError> {
            let b = r.bytes32().map_err(|_| DecapError::Malformed)?;
            if b.len() != width {
                return Err(DecapError::Malformed);
            }
            Ok(BigUint::from_bytes_be(b))
        };
        let ct = CsCiphertext {
            u1: next()?,
            u2: next()?,
            e: next()?,
            v: next()?,
        };
        r.finish().map_err(|_| DecapError::Malformed)?;
        Ok(ct)
    }

    pub fn encoded_len(group: &GroupParams) -> usize {
        4 * (4 + group.element_width())
    }
}

fn scalar(rng: &mut ChaCha20Rng, q: &BigUint) -> BigUint {
    rng.gen_biguint_range(&BigUint::one(), q)
}

fn alpha(group: &GroupParams, u1: &BigUint, u2: &BigUint, e: &BigUint) -> BigUint {
    let w = group.element_width();
    let h = group.hash.digest(&[
        b"cs/alpha",
        &to_fixed_be(u1, w),
        &to_fixed_be(u2, w),
        &to_fixed_be(e, w),
    ]);
    BigUint::from_bytes_be(&h) % &group.q
}

fn kdf(hash: HashId, suite_id: SuiteId, group: &GroupParams, m: &BigUint) -> SymmetricKey {
    let bytes = hash.digest(&[b"cs/kdf", &to_fixed_be(m, group.element_width())]);
    SymmetricKey::new(bytes, suite_id)
}

pub fn cs_keygen(suite: &AlgorithmSuite, seed: [u8; 32]) -> EncapsKeyPair {
    let g = &suite.enc;
    let mut rng = derive_rng(&seed, "cs/keygen");
    let (x1, x2, y1, y2, z) = (
        scalar(&mut rng, &g.q),
        scalar(&mut rng, &g.q),
        scalar(&mut rng, &g.q),
        scalar(&mut rng, &g.q),
        scalar(&mut rng, &g.q),
    );
    let c = (g.g1.modpow(&x1, &g.p) * g.g2.modpow(&x2, &g.p)) % &g.p;
    let d = (g.g1.modpow(&y1, &g.p) * g.g2.modpow(&y2, &g.p)) % &g.p;
    let h = g.g1.modpow(&z, &g.p);
    let public = EncapsPublicKey {
        suite_id: suite.suite_id,
        group: g.clone(),
        c,
        d,
        h,
    };
    EncapsKeyPair {
        public: public.clone(),
        secret: EncapsSecretKey {
            public,
            x1,
            x2,
            y1,
            y2,
            z,
        },
    }
}

/// Encapsulation with explicit exponents, exposed for hand-computed checks.
pub fn cs_encapsulate_with(
    pk: &EncapsPublicKey,
    r: &BigUint,
    s: &BigUint,
) -> (CsCiphertext, SymmetricKey) {
    let g = &pk.group;
    let m = g.g1.modpow(s, &g.p);
    let u1 = g.g1.modpow(r, &g.p);
    let u2 = g.g2.modpow(r, &g.p);
    let e = (pk.h.modpow(r, &g.p) * &m) % &g.p;
    let a = alpha(g, &u1, &u2, &e);
    let v = (pk.c.modpow(r, &g.p) * pk.d.modpow(&((r * &a) % &g.q), &g.p)) % &g.p;
    let shared = kdf(g.hash, pk.suite_id, g, &m);
    (CsCiphertext { u1, u2, e, v }, shared)
}

pub fn cs_encapsulate(pk: &EncapsPublicKey, randomness: [u8; 32]) -> (CsCiphertext, SymmetricKey) {
    let mut rng = derive_rng(&randomness, "cs/encapsulate");
    let r = scalar(&mut rng, &pk.group.q);
    let s = scalar(&mut rng, &pk.group.q);
    cs_encapsulate_with(pk, &r, &s)
}

pub fn cs_decapsulate(sk: &EncapsSecretKey, wrapped: &[u8]) -> Result<SymmetricKey, DecapError> {
    let ct = CsCiphertext::decode(wrapped, &sk.public.group)?;
    sk.decapsulate_parsed(&ct)
}

impl EncapsSecretKey {
    pub fn decapsulate_parsed(&self, ct: &CsCiphertext) -> Result<SymmetricKey, DecapError> {
        let g = &self.public.group;
        for x in [&ct.u1, &ct.u2, &ct.e, &ct.v] {
            if !g.contains(x) {
                return Err(DecapError::NotInSubgroup);
            }
        }
        let a = alpha(g, &ct.u1, &ct.u2, &ct.e);
        let e1 = (&self.x1 + &self.y1 * &a) % &g.q;
        let e2 = (&self.x2 + &self.y2 * &a) % &g.q;
        let check = (ct.u1.modpow(&e1, &g.p) * ct.u2.modpow(&e2, &g.p)) % &g.p;
        if check != ct.v {
            return Err(DecapError::CheckFailed);
        }
        let mask = ct.u1.modpow(&self.z, &g.p);
        let mask_inv = mod_inverse(&mask, &g.p).ok_or(DecapError::NotInSubgroup)?;
        let m = (&ct.e * mask_inv) % &g.p;
        Ok(kdf(g.hash, self.public.suite_id, g, &m))
    }

    /// True iff `c = g1^x1·g2^x2`, `d = g1^y1·g2^y2` and `h = g1^z`.
    pub fn is_consistent(&self) -> bool {
        let g = &self.public.group;
        let c = (g.g1.modpow(&self.x1, &g.p) * g.g2.modpow(&self.x2, &g.p)) % &g.p;
        let d = (g.g1.modpow(&self.y1, &g.p) * g.g2.modpow(&self.y2, &g.p)) % &g.p;
        let h = g.g1.modpow(&self.z, &g.p);
        c == self.public.c && d == self.public.d && h == self.public.h
    }

    pub fn exponents(&self) -> [&BigUint; 5] {
        [&self.x1, &self.x2, &self.y1, &self.y2, &self.z]
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        self.public.write(w);
        for x in self.exponents() {
            w.uint(x);
        }
    }

    pub(crate) fn read(r: &mut Reader) -> Result<Self, WireError> {
        let public = EncapsPublicKey::read(r)?;
        let mut take = |f| r.uint(f);
        let sk = EncapsSecretKey {
            x1: take("x1")?,
            x2: take("x2")?,
            y1: take("y1")?,
            y2: take("y2")?,
            z: take("z")?,
            public,
        };
        if !sk.is_consistent() {
            return Err(WireError::invalid(
                "exponents",
                "do not match the public key",
            ));
        }
        Ok(sk)
    }
}

impl EncapsPublicKey {
    pub(crate) fn write(&self, w: &mut Writer) {
        let g = &self.group;
        w.bytes32(&self.suite_id.0.to_be_bytes())
            .uint(&g.p)
            .uint(&g.q)
            .uint(&g.g1)
            .uint(&g.g2)
            .bytes32(&[g.hash as u8])
            .uint(&self.c)
            .uint(&self.d)
            .uint(&self.h);
    }

    pub(crate) fn read(r: &mut Reader) -> Result<Self, WireError> {
        let id: [u8; 2] = r
            .bytes32()?
            .try_into()
            .map_err(|_| WireError::invalid("suite_id", "expected 2 bytes"))?;
        let p = r.uint("p")?;
        let q = r.uint("q")?;
        let g1 = r.uint("g1")?;
        let g2 = r.uint("g2")?;
        let hash = match r.bytes32()? {
            [h] => HashId::from_u8(*h).ok_or_else(|| WireError::invalid("hash", "unknown id"))?,
            _ => return Err(WireError::invalid("hash", "expected 1 byte")),
        };
        let group = GroupParams { p, q, g1, g2, hash };
        let (c, d, h) = (r.uint("c")?, r.uint("d")?, r.uint("h")?);
        if group.p.bits() < 2 || group.q.bits() < 2 {
            return Err(WireError::invalid("group", "degenerate parameters"));
        }
        for (x, name) in [(&c, "c"), (&d, "d"), (&h, "h")] {
            if !group.contains(x) {
                return Err(WireError::invalid(name, "outside the subgroup"));
            }
        }
        Ok(EncapsPublicKey {
            suite_id: SuiteId(u16::from_be_bytes(id)),
            group,
            c,
            d,
            h,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let pk = Self::read(&mut r)?;
        r.finish()?;
        Ok(pk)
    }
}

impl EncapsKeyPair {
    pub fn from_secret(secret: EncapsSecretKey) -> Self {
        EncapsKeyPair {
            public: secret.public.clone(),
            secret,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cryptosuite::arith::big;
    use crate::cryptosuite::suite::{generate_suite, toy_suite};
    use num_traits::ToPrimitive;

    /// Brute-force subgroup of order 11 in Z*_23.
    fn subgroup_23() -> Vec<u64> {
        let mut s: Vec<u64> = (0..11u64)
            .map(|k| (0..k).fold(1, |acc, _| acc * 4 % 23))
            .collect();
        s.sort();
        s
    }

    fn pow_mod(b: u64, e: u64, m: u64) -> u64 {
        (0..e).fold(1, |acc, _| acc * b % m)
    }

    #[test]
    fn toy_keys_live_in_subgroup() {
        let sub = subgroup_23();
        assert_eq!(sub, vec![1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18]);
        let suite = toy_suite();
        for seed in 0..10u8 {
            let kp = cs_keygen(&suite, [seed; 32]);
            for x in [&kp.public.c, &kp.public.d, &kp.public.h] {
                assert!(sub.contains(&x.to_u64().unwrap()));
            }
            assert!(kp.secret.is_consistent());
        }
    }

    #[test]
    fn toy_encapsulation_matches_hand_computation() {
        let suite = toy_suite();
        let kp = cs_keygen(&suite, [1; 32]);
        let (r, s) = (3u64, 5u64);
        let (ct, _) = cs_encapsulate_with(&kp.public, &big(r), &big(s));
        let h = kp.public.h.to_u64().unwrap();
        let m = pow_mod(4, s, 23);
        assert_eq!(ct.u1, big(pow_mod(4, r, 23)));
        assert_eq!(ct.u2, big(pow_mod(9, r, 23)));
        assert_eq!(ct.e, big(pow_mod(h, r, 23) * m % 23));
        let a = alpha(&suite.enc, &ct.u1, &ct.u2, &ct.e).to_u64().unwrap();
        let c = kp.public.c.to_u64().unwrap();
        let d = kp.public.d.to_u64().unwrap();
        assert_eq!(
            ct.v,
            big(pow_mod(c, r, 23) * pow_mod(d, r * a % 11, 23) % 23)
        );
    }

    #[test]
    fn keygen_is_deterministic() {
        let suite = toy_suite();
        assert_eq!(cs_keygen(&suite, [4; 32]), cs_keygen(&suite, [4; 32]));
    }

    #[test]
    fn round_trip_and_randomization() {
        let suite = generate_suite(32, [2; 32]).unwrap();
        let kp = cs_keygen(&suite, [3; 32]);
        let (ct1, k1) = cs_encapsulate(&kp.public, [10; 32]);
        let (_, k2) = cs_encapsulate(&kp.public, [11; 32]);
        assert_ne!(k1, k2);
        let bytes = ct1.encode(&suite.enc);
        assert_eq!(cs_decapsulate(&kp.secret, &bytes).unwrap(), k1);
    }

    #[test]
    fn flipped_e_is_rejected() {
        let suite = generate_suite(32, [2; 32]).unwrap();
        let kp = cs_keygen(&suite, [3; 32]);
        let (mut ct, _) = cs_encapsulate(&kp.public, [10; 32]);
        ct.e ^= BigUint::one();
        let bytes = ct.encode(&suite.enc);
        assert!(cs_decapsulate(&kp.secret, &bytes).is_err());
    }

    #[test]
    fn non_subgroup_u1_is_rejected() {
        let suite = toy_suite();
        let kp = cs_keygen(&suite, [1; 32]);
        let (mut ct, _) = cs_encapsulate(&kp.public, [2; 32]);
        // An element of order 22 (a generator of Z*_23), found by brute force.
        let gen = (2..23u64)
            .find(|&x| (1..22u64).all(|k| pow_mod(x, k, 23) != 1))
            .unwrap();
        assert_eq!(gen, 5);
        ct.u1 = big(gen);
        let bytes = ct.encode(&suite.enc);
        assert_eq!(
            cs_decapsulate(&kp.secret, &bytes),
            Err(DecapError::NotInSubgroup)
        );
    }

    #[test]
    fn wrong_key_is_rejected() {
        let suite = generate_suite(32, [2; 32]).unwrap();
        let a = cs_keygen(&suite, [3; 32]);
        let b = cs_keygen(&suite, [4; 32]);
        let (ct, _) = cs_encapsulate(&a.public, [10; 32]);
        assert_eq!(
            cs_decapsulate(&b.secret, &ct.encode(&suite.enc)),
            Err(DecapError::CheckFailed)
        );
    }

    #[test]
    fn garbage_bytes_are_malformed() {
        let kp = cs_keygen(&toy_suite(), [1; 32]);
        assert_eq!(
            cs_decapsulate(&kp.secret, &[1, 2, 3]),
            Err(DecapError::Malformed)
        );
        assert_eq!(cs_decapsulate(&kp.secret, &[]), Err(DecapError::Malformed));
    }
}
