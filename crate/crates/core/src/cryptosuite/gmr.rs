//! Stateful tree signatures over the claw-free permutation pair
//! `f0(x) = x² mod n`, `f1(x) = 4x² mod n` on the quadratic residues of a
//! Blum-Williams modulus.
//!
//! Every tree node owns a reference value `R` (a quadratic residue derived
//! from the secret tree seed). An internal node authenticates its two
//! children with `F⁻¹_{H(R_left ‖ R_right)}(R)`; a leaf signs one message
//! digest with `F⁻¹_{H(msg)}(R_leaf)`. Each reference is inverted under
//! exactly one bit string, so two valid signatures under the same reference
//! would reveal a claw.
//!
//! Verification runs bottom-up: the leaf reference is recomputed from the
//! message and leaf authenticator, then each parent reference from its
//! authenticator and the sibling reference carried in the signature, until
//! the recomputed root equals the public root. A signature therefore holds
//! `2d + 1` ring elements.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use super::arith::{self, big, derive_rng};
use super::suite::{AlgorithmSuite, HashId, SuiteId};
use super::SuiteError;
use crate::wire::{to_fixed_be, Reader, WireError, Writer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignError {
    #[error("signer capacity exhausted: all {0} leaves used")]
    CapacityExhausted(u64),
}

/// The claw-free pair for one modulus, optionally with its trapdoor.
#[derive(Debug, Clone)]
pub struct ClawFreePair {
    n: BigUint,
    trapdoor: Option<(BigUint, BigUint)>,
    four_inv: BigUint,
    small: Option<SmallRing>,
}

#[derive(Debug, Clone, Copy)]
struct SmallRing {
    n: u64,
    p: u64,
    q: u64,
    four_inv: u64,
    p_exp: u64,
    q_exp: u64,
    q_inv_p: u64,
}

impl ClawFreePair {
    pub fn public(n: BigUint) -> Self {
        let four_inv = arith::mod_inverse(&big(4), &n).expect("modulus is odd");
        let small = n.to_u64().filter(|&v| v < (1 << 62)).map(|nv| SmallRing {
            n: nv,
            p: 0,
            q: 0,
            four_inv: four_inv.to_u64().unwrap(),
            p_exp: 0,
            q_exp: 0,
            q_inv_p: 0,
        });
        ClawFreePair {
            n,
            trapdoor: None,
            four_inv,
            small,
        }
    }

    pub fn with_trapdoor(p: BigUint, q: BigUint) -> Self {
        let mut pair = Self::public(&p * &q);
        if let Some(ring) = pair.small.as_mut() {
            let (pv, qv) = (p.to_u64().unwrap(), q.to_u64().unwrap());
            ring.p = pv;
            ring.q = qv;
            ring.p_exp = (pv + 1) / 4;
            ring.q_exp = (qv + 1) / 4;
            ring.q_inv_p = arith::mod_inverse(&q, &p).unwrap().to_u64().unwrap();
        }
        pair.trapdoor = Some((p, q));
        pair
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn f(&self, bit: bool, x: &BigUint) -> BigUint {
        let sq = (x * x) % &self.n;
        if bit {
            (sq * 4u32) % &self.n
        } else {
            sq
        }
    }

    /// Inverse of `f_bit` on the quadratic residues. Requires the trapdoor.
    pub fn f_inv(&self, bit: bool, y: &BigUint) -> BigUint {
        let (p, q) = self
            .trapdoor
            .as_ref()
            .expect("inversion needs the factorization");
        let y = if bit {
            (y * &self.four_inv) % &self.n
        } else {
            y.clone()
        };
        let rp = arith::sqrt_blum_prime(&(&y % p), p);
        let rq = arith::sqrt_blum_prime(&(&y % q), q);
        arith::crt(&rp, p, &rq, q)
    }

    /// `F_b(x) = f_{b1}(f_{b2}(… f_{bk}(x)))` for the bit string of `digest`,
    /// most significant bit first.
    pub fn forward(&self, digest: &[u8; 32], x: &BigUint) -> BigUint {
        if let (Some(r), Some(xv)) = (self.small, x.to_u64()) {
            let mut acc = xv % r.n;
            for i in (0..256).rev() {
                acc = arith::mulmod_u64(acc, acc, r.n);
                if bit_at(digest, i) {
                    acc = arith::mulmod_u64(acc, 4, r.n);
                }
            }
            return big(acc);
        }
        let mut acc = x % &self.n;
        for i in (0..256).rev() {
            acc = self.f(bit_at(digest, i), &acc);
        }
        acc
    }

    /// Inverse of [`forward`](Self::forward) on the quadratic residues.
    pub fn inverse(&self, digest: &[u8; 32], y: &BigUint) -> BigUint {
        if let (Some(r), Some(yv)) = (self.small, y.to_u64()) {
            if r.p != 0 {
                let mut acc = yv % r.n;
                for i in 0..256 {
                    if bit_at(digest, i) {
                        acc = arith::mulmod_u64(acc, r.four_inv, r.n);
                    }
                    let sp = arith::powmod_u64(acc % r.p, r.p_exp, r.p);
                    let sq = arith::powmod_u64(acc % r.q, r.q_exp, r.q);
                    let diff = (sp + r.p - sq % r.p) % r.p;
                    let t = arith::mulmod_u64(diff, r.q_inv_p, r.p);
                    acc = (sq as u128 + r.q as u128 * t as u128) as u64 % r.n;
                }
                return big(acc);
            }
        }
        let mut acc = y % &self.n;
        for i in 0..256 {
            acc = self.f_inv(bit_at(digest, i), &acc);
        }
        acc
    }
}

fn bit_at(digest: &[u8; 32], i: usize) -> bool {
    (digest[i / 8] >> (7 - (i % 8))) & 1 == 1
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GmrPublicKey {
    pub suite_id: SuiteId,
    pub modulus: BigUint,
    pub depth: u8,
    pub reference: BigUint,
    pub hash: HashId,
    /// Reference value of the tree root.
    pub root: BigUint,
}

impl GmrPublicKey {
    pub fn capacity(&self) -> u64 {
        1u64 << self.depth
    }

    fn width(&self) -> usize {
        arith::byte_len(&self.modulus)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.into_bytes()
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.bytes32(&self.suite_id.0.to_be_bytes())
            .uint(&self.modulus)
            .bytes32(&[self.depth])
            .uint(&self.reference)
            .bytes32(&[self.hash as u8])
            .uint(&self.root);
    }

    pub(crate) fn read(r: &mut Reader) -> Result<Self, WireError> {
        let id = r.bytes32()?;
        let id: [u8; 2] = id
            .try_into()
            .map_err(|_| WireError::invalid("suite_id", "expected 2 bytes"))?;
        let modulus = r.uint("modulus")?;
        let depth = match r.bytes32()? {
            [d] => *d,
            _ => return Err(WireError::invalid("depth", "expected 1 byte")),
        };
        let reference = r.uint("reference")?;
        let hash = match r.bytes32()? {
            [h] => HashId::from_u8(*h).ok_or_else(|| WireError::invalid("hash", "unknown id"))?,
            _ => return Err(WireError::invalid("hash", "expected 1 byte")),
        };
        let root = r.uint("root")?;
        if modulus.is_even() || modulus.bits() < 3 {
            return Err(WireError::invalid("modulus", "not an odd modulus"));
        }
        if depth == 0 || depth > 24 {
            return Err(WireError::invalid("depth", "out of range"));
        }
        Ok(GmrPublicKey {
            suite_id: SuiteId(u16::from_be_bytes(id)),
            modulus,
            depth,
            reference,
            hash,
            root,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let pk = Self::read(&mut r)?;
        r.finish()?;
        Ok(pk)
    }

    fn message_digest(&self, message: &[u8]) -> [u8; 32] {
        let r = to_fixed_be(&self.reference, self.width());
        self.hash.digest(&[b"gmr/msg", &r, message])
    }

    fn node_digest(&self, left: &BigUint, right: &BigUint) -> [u8; 32] {
        let w = self.width();
        self.hash
            .digest(&[b"gmr/node", &to_fixed_be(left, w), &to_fixed_be(right, w)])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub leaf: u32,
    pub leaf_auth: BigUint,
    /// `(sibling reference, parent authenticator)` from the leaf level up.
    pub path: Vec<(BigUint, BigUint)>,
}

impl Signature {
    pub fn encode(&self, pk: &GmrPublicKey) -> Vec<u8> {
        let width = pk.width();
        let mut w = Writer::new();
        w.u32(self.leaf).u16(width as u16);
        w.uint_fixed(&self.leaf_auth, width);
        for (sib, auth) in &self.path {
            w.uint_fixed(sib, width).uint_fixed(auth, width);
        }
        w.into_bytes()
    }

    /// Parses a signature for `pk`. Any length or width mismatch is `None`.
    pub fn decode(bytes: &[u8], pk: &GmrPublicKey) -> Option<Self> {
        let width = pk.width();
        let mut r = Reader::new(bytes);
        let leaf = r.u32().ok()?;
        if r.u16().ok()? as usize != width {
            return None;
        }
        let leaf_auth = r.uint_fixed(width).ok()?;
        let mut path = Vec::with_capacity(pk.depth as usize);
        for _ in 0..pk.depth {
            let sib = r.uint_fixed(width).ok()?;
            let auth = r.uint_fixed(width).ok()?;
            path.push((sib, auth));
        }
        r.finish().ok()?;
        Some(Signature {
            leaf,
            leaf_auth,
            path,
        })
    }
}

/// Secret half: the factorization plus the seed from which node references
/// are derived.
#[derive(Clone)]
pub struct GmrSecret {
    p: BigUint,
    q: BigUint,
    tree_seed: [u8; 32],
}

impl std::fmt::Debug for GmrSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("GmrSecret { .. }")
    }
}

impl GmrSecret {
    pub fn factors(&self) -> (&BigUint, &BigUint) {
        (&self.p, &self.q)
    }

    pub fn tree_seed(&self) -> &[u8; 32] {
        &self.tree_seed
    }
}

/// A stateful signer. The leaf counter only moves forward.
#[derive(Clone, Debug)]
pub struct SignatureKeyPair {
    public: GmrPublicKey,
    secret: GmrSecret,
    next_leaf: u64,
    pair: ClawFreePair,
    memo: BTreeMap<(u8, u32), BigUint>,
}

pub fn gmr_keygen(suite: &AlgorithmSuite, seed: [u8; 32]) -> Result<SignatureKeyPair, SuiteError> {
    let bits = suite.sig.modulus_bits();
    let mut rng = derive_rng(&seed, "gmr/modulus");
    let (n, p, q) = super::suite::blum_williams_modulus(bits, &mut rng)?;
    let tree_seed = arith::derive_seed(&seed, "gmr/tree");
    let secret = GmrSecret { p, q, tree_seed };
    let mut public = GmrPublicKey {
        suite_id: suite.suite_id,
        modulus: n,
        depth: suite.sig.depth,
        reference: suite.sig.reference.clone(),
        hash: suite.hash(),
        root: BigUint::zero(),
    };
    // The suite reference is defined mod the suite modulus; fold it into this
    // signer's ring so digests stay well-defined.
    public.reference = &public.reference % &public.modulus;
    let kp = SignatureKeyPair::from_parts(public, secret, 0);
    let root = kp.node_reference(0, 0);
    let mut kp = kp;
    kp.public.root = root;
    Ok(kp)
}

impl SignatureKeyPair {
    fn from_parts(public: GmrPublicKey, secret: GmrSecret, next_leaf: u64) -> Self {
        let pair = ClawFreePair::with_trapdoor(secret.p.clone(), secret.q.clone());
        SignatureKeyPair {
            public,
            secret,
            next_leaf,
            pair,
            memo: BTreeMap::new(),
        }
    }

    pub fn public(&self) -> &GmrPublicKey {
        &self.public
    }

    pub fn secret(&self) -> &GmrSecret {
        &self.secret
    }

    pub fn next_leaf(&self) -> u64 {
        self.next_leaf
    }

    pub fn remaining(&self) -> u64 {
        self.public.capacity() - self.next_leaf
    }

    pub fn claw_free_pair(&self) -> &ClawFreePair {
        &self.pair
    }

    /// Reference value of node `(level, index)`: a quadratic residue derived
    /// from the tree seed.
    pub fn node_reference(&self, level: u8, index: u32) -> BigUint {
        let n = &self.public.modulus;
        for ctr in 0u32.. {
            let h = self.public.hash.digest(&[
                b"gmr/ref",
                &self.secret.tree_seed,
                &[level],
                &index.to_be_bytes(),
                &ctr.to_be_bytes(),
            ]);
            let s = BigUint::from_bytes_be(&h) % n;
            if !s.is_zero() && s.gcd(n).is_one() {
                return (&s * &s) % n;
            }
        }
        unreachable!()
    }

    fn node_auth(&mut self, level: u8, index: u32) -> BigUint {
        if let Some(v) = self.memo.get(&(level, index)) {
            return v.clone();
        }
        let left = self.node_reference(level + 1, index * 2);
        let right = self.node_reference(level + 1, index * 2 + 1);
        let digest = self.public.node_digest(&left, &right);
        let r = self.node_reference(level, index);
        let auth = canonical(&self.pair.inverse(&digest, &r), &self.public.modulus);
        self.memo.insert((level, index), auth.clone());
        auth
    }

    /// Signs one message, consuming exactly one leaf.
    pub fn sign(&mut self, message: &[u8]) -> Result<Signature, SignError> {
        let cap = self.public.capacity();
        if self.next_leaf >= cap {
            return Err(SignError::CapacityExhausted(cap));
        }
        let leaf = self.next_leaf as u32;
        self.next_leaf += 1;
        let depth = self.public.depth;
        let digest = self.public.message_digest(message);
        let leaf_ref = self.node_reference(depth, leaf);
        let leaf_auth = canonical(&self.pair.inverse(&digest, &leaf_ref), &self.public.modulus);
        let mut path = Vec::with_capacity(depth as usize);
        let mut index = leaf;
        for level in (0..depth).rev() {
            let sibling = self.node_reference(level + 1, index ^ 1);
            let parent = index >> 1;
            path.push((sibling, self.node_auth(level, parent)));
            index = parent;
        }
        Ok(Signature {
            leaf,
            leaf_auth,
            path,
        })
    }

    pub fn sign_bytes(&mut self, message: &[u8]) -> Result<Vec<u8>, SignError> {
        let sig = self.sign(message)?;
        Ok(sig.encode(&self.public))
    }

    /// Serialized signer, including the leaf counter. The authenticator memo
    /// is recomputed on demand after restore.
    pub fn encode_secret(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.public.write(&mut w);
        w.uint(&self.secret.p)
            .uint(&self.secret.q)
            .bytes32(&self.secret.tree_seed)
            .bytes32(&self.next_leaf.to_be_bytes());
        w.into_bytes()
    }

    pub(crate) fn read_secret(r: &mut Reader) -> Result<Self, WireError> {
        let public = GmrPublicKey::read(r)?;
        let p = r.uint("p")?;
        let q = r.uint("q")?;
        let seed: [u8; 32] = r
            .bytes32()?
            .try_into()
            .map_err(|_| WireError::invalid("tree_seed", "expected 32 bytes"))?;
        let next: [u8; 8] = r
            .bytes32()?
            .try_into()
            .map_err(|_| WireError::invalid("next_leaf", "expected 8 bytes"))?;
        let next_leaf = u64::from_be_bytes(next);
        if &p * &q != public.modulus {
            return Err(WireError::invalid(
                "factors",
                "do not multiply to the modulus",
            ));
        }
        if next_leaf > public.capacity() {
            return Err(WireError::invalid("next_leaf", "beyond tree capacity"));
        }
        Ok(Self::from_parts(
            public,
            GmrSecret {
                p,
                q,
                tree_seed: seed,
            },
            next_leaf,
        ))
    }

    pub fn decode_secret(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let kp = Self::read_secret(&mut r)?;
        r.finish()?;
        Ok(kp)
    }
}

/// Chooses the representative of `{x, n − x}` below n/2. Both square to the
/// same residue, so verifiers only accept the small one.
fn canonical(x: &BigUint, n: &BigUint) -> BigUint {
    let other = n - x;
    if &other < x {
        other
    } else {
        x.clone()
    }
}

fn acceptable_element(x: &BigUint, n: &BigUint) -> bool {
    !x.is_zero() && (x << 1u32) < *n && arith::jacobi(x, n) == 1
}

/// Stateless verification. Malformed encodings are a plain rejection.
pub fn gmr_verify(public: &GmrPublicKey, message: &[u8], signature: &[u8]) -> bool {
    match Signature::decode(signature, public) {
        Some(sig) => verify_parsed(public, message, &sig),
        None => false,
    }
}

pub fn verify_parsed(public: &GmrPublicKey, message: &[u8], sig: &Signature) -> bool {
    let n = &public.modulus;
    if u64::from(sig.leaf) >= public.capacity() || sig.path.len() != public.depth as usize {
        return false;
    }
    if !acceptable_element(&sig.leaf_auth, n) {
        return false;
    }
    let pair = ClawFreePair::public(n.clone());
    let mut current = pair.forward(&public.message_digest(message), &sig.leaf_auth);
    let mut index = sig.leaf;
    for (sibling, auth) in &sig.path {
        if sibling >= n || !acceptable_element(auth, n) {
            return false;
        }
        let (left, right) = if index & 1 == 0 {
            (&current, sibling)
        } else {
            (sibling, &current)
        };
        let digest = public.node_digest(left, right);
        current = pair.forward(&digest, auth);
        index >>= 1;
    }
    current == public.root
}
