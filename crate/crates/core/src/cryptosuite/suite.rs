use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::RngCore;
use sha2::{Digest, Sha256, Sha512_256};

use super::arith::{self, big, derive_rng, is_probable_prime};
use super::SuiteError;
use crate::wire::{Reader, WireError, Writer};

pub const SUITE_MAGIC: &[u8; 4] = b"SUIT";
pub const SUITE_FORMAT_VERSION: u16 = 1;
pub const DEFAULT_TREE_DEPTH: u8 = 10;
pub const TOY_TREE_DEPTH: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SuiteId(pub u16);

impl fmt::Display for SuiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "suite-{}", self.0)
    }
}

/// The one hash primitive of a suite. It is used for message digests, the
/// Cramer-Shoup α, the KEM key derivation and keystream seeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum HashId {
    Sha256 = 1,
    Sha512_256 = 2,
}

impl HashId {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(HashId::Sha256),
            2 => Some(HashId::Sha512_256),
            _ => None,
        }
    }

    /// Hashes the concatenation of `parts`, each preceded by its 32-bit length.
    pub fn digest(self, parts: &[&[u8]]) -> [u8; 32] {
        fn run<D: Digest>(parts: &[&[u8]]) -> [u8; 32] {
            let mut h = D::new();
            for p in parts {
                h.update((p.len() as u32).to_be_bytes());
                h.update(p);
            }
            let out = h.finalize();
            let mut buf = [0u8; 32];
            buf.copy_from_slice(&out[..32]);
            buf
        }
        match self {
            HashId::Sha256 => run::<Sha256>(parts),
            HashId::Sha512_256 => run::<Sha512_256>(parts),
        }
    }
}

/// Public parameters of the claw-free signature family.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignatureParams {
    /// Reference Blum-Williams modulus. Signers generate their own modulus of
    /// the same bit length; this one fixes the size and anchors the suite.
    pub modulus: BigUint,
    pub depth: u8,
    /// Public quadratic residue mixed into every message digest.
    pub reference: BigUint,
}

impl SignatureParams {
    pub fn modulus_bits(&self) -> u64 {
        self.modulus.bits()
    }
}

/// Prime-order subgroup parameters for Cramer-Shoup.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupParams {
    pub p: BigUint,
    pub q: BigUint,
    pub g1: BigUint,
    pub g2: BigUint,
    pub hash: HashId,
}

impl GroupParams {
    pub fn element_width(&self) -> usize {
        arith::byte_len(&self.p)
    }

    /// True iff `x` is a member of the order-q subgroup of Z*_p.
    pub fn contains(&self, x: &BigUint) -> bool {
        x.bits() > 0 && x < &self.p && x.modpow(&self.q, &self.p).is_one()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamParams {
    /// Blum integer driving the squaring generator.
    pub modulus: BigUint,
    pub bits_per_iteration: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlgorithmSuite {
    pub suite_id: SuiteId,
    pub version: u16,
    pub sig: SignatureParams,
    pub enc: GroupParams,
    pub stream: StreamParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecurityLevel {
    Toy32,
    Bits512,
    Bits1024,
    Bits2048,
}

impl SecurityLevel {
    pub fn from_bits(bits: u32) -> Result<Self, SuiteError> {
        match bits {
            32 => Ok(SecurityLevel::Toy32),
            512 => Ok(SecurityLevel::Bits512),
            1024 => Ok(SecurityLevel::Bits1024),
            2048 => Ok(SecurityLevel::Bits2048),
            other => Err(SuiteError::UnsupportedSize(other)),
        }
    }

    fn modulus_bits(self) -> u64 {
        match self {
            SecurityLevel::Toy32 => 32,
            SecurityLevel::Bits512 => 512,
            SecurityLevel::Bits1024 => 1024,
            SecurityLevel::Bits2048 => 2048,
        }
    }

    fn subgroup_bits(self) -> u64 {
        match self {
            SecurityLevel::Toy32 => 24,
            _ => 256,
        }
    }
}

/// Explicit primes overriding the seeded search. Used to pin the tiny
/// exhaustively-checkable parameter set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PinnedPrimes {
    pub sig: (u64, u64),
    pub stream: (u64, u64),
    pub group_p: u64,
    pub group_q: u64,
    pub g1: u64,
    pub g2: u64,
    pub reference: u64,
}

impl PinnedPrimes {
    /// n_sig = 3·7 = 21, n_str = 7·11 = 77, p = 23 with q = 11, g1 = 4, g2 = 9.
    pub fn toy() -> Self {
        PinnedPrimes {
            sig: (3, 7),
            stream: (7, 11),
            group_p: 23,
            group_q: 11,
            g1: 4,
            g2: 9,
            reference: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub security_bits: u32,
    pub seed: [u8; 32],
    pub suite_id: SuiteId,
    pub version: u16,
    pub depth: u8,
    pub hash: HashId,
    pub pinned: Option<PinnedPrimes>,
}

impl SuiteOptions {
    pub fn new(security_bits: u32, seed: [u8; 32]) -> Self {
        SuiteOptions {
            security_bits,
            seed,
            suite_id: SuiteId(1),
            version: 1,
            depth: DEFAULT_TREE_DEPTH,
            hash: HashId::Sha256,
            pinned: None,
        }
    }

    pub fn suite_id(mut self, id: u16) -> Self {
        self.suite_id = SuiteId(id);
        self
    }

    pub fn depth(mut self, depth: u8) -> Self {
        self.depth = depth;
        self
    }

    pub fn hash(mut self, hash: HashId) -> Self {
        self.hash = hash;
        self
    }

    pub fn pinned(mut self, primes: PinnedPrimes) -> Self {
        self.pinned = Some(primes);
        self
    }
}

/// Factorizations behind a generated suite. Only exposed so tests can check
/// the modulus structure; a deployed generator discards them.
#[derive(Debug, Clone)]
pub struct SuiteWitness {
    pub sig_factors: (BigUint, BigUint),
    pub stream_factors: (BigUint, BigUint),
}

pub fn generate_suite(security_bits: u32, seed: [u8; 32]) -> Result<AlgorithmSuite, SuiteError> {
    generate_suite_with(&SuiteOptions::new(security_bits, seed)).map(|(s, _)| s)
}

/// The pinned toy suite: n_sig = 21, n_str = 77, p = 23, q = 11, depth 4.
pub fn toy_suite() -> AlgorithmSuite {
    let opts = SuiteOptions::new(32, [0; 32])
        .depth(TOY_TREE_DEPTH)
        .pinned(PinnedPrimes::toy());
    generate_suite_with(&opts)
        .expect("pinned toy parameters are valid")
        .0
}

pub fn generate_suite_with(
    opts: &SuiteOptions,
) -> Result<(AlgorithmSuite, SuiteWitness), SuiteError> {
    let level = SecurityLevel::from_bits(opts.security_bits)?;
    if opts.depth == 0 || opts.depth > 24 {
        return Err(SuiteError::Invalid(format!(
            "tree depth {} out of range 1..=24",
            opts.depth
        )));
    }
    let (suite, witness) = match &opts.pinned {
        Some(pins) => pinned_suite(opts, pins)?,
        None => searched_suite(opts, level)?,
    };
    suite.validate()?;
    Ok((suite, witness))
}

fn pinned_suite(
    opts: &SuiteOptions,
    pins: &PinnedPrimes,
) -> Result<(AlgorithmSuite, SuiteWitness), SuiteError> {
    let (sp, sq) = (big(pins.sig.0), big(pins.sig.1));
    let (tp, tq) = (big(pins.stream.0), big(pins.stream.1));
    let mut rng = derive_rng(&opts.seed, "pinned");
    for (p, what) in [(&sp, "sig"), (&sq, "sig"), (&tp, "stream"), (&tq, "stream")] {
        if !is_probable_prime(p, &mut rng) {
            return Err(SuiteError::Invalid(format!(
                "pinned {what} factor {p} is not prime"
            )));
        }
    }
    let blum_williams = (&sp % 8u32 == big(3) && &sq % 8u32 == big(7))
        || (&sp % 8u32 == big(7) && &sq % 8u32 == big(3));
    if !blum_williams {
        return Err(SuiteError::Invalid(
            "pinned signature primes are not 3 and 7 mod 8".into(),
        ));
    }
    if &tp % 4u32 != big(3) || &tq % 4u32 != big(3) {
        return Err(SuiteError::Invalid(
            "pinned stream primes are not 3 mod 4".into(),
        ));
    }
    let suite = AlgorithmSuite {
        suite_id: opts.suite_id,
        version: opts.version,
        sig: SignatureParams {
            modulus: &sp * &sq,
            depth: opts.depth,
            reference: big(pins.reference),
        },
        enc: GroupParams {
            p: big(pins.group_p),
            q: big(pins.group_q),
            g1: big(pins.g1),
            g2: big(pins.g2),
            hash: opts.hash,
        },
        stream: StreamParams {
            modulus: &tp * &tq,
            bits_per_iteration: 1,
        },
    };
    Ok((
        suite,
        SuiteWitness {
            sig_factors: (sp, sq),
            stream_factors: (tp, tq),
        },
    ))
}

/// Blum-Williams modulus of exactly `bits` bits: factors ≡ 3 and 7 (mod 8).
pub fn blum_williams_modulus(
    bits: u64,
    rng: &mut impl RngCore,
) -> Result<(BigUint, BigUint, BigUint), SuiteError> {
    let pbits = bits / 2;
    let qbits = bits - pbits;
    let p = arith::random_prime_congruent(pbits, 3, 8, rng)
        .ok_or_else(|| SuiteError::Invalid(format!("no {pbits}-bit prime ≡ 3 mod 8")))?;
    let q = arith::random_prime_congruent(qbits, 7, 8, rng)
        .ok_or_else(|| SuiteError::Invalid(format!("no {qbits}-bit prime ≡ 7 mod 8")))?;
    Ok((&p * &q, p, q))
}

/// Blum integer of exactly `bits` bits: distinct factors ≡ 3 (mod 4).
pub fn blum_modulus(
    bits: u64,
    rng: &mut impl RngCore,
) -> Result<(BigUint, BigUint, BigUint), SuiteError> {
    let pbits = bits / 2;
    let qbits = bits - pbits;
    let p = arith::random_prime_congruent(pbits, 3, 4, rng)
        .ok_or_else(|| SuiteError::Invalid(format!("no {pbits}-bit Blum prime")))?;
    for _ in 0..64 {
        let q = arith::random_prime_congruent(qbits, 3, 4, rng)
            .ok_or_else(|| SuiteError::Invalid(format!("no {qbits}-bit Blum prime")))?;
        if q != p {
            return Ok((&p * &q, p, q));
        }
    }
    Err(SuiteError::Invalid(
        "could not find distinct Blum primes".into(),
    ))
}

fn searched_suite(
    opts: &SuiteOptions,
    level: SecurityLevel,
) -> Result<(AlgorithmSuite, SuiteWitness), SuiteError> {
    let bits = level.modulus_bits();

    let mut rng = derive_rng(&opts.seed, "suite/sig");
    let (n_sig, sp, sq) = blum_williams_modulus(bits, &mut rng)?;
    let reference = loop {
        let x = rng.gen_biguint_below(&n_sig);
        if x.bits() > 0 && x.gcd(&n_sig).is_one() {
            break x.modpow(&big(2), &n_sig);
        }
    };

    let mut rng = derive_rng(&opts.seed, "suite/stream");
    let (n_str, tp, tq) = blum_modulus(bits, &mut rng)?;

    let mut rng = derive_rng(&opts.seed, "suite/group");
    let (p, q) = (0..64)
        .find_map(|_| {
            let q = arith::random_prime_congruent(level.subgroup_bits(), 1, 2, &mut rng)?;
            let p = arith::schnorr_prime(bits, &q, &mut rng)?;
            Some((p, q))
        })
        .ok_or_else(|| SuiteError::Invalid("no group prime p = kq + 1".into()))?;
    let cofactor = (&p - 1u32) / &q;
    let mut generator = || loop {
        let h = rng.gen_biguint_range(&big(2), &(&p - 1u32));
        let g = h.modpow(&cofactor, &p);
        if !g.is_one() {
            break g;
        }
    };
    let g1 = generator();
    let g2 = loop {
        let g = generator();
        if g != g1 {
            break g;
        }
    };

    let suite = AlgorithmSuite {
        suite_id: opts.suite_id,
        version: opts.version,
        sig: SignatureParams {
            modulus: n_sig,
            depth: opts.depth,
            reference,
        },
        enc: GroupParams {
            p,
            q,
            g1,
            g2,
            hash: opts.hash,
        },
        stream: StreamParams {
            modulus: n_str,
            bits_per_iteration: 1,
        },
    };
    Ok((
        suite,
        SuiteWitness {
            sig_factors: (sp, sq),
            stream_factors: (tp, tq),
        },
    ))
}

impl AlgorithmSuite {
    pub fn hash(&self) -> HashId {
        self.enc.hash
    }

    /// Checks every invariant that is verifiable from public parameters.
    pub fn validate(&self) -> Result<(), SuiteError> {
        let bad = |m: &str| Err(SuiteError::Invalid(m.to_string()));
        let mut rng = derive_rng(&[0; 32], "suite/validate");
        let g = &self.enc;
        if !is_probable_prime(&g.p, &mut rng) || !is_probable_prime(&g.q, &mut rng) {
            return bad("group modulus or order is not prime");
        }
        if ((&g.p - 1u32) % &g.q).bits() != 0 {
            return bad("q does not divide p - 1");
        }
        for (gen, name) in [(&g.g1, "g1"), (&g.g2, "g2")] {
            if gen.is_one() || !g.contains(gen) {
                return Err(SuiteError::Invalid(format!("{name} does not have order q")));
            }
        }
        let n = &self.sig.modulus;
        if n % 8u32 != big(5) {
            return bad("signature modulus is not a Blum-Williams integer (n ≢ 5 mod 8)");
        }
        if is_probable_prime(n, &mut rng) {
            return bad("signature modulus is prime");
        }
        if self.sig.depth == 0 || self.sig.depth > 24 {
            return bad("tree depth out of range");
        }
        let r = &self.sig.reference;
        if r.bits() == 0 || r >= n || !r.gcd(n).is_one() || arith::jacobi(r, n) != 1 {
            return bad("reference value is not a unit with Jacobi symbol 1");
        }
        let m = &self.stream.modulus;
        if m % 4u32 != big(1) || is_probable_prime(m, &mut rng) {
            return bad("stream modulus is not a Blum integer");
        }
        if self.stream.bits_per_iteration != 1 {
            return bad("squaring generator emits exactly one bit per iteration");
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(SUITE_MAGIC, SUITE_FORMAT_VERSION);
        w.bytes32(&self.suite_id.0.to_be_bytes())
            .bytes32(&self.version.to_be_bytes())
            .uint(&self.sig.modulus)
            .bytes32(&[self.sig.depth])
            .uint(&self.sig.reference)
            .uint(&self.enc.p)
            .uint(&self.enc.q)
            .uint(&self.enc.g1)
            .uint(&self.enc.g2)
            .bytes32(&[self.enc.hash as u8])
            .uint(&self.stream.modulus)
            .bytes32(&[self.stream.bits_per_iteration]);
        w.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let version = r.expect_magic(SUITE_MAGIC)?;
        if version != SUITE_FORMAT_VERSION {
            return Err(WireError::Version(version));
        }
        let fixed = |r: &mut Reader, field: &'static str, n: usize| -> Result<Vec<u8>, WireError> {
            let b = r.bytes32()?;
            if b.len() != n {
                return Err(WireError::invalid(field, format!("expected {n} bytes")));
            }
            Ok(b.to_vec())
        };
        let id = fixed(&mut r, "suite_id", 2)?;
        let ver = fixed(&mut r, "version", 2)?;
        let n_sig = r.uint("n_sig")?;
        let depth = fixed(&mut r, "depth", 1)?[0];
        let reference = r.uint("reference")?;
        let p = r.uint("p")?;
        let q = r.uint("q")?;
        let g1 = r.uint("g1")?;
        let g2 = r.uint("g2")?;
        let hash_byte = fixed(&mut r, "hash", 1)?[0];
        let hash = HashId::from_u8(hash_byte)
            .ok_or_else(|| WireError::invalid("hash", format!("unknown hash id {hash_byte}")))?;
        let n_str = r.uint("n_str")?;
        let bpi = fixed(&mut r, "bits_per_iteration", 1)?[0];
        r.finish()?;
        Ok(AlgorithmSuite {
            suite_id: SuiteId(u16::from_be_bytes([id[0], id[1]])),
            version: u16::from_be_bytes([ver[0], ver[1]]),
            sig: SignatureParams {
                modulus: n_sig,
                depth,
                reference,
            },
            enc: GroupParams { p, q, g1, g2, hash },
            stream: StreamParams {
                modulus: n_str,
                bits_per_iteration: bpi,
            },
        })
    }
}
