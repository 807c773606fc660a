//! Number theory helpers: primality, prime search under congruence
//! constraints, Jacobi symbols, modular inverses and square roots.

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Deterministic generator derived from a seed and a domain label.
pub fn derive_rng(seed: &[u8; 32], label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_seed(seed, label))
}

pub fn derive_seed(seed: &[u8; 32], label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((label.len() as u32).to_be_bytes());
    h.update(label.as_bytes());
    h.update(seed);
    h.finalize().into()
}

pub fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

pub(crate) fn mulmod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn powmod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod_u64(acc, base, m);
        }
        base = mulmod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

const SMALL_PRIMES: [u64; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &SMALL_PRIMES[..12] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    // These bases are deterministic for every 64-bit input.
    'witness: for &a in &SMALL_PRIMES[..12] {
        let mut x = powmod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Miller-Rabin. Exact below 2^64, probabilistic (error < 2^-64) above.
pub fn is_probable_prime(n: &BigUint, rng: &mut impl RngCore) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    for &p in &SMALL_PRIMES {
        if (n % p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let two = big(2);
    'witness: for _ in 0..32 {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Finds a prime of exactly `bits` bits (top two bits set) congruent to
/// `residue` modulo `modulus`, scanning upward from a random start.
pub fn random_prime_congruent(
    bits: u64,
    residue: u64,
    modulus: u64,
    rng: &mut impl RngCore,
) -> Option<BigUint> {
    assert!(bits >= 2 && residue < modulus);
    let hi = BigUint::one() << bits;
    let lo = (BigUint::one() << (bits - 1)) + (BigUint::one() << (bits - 2));
    let m = big(modulus);
    let align = |c: BigUint| -> BigUint {
        let base = &c - (&c % &m) + residue;
        if base < c {
            base + &m
        } else {
            base
        }
    };
    let start = align(rng.gen_biguint_range(&lo, &hi));
    let first = align(lo.clone());
    let mut c = start.clone();
    let mut wrapped = false;
    loop {
        if c >= hi {
            if wrapped {
                return None;
            }
            wrapped = true;
            c = first.clone();
        }
        if wrapped && c >= start {
            return None;
        }
        if is_probable_prime(&c, rng) {
            return Some(c);
        }
        c += &m;
    }
}

/// Prime `p = k*q + 1` of exactly `bits` bits.
pub fn schnorr_prime(bits: u64, q: &BigUint, rng: &mut impl RngCore) -> Option<BigUint> {
    let lo = BigUint::one() << (bits - 1);
    let hi = BigUint::one() << bits;
    let k_lo = (&lo + q - 1u32) / q;
    let k_hi = (&hi - 1u32) / q;
    if k_lo >= k_hi {
        return None;
    }
    let mut k = rng.gen_biguint_range(&k_lo, &k_hi);
    if k.is_odd() {
        k += 1u32;
    }
    for _ in 0..(64 * bits) {
        let p = &k * q + 1u32;
        if p >= hi {
            k = if k_lo.is_odd() {
                &k_lo + 1u32
            } else {
                k_lo.clone()
            };
            continue;
        }
        if is_probable_prime(&p, rng) {
            return Some(p);
        }
        k += 2u32;
    }
    None
}

pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    let (mut old_r, mut r) = (
        BigInt::from_biguint(Sign::Plus, a % m),
        BigInt::from_biguint(Sign::Plus, m.clone()),
    );
    let (mut old_s, mut s) = (BigInt::one(), BigInt::zero());
    while !r.is_zero() {
        let q = &old_r / &r;
        let tmp = &old_r - &q * &r;
        old_r = std::mem::replace(&mut r, tmp);
        let tmp = &old_s - &q * &s;
        old_s = std::mem::replace(&mut s, tmp);
    }
    if !old_r.is_one() {
        return None;
    }
    let m = BigInt::from_biguint(Sign::Plus, m.clone());
    old_s.mod_floor(&m).to_biguint()
}

/// Jacobi symbol (a/n) for odd n, as -1, 0 or 1.
pub fn jacobi(a: &BigUint, n: &BigUint) -> i8 {
    assert!(n.is_odd(), "Jacobi symbol needs an odd modulus");
    let mut a = a % n;
    let mut n = n.clone();
    let mut result = 1i8;
    while !a.is_zero() {
        let tz = a.trailing_zeros().unwrap_or(0);
        a >>= tz;
        let n_mod_8 = (&n % 8u32).to_u32().unwrap();
        if tz % 2 == 1 && (n_mod_8 == 3 || n_mod_8 == 5) {
            result = -result;
        }
        std::mem::swap(&mut a, &mut n);
        if (&a % 4u32).to_u32() == Some(3) && (&n % 4u32).to_u32() == Some(3) {
            result = -result;
        }
        a %= &n;
    }
    if n.is_one() {
        result
    } else {
        0
    }
}

/// Square root of a quadratic residue modulo a prime `p ≡ 3 (mod 4)`; the
/// returned root is itself a quadratic residue.
pub fn sqrt_blum_prime(y: &BigUint, p: &BigUint) -> BigUint {
    let e = (p + 1u32) >> 2;
    y.modpow(&e, p)
}

/// Chinese remaindering for coprime moduli.
pub fn crt(rp: &BigUint, p: &BigUint, rq: &BigUint, q: &BigUint) -> BigUint {
    let n = p * q;
    let q_inv_p = mod_inverse(q, p).expect("moduli are coprime");
    // x = rq + q * ((rp - rq) * q^-1 mod p)
    let diff = (rp + p - (rq % p)) % p;
    let t = (diff * q_inv_p) % p;
    (rq + q * t) % n
}

pub fn byte_len(n: &BigUint) -> usize {
    (n.bits() as usize).div_ceil(8).max(1)
}
