//! Additively homomorphic encryption with two interchangeable backends.
//!
//! The `transparent` backend carries the plaintext directly (behind a range
//! guard) so protocol tests run fast and failures stay legible. The
//! `paillier` backend is the real thing over big integers: `Enc(m) =
//! (1+N)^m · r^N mod N^2`, additively homomorphic with plaintext scalar
//! multiplication via exponentiation. Signed plaintexts use the centered
//! lift: residues above `N/2` decode as negatives.
//!
//! A single key pair (owned by the cloud platform) is enough here: every
//! leaked view in the protocols is what that party decrypts.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::HeError;

/// Transparent plaintexts must stay strictly below 2^62 in magnitude,
/// mirroring the `|m| < N/2` bound of the Paillier backend.
pub const TRANSPARENT_GUARD_BITS: u32 = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Transparent,
    Paillier,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendKind::Transparent => write!(f, "transparent"),
            BackendKind::Paillier => write!(f, "paillier"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PaillierPublicKey {
    n: BigUint,
    nn: BigUint,
    half_n: BigUint,
    key_id: u64,
}

#[derive(Debug, Clone)]
pub struct PaillierSecretKey {
    lambda: BigUint,
    mu: BigUint,
}

#[derive(Debug, Clone)]
pub enum PublicKey {
    Transparent { key_id: u64 },
    Paillier(PaillierPublicKey),
}

#[derive(Debug, Clone)]
pub enum SecretKey {
    Transparent { key_id: u64 },
    Paillier {
        public: PaillierPublicKey,
        secret: PaillierSecretKey,
    },
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
    pub key_bits: u32,
}

impl PublicKey {
    pub fn key_id(&self) -> u64 {
        match self {
            PublicKey::Transparent { key_id } => *key_id,
            PublicKey::Paillier(pk) => pk.key_id,
        }
    }

    pub fn backend(&self) -> BackendKind {
        match self {
            PublicKey::Transparent { .. } => BackendKind::Transparent,
            PublicKey::Paillier(_) => BackendKind::Paillier,
        }
    }
}

/// Backend-tagged encrypted integer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    payload: Payload,
    key_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Payload {
    Transparent(i128),
    Paillier(BigUint),
}

impl Ciphertext {
    pub fn backend(&self) -> BackendKind {
        match self.payload {
            Payload::Transparent(_) => BackendKind::Transparent,
            Payload::Paillier(_) => BackendKind::Paillier,
        }
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }
}

/// Deterministic key generation. `key_bits` must be at least 512 for the
/// Paillier backend; the transparent backend ignores it.
pub fn keygen(backend: BackendKind, key_bits: u32, seed: u64) -> KeyPair {
    match backend {
        BackendKind::Transparent => KeyPair {
            public: PublicKey::Transparent { key_id: seed },
            secret: SecretKey::Transparent { key_id: seed },
            key_bits: 0,
        },
        BackendKind::Paillier => {
            assert!(key_bits >= 512, "paillier keys must be at least 512 bits");
            let (public, secret) = paillier_keygen(key_bits, seed);
            KeyPair {
                secret: SecretKey::Paillier {
                    public: public.clone(),
                    secret,
                },
                public: PublicKey::Paillier(public),
                key_bits,
            }
        }
    }
}

/// Encrypts a signed integer under `pk`. The Paillier path draws fresh
/// randomness from `rng`; the transparent path ignores it.
pub fn encrypt<R: Rng>(pk: &PublicKey, m: i64, rng: &mut R) -> Result<Ciphertext, HeError> {
    match pk {
        PublicKey::Transparent { key_id } => {
            if (m.unsigned_abs() >> TRANSPARENT_GUARD_BITS) != 0 {
                return Err(HeError::PlaintextRange(m as i128));
            }
            Ok(Ciphertext {
                payload: Payload::Transparent(m as i128),
                key_id: *key_id,
            })
        }
        PublicKey::Paillier(pk) => {
            let m_abs = BigUint::from(m.unsigned_abs());
            if m_abs > pk.half_n {
                return Err(HeError::PlaintextRange(m as i128));
            }
            let m_mod = if m >= 0 { m_abs } else { &pk.n - m_abs };
            let gm = (BigUint::one() + m_mod * &pk.n) % &pk.nn;
            let r = loop {
                let r = rng.gen_biguint_below(&pk.n);
                if !r.is_zero() && r.gcd(&pk.n).is_one() {
                    break r;
                }
            };
            let payload = (gm * r.modpow(&pk.n, &pk.nn)) % &pk.nn;
            Ok(Ciphertext {
                payload: Payload::Paillier(payload),
                key_id: pk.key_id,
            })
        }
    }
}

/// Decrypts to the centered representative in `(-N/2, N/2]`.
pub fn decrypt(sk: &SecretKey, ct: &Ciphertext) -> Result<i64, HeError> {
    match (sk, &ct.payload) {
        (SecretKey::Transparent { key_id }, Payload::Transparent(v)) => {
            if *key_id != ct.key_id {
                return Err(HeError::KeyMismatch);
            }
            if (v.unsigned_abs() >> TRANSPARENT_GUARD_BITS) != 0 {
                return Err(HeError::PlaintextRange(*v));
            }
            Ok(*v as i64)
        }
        (SecretKey::Paillier { public, secret }, Payload::Paillier(c)) => {
            if public.key_id != ct.key_id {
                return Err(HeError::KeyMismatch);
            }
            let u = c.modpow(&secret.lambda, &public.nn);
            let ell = (u - BigUint::one()) / &public.n;
            let m_mod = (ell * &secret.mu) % &public.n;
            let centered: BigInt = if m_mod > public.half_n {
                BigInt::from(m_mod) - BigInt::from(public.n.clone())
            } else {
                m_mod.into()
            };
            i64::try_from(centered.clone())
                .map_err(|_| HeError::PlaintextRange(i128::try_from(centered).unwrap_or(i128::MAX)))
        }
        _ => Err(HeError::KeyMismatch),
    }
}

fn check_same_key(pk: &PublicKey, ct: &Ciphertext) -> Result<(), HeError> {
    if pk.key_id() != ct.key_id || pk.backend() != ct.backend() {
        return Err(HeError::KeyMismatch);
    }
    Ok(())
}

/// Homomorphic addition of two ciphertexts under the same key.
pub fn add_ct(pk: &PublicKey, c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext, HeError> {
    check_same_key(pk, c1)?;
    check_same_key(pk, c2)?;
    let payload = match (&c1.payload, &c2.payload) {
        (Payload::Transparent(a), Payload::Transparent(b)) => Payload::Transparent(
            a.checked_add(*b)
                .ok_or(HeError::PlaintextRange(i128::MAX))?,
        ),
        (Payload::Paillier(a), Payload::Paillier(b)) => {
            let pk = paillier_pk(pk);
            Payload::Paillier((a * b) % &pk.nn)
        }
        _ => return Err(HeError::KeyMismatch),
    };
    Ok(Ciphertext {
        payload,
        key_id: c1.key_id,
    })
}

/// Adds a plaintext constant to a ciphertext.
pub fn add_plain(pk: &PublicKey, c: &Ciphertext, k: i64) -> Result<Ciphertext, HeError> {
    check_same_key(pk, c)?;
    let payload = match &c.payload {
        Payload::Transparent(a) => Payload::Transparent(
            a.checked_add(k as i128)
                .ok_or(HeError::PlaintextRange(i128::MAX))?,
        ),
        Payload::Paillier(a) => {
            let pk = paillier_pk(pk);
            let k_abs = BigUint::from(k.unsigned_abs());
            let k_mod = if k >= 0 { k_abs } else { &pk.n - k_abs };
            let gk = (BigUint::one() + k_mod * &pk.n) % &pk.nn;
            Payload::Paillier((a * gk) % &pk.nn)
        }
    };
    Ok(Ciphertext {
        payload,
        key_id: c.key_id,
    })
}

/// Multiplies the encrypted value by a plaintext scalar.
pub fn mul_plain(pk: &PublicKey, c: &Ciphertext, k: i64) -> Result<Ciphertext, HeError> {
    check_same_key(pk, c)?;
    let payload = match &c.payload {
        Payload::Transparent(a) => Payload::Transparent(
            a.checked_mul(k as i128)
                .ok_or(HeError::PlaintextRange(i128::MAX))?,
        ),
        Payload::Paillier(a) => {
            let pk = paillier_pk(pk);
            let e = BigUint::from(k.unsigned_abs());
            let mut d = a.modpow(&e, &pk.nn);
            if k < 0 {
                // c is a unit mod N^2 whenever gcd(c, N) = 1, which holds for
                // every honestly formed ciphertext.
                d = d.modinv(&pk.nn).expect("ciphertext invertible mod N^2");
            }
            Payload::Paillier(d)
        }
    };
    Ok(Ciphertext {
        payload,
        key_id: c.key_id,
    })
}

fn paillier_pk(pk: &PublicKey) -> &PaillierPublicKey {
    match pk {
        PublicKey::Paillier(pk) => pk,
        PublicKey::Transparent { .. } => unreachable!("checked by caller"),
    }
}

fn keygen_rng(seed: u64) -> ChaCha20Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8] = 0x4b; // keygen stream tag
    ChaCha20Rng::from_seed(bytes)
}

fn paillier_keygen(key_bits: u32, seed: u64) -> (PaillierPublicKey, PaillierSecretKey) {
    let mut rng = keygen_rng(seed);
    loop {
        let p = gen_prime(u64::from(key_bits / 2), &mut rng);
        let q = gen_prime(u64::from(key_bits / 2), &mut rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != u64::from(key_bits) {
            continue;
        }
        let p1 = &p - 1u32;
        let q1 = &q - 1u32;
        // Standard Paillier requirement: gcd(N, phi(N)) = 1.
        if !n.gcd(&(&p1 * &q1)).is_one() {
            continue;
        }
        let lambda = p1.lcm(&q1);
        let Some(mu) = lambda.modinv(&n) else {
            continue;
        };
        let key_id = n.iter_u64_digits().next().unwrap_or(0);
        let nn = &n * &n;
        let half_n = &n >> 1;
        return (
            PaillierPublicKey {
                n,
                nn,
                half_n,
                key_id,
            },
            PaillierSecretKey { lambda, mu },
        );
    }
}

const SMALL_PRIMES: [u32; 30] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113,
];

fn gen_prime(bits: u64, rng: &mut ChaCha20Rng) -> BigUint {
    loop {
        let mut candidate = rng.gen_biguint(bits);
        // Top two bits set so the product has full key size; bottom bit for oddness.
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rng) {
            return candidate;
        }
    }
}

/// Miller-Rabin with 40 random witnesses (error < 2^-80).
fn is_probable_prime(n: &BigUint, rng: &mut ChaCha20Rng) -> bool {
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let two = &one + &one;
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().expect("n > 1 is odd here");
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..40 {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

pub mod program {
    //! Straight-line HE programs used to check backend equivalence: the same
    //! random sequence of encrypt/add/mul operations must decrypt to the same
    //! integers under the transparent and Paillier backends.

    use super::*;

    /// Keep intermediate values far inside the transparent guard so both
    /// backends stay in range and results are comparable.
    const VALUE_LIMIT: i128 = 1 << 55;

    #[derive(Debug, Clone)]
    pub enum HeOp {
        Encrypt(i64),
        AddCt(usize, usize),
        AddPlain(usize, i64),
        MulPlain(usize, i64),
    }

    /// A straight-line program; every op appends one register.
    #[derive(Debug, Clone)]
    pub struct HeProgram {
        pub ops: Vec<HeOp>,
    }

    impl HeProgram {
        pub fn random<R: Rng>(rng: &mut R, max_len: usize) -> Self {
            let len = rng.gen_range(1..=max_len.max(1));
            let mut ops = Vec::with_capacity(len);
            let mut bounds: Vec<i128> = Vec::with_capacity(len);
            ops.push(HeOp::Encrypt(rng.gen_range(-(1i64 << 20)..(1i64 << 20))));
            bounds.push(1 << 20);
            while ops.len() < len {
                let regs = ops.len();
                let (op, bound) = match rng.gen_range(0..4u8) {
                    0 => {
                        let v = rng.gen_range(-(1i64 << 20)..(1i64 << 20));
                        (HeOp::Encrypt(v), 1i128 << 20)
                    }
                    1 => {
                        let a = rng.gen_range(0..regs);
                        let b = rng.gen_range(0..regs);
                        (HeOp::AddCt(a, b), bounds[a] + bounds[b])
                    }
                    2 => {
                        let a = rng.gen_range(0..regs);
                        let k = rng.gen_range(-(1i64 << 20)..(1i64 << 20));
                        (HeOp::AddPlain(a, k), bounds[a] + (1 << 20))
                    }
                    _ => {
                        let a = rng.gen_range(0..regs);
                        let k = rng.gen_range(-(1i64 << 10)..(1i64 << 10));
                        (HeOp::MulPlain(a, k), bounds[a] * (1 << 10))
                    }
                };
                if bound > VALUE_LIMIT {
                    // Would risk leaving the plaintext range; restart from a
                    // fresh small value instead.
                    ops.push(HeOp::Encrypt(rng.gen_range(-1024i64..1024)));
                    bounds.push(1024);
                } else {
                    ops.push(op);
                    bounds.push(bound);
                }
            }
            Self { ops }
        }

        /// Runs the program and decrypts every register.
        pub fn run(
            &self,
            backend: BackendKind,
            key_bits: u32,
            key_seed: u64,
            enc_seed: u64,
        ) -> Result<Vec<i64>, HeError> {
            let keys = keygen(backend, key_bits, key_seed);
            let mut rng = ChaCha20Rng::seed_from_u64(enc_seed);
            let mut regs: Vec<Ciphertext> = Vec::with_capacity(self.ops.len());
            for op in &self.ops {
                let ct = match *op {
                    HeOp::Encrypt(v) => encrypt(&keys.public, v, &mut rng)?,
                    HeOp::AddCt(a, b) => add_ct(&keys.public, &regs[a], &regs[b])?,
                    HeOp::AddPlain(a, k) => add_plain(&keys.public, &regs[a], k)?,
                    HeOp::MulPlain(a, k) => mul_plain(&keys.public, &regs[a], k)?,
                };
                regs.push(ct);
            }
            regs.iter().map(|c| decrypt(&keys.secret, c)).collect()
        }
    }
}
