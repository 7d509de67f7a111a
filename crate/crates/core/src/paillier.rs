//! Paillier additively homomorphic encryption over Z_n, plus the fixed-point
//! codec that maps signed reals into that plaintext space.
//!
//! The scheme uses the g = n + 1 generator, which turns encryption into
//! `c = (1 + m*n) * r^n mod n^2` with no generator exponentiation, and
//! decryption runs through the CRT over p and q so each exponentiation works
//! at half the modulus width. Adding two ciphertexts is a single modular
//! multiplication; that is the only operation the protocol ever performs on
//! ciphertexts it cannot decrypt.
//!
//! Every ciphertext carries the fingerprint of the key it was produced
//! under, and all binary operations refuse to mix fingerprints: silently
//! adding ciphertexts from different keys would produce garbage that still
//! decrypts without error.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{CryptoRng, Rng};
use sha2::{Digest, Sha256};

use crate::bigmath;
use crate::boosting::histogram::Summable;
use crate::error::{Error, Result};

pub const MIN_KEY_BITS: u32 = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierPublicKey {
    n: BigUint,
    n_squared: BigUint,
    bits: u32,
    fingerprint: u64,
}

#[derive(Debug, Clone)]
pub struct PaillierPrivateKey {
    public: PaillierPublicKey,
    p: BigUint,
    q: BigUint,
    /// Carmichael function lambda(n) = lcm(p-1, q-1).
    lambda: BigUint,
    /// mu = L(g^lambda mod n^2)^-1 mod n; kept for the textbook decryption
    /// path, which the CRT path is checked against in tests.
    mu: BigUint,
    // CRT decryption cache.
    p_squared: BigUint,
    q_squared: BigUint,
    hp: BigUint,
    hq: BigUint,
    p_inv_q: BigUint,
}

/// A Paillier ciphertext tagged with the fingerprint of its key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    key_fingerprint: u64,
}

fn key_fingerprint(bits: u32, n: &BigUint) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(bits.to_be_bytes());
    hasher.update(n.to_bytes_be());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

impl PaillierPublicKey {
    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// First 8 bytes of SHA-256 over the key-size header and modulus bytes.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn from_modulus(bits: u32, n: BigUint) -> Self {
        let fingerprint = key_fingerprint(bits, &n);
        let n_squared = &n * &n;
        PaillierPublicKey {
            n,
            n_squared,
            bits,
            fingerprint,
        }
    }

    /// Wire form: 4-byte big-endian key size in bits, 4-byte big-endian
    /// byte length of the modulus, then the modulus as minimal big-endian
    /// bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n_bytes = self.n.to_bytes_be();
        let mut out = Vec::with_capacity(8 + n_bytes.len());
        out.extend_from_slice(&self.bits.to_be_bytes());
        out.extend_from_slice(&(n_bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&n_bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::wire("public key blob shorter than its header"));
        }
        let bits = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
        let len = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() != 8 + len {
            return Err(Error::wire(format!(
                "public key blob length {} does not match header {}",
                bytes.len(),
                8 + len
            )));
        }
        let n = BigUint::from_bytes_be(&bytes[8..]);
        if n.bits() as u32 != bits {
            return Err(Error::wire(format!(
                "modulus has {} bits but header claims {}",
                n.bits(),
                bits
            )));
        }
        Ok(PaillierPublicKey::from_modulus(bits, n))
    }

    /// Encrypts an integer already reduced into [0, n).
    pub fn encrypt<R: Rng + CryptoRng>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        if m >= &self.n {
            return Err(Error::domain(format!(
                "plaintext has {} bits, outside [0, n) for a {}-bit modulus",
                m.bits(),
                self.bits
            )));
        }
        let r = bigmath::random_coprime_below(&self.n, rng);
        let rn = r.modpow(&self.n, &self.n_squared);
        // (1 + m*n) is already < n^2 because m < n.
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        Ok(Ciphertext {
            value: (gm * rn) % &self.n_squared,
            key_fingerprint: self.fingerprint,
        })
    }

    /// Homomorphic addition: multiplication of ciphertexts modulo n^2.
    /// Both operands must have been produced under this key.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_fingerprint(a)?;
        self.check_fingerprint(b)?;
        Ok(Ciphertext {
            value: (&a.value * &b.value) % &self.n_squared,
            key_fingerprint: self.fingerprint,
        })
    }

    /// The deterministic encryption of zero (r = 1). Multiplicatively
    /// neutral, so it serves as the accumulator seed for empty sums: a
    /// bucket nobody fell into decrypts to exactly zero.
    pub fn zero(&self) -> Ciphertext {
        Ciphertext {
            value: BigUint::one(),
            key_fingerprint: self.fingerprint,
        }
    }

    fn check_fingerprint(&self, c: &Ciphertext) -> Result<()> {
        if c.key_fingerprint != self.fingerprint {
            return Err(Error::key(format!(
                "ciphertext fingerprint {:016x} does not match key {:016x}",
                c.key_fingerprint, self.fingerprint
            )));
        }
        Ok(())
    }
}

/// L(x) = (x - 1) / d, defined on x = 1 mod d.
fn l_function(x: &BigUint, d: &BigUint) -> BigUint {
    (x - BigUint::one()) / d
}

impl PaillierPrivateKey {
    pub fn public(&self) -> &PaillierPublicKey {
        &self.public
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    /// CRT decryption: one half-width exponentiation per prime.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint> {
        self.public.check_fingerprint(c)?;
        if c.value >= self.public.n_squared || c.value.is_zero() {
            return Err(Error::domain("ciphertext value outside Z_{n^2}*"));
        }
        let p_minus_1 = &self.p - BigUint::one();
        let q_minus_1 = &self.q - BigUint::one();
        let mp =
            (l_function(&c.value.modpow(&p_minus_1, &self.p_squared), &self.p) * &self.hp) % &self.p;
        let mq =
            (l_function(&c.value.modpow(&q_minus_1, &self.q_squared), &self.q) * &self.hq) % &self.q;
        // Combine: m = mp + p * ((mq - mp) * p^-1 mod q).
        let diff = if mq >= mp {
            (&mq - &mp) % &self.q
        } else {
            &self.q - ((&mp - &mq) % &self.q)
        };
        let t = (diff * &self.p_inv_q) % &self.q;
        Ok(mp + &self.p * t)
    }

    /// Textbook decryption through lambda and mu. Slower than the CRT
    /// path; kept as an independent formulation for cross-checking.
    pub fn decrypt_via_lambda(&self, c: &Ciphertext) -> Result<BigUint> {
        self.public.check_fingerprint(c)?;
        let n = &self.public.n;
        let x = c.value.modpow(&self.lambda, &self.public.n_squared);
        Ok((l_function(&x, n) * &self.mu) % n)
    }
}

/// Generates a fresh key pair with an exactly `bits`-bit modulus.
///
/// `bits` must be even and at least [`MIN_KEY_BITS`]. The two primes are
/// drawn at `bits / 2` with their top two bits forced, which pins the
/// modulus width and keeps p and q the same size.
pub fn keygen<R: Rng + CryptoRng>(
    bits: u32,
    rng: &mut R,
) -> Result<(PaillierPublicKey, PaillierPrivateKey)> {
    if bits < MIN_KEY_BITS {
        return Err(Error::key(format!(
            "key size {bits} is below the minimum of {MIN_KEY_BITS} bits"
        )));
    }
    if bits % 2 != 0 {
        return Err(Error::key(format!("key size {bits} must be even")));
    }
    let half = (bits / 2) as u64;
    let p = bigmath::gen_prime(half, rng)?;
    let q = loop {
        let q = bigmath::gen_prime(half, rng)?;
        if q != p {
            break q;
        }
    };
    let n = &p * &q;
    debug_assert_eq!(n.bits() as u32, bits);
    let public = PaillierPublicKey::from_modulus(bits, n);
    let n = &public.n;

    let p_minus_1 = &p - BigUint::one();
    let q_minus_1 = &q - BigUint::one();
    let lambda = bigmath::lcm(&p_minus_1, &q_minus_1);
    // g = n + 1, so g^lambda mod n^2 = 1 + lambda * n mod n^2 and
    // L(g^lambda) = lambda mod n; invert it directly.
    let mu = bigmath::modinv(&(&lambda % n), n)
        .ok_or_else(|| Error::key("lambda not invertible modulo n"))?;

    let p_squared = &p * &p;
    let q_squared = &q * &q;
    let g = n + BigUint::one();
    let hp_base = l_function(&g.modpow(&p_minus_1, &p_squared), &p) % &p;
    let hq_base = l_function(&g.modpow(&q_minus_1, &q_squared), &q) % &q;
    let hp = bigmath::modinv(&hp_base, &p).ok_or_else(|| Error::key("CRT setup: hp singular"))?;
    let hq = bigmath::modinv(&hq_base, &q).ok_or_else(|| Error::key("CRT setup: hq singular"))?;
    let p_inv_q =
        bigmath::modinv(&(&p % &q), &q).ok_or_else(|| Error::key("CRT setup: p not invertible"))?;

    Ok((
        public.clone(),
        PaillierPrivateKey {
            public,
            p,
            q,
            lambda,
            mu,
            p_squared,
            q_squared,
            hp,
            hq,
            p_inv_q,
        },
    ))
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_fingerprint(&self) -> u64 {
        self.key_fingerprint
    }

    /// Wire form: 4-byte big-endian length, then minimal big-endian bytes.
    /// The fingerprint is not serialized; the receiver attaches the
    /// fingerprint of the session key it expects the ciphertext under.
    pub fn to_bytes(&self) -> Vec<u8> {
        let v = self.value.to_bytes_be();
        let mut out = Vec::with_capacity(4 + v.len());
        out.extend_from_slice(&(v.len() as u32).to_be_bytes());
        out.extend_from_slice(&v);
        out
    }

    pub fn from_bytes(bytes: &[u8], expected_fingerprint: u64) -> Result<(Self, usize)> {
        if bytes.len() < 4 {
            return Err(Error::wire("ciphertext blob shorter than its length prefix"));
        }
        let len = u32::from_be_bytes(bytes[0..4].try_into().unwrap()) as usize;
        if bytes.len() < 4 + len {
            return Err(Error::wire(format!(
                "ciphertext blob truncated: need {} bytes, have {}",
                4 + len,
                bytes.len()
            )));
        }
        Ok((
            Ciphertext {
                value: BigUint::from_bytes_be(&bytes[4..4 + len]),
                key_fingerprint: expected_fingerprint,
            },
            4 + len,
        ))
    }
}

/// Ciphertexts participate in the shared histogram-aggregation code path;
/// their addition context is the public key.
impl Summable for Ciphertext {
    type Ctx = PaillierPublicKey;

    fn sum_zero(ctx: &PaillierPublicKey) -> Self {
        ctx.zero()
    }

    fn sum_add(&self, rhs: &Self, ctx: &PaillierPublicKey) -> Self {
        ctx.add(self, rhs)
            .expect("histogram accumulation mixed ciphertexts from different keys")
    }
}

/// Maps signed reals into Z_n as round(x * 2^scale_bits), with negatives
/// wrapped into the upper half of the ring. Decoding treats any residue
/// above (n-1)/2 as negative. A sum of encodings therefore decodes to the
/// sum of the encoded values as long as its magnitude stays below n/2,
/// which [`FixedPointCodec::check_capacity`] verifies up front from the
/// instance count.
#[derive(Debug, Clone)]
pub struct FixedPointCodec {
    scale_bits: u32,
    n: BigUint,
    half_n: BigUint,
}

impl FixedPointCodec {
    pub fn new(scale_bits: u32, key: &PaillierPublicKey) -> Result<Self> {
        Self::for_modulus(scale_bits, key.n().clone())
    }

    pub fn for_modulus(scale_bits: u32, n: BigUint) -> Result<Self> {
        if scale_bits == 0 || scale_bits > 200 {
            return Err(Error::config(format!(
                "fixed-point scale of {scale_bits} bits is outside 1..=200"
            )));
        }
        if (BigUint::one() << (scale_bits + 2)) >= n {
            return Err(Error::config(
                "modulus too small for the requested fixed-point scale",
            ));
        }
        let half_n = (&n - BigUint::one()) >> 1;
        Ok(FixedPointCodec {
            scale_bits,
            n,
            half_n,
        })
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    /// Absolute quantization error bound of a single encode/decode round
    /// trip: half a unit in the last place, i.e. 2^-(scale_bits+1).
    pub fn unit_error(&self) -> f64 {
        (2f64).powi(-(self.scale_bits as i32) - 1)
    }

    /// Checks that `count` addends of magnitude <= 1 cannot overflow the
    /// signed range: count * 2^scale_bits must stay below n/2.
    pub fn check_capacity(&self, count: usize) -> Result<()> {
        let need = BigUint::from(count) << self.scale_bits;
        if need >= self.half_n {
            return Err(Error::config(format!(
                "{count} addends at scale 2^{} can overflow the plaintext ring",
                self.scale_bits
            )));
        }
        Ok(())
    }

    pub fn encode(&self, x: f64) -> Result<BigUint> {
        if !x.is_finite() {
            return Err(Error::domain(format!("cannot encode non-finite value {x}")));
        }
        let scaled = x.abs() * (2f64).powi(self.scale_bits as i32);
        let magnitude = bigmath::f64_to_biguint_rounded(scaled)?;
        if magnitude > self.half_n {
            return Err(Error::domain(format!(
                "value {x} overflows the signed fixed-point range"
            )));
        }
        if magnitude.is_zero() {
            return Ok(BigUint::zero());
        }
        if x < 0.0 {
            Ok(&self.n - magnitude)
        } else {
            Ok(magnitude)
        }
    }

    pub fn decode(&self, v: &BigUint) -> Result<f64> {
        if v >= &self.n {
            return Err(Error::domain("encoded value outside Z_n"));
        }
        let (negative, magnitude) = if v > &self.half_n {
            (true, &self.n - v)
        } else {
            (false, v.clone())
        };
        // Every honest protocol value fits i128 by a wide margin; taking
        // that path makes decoding bit-identical to [`bigmath::dequantize`]
        // of the same integer sum.
        if let Some(m) = magnitude.to_u128() {
            if m <= i128::MAX as u128 {
                let q = if negative { -(m as i128) } else { m as i128 };
                return Ok(bigmath::dequantize(q, self.scale_bits));
            }
        }
        let scale = (2f64).powi(-(self.scale_bits as i32));
        let mag = magnitude.to_f64().unwrap_or(f64::INFINITY);
        Ok(if negative { -(mag * scale) } else { mag * scale })
    }
}
