//! Big-integer number theory shared by the Paillier and blind-RSA code:
//! probabilistic prime generation, modular inverses, and exact conversions
//! between `f64` and `BigUint`.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{CryptoRng, Rng};

use crate::error::{Error, Result};

/// Trial-division sieve applied before Miller-Rabin. Covers the primes
/// below 1000, which rejects the bulk of random candidates cheaply.
const SMALL_PRIMES: [u32; 168] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293,
    307, 311, 313, 317, 331, 337, 347, 349, 353, 359, 367, 373, 379, 383, 389, 397, 401, 409, 419,
    421, 431, 433, 439, 443, 449, 457, 461, 463, 467, 479, 487, 491, 499, 503, 509, 521, 523, 541,
    547, 557, 563, 569, 571, 577, 587, 593, 599, 601, 607, 613, 617, 619, 631, 641, 643, 647, 653,
    659, 661, 673, 677, 683, 691, 701, 709, 719, 727, 733, 739, 743, 751, 757, 761, 769, 773, 787,
    797, 809, 811, 821, 823, 827, 829, 839, 853, 857, 859, 863, 877, 881, 883, 887, 907, 911, 919,
    929, 937, 941, 947, 953, 967, 971, 977, 983, 991, 997,
];

const MILLER_RABIN_ROUNDS: u32 = 32;

/// Miller-Rabin with random bases. Error probability is at most
/// 4^-rounds for odd composites.
pub fn is_probable_prime<R: Rng + CryptoRng>(n: &BigUint, rounds: u32, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    // n - 1 = d * 2^s with d odd
    let n_minus_1 = n - BigUint::one();
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Generates a random prime with exactly `bits` bits and both top bits set,
/// so the product of two such primes always has exactly `2 * bits` bits.
///
/// Fails with a configuration error if no prime is found within a bounded
/// number of candidates (the bound is generous; hitting it indicates a
/// broken RNG rather than bad luck).
pub fn gen_prime<R: Rng + CryptoRng>(bits: u64, rng: &mut R) -> Result<BigUint> {
    if bits < 16 {
        return Err(Error::config(format!(
            "prime size {bits} bits is below the supported minimum of 16"
        )));
    }
    let max_attempts = 128 * bits;
    let top_bits = (BigUint::one() << (bits - 1)) | (BigUint::one() << (bits - 2));
    for _ in 0..max_attempts {
        let mut candidate = rng.gen_biguint(bits);
        candidate |= &top_bits;
        candidate |= BigUint::one();
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return Ok(candidate);
        }
    }
    Err(Error::config(format!(
        "prime generation failed after {max_attempts} candidates"
    )))
}

/// Modular inverse of `a` modulo `m`, or `None` when gcd(a, m) != 1.
pub fn modinv(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    if m.is_zero() {
        return None;
    }
    let a = BigInt::from(a.clone());
    let m_int = BigInt::from(m.clone());
    let e = a.extended_gcd(&m_int);
    if !e.gcd.is_one() {
        return None;
    }
    let mut x = e.x % &m_int;
    if x.is_negative() {
        x += &m_int;
    }
    x.to_biguint()
}

/// Uniform element of [1, n) that is coprime to n. For n a product of two
/// large primes a retry is astronomically unlikely, but loop regardless.
pub fn random_coprime_below<R: Rng + CryptoRng>(n: &BigUint, rng: &mut R) -> BigUint {
    loop {
        let r = rng.gen_biguint_range(&BigUint::one(), n);
        if r.gcd(n).is_one() {
            return r;
        }
    }
}

/// Least common multiple of two positive integers.
pub fn lcm(a: &BigUint, b: &BigUint) -> BigUint {
    a / a.gcd(b) * b
}

/// Exact conversion of a nonnegative finite `f64` to the integer it rounds
/// to (ties to even, like `f64::round_ties_even`). Works for magnitudes
/// beyond 2^53 by decomposing the float's mantissa and exponent, so no
/// precision is lost on top of the float's own representation.
pub fn f64_to_biguint_rounded(x: f64) -> Result<BigUint> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain(format!(
            "cannot convert {x} to an unsigned integer"
        )));
    }
    if x == 0.0 {
        return Ok(BigUint::zero());
    }
    let bits = x.to_bits();
    let exponent = ((bits >> 52) & 0x7ff) as i64;
    let fraction = bits & ((1u64 << 52) - 1);
    // Subnormals (exponent 0) round to zero; they are far below 0.5.
    let (mantissa, shift) = if exponent == 0 {
        return Ok(BigUint::zero());
    } else {
        (fraction | (1u64 << 52), exponent - 1075)
    };
    let m = BigUint::from(mantissa);
    if shift >= 0 {
        Ok(m << shift as u64)
    } else {
        let down = -shift as u64;
        if down > 54 {
            return Ok(BigUint::zero());
        }
        let floor = &m >> down;
        let rem = &m - (&floor << down);
        let half = BigUint::one() << (down - 1);
        if rem > half || (rem == half && (&floor % 2u32) == BigUint::one()) {
            Ok(floor + BigUint::one())
        } else {
            Ok(floor)
        }
    }
}

/// Nearest-f64 conversion. Exact whenever the value fits in 53 bits.
pub fn biguint_to_f64(v: &BigUint) -> f64 {
    v.to_f64().unwrap_or(f64::INFINITY)
}

/// Nearest integer on the fixed-point grid of 2^-scale_bits steps:
/// round(x * 2^scale_bits), ties to even. This is the identical rounding
/// the homomorphic codec applies when encoding a value for the wire, so a
/// statistic quantized locally and one recovered from a decrypted encoding
/// land on the same integer.
pub fn quantize(x: f64, scale_bits: u32) -> Result<i128> {
    if !x.is_finite() {
        return Err(Error::domain(format!("cannot quantize non-finite value {x}")));
    }
    // Scaling by a power of two is exact in f64 short of overflow.
    let scaled = x * (2f64).powi(scale_bits as i32);
    if scaled.abs() >= (2f64).powi(126) {
        return Err(Error::domain(format!(
            "value {x} overflows the fixed-point range at scale 2^{scale_bits}"
        )));
    }
    Ok(scaled.round_ties_even() as i128)
}

/// Inverse of [`quantize`]: q / 2^scale_bits. The integer-to-float step
/// rounds to nearest (exact below 2^53) and the scaling is exact, matching
/// how decoded homomorphic sums are read back — equal integers dequantize
/// to bit-equal floats on both paths.
pub fn dequantize(q: i128, scale_bits: u32) -> f64 {
    (q as f64) * (2f64).powi(-(scale_bits as i32))
}

/// splitmix64 step; used to derive independent RNG stream seeds from one
/// run seed without correlated streams.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    #[test]
    fn small_primes_recognized() {
        let mut r = rng();
        for p in [2u32, 3, 5, 97, 997, 7919] {
            assert!(is_probable_prime(&BigUint::from(p), 16, &mut r), "{p}");
        }
        for c in [1u32, 4, 9, 91, 561, 7917] {
            assert!(!is_probable_prime(&BigUint::from(c), 16, &mut r), "{c}");
        }
    }

    #[test]
    fn carmichael_numbers_rejected() {
        let mut r = rng();
        for c in [561u32, 1105, 1729, 2465, 2821, 6601] {
            assert!(!is_probable_prime(&BigUint::from(c), 16, &mut r), "{c}");
        }
    }

    #[test]
    fn generated_primes_have_exact_size() {
        let mut r = rng();
        for _ in 0..4 {
            let p = gen_prime(128, &mut r).unwrap();
            assert_eq!(p.bits(), 128);
            let q = gen_prime(128, &mut r).unwrap();
            assert_eq!((p * q).bits(), 256);
        }
    }

    #[test]
    fn modinv_agrees_with_definition() {
        let mut r = rng();
        let m = gen_prime(64, &mut r).unwrap();
        for _ in 0..32 {
            let a = r.gen_biguint_range(&BigUint::one(), &m);
            let inv = modinv(&a, &m).unwrap();
            assert!(((a * inv) % &m).is_one());
        }
        // Non-invertible case.
        assert!(modinv(&BigUint::from(6u32), &BigUint::from(9u32)).is_none());
    }

    #[test]
    fn f64_round_matches_std_in_f64_range() {
        for x in [0.0, 0.4999, 0.5, 1.5, 2.5, 1e15, 123456.789, 0.75e9] {
            let got = f64_to_biguint_rounded(x).unwrap();
            let want = BigUint::from(x.round_ties_even() as u64);
            assert_eq!(got, want, "x={x}");
        }
    }

    #[test]
    fn f64_round_is_exact_beyond_53_bits() {
        // 2^80 is representable exactly as f64; conversion must not lose it.
        let x = (2f64).powi(80);
        assert_eq!(f64_to_biguint_rounded(x).unwrap(), BigUint::one() << 80);
    }

    #[test]
    fn f64_round_rejects_negative_and_nonfinite() {
        assert!(f64_to_biguint_rounded(-1.0).is_err());
        assert!(f64_to_biguint_rounded(f64::NAN).is_err());
        assert!(f64_to_biguint_rounded(f64::INFINITY).is_err());
    }

    #[test]
    fn quantize_rounds_ties_to_even() {
        // 1.5 grid units and 2.5 grid units both round to the even integer.
        assert_eq!(quantize(1.5, 0).unwrap(), 2);
        assert_eq!(quantize(2.5, 0).unwrap(), 2);
        assert_eq!(quantize(-1.5, 0).unwrap(), -2);
        assert_eq!(quantize(-2.5, 0).unwrap(), -2);
        // 3 * 2^-41 is exactly halfway between 1 and 2 grid steps at 40 bits.
        assert_eq!(quantize(3.0 * (2f64).powi(-41), 40).unwrap(), 2);
        assert_eq!(quantize(-3.0 * (2f64).powi(-41), 40).unwrap(), -2);
        assert_eq!(quantize(0.0, 40).unwrap(), 0);
        assert!(quantize(f64::NAN, 40).is_err());
        assert!(quantize(1e30, 126).is_err());
    }

    #[test]
    fn quantize_dequantize_round_trip_on_grid() {
        for &x in &[0.5, -0.25, 0.1875, -1.0, 1.0] {
            let q = quantize(x, 40).unwrap();
            assert_eq!(dequantize(q, 40), x, "x={x} is on the grid");
        }
        // Off-grid values land within half a step.
        let step = (2f64).powi(-40);
        for &x in &[0.1, -0.7, 0.333_333] {
            let back = dequantize(quantize(x, 40).unwrap(), 40);
            assert!((back - x).abs() <= step / 2.0, "x={x} back={back}");
        }
    }

    #[test]
    fn quantize_matches_biguint_rounding() {
        // The two rounding paths — signed i128 and magnitude BigUint — must
        // agree bit for bit, halves included.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(17);
        for _ in 0..2000 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let q = quantize(x, 40).unwrap();
            let scaled = x.abs() * (2f64).powi(40);
            let big = f64_to_biguint_rounded(scaled).unwrap();
            assert_eq!(BigUint::from(q.unsigned_abs()), big, "x={x}");
        }
    }

    #[test]
    fn mix_seed_separates_streams() {
        let a = mix_seed(42, 0);
        let b = mix_seed(42, 1);
        let c = mix_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        // Deterministic across calls.
        assert_eq!(a, mix_seed(42, 0));
    }
}
