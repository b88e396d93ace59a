//! Modular arithmetic helpers over `BigUint` and probabilistic primality testing.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand_core::RngCore;

pub fn add_mod(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    let s = a + b;
    if &s >= m {
        s - m
    } else {
        s
    }
}

pub fn sub_mod(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    if a >= b {
        a - b
    } else {
        m - (b - a)
    }
}

pub fn mul_mod(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    (a * b) % m
}

pub fn neg_mod(a: &BigUint, m: &BigUint) -> BigUint {
    if a.is_zero() {
        BigUint::zero()
    } else {
        m - a
    }
}

/// Inverse of `a` modulo `m` by the extended Euclidean algorithm; `None` if not invertible.
pub fn inv_mod(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    if a.is_zero() {
        return None;
    }
    a.modinv(m)
}

/// Uniform sample from `[lo, hi)`.
pub fn random_range<R: RngCore + ?Sized>(rng: &mut R, lo: &BigUint, hi: &BigUint) -> BigUint {
    rng.gen_biguint_range(lo, hi)
}

/// Uniform sample with exactly `bits` bits (top bit set).
pub fn random_bits<R: RngCore + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    let mut x = rng.gen_biguint(bits);
    x.set_bit(bits - 1, true);
    x
}

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Miller-Rabin with trial division by small primes.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: u32, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &sp in SMALL_PRIMES.iter() {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = random_range(rng, &two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

pub fn is_power_of_two(n: u64) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// `true` iff `a` divides `b`.
pub fn divides(a: &BigUint, b: &BigUint) -> bool {
    b.is_multiple_of(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn primality_matches_sieve_below_2000() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut sieve = [true; 2000];
        sieve[0] = false;
        sieve[1] = false;
        for i in 2..2000 {
            if sieve[i] {
                let mut j = i * i;
                while j < 2000 {
                    sieve[j] = false;
                    j += i;
                }
            }
        }
        for (i, &expect) in sieve.iter().enumerate() {
            assert_eq!(
                is_probable_prime(&BigUint::from(i as u32), 16, &mut rng),
                expect,
                "{i}"
            );
        }
    }

    #[test]
    fn carmichael_numbers_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for c in [561u32, 1105, 1729, 2465, 2821, 6601, 8911, 41041, 825265] {
            assert!(!is_probable_prime(&BigUint::from(c), 16, &mut rng));
        }
    }

    #[test]
    fn sub_and_inverse_wrap() {
        let q = BigUint::from(17u32);
        assert_eq!(sub_mod(&BigUint::from(3u32), &BigUint::from(5u32), &q), BigUint::from(15u32));
        assert_eq!(inv_mod(&BigUint::from(2u32), &q), Some(BigUint::from(9u32)));
        assert_eq!(inv_mod(&BigUint::zero(), &q), None);
    }
}
