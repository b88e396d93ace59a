//! Homomorphic hash h(B) = ∏ g_i^{b_i} mod p over the order-q subgroup.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::arith;
use crate::block::Block;
use crate::params::SystemParams;
#[cfg(feature = "client")]
use crate::params::SecretState;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashValue(pub BigUint);

impl HashValue {
    pub fn identity() -> Self {
        HashValue(BigUint::one())
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    /// Membership in G_q: nonzero, below p, and of order dividing q.
    pub fn is_valid(&self, params: &SystemParams) -> bool {
        !self.0.is_zero() && self.0 < params.p && self.0.modpow(&params.q, &params.p).is_one()
    }
}

/// Public hash: m exponentiations mod p.
pub fn hash_block(params: &SystemParams, block: &Block) -> HashValue {
    let p = &params.p;
    let acc = params
        .generators
        .iter()
        .zip(block.segments())
        .filter(|(_, b)| !b.is_zero())
        .fold(BigUint::one(), |acc, (g, b)| (acc * g.modpow(b, p)) % p);
    HashValue(acc)
}

/// Same value as [`hash_block`] using one exponentiation: g^{Σ γ_i b_i mod q}.
#[cfg(feature = "client")]
pub fn hash_block_secret(params: &SystemParams, secret: &SecretState, block: &Block) -> HashValue {
    let q = &params.q;
    let exponent = secret
        .gamma
        .iter()
        .zip(block.segments())
        .fold(BigUint::zero(), |acc, (gamma, b)| (acc + gamma * b) % q);
    HashValue(secret.g.modpow(&exponent, &params.p))
}

/// h1^{a1} · h2^{a2} mod p.
pub fn combine(
    params: &SystemParams,
    h1: &HashValue,
    a1: &BigUint,
    h2: &HashValue,
    a2: &BigUint,
) -> HashValue {
    let p = &params.p;
    HashValue((h1.0.modpow(a1, p) * h2.0.modpow(a2, p)) % p)
}

/// h^a mod p: the hash of the block scaled segment-wise by `a`.
pub fn scale(params: &SystemParams, h: &HashValue, a: &BigUint) -> HashValue {
    HashValue(h.0.modpow(a, &params.p))
}

/// h1 · h2 mod p: the hash of the segment-wise sum.
pub fn mul(params: &SystemParams, h1: &HashValue, h2: &HashValue) -> HashValue {
    HashValue(arith::mul_mod(&h1.0, &h2.0, &params.p))
}

/// h^{-1} mod p: the hash of the negated block.
pub fn invert(params: &SystemParams, h: &HashValue) -> HashValue {
    HashValue(arith::inv_mod(&h.0, &params.p).unwrap_or_else(BigUint::zero))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rng, tiny, toy};
    use alloc::vec::Vec;
    use num_bigint::RandBigInt;
    use rand::Rng;

    fn blk(v: &[u32]) -> Block {
        Block::new(v.iter().map(|&x| BigUint::from(x)).collect())
    }

    fn h(x: u32) -> HashValue {
        HashValue(BigUint::from(x))
    }

    fn big(x: u32) -> BigUint {
        BigUint::from(x)
    }

    #[test]
    fn tiny_vectors() {
        let (params, secret) = tiny();
        assert_eq!(hash_block(&params, &blk(&[0, 0])), h(1));
        assert_eq!(hash_block(&params, &blk(&[1, 1])), h(93));
        assert_eq!(hash_block(&params, &blk(&[2, 3])), h(76));
        assert_eq!(hash_block_secret(&params, &secret, &blk(&[2, 3])), h(76));
        assert_eq!(hash_block_secret(&params, &secret, &blk(&[0, 0])), h(1));
    }

    #[test]
    fn combine_and_scale_vectors() {
        let (params, _) = tiny();
        assert_eq!(combine(&params, &h(79), &big(2), &h(9), &big(3)), h(76));
        assert_eq!(combine(&params, &h(79), &big(1), &HashValue::identity(), &big(0)), h(79));
        assert_eq!(combine(&params, &h(79), &big(0), &h(9), &big(0)), h(1));
        assert_eq!(scale(&params, &h(79), &big(1)), h(79));
        assert_eq!(scale(&params, &h(79), &big(4)), hash_block(&params, &blk(&[4, 0])));
        assert_eq!(scale(&params, &h(79), &big(0)), h(1));
    }

    #[test]
    fn inverse_is_hash_of_negation() {
        let (params, _) = tiny();
        let b = blk(&[2, 3]);
        let neg = blk(&[15, 14]);
        assert_eq!(invert(&params, &hash_block(&params, &b)), hash_block(&params, &neg));
        assert_eq!(mul(&params, &hash_block(&params, &b), &hash_block(&params, &neg)), h(1));
    }

    #[test]
    fn homomorphism_exhaustive_single_segment() {
        let (mut params, _) = tiny();
        params.generators.truncate(1);
        let q = 17u32;
        for u in 0..q {
            for v in 0..q {
                for a in 0..q {
                    for b in [0u32, 1, 5, 16] {
                        let lhs = hash_block(&params, &blk(&[(a * u + b * v) % q]));
                        let hu = hash_block(&params, &blk(&[u]));
                        let hv = hash_block(&params, &blk(&[v]));
                        let rhs = combine(&params, &hu, &big(a), &hv, &big(b));
                        assert_eq!(lhs, rhs, "u={u} v={v} a={a} b={b}");
                    }
                }
            }
        }
    }

    #[test]
    fn collisions_exactly_on_gamma_kernel() {
        let (params, secret) = tiny();
        let q = 17u32;
        let hashes: Vec<(u32, u32, HashValue)> = (0..q)
            .flat_map(|x| (0..q).map(move |y| (x, y)))
            .map(|(x, y)| (x, y, hash_block(&params, &blk(&[x, y]))))
            .collect();
        let g1: u32 = secret.gamma[0].clone().try_into().unwrap();
        let g2: u32 = secret.gamma[1].clone().try_into().unwrap();
        for (u1, u2, hu) in &hashes {
            for (v1, v2, hv) in &hashes {
                let d = (g1 * ((u1 + q - v1) % q) + g2 * ((u2 + q - v2) % q)) % q;
                assert_eq!(hu == hv, d == 0);
            }
        }
    }

    #[test]
    fn homomorphism_and_secret_path_random() {
        let (params, secret) = toy(8, 6);
        let mut r = rng(42);
        for _ in 0..1000 {
            let u = Block::new((0..6).map(|_| r.gen_biguint_below(&params.q)).collect());
            let v = Block::new((0..6).map(|_| r.gen_biguint_below(&params.q)).collect());
            let a = r.gen_biguint_below(&params.q);
            let b = r.gen_biguint_below(&params.q);
            let w = Block::new(
                u.segments()
                    .iter()
                    .zip(v.segments())
                    .map(|(x, y)| (&a * x + &b * y) % &params.q)
                    .collect(),
            );
            let hu = hash_block(&params, &u);
            let hv = hash_block(&params, &v);
            assert_eq!(hash_block(&params, &w), combine(&params, &hu, &a, &hv, &b));
            assert_eq!(hash_block_secret(&params, &secret, &u), hu);
            assert!(hu.is_valid(&params));
            if r.gen_bool(0.1) {
                assert_eq!(hash_block_secret(&params, &secret, &w), hash_block(&params, &w));
            }
        }
    }
}
