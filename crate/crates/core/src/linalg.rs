//! Linear algebra over Z_q with right-hand sides drawn from any Z_q-module.

use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::arith;
use crate::block::Block;
use crate::error::{Error, Result};
use crate::homhash::HashValue;

/// A Z_q-module: the code cascade and the solver run unchanged on scalars,
/// blocks (segment-wise mod q) and hash values (multiplicatively mod p).
pub trait LinearModule {
    type Elem: Clone;
    fn zero(&self) -> Self::Elem;
    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn sub(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn scale(&self, k: &BigUint, x: &Self::Elem) -> Self::Elem;
}

/// Z_q itself.
#[derive(Debug, Clone, Copy)]
pub struct Scalars<'a> {
    pub q: &'a BigUint,
}

impl LinearModule for Scalars<'_> {
    type Elem = BigUint;
    fn zero(&self) -> BigUint {
        BigUint::zero()
    }
    fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        arith::add_mod(a, b, self.q)
    }
    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        arith::sub_mod(a, b, self.q)
    }
    fn scale(&self, k: &BigUint, x: &BigUint) -> BigUint {
        arith::mul_mod(k, x, self.q)
    }
}

/// Blocks of `m` segments, operated on segment-wise mod q.
#[derive(Debug, Clone, Copy)]
pub struct Blocks<'a> {
    pub q: &'a BigUint,
    pub m: usize,
}

impl LinearModule for Blocks<'_> {
    type Elem = Block;
    fn zero(&self) -> Block {
        Block::zero(self.m)
    }
    fn add(&self, a: &Block, b: &Block) -> Block {
        zip_segments(a, b, |x, y| arith::add_mod(x, y, self.q))
    }
    fn sub(&self, a: &Block, b: &Block) -> Block {
        zip_segments(a, b, |x, y| arith::sub_mod(x, y, self.q))
    }
    fn scale(&self, k: &BigUint, x: &Block) -> Block {
        Block::new(x.segments().iter().map(|s| arith::mul_mod(k, s, self.q)).collect())
    }
}

fn zip_segments(a: &Block, b: &Block, f: impl Fn(&BigUint, &BigUint) -> BigUint) -> Block {
    debug_assert_eq!(a.len(), b.len());
    Block::new(a.segments().iter().zip(b.segments()).map(|(x, y)| f(x, y)).collect())
}

/// Hash values in G_q: addition of blocks is multiplication of hashes and
/// scaling is exponentiation.
#[derive(Debug, Clone, Copy)]
pub struct Hashes<'a> {
    pub p: &'a BigUint,
}

impl LinearModule for Hashes<'_> {
    type Elem = HashValue;
    fn zero(&self) -> HashValue {
        HashValue::identity()
    }
    fn add(&self, a: &HashValue, b: &HashValue) -> HashValue {
        HashValue(arith::mul_mod(&a.0, &b.0, self.p))
    }
    fn sub(&self, a: &HashValue, b: &HashValue) -> HashValue {
        let inv = arith::inv_mod(&b.0, self.p).unwrap_or_else(BigUint::zero);
        HashValue(arith::mul_mod(&a.0, &inv, self.p))
    }
    fn scale(&self, k: &BigUint, x: &HashValue) -> HashValue {
        HashValue(x.0.modpow(k, self.p))
    }
}

/// Σ coeffs[i] · elems[i].
pub fn combination<M: LinearModule>(module: &M, coeffs: &[BigUint], elems: &[M::Elem]) -> M::Elem {
    coeffs
        .iter()
        .zip(elems)
        .fold(module.zero(), |acc, (c, e)| module.add(&acc, &module.scale(c, e)))
}

/// Solves `rows · x = rhs` for `cols` unknowns by Gauss-Jordan elimination.
///
/// Extra rows are allowed; they are reduced along with the rest and ignored
/// once a pivot has been found for every column. Errors with
/// [`Error::Singular`] when the rows do not reach full column rank.
pub fn solve<M: LinearModule>(
    q: &BigUint,
    module: &M,
    cols: usize,
    mut rows: Vec<Vec<BigUint>>,
    mut rhs: Vec<M::Elem>,
) -> Result<Vec<M::Elem>> {
    if rows.len() != rhs.len() {
        return Err(Error::LengthMismatch { expected: rows.len(), got: rhs.len() });
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(Error::LengthMismatch { expected: cols, got: bad.len() });
    }
    if rows.len() < cols {
        return Err(Error::Insufficient { need: cols, have: rows.len() });
    }
    for c in 0..cols {
        // partial pivoting by first nonzero entry
        let pivot = (c..rows.len()).find(|&r| !rows[r][c].is_zero()).ok_or(Error::Singular)?;
        rows.swap(c, pivot);
        rhs.swap(c, pivot);
        let inv = arith::inv_mod(&rows[c][c], q).ok_or(Error::Singular)?;
        if !inv.is_one() {
            for v in rows[c].iter_mut().skip(c) {
                *v = arith::mul_mod(v, &inv, q);
            }
            rhs[c] = module.scale(&inv, &rhs[c]);
        }
        let (pivot_row, pivot_rhs) = (rows[c].clone(), rhs[c].clone());
        for r in (0..rows.len()).filter(|&r| r != c) {
            let f = rows[r][c].clone();
            if f.is_zero() {
                continue;
            }
            for (v, pv) in rows[r].iter_mut().zip(&pivot_row).skip(c) {
                *v = arith::sub_mod(v, &arith::mul_mod(&f, pv, q), q);
            }
            rhs[r] = module.sub(&rhs[r], &module.scale(&f, &pivot_rhs));
        }
    }
    rhs.truncate(cols);
    Ok(rhs)
}

/// Rank of a matrix over Z_q.
pub fn rank(q: &BigUint, rows: &[Vec<BigUint>]) -> usize {
    let mut rows: Vec<Vec<BigUint>> = rows.iter().map(|r| r.iter().map(|x| x % q).collect()).collect();
    let cols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(pivot) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else { continue };
        rows.swap(r, pivot);
        let inv = arith::inv_mod(&rows[r][c], q).expect("nonzero mod prime");
        let pivot_row: Vec<BigUint> = rows[r].iter().map(|x| arith::mul_mod(x, &inv, q)).collect();
        for row in rows.iter_mut().skip(r + 1) {
            let f = row[c].clone();
            for (x, y) in row.iter_mut().zip(&pivot_row) {
                *x = arith::sub_mod(x, &arith::mul_mod(&f, y, q), q);
            }
        }
        r += 1;
    }
    r
}

/// Incrementally maintained row-echelon basis: answers whether a new row is
/// independent of those seen so far.
#[derive(Debug, Clone)]
pub struct Basis {
    q: BigUint,
    cols: usize,
    /// Normalized rows, each with a leading 1 at `pivots[i]`.
    rows: Vec<Vec<BigUint>>,
    pivots: Vec<usize>,
}

impl Basis {
    pub fn new(q: BigUint, cols: usize) -> Self {
        Basis { q, cols, rows: Vec::new(), pivots: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.cols
    }

    fn reduce(&self, row: &[BigUint]) -> Vec<BigUint> {
        let q = &self.q;
        let mut v: Vec<BigUint> = row.iter().map(|x| x % q).collect();
        for (b, &p) in self.rows.iter().zip(&self.pivots) {
            let f = v[p].clone();
            if f.is_zero() {
                continue;
            }
            for (x, y) in v.iter_mut().zip(b).skip(p) {
                *x = arith::sub_mod(x, &arith::mul_mod(&f, y, q), q);
            }
        }
        v
    }

    pub fn is_independent(&self, row: &[BigUint]) -> bool {
        self.reduce(row).iter().any(|x| !x.is_zero())
    }

    /// Adds `row` if it is independent; returns whether it was added.
    pub fn insert(&mut self, row: &[BigUint]) -> bool {
        assert_eq!(row.len(), self.cols, "row width");
        let mut v = self.reduce(row);
        let Some(p) = v.iter().position(|x| !x.is_zero()) else { return false };
        let inv = arith::inv_mod(&v[p], &self.q).expect("nonzero mod prime");
        for x in v.iter_mut().skip(p) {
            *x = arith::mul_mod(x, &inv, &self.q);
        }
        // keep pivots sorted so a single reduction pass suffices
        let at = self.pivots.partition_point(|&q| q < p);
        self.pivots.insert(at, p);
        self.rows.insert(at, v);
        // rows after the new one may have a nonzero entry in column p
        let (q, newrow) = (self.q.clone(), self.rows[at].clone());
        for r in 0..self.rows.len() {
            if r == at {
                continue;
            }
            let f = self.rows[r][p].clone();
            if f.is_zero() {
                continue;
            }
            for (x, y) in self.rows[r].iter_mut().zip(&newrow) {
                *x = arith::sub_mod(x, &arith::mul_mod(&f, y, &q), &q);
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rng, toy};
    use alloc::vec;
    use num_bigint::RandBigInt;
    use rand::Rng;

    fn b(x: u32) -> BigUint {
        BigUint::from(x)
    }

    fn mat(rows: &[&[u32]]) -> Vec<Vec<BigUint>> {
        rows.iter().map(|r| r.iter().map(|&x| b(x)).collect()).collect()
    }

    #[test]
    fn solves_small_system_mod_17() {
        let q = b(17);
        let m = Scalars { q: &q };
        // 2x + 3y = 8, x + y = 3  →  x = 1, y = 2
        let x = solve(&q, &m, 2, mat(&[&[2, 3], &[1, 1]]), vec![b(8), b(3)]).unwrap();
        assert_eq!(x, [b(1), b(2)]);
        // needs a row swap: leading zero
        let x = solve(&q, &m, 2, mat(&[&[0, 1], &[1, 0]]), vec![b(5), b(7)]).unwrap();
        assert_eq!(x, [b(7), b(5)]);
    }

    #[test]
    fn singular_and_short_systems() {
        let q = b(17);
        let m = Scalars { q: &q };
        assert_eq!(solve(&q, &m, 2, mat(&[&[1, 2], &[2, 4]]), vec![b(1), b(2)]), Err(Error::Singular));
        assert!(matches!(solve(&q, &m, 2, mat(&[&[1, 2]]), vec![b(1)]), Err(Error::Insufficient { .. })));
        assert_eq!(rank(&q, &mat(&[&[1, 2], &[2, 4], &[0, 0]])), 1);
    }

    #[test]
    fn random_block_systems_round_trip() {
        let (params, _) = toy(4, 3);
        let q = &params.q;
        let blocks = Blocks { q, m: 3 };
        let mut r = rng(11);
        for k in 1..8usize {
            let xs: Vec<Block> = (0..k).map(|_| Block::new((0..3).map(|_| r.gen_biguint_below(q)).collect())).collect();
            let extra = r.gen_range(0..3);
            let rows: Vec<Vec<BigUint>> =
                (0..k + extra).map(|_| (0..k).map(|_| r.gen_biguint_below(q)).collect()).collect();
            let rhs = rows.iter().map(|row| combination(&blocks, row, &xs)).collect();
            assert_eq!(solve(q, &blocks, k, rows, rhs).unwrap(), xs);
        }
    }

    #[test]
    fn hash_module_matches_block_module() {
        let (params, _) = toy(4, 3);
        let blocks = Blocks { q: &params.q, m: 3 };
        let hashes = Hashes { p: &params.p };
        let mut r = rng(12);
        for _ in 0..50 {
            let x = Block::new((0..3).map(|_| r.gen_biguint_below(&params.q)).collect());
            let y = Block::new((0..3).map(|_| r.gen_biguint_below(&params.q)).collect());
            let k = r.gen_biguint_below(&params.q);
            let h = |v: &Block| crate::homhash::hash_block(&params, v);
            assert_eq!(h(&blocks.add(&x, &y)), hashes.add(&h(&x), &h(&y)));
            assert_eq!(h(&blocks.sub(&x, &y)), hashes.sub(&h(&x), &h(&y)));
            assert_eq!(h(&blocks.scale(&k, &x)), hashes.scale(&k, &h(&x)));
        }
    }

    #[test]
    fn basis_tracks_rank() {
        let q = b(17);
        let mut basis = Basis::new(q.clone(), 3);
        assert!(basis.insert(&[b(0), b(1), b(2)]));
        assert!(!basis.insert(&[b(0), b(2), b(4)]));
        assert!(basis.insert(&[b(1), b(0), b(0)]));
        assert!(!basis.is_independent(&[b(3), b(1), b(2)]));
        assert!(basis.is_independent(&[b(0), b(0), b(1)]));
        assert!(basis.insert(&[b(5), b(5), b(5)]));
        assert!(basis.is_full());
        let mut r = rng(3);
        for _ in 0..50 {
            let rows: Vec<Vec<BigUint>> =
                (0..5).map(|_| (0..4).map(|_| b(r.gen_range(0..3))).collect()).collect();
            let mut basis = Basis::new(q.clone(), 4);
            let added = rows.iter().filter(|row| basis.insert(row)).count();
            assert_eq!(added, rank(&q, &rows));
        }
    }
}
