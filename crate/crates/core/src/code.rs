//! Incrementally constructible FFT erasure code.
//!
//! Level l holds 2^l consecutive inputs x_0..x_{2^l−1} (oldest first) as a pair
//! of 2^l-element arrays. X is the cascade of `mix` over the inputs; Y is the
//! same cascade over the inputs twisted by ω^{ψ(t)}, t being each input's write
//! index mod n. Writing P(z) = Σ x_j z^{ψ_l(j)}, X[k] = P(ρ^k) and
//! Y[k] = c·P(ζ·ρ^k) with ρ a primitive 2^l-th root, ζ a primitive 2^{l+1}-th
//! root and c = ω^{ψ(start)}. Together the pair evaluates a polynomial of
//! degree < 2^l at all 2^{l+1}-th roots of unity, so any 2^l of the 2^{l+1}
//! symbols determine the inputs.
//!
//! Codeword positions are numbered X first: position `k < 2^l` is X[k],
//! position `2^l + k` is Y[k].

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::One;

use crate::arith;
use crate::error::{Error, Result};
use crate::linalg::{self, LinearModule, Scalars};
use crate::params::SystemParams;

/// Reverses the low `width` bits of `t`.
pub fn bit_reverse(t: u64, width: u32) -> Result<u64> {
    if width < 64 && t >> width != 0 {
        return Err(Error::OutOfRange { index: t, len: 1u64.checked_shl(width).unwrap_or(u64::MAX) });
    }
    Ok(if width == 0 { 0 } else { t.reverse_bits() >> (64 - width) })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FftCode {
    q: BigUint,
    omega: BigUint,
    n: u64,
    log_n: u32,
}

impl FftCode {
    pub fn new(params: &SystemParams) -> Self {
        Self::from_parts(params.q.clone(), params.omega.clone(), params.n)
    }

    /// `omega` must be a primitive 2n-th root of unity mod `q`.
    pub fn from_parts(q: BigUint, omega: BigUint, n: u64) -> Self {
        assert!(arith::is_power_of_two(n), "n must be a power of two");
        FftCode { q, omega, n, log_n: n.trailing_zeros() }
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn log_n(&self) -> u32 {
        self.log_n
    }

    pub fn scalars(&self) -> Scalars<'_> {
        Scalars { q: &self.q }
    }

    fn omega_pow(&self, e: u64) -> BigUint {
        self.omega.modpow(&BigUint::from(e), &self.q)
    }

    fn check_level(&self, l: u32) -> Result<()> {
        if l > self.log_n {
            return Err(Error::OutOfRange { index: l as u64, len: self.log_n as u64 + 1 });
        }
        Ok(())
    }

    /// ω_l = ω^{2n / 2^{l+1}}, a primitive 2^{l+1}-th root.
    pub fn omega_level(&self, l: u32) -> Result<BigUint> {
        self.check_level(l)?;
        Ok(self.omega_pow(self.n >> l))
    }

    /// ω^{ψ(t mod n)}: the Y-side factor for the input written at index t.
    pub fn twist(&self, t: u64) -> BigUint {
        let psi = bit_reverse(t % self.n, self.log_n).expect("reduced mod n");
        self.omega_pow(psi)
    }

    /// out[i] = A0[i] + ω_l^i·A1[i], out[i + 2^l] = A0[i] − ω_l^i·A1[i].
    pub fn mix<M: LinearModule>(&self, module: &M, a0: &[M::Elem], a1: &[M::Elem], l: u32) -> Result<Vec<M::Elem>> {
        let half = 1usize << l;
        if a0.len() != half || a1.len() != half {
            return Err(Error::LengthMismatch { expected: half, got: if a0.len() != half { a0.len() } else { a1.len() } });
        }
        let w = self.omega_level(l)?;
        let mut out = Vec::with_capacity(2 * half);
        let mut low = Vec::with_capacity(half);
        let mut high = Vec::with_capacity(half);
        let mut wi = BigUint::one();
        for (x0, x1) in a0.iter().zip(a1) {
            let t = module.scale(&wi, x1);
            low.push(module.add(x0, &t));
            high.push(module.sub(x0, &t));
            wi = arith::mul_mod(&wi, &w, &self.q);
        }
        out.extend(low);
        out.extend(high);
        Ok(out)
    }

    /// Inverse of [`FftCode::mix`].
    fn unmix<M: LinearModule>(&self, module: &M, out: &[M::Elem], l: u32) -> (Vec<M::Elem>, Vec<M::Elem>) {
        let half = 1usize << l;
        let w_inv = arith::inv_mod(&self.omega_level(l).expect("level checked"), &self.q).expect("unit");
        let two_inv = arith::inv_mod(&BigUint::from(2u32), &self.q).expect("odd q");
        let mut a0 = Vec::with_capacity(half);
        let mut a1 = Vec::with_capacity(half);
        let mut wi = two_inv.clone();
        for i in 0..half {
            let (lo, hi) = (&out[i], &out[i + half]);
            a0.push(module.scale(&two_inv, &module.add(lo, hi)));
            a1.push(module.scale(&wi, &module.sub(lo, hi)));
            wi = arith::mul_mod(&wi, &w_inv, &self.q);
        }
        (a0, a1)
    }

    /// Builds X_l from full levels X_0..X_{l−1} (`lower[i]` has 2^i elements)
    /// and one incoming element. The caller empties the lower levels.
    pub fn rebuild_level<M: LinearModule>(
        &self,
        module: &M,
        lower: &[Vec<M::Elem>],
        incoming: &M::Elem,
        l: u32,
    ) -> Result<Vec<M::Elem>> {
        self.check_level(l)?;
        if lower.len() != l as usize {
            return Err(Error::LengthMismatch { expected: l as usize, got: lower.len() });
        }
        let mut acc = vec![incoming.clone()];
        for (i, level) in lower.iter().enumerate() {
            if level.is_empty() {
                return Err(Error::EmptyLevel(i as u32));
            }
            acc = self.mix(module, level, &acc, i as u32)?;
        }
        Ok(acc)
    }

    /// Rebuilds both sides of level l for the input written at index `t`.
    pub fn rebuild_pair<M: LinearModule>(
        &self,
        module: &M,
        lower_x: &[Vec<M::Elem>],
        lower_y: &[Vec<M::Elem>],
        incoming: &M::Elem,
        t: u64,
        l: u32,
    ) -> Result<(Vec<M::Elem>, Vec<M::Elem>)> {
        let x = self.rebuild_level(module, lower_x, incoming, l)?;
        let y = self.rebuild_level(module, lower_y, &module.scale(&self.twist(t), incoming), l)?;
        Ok((x, y))
    }

    /// Encodes 2^l inputs written at indices start..start+2^l by feeding them
    /// one at a time through the rebuild cascade.
    pub fn encode_level<M: LinearModule>(
        &self,
        module: &M,
        inputs: &[M::Elem],
        start: u64,
    ) -> Result<(Vec<M::Elem>, Vec<M::Elem>)> {
        let len = inputs.len() as u64;
        if !arith::is_power_of_two(len) {
            return Err(Error::NotPowerOfTwo(len));
        }
        let l = len.trailing_zeros();
        self.check_level(l)?;
        if start % len != 0 {
            return Err(Error::InvalidParams("level start must be aligned to its size"));
        }
        // binary-counter stack: level i is occupied iff bit i of the input count is set
        let mut stack: Vec<Option<(Vec<M::Elem>, Vec<M::Elem>)>> = (0..=l).map(|_| None).collect();
        for (j, input) in inputs.iter().enumerate() {
            let target = (j as u64).trailing_ones() as usize;
            let (lower_x, lower_y): (Vec<_>, Vec<_>) =
                stack[..target].iter_mut().map(|s| s.take().expect("lower level full")).unzip();
            let pair = self.rebuild_pair(module, &lower_x, &lower_y, input, start + j as u64, target as u32)?;
            stack[target] = Some(pair);
        }
        Ok(stack.pop().flatten().expect("top level built"))
    }

    /// Encodes the n inputs of a full rebuild of C.
    pub fn encode_full<M: LinearModule>(&self, module: &M, inputs: &[M::Elem]) -> Result<(Vec<M::Elem>, Vec<M::Elem>)> {
        if inputs.len() as u64 != self.n {
            return Err(Error::LengthMismatch { expected: self.n as usize, got: inputs.len() });
        }
        self.encode_level(module, inputs, 0)
    }

    /// Coefficient of input j at codeword position `pos` of a level of size
    /// 2^l starting at write index `start`.
    pub fn coefficient(&self, l: u32, start: u64, j: u64, pos: u64) -> Result<BigUint> {
        self.check_level(l)?;
        let size = 1u64 << l;
        if j >= size || pos >= 2 * size {
            return Err(Error::OutOfRange { index: pos.max(j), len: 2 * size });
        }
        let psi_j = bit_reverse(j, l)?;
        // ρ = ω^{2n/2^l}, ζ = ω^{n/2^l}; exponents reduced mod 2n
        let two_n = 2 * self.n;
        let step = self.n >> l;
        let e = if pos < size {
            (2 * step * (pos * psi_j % (2 * size))) % two_n
        } else {
            let k = pos - size;
            let c = bit_reverse(start % self.n, self.log_n)?;
            (c + step * ((2 * k + 1) * psi_j % (2 * size))) % two_n
        };
        Ok(self.omega_pow(e))
    }

    /// 2^l × 2^{l+1} matrix, row j = codeword of the unit input e_j, produced
    /// by running the cascade itself.
    pub fn generator_matrix(&self, l: u32, start: u64) -> Result<Vec<Vec<BigUint>>> {
        self.check_level(l)?;
        let size = 1usize << l;
        let s = self.scalars();
        (0..size)
            .map(|j| {
                let unit: Vec<BigUint> = (0..size).map(|i| BigUint::from((i == j) as u32)).collect();
                let (mut x, y) = self.encode_level(&s, &unit, start)?;
                x.extend(y);
                Ok(x)
            })
            .collect()
    }

    /// Recovers the 2^l inputs of a level from at least 2^l distinct known
    /// codeword positions.
    pub fn decode<M: LinearModule>(
        &self,
        module: &M,
        known: &[(u64, M::Elem)],
        l: u32,
        start: u64,
    ) -> Result<Vec<M::Elem>> {
        self.check_level(l)?;
        let size = 1u64 << l;
        let mut picked: Vec<(u64, &M::Elem)> = Vec::new();
        let mut seen = alloc::collections::BTreeSet::new();
        for (pos, e) in known {
            if *pos >= 2 * size {
                return Err(Error::OutOfRange { index: *pos, len: 2 * size });
            }
            if seen.insert(*pos) {
                picked.push((*pos, e));
            }
        }
        if (picked.len() as u64) < size {
            return Err(Error::Insufficient { need: size as usize, have: picked.len() });
        }
        picked.sort_by_key(|(p, _)| *p);
        // whole X side known: invert the butterflies directly
        if picked[..size as usize].iter().enumerate().all(|(k, (p, _))| *p == k as u64) {
            let x: Vec<M::Elem> = picked[..size as usize].iter().map(|(_, e)| (*e).clone()).collect();
            return Ok(self.invert_cascade(module, x, l));
        }
        let ys: Vec<&(u64, &M::Elem)> = picked.iter().filter(|(p, _)| *p >= size).collect();
        if ys.len() as u64 == size {
            let y: Vec<M::Elem> = ys.iter().map(|(_, e)| (*e).clone()).collect();
            let twisted = self.invert_cascade(module, y, l);
            return twisted
                .iter()
                .enumerate()
                .map(|(j, e)| {
                    let inv = arith::inv_mod(&self.twist(start + j as u64), &self.q).ok_or(Error::Singular)?;
                    Ok(module.scale(&inv, e))
                })
                .collect();
        }
        let chosen = &picked[..size as usize];
        let rows = chosen
            .iter()
            .map(|(pos, _)| (0..size).map(|j| self.coefficient(l, start, j, *pos)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let rhs = chosen.iter().map(|(_, e)| (*e).clone()).collect();
        linalg::solve(&self.q, module, size as usize, rows, rhs).map_err(|e| match e {
            Error::Singular => Error::Extraction("code matrix singular: parameters are corrupt".into()),
            other => other,
        })
    }

    fn invert_cascade<M: LinearModule>(&self, module: &M, out: Vec<M::Elem>, l: u32) -> Vec<M::Elem> {
        if l == 0 {
            return out;
        }
        let (a0, a1) = self.unmix(module, &out, l - 1);
        let mut res = self.invert_cascade(module, a0, l - 1);
        res.extend(self.invert_cascade(module, a1, l - 1));
        res
    }
}
