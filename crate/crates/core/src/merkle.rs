//! Index-addressable Merkle tree over the tags of U.
//!
//! Leaf label = SHA-256(0x00 ‖ payload), internal label = SHA-256(0x01 ‖ l ‖ r).
//! A level with an odd number of nodes promotes its last label unchanged, so a
//! node's label depends only on the leaves inside its range. That is what lets
//! [`predict_root`] recompute a future root from one or two authentication paths.
//!
//! Three mutations are supported: overwrite a leaf, append a leaf, and
//! swap-remove (move the last leaf into the hole, optionally with a new payload,
//! then truncate).

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};
use crate::wire::{Reader, Wire, Writer};

pub type Digest = [u8; 32];

pub fn leaf_label(payload: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update([0x00]);
    h.update(payload);
    h.finalize().into()
}

pub fn node_label(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([0x01]);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

/// Number of labels on a root path for a tree of `len` leaves.
pub fn height(len: u64) -> u32 {
    if len <= 1 {
        0
    } else {
        64 - (len - 1).leading_zeros()
    }
}

/// Node count at `level` for `len` leaves.
fn width_at(len: u64, level: u32) -> u64 {
    len.div_ceil(1u64 << level)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    /// The path node is a left child; its sibling sits on the right.
    SiblingRight(Digest),
    /// The path node is a right child; its sibling sits on the left.
    SiblingLeft(Digest),
    /// The path node is the last odd node and is promoted unchanged.
    Promoted,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MerkleProof {
    pub leaf: Vec<u8>,
    /// Bottom-up, one step per level.
    pub path: Vec<Step>,
}

impl MerkleProof {
    /// Walks the path, recording every label it implies for a tree of `len`
    /// leaves with the leaf at `index`. Returns the root, or `None` if the
    /// proof's shape does not fit (len, index).
    fn walk(&self, len: u64, index: u64, known: &mut Option<&mut BTreeMap<(u32, u64), Digest>>) -> Option<Digest> {
        if index >= len || self.path.len() != height(len) as usize {
            return None;
        }
        let mut label = leaf_label(&self.leaf);
        let mut j = index;
        for (k, step) in self.path.iter().enumerate() {
            let k = k as u32;
            if let Some(map) = known.as_deref_mut() {
                map.insert((k, j), label);
            }
            let last = width_at(len, k) - 1;
            label = match (step, j % 2 == 1) {
                (Step::SiblingLeft(s), true) => {
                    if let Some(map) = known.as_deref_mut() {
                        map.insert((k, j - 1), *s);
                    }
                    node_label(s, &label)
                }
                (Step::SiblingRight(s), false) if j < last => {
                    if let Some(map) = known.as_deref_mut() {
                        map.insert((k, j + 1), *s);
                    }
                    node_label(&label, s)
                }
                (Step::Promoted, false) if j == last => label,
                _ => return None,
            };
            j >>= 1;
        }
        if let Some(map) = known.as_deref_mut() {
            map.insert((height(len), 0), label);
        }
        Some(label)
    }

    /// Number of encoded bytes.
    pub fn encoded_len(&self) -> usize {
        2 + self.leaf.len() + 1 + 33 * self.path.len()
    }
}

impl Wire for MerkleProof {
    fn put(&self, w: &mut Writer) {
        w.bytes16(&self.leaf);
        w.u8(self.path.len() as u8);
        for step in &self.path {
            match step {
                Step::SiblingRight(d) => {
                    w.u8(0);
                    w.raw(d);
                }
                Step::SiblingLeft(d) => {
                    w.u8(1);
                    w.raw(d);
                }
                Step::Promoted => {
                    w.u8(2);
                    w.raw(&[0; 32]);
                }
            }
        }
    }

    fn get(r: &mut Reader<'_>) -> Result<Self> {
        let leaf = r.bytes16()?.to_vec();
        let count = r.u8()? as usize;
        let mut path = Vec::with_capacity(count);
        for _ in 0..count {
            let orientation = r.u8()?;
            let d: Digest = r.array()?;
            path.push(match orientation {
                0 => Step::SiblingRight(d),
                1 => Step::SiblingLeft(d),
                2 if d == [0; 32] => Step::Promoted,
                _ => return Err(Error::Decode("bad proof step")),
            });
        }
        Ok(MerkleProof { leaf, path })
    }
}

/// Accept iff `proof` authenticates its leaf at `index` in a tree of `len`
/// leaves with root `root`.
pub fn verify(root: &Digest, len: u64, index: u64, proof: &MerkleProof) -> bool {
    proof.walk(len, index, &mut None).as_ref() == Some(root)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeOp {
    Set { index: u64, leaf: Vec<u8> },
    Append { leaf: Vec<u8> },
    /// Removes `index`; the last leaf moves into its place carrying
    /// `replacement` (its re-signed payload) when `index` is not last.
    SwapRemove { index: u64, replacement: Option<Vec<u8>> },
}

impl TreeOp {
    /// Leaf indices whose proofs [`predict_root`] needs, for a tree of `len` leaves.
    pub fn required_proofs(&self, len: u64) -> Vec<u64> {
        match self {
            TreeOp::Set { index, .. } => vec![*index],
            TreeOp::Append { .. } => {
                if len == 0 {
                    vec![]
                } else {
                    vec![len - 1]
                }
            }
            TreeOp::SwapRemove { index, .. } => {
                if *index + 1 == len {
                    vec![*index]
                } else {
                    vec![*index, len - 1]
                }
            }
        }
    }

    /// New length and the new leaves by index.
    fn outcome(&self, len: u64) -> Result<(u64, Vec<(u64, &[u8])>)> {
        match self {
            TreeOp::Set { index, leaf } => {
                check_index(*index, len)?;
                Ok((len, vec![(*index, leaf.as_slice())]))
            }
            TreeOp::Append { leaf } => Ok((len + 1, vec![(len, leaf.as_slice())])),
            TreeOp::SwapRemove { index, replacement } => {
                check_index(*index, len)?;
                if len == 1 {
                    return Err(Error::protocol("cannot remove the only leaf"));
                }
                if *index + 1 == len {
                    Ok((len - 1, vec![]))
                } else {
                    let leaf = replacement.as_deref().ok_or(Error::protocol("swap-remove needs the moved leaf"))?;
                    Ok((len - 1, vec![(*index, leaf)]))
                }
            }
        }
    }
}

fn check_index(index: u64, len: u64) -> Result<()> {
    if index >= len {
        return Err(Error::OutOfRange { index, len });
    }
    Ok(())
}

/// Root the tree will have after `op`, computed only from the current root and
/// verified proofs for [`TreeOp::required_proofs`].
pub fn predict_root(root: &Digest, len: u64, proofs: &[(u64, &MerkleProof)], op: &TreeOp) -> Result<Digest> {
    let (new_len, changed) = op.outcome(len)?;
    let mut known = BTreeMap::new();
    for need in op.required_proofs(len) {
        let (_, proof) = proofs
            .iter()
            .find(|(i, _)| *i == need)
            .ok_or_else(|| Error::verification("missing authentication path"))?;
        if proof.walk(len, need, &mut Some(&mut known)).as_ref() != Some(root) {
            return Err(Error::verification("authentication path does not match root"));
        }
    }
    let changed: BTreeMap<u64, Digest> = changed.into_iter().map(|(i, leaf)| (i, leaf_label(leaf))).collect();
    let ctx = Predict { old_len: len, new_len, changed: &changed, known: &known };
    ctx.label(height(new_len), 0)
}

struct Predict<'a> {
    old_len: u64,
    new_len: u64,
    changed: &'a BTreeMap<u64, Digest>,
    known: &'a BTreeMap<(u32, u64), Digest>,
}

impl Predict<'_> {
    fn label(&self, k: u32, j: u64) -> Result<Digest> {
        let lo = j << k;
        let hi = (j + 1) << k;
        let same_range = hi.min(self.old_len) == hi.min(self.new_len);
        let touched = self.changed.range(lo..hi).next().is_some();
        if same_range && !touched {
            return self
                .known
                .get(&(k, j))
                .copied()
                .ok_or_else(|| Error::verification("proofs do not cover the update"));
        }
        if k == 0 {
            return self.changed.get(&j).copied().ok_or_else(|| Error::verification("missing leaf"));
        }
        let left = self.label(k - 1, 2 * j)?;
        if 2 * j + 1 < width_at(self.new_len, k - 1) {
            Ok(node_label(&left, &self.label(k - 1, 2 * j + 1)?))
        } else {
            Ok(left)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    leaves: Vec<Vec<u8>>,
    /// `levels[0]` are leaf labels; the last level holds the root alone.
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    pub fn build(leaves: Vec<Vec<u8>>) -> Result<Self> {
        if leaves.is_empty() {
            return Err(Error::InvalidParams("Merkle tree needs at least one leaf"));
        }
        let mut levels = vec![leaves.iter().map(|l| leaf_label(l)).collect::<Vec<_>>()];
        while levels.last().expect("nonempty").len() > 1 {
            let below = levels.last().expect("nonempty");
            let up = below
                .chunks(2)
                .map(|c| if c.len() == 2 { node_label(&c[0], &c[1]) } else { c[0] })
                .collect();
            levels.push(up);
        }
        Ok(MerkleTree { leaves, levels })
    }

    pub fn root(&self) -> Digest {
        self.levels.last().expect("nonempty")[0]
    }

    pub fn len(&self) -> u64 {
        self.leaves.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn height(&self) -> u32 {
        height(self.len())
    }

    pub fn leaf(&self, index: u64) -> Option<&[u8]> {
        self.leaves.get(index as usize).map(Vec::as_slice)
    }

    pub fn leaves(&self) -> &[Vec<u8>] {
        &self.leaves
    }

    pub fn prove(&self, index: u64) -> Result<MerkleProof> {
        check_index(index, self.len())?;
        let mut path = Vec::with_capacity(self.height() as usize);
        let mut j = index as usize;
        for level in &self.levels[..self.levels.len() - 1] {
            path.push(if j % 2 == 1 {
                Step::SiblingLeft(level[j - 1])
            } else if j + 1 < level.len() {
                Step::SiblingRight(level[j + 1])
            } else {
                Step::Promoted
            });
            j >>= 1;
        }
        Ok(MerkleProof { leaf: self.leaves[index as usize].clone(), path })
    }

    /// Applies `op` and returns the new root.
    pub fn apply(&mut self, op: &TreeOp) -> Result<Digest> {
        let len = self.len();
        let (new_len, changed) = op.outcome(len)?;
        let changed: Vec<(u64, Vec<u8>)> = changed.into_iter().map(|(i, l)| (i, l.to_vec())).collect();
        self.leaves.truncate(new_len as usize);
        let mut dirty: Vec<u64> = Vec::new();
        for (i, leaf) in changed {
            if i == self.leaves.len() as u64 {
                self.leaves.push(leaf);
            } else {
                self.leaves[i as usize] = leaf;
            }
            dirty.push(i);
        }
        if new_len < len {
            // ancestors of the removed last leaf change shape
            dirty.push(len - 1);
        }
        self.refresh(&dirty);
        Ok(self.root())
    }

    fn refresh(&mut self, dirty: &[u64]) {
        let len = self.len();
        let h = height(len) as usize;
        self.levels.truncate(h + 1);
        while self.levels.len() < h + 1 {
            self.levels.push(Vec::new());
        }
        for k in 0..=h {
            let width = width_at(len, k as u32) as usize;
            self.levels[k].truncate(width);
            self.levels[k].resize(width, [0; 32]);
            for &d in dirty {
                let j = (d >> k) as usize;
                if j >= width {
                    // the removed leaf's ancestor may now be the last node
                    if width > 0 {
                        self.recompute(k, width - 1);
                    }
                    continue;
                }
                self.recompute(k, j);
            }
        }
    }

    fn recompute(&mut self, k: usize, j: usize) {
        let label = if k == 0 {
            leaf_label(&self.leaves[j])
        } else {
            let below = &self.levels[k - 1];
            if 2 * j + 1 < below.len() {
                node_label(&below[2 * j], &below[2 * j + 1])
            } else {
                below[2 * j]
            }
        };
        self.levels[k][j] = label;
    }
}
