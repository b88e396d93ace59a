//! The storage party. It holds every buffer with its tags and performs all
//! block-side rebuilds itself, never touching secret material.
//!
//! Besides the honest behavior the server can run one [`AdversaryMode`] for
//! the security experiments.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_bigint::BigUint;
use sha2::{Digest as _, Sha256};

use crate::arith;
use crate::block::{data_block, Block, UpdateType, WriteRecord};
use crate::code::FftCode;
use crate::error::{Error, Result};
use crate::homhash::hash_block;
use crate::linalg::{Blocks, LinearModule};
use crate::merkle::{Digest, MerkleTree, TreeOp};
use crate::params::{Address, Side, SystemParams};
use crate::protocol::{AuditProof, Challenge, InitUpload, ReadProof, Request, Response, ServerLink};
use crate::schedule::{self, RebuildKind, RebuildTranscript};
use crate::sigtag::AuthTag;
use crate::wire::{to_bytes, Reader, Wire, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeleteTarget {
    Level(u32),
    C,
    /// Every occupied level and C.
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AdversaryMode {
    Honest,
    /// Zeroes ⌈num/den · slots⌉ pseudo-randomly chosen slots of each targeted
    /// structure and answers challenges on them with garbage.
    Delete { target: DeleteTarget, num: u64, den: u64, seed: u64 },
    /// Keeps serving the previous occupant (block and its genuine old tag) of `addr`.
    Stale { addr: Address },
    /// Perturbs one segment of the block at `addr` whenever it is served.
    BitFlip { addr: Address, segment: u32 },
    /// Acknowledges writes without applying them to U.
    SkipWrite,
}

impl AdversaryMode {
    /// Parses `honest`, `delete:<level|c|all>:<fraction>[:seed]`,
    /// `stale:<addr>`, `bitflip:<addr>:<segment>` and `skipwrite`, where
    /// `<addr>` is `u:<slot>`, `h:<level>:<x|y>:<slot>` or `c:<x|y>:<slot>`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidParams("unrecognized adversary mode");
        match parts.as_slice() {
            ["honest"] => Ok(AdversaryMode::Honest),
            ["skipwrite"] => Ok(AdversaryMode::SkipWrite),
            ["delete", target, frac, rest @ ..] => {
                let target = match *target {
                    "c" | "C" => DeleteTarget::C,
                    "all" => DeleteTarget::All,
                    l => DeleteTarget::Level(l.parse().map_err(|_| bad())?),
                };
                let (num, den) = parse_fraction(frac).ok_or_else(bad)?;
                let seed = match rest {
                    [] => 0,
                    [s] => s.parse().map_err(|_| bad())?,
                    _ => return Err(bad()),
                };
                Ok(AdversaryMode::Delete { target, num, den, seed })
            }
            ["stale", rest @ ..] => Ok(AdversaryMode::Stale { addr: parse_addr(rest).ok_or_else(bad)? }),
            ["bitflip", rest @ ..] if !rest.is_empty() => {
                let (seg, addr) = rest.split_last().expect("nonempty");
                Ok(AdversaryMode::BitFlip {
                    addr: parse_addr(addr).ok_or_else(bad)?,
                    segment: seg.parse().map_err(|_| bad())?,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// "0.49" → (49, 100); "1/3" → (1, 3). Must lie in [0, 1].
fn parse_fraction(s: &str) -> Option<(u64, u64)> {
    let (num, den) = if let Some((a, b)) = s.split_once('/') {
        (a.parse().ok()?, b.parse().ok()?)
    } else {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        (int * den + frac, den)
    };
    (den > 0 && num <= den).then_some((num, den))
}

fn parse_addr(parts: &[&str]) -> Option<Address> {
    let side = |s: &str| match s {
        "x" | "X" => Some(Side::X),
        "y" | "Y" => Some(Side::Y),
        _ => None,
    };
    match parts {
        ["u", slot] => Some(Address::U { slot: slot.parse().ok()? }),
        ["h", level, s, slot] => Some(Address::H { level: level.parse().ok()?, side: side(s)?, slot: slot.parse().ok()? }),
        ["c", s, slot] => Some(Address::C { side: side(s)?, slot: slot.parse().ok()? }),
        _ => None,
    }
}

type Pair<T> = (Vec<T>, Vec<T>);

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pending {
    transcript: RebuildTranscript,
    /// Tags of H slots that the rebuild emptied, kept until the client fetched them.
    source_tags: BTreeMap<Address, AuthTag>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Server {
    params: SystemParams,
    code: FftCode,
    u_blocks: Vec<Block>,
    u_tags: Vec<AuthTag>,
    /// Logical index → physical slot.
    order: Vec<u64>,
    merkle: MerkleTree,
    h: Vec<Option<Pair<Block>>>,
    h_tags: Vec<Option<Pair<AuthTag>>>,
    c: Pair<Block>,
    c_tags: Option<Pair<AuthTag>>,
    counter: u64,
    pending: Option<Pending>,
    mode: AdversaryMode,
    deleted: BTreeSet<Address>,
    stale_block: Option<Block>,
    stale_tag: Option<AuthTag>,
}

fn leaf_bytes(tag: &AuthTag) -> Vec<u8> {
    to_bytes(tag, 0)
}

fn side_index(side: Side) -> usize {
    match side {
        Side::X => 0,
        Side::Y => 1,
    }
}

fn pick<T>(pair: &Pair<T>, side: Side) -> &Vec<T> {
    if side_index(side) == 0 {
        &pair.0
    } else {
        &pair.1
    }
}

impl Server {
    /// Builds the initial store: U as uploaded, C encoded from U here.
    pub fn init(upload: InitUpload) -> Result<Server> {
        let InitUpload { params, blocks, u_tags, c_tags } = upload;
        let n = params.n;
        if blocks.is_empty() || blocks.len() as u64 > n {
            return Err(Error::protocol(format!("U must hold 1..={n} blocks")));
        }
        if u_tags.len() != blocks.len() || c_tags.len() as u64 != 2 * n {
            return Err(Error::protocol("tag count does not match the structures"));
        }
        if let Some(i) = blocks.iter().position(|b| !b.is_valid(&params)) {
            return Err(Error::protocol(format!("block {i} is malformed")));
        }
        let code = FftCode::new(&params);
        let merkle = MerkleTree::build(u_tags.iter().map(leaf_bytes).collect())?;
        let log_n = params.log_n() as usize;
        let mut c_x = c_tags;
        let c_y = c_x.split_off(n as usize);
        let mut server = Server {
            order: (0..blocks.len() as u64).collect(),
            u_blocks: blocks,
            u_tags,
            merkle,
            h: (0..log_n).map(|_| None).collect(),
            h_tags: (0..log_n).map(|_| None).collect(),
            c: (Vec::new(), Vec::new()),
            c_tags: Some((c_x, c_y)),
            counter: 0,
            pending: None,
            mode: AdversaryMode::Honest,
            deleted: BTreeSet::new(),
            stale_block: None,
            stale_tag: None,
            code,
            params,
        };
        server.c = server.encode_u()?;
        Ok(server)
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn root(&self) -> Digest {
        self.merkle.root()
    }

    pub fn len(&self) -> u64 {
        self.order.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn mode(&self) -> &AdversaryMode {
        &self.mode
    }

    /// Switches behavior. A delete mode picks and wipes its slots immediately.
    pub fn set_mode(&mut self, mode: AdversaryMode) {
        self.deleted.clear();
        self.stale_block = None;
        self.stale_tag = None;
        if let AdversaryMode::Delete { target, num, den, seed } = mode {
            let w = self.counter % self.params.n;
            let mut structures: Vec<Vec<Address>> = Vec::new();
            let occupied = schedule::occupied_levels(w);
            match target {
                DeleteTarget::Level(l) if occupied.contains(&l) => structures.push(schedule::level_addresses(l)),
                DeleteTarget::Level(_) => {}
                DeleteTarget::C => structures.push(schedule::c_addresses(self.params.n)),
                DeleteTarget::All => {
                    structures.extend(occupied.iter().map(|&l| schedule::level_addresses(l)));
                    structures.push(schedule::c_addresses(self.params.n));
                }
            }
            let m = self.params.m();
            for mut addrs in structures {
                let k = (addrs.len() as u64 * num).div_ceil(den) as usize;
                addrs.sort_by_cached_key(|a| {
                    let mut h = Sha256::new();
                    h.update(seed.to_be_bytes());
                    h.update(a.to_bytes());
                    <[u8; 32]>::from(h.finalize())
                });
                for a in addrs.into_iter().take(k) {
                    if let Some(b) = self.block_slot_mut(&a) {
                        *b = Block::zero(m);
                    }
                    self.deleted.insert(a);
                }
            }
        }
        self.mode = mode;
    }

    /// Addresses wiped by the current delete mode.
    pub fn deleted(&self) -> &BTreeSet<Address> {
        &self.deleted
    }

    fn encode_u(&self) -> Result<Pair<Block>> {
        let mut inputs: Vec<Block> = self.order.iter().map(|&s| self.u_blocks[s as usize].clone()).collect();
        inputs.resize(self.params.n as usize, Block::zero(self.params.m()));
        self.code.encode_full(&self.blocks_module(), &inputs)
    }

    fn blocks_module(&self) -> Blocks<'_> {
        Blocks { q: &self.params.q, m: self.params.m() }
    }

    fn block_slot_mut(&mut self, addr: &Address) -> Option<&mut Block> {
        match *addr {
            Address::U { slot } => self.u_blocks.get_mut(slot as usize),
            Address::H { level, side, slot } => {
                let pair = self.h.get_mut(level as usize)?.as_mut()?;
                let v = if side_index(side) == 0 { &mut pair.0 } else { &mut pair.1 };
                v.get_mut(slot as usize)
            }
            Address::C { side, slot } => {
                let v = if side_index(side) == 0 { &mut self.c.0 } else { &mut self.c.1 };
                v.get_mut(slot as usize)
            }
        }
    }

    /// Honest content of an occupied slot.
    pub fn stored_block(&self, addr: &Address) -> Option<&Block> {
        match *addr {
            Address::U { slot } => self.u_blocks.get(slot as usize),
            Address::H { level, side, slot } => pick(self.h.get(level as usize)?.as_ref()?, side).get(slot as usize),
            Address::C { side, slot } => pick(&self.c, side).get(slot as usize),
        }
    }

    pub fn stored_tag(&self, addr: &Address) -> Option<&AuthTag> {
        match *addr {
            Address::U { slot } => self.u_tags.get(slot as usize),
            Address::H { level, side, slot } => {
                pick(self.h_tags.get(level as usize)?.as_ref()?, side).get(slot as usize)
            }
            Address::C { side, slot } => pick(self.c_tags.as_ref()?, side).get(slot as usize),
        }
    }

    /// Block as this server chooses to serve it.
    fn served_block(&self, addr: &Address, nu: &BigUint) -> Result<Block> {
        let honest = self.stored_block(addr).ok_or_else(|| Error::protocol(format!("no block at {addr:?}")))?;
        match &self.mode {
            AdversaryMode::Delete { .. } if self.deleted.contains(addr) => Ok(self.garbage(addr, nu)),
            AdversaryMode::Stale { addr: a } if a == addr => Ok(self.stale_block.clone().unwrap_or_else(|| honest.clone())),
            AdversaryMode::BitFlip { addr: a, segment } if a == addr => {
                let mut b = honest.clone();
                if let Some(s) = b.segments_mut().get_mut(*segment as usize) {
                    *s = arith::add_mod(s, &BigUint::from(1u32), &self.params.q);
                }
                Ok(b)
            }
            _ => Ok(honest.clone()),
        }
    }

    fn served_tag(&self, addr: &Address) -> Result<AuthTag> {
        if let AdversaryMode::Stale { addr: a } = &self.mode {
            if a == addr {
                if let Some(t) = &self.stale_tag {
                    return Ok(t.clone());
                }
            }
        }
        if let Some(p) = &self.pending {
            if let Some(t) = p.source_tags.get(addr) {
                return Ok(t.clone());
            }
        }
        self.stored_tag(addr).cloned().ok_or_else(|| Error::protocol(format!("no tag at {addr:?}")))
    }

    /// Deterministic junk standing in for a block the server no longer has.
    fn garbage(&self, addr: &Address, nu: &BigUint) -> Block {
        let segs = (0..self.params.m() as u32)
            .map(|i| {
                let mut h = Sha256::new();
                h.update(b"garbage");
                h.update(addr.to_bytes());
                h.update(nu.to_bytes_be());
                h.update(i.to_be_bytes());
                BigUint::from_bytes_be(&h.finalize()) % &self.params.q
            })
            .collect();
        Block::new(segs)
    }

    fn capture_stale(&mut self, addr: &Address) {
        if let AdversaryMode::Stale { addr: a } = &self.mode {
            if a == addr {
                self.stale_block = self.stored_block(addr).cloned();
                self.stale_tag = self.stored_tag(addr).cloned();
            }
        }
    }

    fn capture_stale_all(&mut self, addrs: &[Address]) {
        if let AdversaryMode::Stale { addr } = self.mode.clone() {
            if addrs.contains(&addr) {
                self.capture_stale(&addr);
            }
        }
    }

    pub fn handle_read(&self, index: u64) -> Result<ReadProof> {
        let slot = *self.order.get(index as usize).ok_or(Error::OutOfRange { index, len: self.len() })?;
        let addr = Address::U { slot };
        let block = self.served_block(&addr, &BigUint::from(1u32))?;
        let mut proof = self.merkle.prove(slot)?;
        if let AdversaryMode::Stale { addr: a } = &self.mode {
            if *a == addr {
                if let Some(t) = &self.stale_tag {
                    proof.leaf = leaf_bytes(t);
                }
            }
        }
        Ok(ReadProof { slot, block, proof })
    }

    pub fn handle_proofs(&self, slots: &[u64]) -> Result<Vec<crate::merkle::MerkleProof>> {
        slots.iter().map(|&s| self.merkle.prove(s)).collect()
    }

    /// Applies a write to U and runs the block-side rebuild it triggers.
    pub fn handle_write(&mut self, record: &WriteRecord, u_tag: Option<&AuthTag>) -> Result<(Digest, RebuildTranscript)> {
        if self.pending.is_some() {
            return Err(Error::protocol("previous rebuild still awaits its tags"));
        }
        record.check_shape()?;
        let len = self.len();
        let n = self.params.n;
        let record_block = record.to_block(&self.params)?;
        let skip = self.mode == AdversaryMode::SkipWrite;
        let i = record.logical_index;
        let need_tag = || u_tag.cloned().ok_or_else(|| Error::protocol("write needs a U tag"));
        match record.updtype {
            UpdateType::Modify => {
                let slot = *self.order.get(i as usize).ok_or(Error::OutOfRange { index: i, len })?;
                let block = data_block(&self.params, record.payload.as_deref().unwrap_or(&[]))?;
                let tag = need_tag()?;
                if !skip {
                    self.capture_stale(&Address::U { slot });
                    self.merkle.apply(&TreeOp::Set { index: slot, leaf: leaf_bytes(&tag) })?;
                    self.u_blocks[slot as usize] = block;
                    self.u_tags[slot as usize] = tag;
                }
            }
            UpdateType::Insert => {
                if i > len {
                    return Err(Error::OutOfRange { index: i, len: len + 1 });
                }
                if len == n {
                    return Err(Error::protocol("U is at capacity"));
                }
                let block = data_block(&self.params, record.payload.as_deref().unwrap_or(&[]))?;
                let tag = need_tag()?;
                if !skip {
                    self.merkle.apply(&TreeOp::Append { leaf: leaf_bytes(&tag) })?;
                    self.u_blocks.push(block);
                    self.u_tags.push(tag);
                    self.order.insert(i as usize, len);
                }
            }
            UpdateType::Delete => {
                let slot = *self.order.get(i as usize).ok_or(Error::OutOfRange { index: i, len })?;
                if len == 1 {
                    return Err(Error::protocol("cannot delete the only block"));
                }
                let last = len - 1;
                let replacement = if slot == last {
                    None
                } else {
                    Some(need_tag()?)
                };
                if !skip {
                    self.capture_stale(&Address::U { slot });
                    self.merkle.apply(&TreeOp::SwapRemove { index: slot, replacement: replacement.as_ref().map(leaf_bytes) })?;
                    if let Some(tag) = replacement {
                        self.u_blocks.swap_remove(slot as usize);
                        self.u_tags.swap_remove(slot as usize);
                        self.u_tags[slot as usize] = tag;
                        let moved = self.order.iter().position(|&s| s == last).expect("last slot is mapped");
                        self.order[moved] = slot;
                    } else {
                        self.u_blocks.pop();
                        self.u_tags.pop();
                    }
                    self.order.remove(i as usize);
                }
            }
        }

        let transcript = schedule::plan_rebuild(n, self.counter, self.len());
        let w = self.counter % n;
        let mut source_tags = BTreeMap::new();
        match transcript.kind {
            RebuildKind::C => {
                let all_h: Vec<Address> = (0..self.h.len() as u32)
                    .filter(|&l| self.h[l as usize].is_some())
                    .flat_map(schedule::level_addresses)
                    .chain(schedule::c_addresses(n))
                    .collect();
                self.capture_stale_all(&all_h);
                self.c = self.encode_u()?;
                self.c_tags = None;
                self.h.iter_mut().for_each(|l| *l = None);
                self.h_tags.iter_mut().for_each(|l| *l = None);
            }
            RebuildKind::Level(l) => {
                self.capture_stale_all(&transcript.sources);
                let mut lower_x = Vec::with_capacity(l as usize);
                let mut lower_y = Vec::with_capacity(l as usize);
                for i in 0..l as usize {
                    let (x, y) = self.h[i].take().ok_or(Error::EmptyLevel(i as u32))?;
                    lower_x.push(x);
                    lower_y.push(y);
                    let (tx, ty) = self.h_tags[i].take().ok_or(Error::EmptyLevel(i as u32))?;
                    for (k, t) in tx.into_iter().enumerate() {
                        source_tags.insert(Address::H { level: i as u32, side: Side::X, slot: k as u64 }, t);
                    }
                    for (k, t) in ty.into_iter().enumerate() {
                        source_tags.insert(Address::H { level: i as u32, side: Side::Y, slot: k as u64 }, t);
                    }
                }
                let module = self.blocks_module();
                let pair = self.code.rebuild_pair(&module, &lower_x, &lower_y, &record_block, w, l)?;
                self.h[l as usize] = Some(pair);
                self.h_tags[l as usize] = None;
            }
        }
        self.pending = Some(Pending { transcript: transcript.clone(), source_tags });
        self.counter += 1;
        Ok((self.merkle.root(), transcript))
    }

    pub fn handle_fetch_tags(&self, addrs: &[Address]) -> Result<Vec<AuthTag>> {
        addrs.iter().map(|a| self.served_tag(a)).collect()
    }

    pub fn handle_store_tags(&mut self, addrs: &[Address], tags: Vec<AuthTag>) -> Result<()> {
        let pending = self.pending.as_ref().ok_or_else(|| Error::protocol("no rebuild awaits tags"))?;
        if addrs != pending.transcript.outputs.as_slice() {
            return Err(Error::protocol("stored addresses do not match the rebuild transcript"));
        }
        if tags.len() != addrs.len() {
            return Err(Error::LengthMismatch { expected: addrs.len(), got: tags.len() });
        }
        let half = tags.len() / 2;
        let mut x = tags;
        let y = x.split_off(half);
        match pending.transcript.kind {
            RebuildKind::Level(l) => self.h_tags[l as usize] = Some((x, y)),
            RebuildKind::C => self.c_tags = Some((x, y)),
        }
        self.pending = None;
        Ok(())
    }

    /// B* = Σ ν_i·B_i with the stored tags of the challenged slots.
    pub fn handle_audit(&self, challenge: &Challenge) -> Result<AuditProof> {
        let module = self.blocks_module();
        let mut bstar = module.zero();
        let mut tags = Vec::with_capacity(challenge.entries.len());
        for e in &challenge.entries {
            if matches!(e.addr, Address::U { .. }) {
                return Err(Error::protocol("U slots are not audited"));
            }
            let b = self.served_block(&e.addr, &e.nu)?;
            bstar = module.add(&bstar, &module.scale(&e.nu, &b));
            tags.push(self.served_tag(&e.addr)?);
        }
        Ok(AuditProof { bstar, tags, counter: self.counter })
    }

    /// Read-only requests; `None` for requests that mutate.
    pub fn handle_shared(&self, req: &Request) -> Option<Response> {
        let out = match req {
            Request::Read { index } => self.handle_read(*index).map(Response::ReadProof),
            Request::Proofs { slots } => self.handle_proofs(slots).map(Response::Proofs),
            Request::FetchTags { addrs } => self.handle_fetch_tags(addrs).map(Response::Tags),
            Request::Audit(c) => self.handle_audit(c).map(Response::AuditProof),
            _ => return None,
        };
        Some(out.unwrap_or_else(|e| Response::Error(e.to_string())))
    }

    pub fn handle(&mut self, req: &Request) -> Response {
        if let Some(resp) = self.handle_shared(req) {
            return resp;
        }
        let out = match req {
            Request::Init(_) => Err(Error::protocol("store already initialized")),
            Request::WriteApply { record, u_tag } => {
                self.handle_write(record, u_tag.as_ref()).map(|(root, transcript)| Response::WriteAck { root, transcript })
            }
            Request::StoreTags { addrs, tags } => self.handle_store_tags(addrs, tags.clone()).map(|()| Response::Ack),
            _ => unreachable!("read-only requests handled above"),
        };
        out.unwrap_or_else(|e| Response::Error(e.to_string()))
    }

    /// Structural parallelism plus, for every occupied H or C slot, the tag
    /// hash matching the stored block.
    pub fn check_coherence(&self) -> core::result::Result<(), String> {
        if self.pending.is_some() {
            return Err("rebuild pending".into());
        }
        if self.u_blocks.len() != self.u_tags.len() || self.order.len() != self.u_blocks.len() {
            return Err("U shape".into());
        }
        if self.merkle.len() != self.len() {
            return Err("Merkle tree length".into());
        }
        let mut slots: Vec<u64> = self.order.clone();
        slots.sort_unstable();
        if slots != (0..self.len()).collect::<Vec<_>>() {
            return Err("position map is not a permutation".into());
        }
        let w = self.counter % self.params.n;
        let mut addrs = schedule::c_addresses(self.params.n);
        for l in 0..self.h.len() as u32 {
            let occupied = w >> l & 1 == 1;
            if self.h[l as usize].is_some() != occupied || self.h_tags[l as usize].is_some() != occupied {
                return Err(format!("level {l} occupancy"));
            }
            if occupied {
                addrs.extend(schedule::level_addresses(l));
            }
        }
        for a in addrs {
            let (Some(b), Some(t)) = (self.stored_block(&a), self.stored_tag(&a)) else {
                return Err(format!("missing content at {a:?}"));
            };
            if hash_block(&self.params, b) != t.hash {
                return Err(format!("tag hash mismatch at {a:?}"));
            }
        }
        for (slot, (b, t)) in self.u_blocks.iter().zip(&self.u_tags).enumerate() {
            if hash_block(&self.params, b) != t.hash {
                return Err(format!("U tag hash mismatch at slot {slot}"));
            }
        }
        Ok(())
    }
}

impl ServerLink for Server {
    fn call(&mut self, req: &Request) -> Result<Response> {
        Ok(self.handle(req))
    }
}

fn put_pair<T: Wire>(w: &mut Writer, p: &Option<Pair<T>>) {
    match p {
        Some((x, y)) => {
            w.u8(1);
            w.seq(x);
            w.seq(y);
        }
        None => w.u8(0),
    }
}

fn get_pair<T: Wire>(r: &mut Reader<'_>) -> Result<Option<Pair<T>>> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some((r.seq()?, r.seq()?))),
        _ => Err(Error::Decode("bad level flag")),
    }
}

impl Wire for AdversaryMode {
    fn put(&self, w: &mut Writer) {
        match self {
            AdversaryMode::Honest => w.u8(0),
            AdversaryMode::Delete { target, num, den, seed } => {
                w.u8(1);
                match target {
                    DeleteTarget::Level(l) => {
                        w.u8(0);
                        w.u32(*l);
                    }
                    DeleteTarget::C => w.u8(1),
                    DeleteTarget::All => w.u8(2),
                }
                w.u64(*num);
                w.u64(*den);
                w.u64(*seed);
            }
            AdversaryMode::Stale { addr } => {
                w.u8(2);
                addr.put(w);
            }
            AdversaryMode::BitFlip { addr, segment } => {
                w.u8(3);
                addr.put(w);
                w.u32(*segment);
            }
            AdversaryMode::SkipWrite => w.u8(4),
        }
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Ok(match r.u8()? {
            0 => AdversaryMode::Honest,
            1 => {
                let target = match r.u8()? {
                    0 => DeleteTarget::Level(r.u32()?),
                    1 => DeleteTarget::C,
                    2 => DeleteTarget::All,
                    _ => return Err(Error::Decode("bad delete target")),
                };
                AdversaryMode::Delete { target, num: r.u64()?, den: r.u64()?, seed: r.u64()? }
            }
            2 => AdversaryMode::Stale { addr: r.get()? },
            3 => AdversaryMode::BitFlip { addr: r.get()?, segment: r.u32()? },
            4 => AdversaryMode::SkipWrite,
            _ => return Err(Error::Decode("bad adversary mode")),
        })
    }
}

/// Snapshot encoding of the whole store.
impl Wire for Server {
    fn put(&self, w: &mut Writer) {
        self.params.put(w);
        w.seq(&self.u_blocks);
        w.seq(&self.u_tags);
        w.seq(&self.order);
        w.u32(self.h.len() as u32);
        for (blocks, tags) in self.h.iter().zip(&self.h_tags) {
            put_pair(w, blocks);
            put_pair(w, tags);
        }
        put_pair(w, &Some(self.c.clone()));
        put_pair(w, &self.c_tags);
        w.u64(self.counter);
        match &self.pending {
            Some(p) => {
                w.u8(1);
                p.transcript.put(w);
                let (addrs, tags): (Vec<Address>, Vec<AuthTag>) =
                    p.source_tags.iter().map(|(a, t)| (*a, t.clone())).unzip();
                w.seq(&addrs);
                w.seq(&tags);
            }
            None => w.u8(0),
        }
        self.mode.put(w);
        let deleted: Vec<Address> = self.deleted.iter().copied().collect();
        w.seq(&deleted);
        put_opt(w, &self.stale_block);
        put_opt(w, &self.stale_tag);
    }

    fn get(r: &mut Reader<'_>) -> Result<Self> {
        let params: SystemParams = r.get()?;
        let u_blocks: Vec<Block> = r.seq()?;
        let u_tags: Vec<AuthTag> = r.seq()?;
        let order: Vec<u64> = r.seq()?;
        let levels = r.u32()? as usize;
        if levels != params.log_n() as usize {
            return Err(Error::Decode("level count does not match n"));
        }
        let mut h = Vec::with_capacity(levels);
        let mut h_tags = Vec::with_capacity(levels);
        for _ in 0..levels {
            h.push(get_pair(r)?);
            h_tags.push(get_pair(r)?);
        }
        let c = get_pair(r)?.ok_or(Error::Decode("C missing"))?;
        let c_tags = get_pair(r)?;
        let counter = r.u64()?;
        let pending = match r.u8()? {
            0 => None,
            1 => {
                let transcript = r.get()?;
                let addrs: Vec<Address> = r.seq()?;
                let tags: Vec<AuthTag> = r.seq()?;
                if addrs.len() != tags.len() {
                    return Err(Error::Decode("pending tag count"));
                }
                Some(Pending { transcript, source_tags: addrs.into_iter().zip(tags).collect() })
            }
            _ => return Err(Error::Decode("bad pending flag")),
        };
        let mode = r.get()?;
        let deleted: Vec<Address> = r.seq()?;
        let stale_block = get_opt(r)?;
        let stale_tag = get_opt(r)?;
        if u_tags.is_empty() || u_tags.len() != u_blocks.len() || order.len() != u_blocks.len() {
            return Err(Error::Decode("U shape"));
        }
        let merkle = MerkleTree::build(u_tags.iter().map(leaf_bytes).collect())?;
        Ok(Server {
            code: FftCode::new(&params),
            params,
            u_blocks,
            u_tags,
            order,
            merkle,
            h,
            h_tags,
            c,
            c_tags,
            counter,
            pending,
            mode,
            deleted: deleted.into_iter().collect(),
            stale_block,
            stale_tag,
        })
    }
}

fn put_opt<T: Wire>(w: &mut Writer, v: &Option<T>) {
    match v {
        Some(x) => {
            w.u8(1);
            x.put(w);
        }
        None => w.u8(0),
    }
}

fn get_opt<T: Wire>(r: &mut Reader<'_>) -> Result<Option<T>> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(r.get()?)),
        _ => Err(Error::Decode("bad option flag")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_modes() {
        assert_eq!(AdversaryMode::parse("honest").unwrap(), AdversaryMode::Honest);
        assert_eq!(
            AdversaryMode::parse("delete:2:0.5").unwrap(),
            AdversaryMode::Delete { target: DeleteTarget::Level(2), num: 5, den: 10, seed: 0 }
        );
        assert_eq!(
            AdversaryMode::parse("delete:all:0.49:7").unwrap(),
            AdversaryMode::Delete { target: DeleteTarget::All, num: 49, den: 100, seed: 7 }
        );
        assert_eq!(
            AdversaryMode::parse("delete:c:1/3").unwrap(),
            AdversaryMode::Delete { target: DeleteTarget::C, num: 1, den: 3, seed: 0 }
        );
        assert_eq!(
            AdversaryMode::parse("stale:h:1:y:0").unwrap(),
            AdversaryMode::Stale { addr: Address::H { level: 1, side: Side::Y, slot: 0 } }
        );
        assert_eq!(
            AdversaryMode::parse("bitflip:c:x:3:1").unwrap(),
            AdversaryMode::BitFlip { addr: Address::C { side: Side::X, slot: 3 }, segment: 1 }
        );
        assert_eq!(AdversaryMode::parse("skipwrite").unwrap(), AdversaryMode::SkipWrite);
        for bad in ["", "delete:2", "delete:2:1.5", "stale:q:1", "bitflip:u:1", "delete:x:0.5"] {
            assert!(AdversaryMode::parse(bad).is_err(), "{bad}");
        }
    }
}
