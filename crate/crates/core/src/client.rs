//! The data owner. Keeps O(1) blocks of state: keys, the Merkle root, the
//! write counter and a position map; every block lives on the server.

use alloc::format;
use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};

use crate::block::{data_block, decode_entry, payload_capacity, Block, Entry, UpdateType, WriteRecord};
use crate::code::FftCode;
use crate::error::{Error, Result};
use crate::homhash::{hash_block_secret, HashValue};
use crate::linalg::Hashes;
use crate::merkle::{self, Digest, MerkleProof, MerkleTree, TreeOp};
use crate::params::{Address, SecretState, SystemParams};
use crate::protocol::{CounterStatement, InitUpload, ReadProof, Request, Response, ServerLink};
use crate::schedule::{self, RebuildKind, RebuildTranscript};
use crate::sigtag::{check_block, check_tag, sign_hash, AuthTag, SignatureScheme};
use crate::wire::{from_bytes, to_bytes, Reader, Wire, Writer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientState {
    pub params: SystemParams,
    pub secret: SecretState,
    pub root: Digest,
    pub counter: u64,
    /// Logical index → (physical U slot, epoch its tag was signed at).
    pub positions: Vec<(u64, u64)>,
}

/// Splits file bytes into block payloads. An empty file becomes one empty block.
pub fn split_file(params: &SystemParams, file: &[u8]) -> Result<Vec<Vec<u8>>> {
    let cap = payload_capacity(params);
    if cap == 0 {
        return Err(Error::InvalidParams("blocks too small to carry data"));
    }
    let chunks: Vec<Vec<u8>> = if file.is_empty() { alloc::vec![Vec::new()] } else { file.chunks(cap).map(<[u8]>::to_vec).collect() };
    if chunks.len() as u64 > params.n {
        return Err(Error::Oversize { len: file.len(), cap: cap * params.n as usize });
    }
    Ok(chunks)
}

fn expect<T>(resp: Response, pick: impl FnOnce(Response) -> Option<T>) -> Result<T> {
    let resp = resp.into_result()?;
    let ty = resp.frame_type();
    pick(resp).ok_or_else(|| Error::protocol(format!("unexpected response type {ty:#04x}")))
}

fn decode_leaf(leaf: &[u8]) -> Result<AuthTag> {
    from_bytes(leaf).map_err(|_| Error::verification("Merkle leaf is not a tag"))
}

impl ClientState {
    /// Tags U and C for `file` and returns the state plus what the server needs.
    pub fn init(params: SystemParams, secret: SecretState, file: &[u8]) -> Result<(ClientState, InitUpload)> {
        if !secret.consistent_with(&params) {
            return Err(Error::InvalidParams("secret state does not match the parameters"));
        }
        let chunks = split_file(&params, file)?;
        let blocks: Vec<Block> = chunks.iter().map(|c| data_block(&params, c)).collect::<Result<_>>()?;
        let hashes: Vec<HashValue> = blocks.iter().map(|b| hash_block_secret(&params, &secret, b)).collect();
        let u_tags: Vec<AuthTag> = hashes
            .iter()
            .enumerate()
            .map(|(i, h)| sign_hash(&params, &secret, h.clone(), &Address::U { slot: i as u64 }, 0))
            .collect::<Result<_>>()?;
        let root = MerkleTree::build(u_tags.iter().map(|t| to_bytes(t, 0)).collect())?.root();
        let c_tags = sign_c(&params, &secret, hashes, 0)?;
        let positions = (0..blocks.len() as u64).map(|s| (s, 0)).collect();
        let state = ClientState { params: params.clone(), secret, root, counter: 0, positions };
        Ok((state, InitUpload { params, blocks, u_tags, c_tags }))
    }

    pub fn len(&self) -> u64 {
        self.positions.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn statement(&self) -> Result<CounterStatement> {
        let msg = CounterStatement::message(&self.params.fid, self.counter, &self.root);
        Ok(CounterStatement {
            fid: self.params.fid,
            counter: self.counter,
            root: self.root,
            signature: self.params.sig_scheme.sign(&self.secret.ssk, &msg)?,
        })
    }

    fn check_u_tag(&self, tag: &AuthTag, logical: usize) -> Result<()> {
        let (slot, epoch) = self.positions[logical];
        if !check_tag(&self.params, tag, &Address::U { slot }, epoch) {
            return Err(Error::verification(format!("U tag at slot {slot} fails at epoch {epoch}")));
        }
        Ok(())
    }

    fn logical_of_slot(&self, slot: u64) -> Result<usize> {
        self.positions
            .iter()
            .position(|&(s, _)| s == slot)
            .ok_or_else(|| Error::protocol(format!("slot {slot} unmapped")))
    }

    /// Checks a read response against the root, the tag and its epoch.
    pub fn verify_read(&self, index: u64, resp: &ReadProof) -> Result<Block> {
        let logical = index as usize;
        let &(slot, _) = self.positions.get(logical).ok_or(Error::OutOfRange { index, len: self.len() })?;
        if resp.slot != slot {
            return Err(Error::verification("server answered from the wrong slot"));
        }
        if !merkle::verify(&self.root, self.len(), slot, &resp.proof) {
            return Err(Error::verification("Merkle proof does not match the root"));
        }
        let tag = decode_leaf(&resp.proof.leaf)?;
        let epoch = self.positions[logical].1;
        if !check_block(&self.params, &tag, &resp.block, &Address::U { slot }, epoch) {
            return Err(Error::verification("block does not match its tag at the expected epoch"));
        }
        Ok(resp.block.clone())
    }

    /// Authenticated read of the payload at a logical index.
    pub fn read<L: ServerLink>(&self, link: &mut L, index: u64) -> Result<Vec<u8>> {
        if index >= self.len() {
            return Err(Error::OutOfRange { index, len: self.len() });
        }
        let resp = expect(link.call(&Request::Read { index })?, |r| match r {
            Response::ReadProof(p) => Some(p),
            _ => None,
        })?;
        let block = self.verify_read(index, &resp)?;
        match decode_entry(&self.params, &block)? {
            Entry::Data(d) => Ok(d),
            _ => Err(Error::verification("U slot does not hold a data block")),
        }
    }

    pub fn read_file<L: ServerLink>(&self, link: &mut L) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for i in 0..self.len() {
            out.extend(self.read(link, i)?);
        }
        Ok(out)
    }

    /// Full write: U update with root prediction, then the tag-side rebuild.
    /// Returns the counter statement for the new state. Any error leaves the
    /// state untouched, though the server may already have diverged.
    pub fn write<L: ServerLink>(&mut self, link: &mut L, record: &WriteRecord) -> Result<CounterStatement> {
        record.check_shape()?;
        let params = &self.params;
        let n = params.n;
        let len = self.len();
        let w_big = self.counter;
        let next_epoch = w_big + 1;
        let i = record.logical_index;
        let record_block = record.to_block(params)?;

        let mut positions = self.positions.clone();
        let (op, u_tag) = match record.updtype {
            UpdateType::Modify => {
                let &(slot, _) = positions.get(i as usize).ok_or(Error::OutOfRange { index: i, len })?;
                let block = data_block(params, record.payload.as_deref().unwrap_or(&[]))?;
                let tag = self.sign_block(&block, slot, next_epoch)?;
                positions[i as usize] = (slot, next_epoch);
                (TreeOp::Set { index: slot, leaf: to_bytes(&tag, 0) }, Some(tag))
            }
            UpdateType::Insert => {
                if i > len {
                    return Err(Error::OutOfRange { index: i, len: len + 1 });
                }
                if len == n {
                    return Err(Error::Oversize { len: (len + 1) as usize, cap: n as usize });
                }
                let block = data_block(params, record.payload.as_deref().unwrap_or(&[]))?;
                let tag = self.sign_block(&block, len, next_epoch)?;
                positions.insert(i as usize, (len, next_epoch));
                (TreeOp::Append { leaf: to_bytes(&tag, 0) }, Some(tag))
            }
            UpdateType::Delete => {
                let &(slot, _) = positions.get(i as usize).ok_or(Error::OutOfRange { index: i, len })?;
                if len == 1 {
                    return Err(Error::protocol("cannot delete the only block"));
                }
                // The moved tag is re-signed once its hash is authenticated below.
                (TreeOp::SwapRemove { index: slot, replacement: None }, None)
            }
        };

        let slots = op.required_proofs(len);
        let proofs = expect(link.call(&Request::Proofs { slots: slots.clone() })?, |r| match r {
            Response::Proofs(p) => Some(p),
            _ => None,
        })?;
        if proofs.len() != slots.len() {
            return Err(Error::verification("wrong number of authentication paths"));
        }
        // every proved leaf must be the fresh tag the position map expects
        for (slot, proof) in slots.iter().zip(&proofs) {
            let tag = decode_leaf(&proof.leaf)?;
            self.check_u_tag(&tag, self.logical_of_slot(*slot)?)?;
        }

        let (op, u_tag) = if let TreeOp::SwapRemove { index: slot, .. } = op {
            let last = len - 1;
            let moved_logical = self.logical_of_slot(last)?;
            let replacement = if slot == last {
                None
            } else {
                let moved = decode_leaf(&proofs[1].leaf)?;
                let tag = sign_hash(params, &self.secret, moved.hash, &Address::U { slot }, next_epoch)?;
                positions[moved_logical] = (slot, next_epoch);
                Some(tag)
            };
            positions.remove(i as usize);
            (TreeOp::SwapRemove { index: slot, replacement: replacement.as_ref().map(|t| to_bytes(t, 0)) }, replacement)
        } else {
            (op, u_tag)
        };

        let proved: Vec<(u64, &MerkleProof)> = slots.iter().copied().zip(proofs.iter()).collect();
        let predicted = merkle::predict_root(&self.root, len, &proved, &op)?;

        let (root, transcript) = expect(
            link.call(&Request::WriteApply { record: record.clone(), u_tag })?,
            |r| match r {
                Response::WriteAck { root, transcript } => Some((root, transcript)),
                _ => None,
            },
        )?;
        if root != predicted {
            return Err(Error::verification("server root differs from the predicted root"));
        }
        let new_len = positions.len() as u64;
        if transcript != schedule::plan_rebuild(n, w_big, new_len) {
            return Err(Error::verification("server rebuild transcript differs from the schedule"));
        }

        let hash = hash_block_secret(params, &self.secret, &record_block);
        let tags = self.rebuild_tags(link, &transcript, &positions, hash)?;
        let stored = expect(
            link.call(&Request::StoreTags { addrs: transcript.outputs.clone(), tags })?,
            |r| matches!(r, Response::Ack).then_some(()),
        );
        stored?;

        self.positions = positions;
        self.root = predicted;
        self.counter = next_epoch;
        self.statement()
    }

    fn sign_block(&self, block: &Block, slot: u64, epoch: u64) -> Result<AuthTag> {
        sign_hash(&self.params, &self.secret, hash_block_secret(&self.params, &self.secret, block), &Address::U { slot }, epoch)
    }

    /// Fetches and verifies the transcript's source tags, replays the cascade
    /// in hash space and signs the outputs at the new epoch.
    fn rebuild_tags<L: ServerLink>(
        &self,
        link: &mut L,
        transcript: &RebuildTranscript,
        positions: &[(u64, u64)],
        incoming: HashValue,
    ) -> Result<Vec<AuthTag>> {
        let params = &self.params;
        let n = params.n;
        let w_big = self.counter;
        let sources = if transcript.sources.is_empty() {
            Vec::new()
        } else {
            expect(link.call(&Request::FetchTags { addrs: transcript.sources.clone() })?, |r| match r {
                Response::Tags(t) => Some(t),
                _ => None,
            })?
        };
        if sources.len() != transcript.sources.len() {
            return Err(Error::verification("wrong number of source tags"));
        }
        let code = FftCode::new(params);
        let module = Hashes { p: &params.p };
        match transcript.kind {
            RebuildKind::Level(l) => {
                for (addr, tag) in transcript.sources.iter().zip(&sources) {
                    let epoch = schedule::slot_epoch(addr, n, w_big)?;
                    if !check_tag(params, tag, addr, epoch) {
                        return Err(Error::verification(format!("source tag at {addr:?} fails at epoch {epoch}")));
                    }
                }
                let mut lower_x = Vec::with_capacity(l as usize);
                let mut lower_y = Vec::with_capacity(l as usize);
                let mut it = sources.into_iter().map(|t| t.hash);
                for i in 0..l {
                    let size = 1usize << i;
                    lower_x.push(it.by_ref().take(size).collect::<Vec<_>>());
                    lower_y.push(it.by_ref().take(size).collect::<Vec<_>>());
                }
                let (x, y) = code.rebuild_pair(&module, &lower_x, &lower_y, &incoming, w_big % n, l)?;
                transcript
                    .outputs
                    .iter()
                    .zip(x.into_iter().chain(y))
                    .map(|(addr, h)| sign_hash(params, &self.secret, h, addr, w_big + 1))
                    .collect()
            }
            RebuildKind::C => {
                // sources are U slots 0..len; reorder into logical order
                let mut by_slot: Vec<Option<HashValue>> = alloc::vec![None; sources.len()];
                for (addr, tag) in transcript.sources.iter().zip(sources) {
                    let Address::U { slot } = *addr else {
                        return Err(Error::verification("C rebuild sourced from a non-U slot"));
                    };
                    let logical = positions
                        .iter()
                        .position(|&(s, _)| s == slot)
                        .ok_or_else(|| Error::verification("source slot unmapped"))?;
                    if !check_tag(params, &tag, addr, positions[logical].1) {
                        return Err(Error::verification(format!("U tag at slot {slot} fails")));
                    }
                    by_slot[slot as usize] = Some(tag.hash);
                }
                let hashes = positions
                    .iter()
                    .map(|&(s, _)| by_slot[s as usize].clone().ok_or_else(|| Error::verification("missing U tag")))
                    .collect::<Result<Vec<_>>>()?;
                sign_c(params, &self.secret, hashes, w_big + 1)
            }
        }
    }
}

/// Hash-space encoding of U (logical order, padded with null blocks) signed at
/// every C address.
fn sign_c(params: &SystemParams, secret: &SecretState, mut hashes: Vec<HashValue>, epoch: u64) -> Result<Vec<AuthTag>> {
    hashes.resize(params.n as usize, HashValue::identity());
    let code = FftCode::new(params);
    let (x, y) = code.encode_full(&Hashes { p: &params.p }, &hashes)?;
    schedule::c_addresses(params.n)
        .iter()
        .zip(x.into_iter().chain(y))
        .map(|(addr, h)| sign_hash(params, secret, h, addr, epoch))
        .collect()
}

/// Fresh parameters, keys and client state for `file` in one call.
pub fn setup_and_init<R: RngCore + CryptoRng + ?Sized>(
    rng: &mut R,
    profile: crate::params::Profile,
    n: u64,
    m: usize,
    file: &[u8],
) -> Result<(ClientState, InitUpload)> {
    let (params, secret) =
        crate::params::setup(rng, profile, n, m, crate::sigtag::SigScheme::Ed25519, Default::default())?;
    ClientState::init(params, secret, file)
}

impl Wire for SecretState {
    fn put(&self, w: &mut Writer) {
        w.bytes16(&self.ssk);
        w.biguint(&self.g);
        w.seq(&self.gamma);
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        Ok(SecretState { ssk: r.bytes16()?.to_vec(), g: r.biguint()?, gamma: r.seq()? })
    }
}

impl Wire for ClientState {
    fn put(&self, w: &mut Writer) {
        self.params.put(w);
        self.secret.put(w);
        w.raw(&self.root);
        w.u64(self.counter);
        w.u32(self.positions.len() as u32);
        for &(s, e) in &self.positions {
            w.u64(s);
            w.u64(e);
        }
    }
    fn get(r: &mut Reader<'_>) -> Result<Self> {
        let params: SystemParams = r.get()?;
        let secret: SecretState = r.get()?;
        let root = r.array()?;
        let counter = r.u64()?;
        let count = r.u32()? as usize;
        if count > r.remaining() / 16 {
            return Err(Error::Decode("position map longer than input"));
        }
        let positions = (0..count).map(|_| Ok((r.u64()?, r.u64()?))).collect::<Result<Vec<_>>>()?;
        if !secret.consistent_with(&params) {
            return Err(Error::Decode("secret state does not match the parameters"));
        }
        Ok(ClientState { params, secret, root, counter, positions })
    }
}
