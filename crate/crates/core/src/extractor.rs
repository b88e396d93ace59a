//! Recovers the latest file from any server that keeps passing audits.
//!
//! For each occupied level and for C the extractor first locates codeword
//! positions that answer audits correctly, then repeatedly challenges a fixed
//! set J of them with fresh coefficients until the accepted rows reach full
//! rank, solves for the blocks, erasure-decodes the structure and finally
//! replays the logged writes over the decoded snapshot of U.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigUint;
use rand_core::RngCore;

use crate::auditor::{random_coefficient, verify_proof};
use crate::block::{decode_entry, Block, Entry, UpdateType, WriteRecord};
use crate::code::FftCode;
use crate::error::{Error, Result};
use crate::homhash::hash_block;
use crate::linalg::{solve, Basis, Blocks};
use crate::params::{Address, SystemParams};
use crate::protocol::{AuditProof, Challenge, ChallengeEntry, CounterStatement, Request, Response, ServerLink};
use crate::schedule;

#[derive(Debug, Clone, Copy)]
pub struct ExtractConfig {
    /// Challenges allowed beyond |J| per structure.
    pub extra_attempts: usize,
    /// Give up on a structure after this many rejected answers in a row.
    pub max_consecutive_failures: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { extra_attempts: 64, max_consecutive_failures: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Level(u32),
    C,
}

impl core::fmt::Display for Structure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Structure::Level(l) => write!(f, "H{l}"),
            Structure::C => f.write_str("C"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureReport {
    pub structure: Structure,
    /// Codeword length.
    pub positions: usize,
    /// Positions found to answer correctly.
    pub good: usize,
    pub probes: usize,
    /// Challenges spent on J, and the rank they reached.
    pub attempts: usize,
    pub rank: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractReport {
    pub counter: u64,
    pub structures: Vec<StructureReport>,
    /// Reconstructed file; `None` if some structure failed.
    pub file: Option<Vec<u8>>,
}

impl ExtractReport {
    pub fn failed(&self) -> Vec<Structure> {
        self.structures.iter().filter(|s| s.error.is_some()).map(|s| s.structure).collect()
    }
}

/// Challenges the server with `entries` and checks the answer.
fn query<L: ServerLink>(
    params: &SystemParams,
    link: &mut L,
    counter: u64,
    entries: Vec<ChallengeEntry>,
) -> Result<Option<(Challenge, AuditProof)>> {
    let challenge = Challenge { counter, entries };
    match link.call(&Request::Audit(challenge.clone()))? {
        Response::AuditProof(proof) if verify_proof(params, &challenge, &proof).passed => Ok(Some((challenge, proof))),
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockExtraction {
    pub blocks: Vec<Block>,
    pub attempts: usize,
    pub rank: usize,
}

/// Recovers the blocks at `j` from accepted audit answers over exactly `j`.
///
/// On failure the error carries the attempts made and the rank reached.
pub fn extract_blocks<L: ServerLink, R: RngCore + ?Sized>(
    params: &SystemParams,
    link: &mut L,
    counter: u64,
    j: &[Address],
    config: &ExtractConfig,
    rng: &mut R,
) -> core::result::Result<BlockExtraction, (Error, usize, usize)> {
    if j.is_empty() {
        return Err((Error::InvalidParams("J must not be empty"), 0, 0));
    }
    let max_attempts = j.len() + config.extra_attempts;
    let mut basis = Basis::new(params.q.clone(), j.len());
    let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(j.len());
    let mut rhs: Vec<Block> = Vec::with_capacity(j.len());
    let mut tags = None;
    let mut attempts = 0;
    let mut consecutive = 0;
    while basis.rank() < j.len() {
        if attempts == max_attempts {
            return Err((Error::Extraction(format!("budget of {max_attempts} challenges exhausted")), attempts, basis.rank()));
        }
        if consecutive == config.max_consecutive_failures {
            return Err((Error::Extraction(format!("{consecutive} rejected answers in a row")), attempts, basis.rank()));
        }
        attempts += 1;
        let nus: Vec<BigUint> = j.iter().map(|_| random_coefficient(params, rng)).collect();
        let entries = j.iter().zip(&nus).map(|(addr, nu)| ChallengeEntry { nu: nu.clone(), addr: *addr }).collect();
        let answer = query(params, link, counter, entries).map_err(|e| (e, attempts, basis.rank()))?;
        let Some((_, proof)) = answer else {
            consecutive += 1;
            continue;
        };
        consecutive = 0;
        if basis.insert(&nus) {
            rows.push(nus);
            rhs.push(proof.bstar);
            tags = Some(proof.tags);
        }
    }
    let rank = basis.rank();
    let module = Blocks { q: &params.q, m: params.m() };
    let blocks = solve(&params.q, &module, j.len(), rows, rhs).map_err(|e| (e, attempts, rank))?;
    let tags = tags.expect("full rank implies an accepted answer");
    // authenticity gate: each block must be the one its verified tag commits to
    if let Some(k) = blocks.iter().zip(&tags).position(|(b, t)| hash_block(params, b) != t.hash) {
        return Err((Error::Extraction(format!("recovered block at {:?} does not match its tag", j[k])), attempts, rank));
    }
    Ok(BlockExtraction { blocks, attempts, rank })
}

/// Finds up to `want` positions of `addrs` that answer audits correctly, by
/// testing groups and halving the ones that fail.
fn find_good<L: ServerLink, R: RngCore + ?Sized>(
    params: &SystemParams,
    link: &mut L,
    counter: u64,
    addrs: &[Address],
    want: usize,
    rng: &mut R,
) -> Result<(Vec<Address>, usize)> {
    let mut good = Vec::new();
    let mut probes = 0;
    let mut stack: Vec<&[Address]> = alloc::vec![addrs];
    while let Some(group) = stack.pop() {
        if good.len() >= want || group.is_empty() {
            continue;
        }
        probes += 1;
        let entries = group.iter().map(|a| ChallengeEntry { nu: random_coefficient(params, rng), addr: *a }).collect();
        if query(params, link, counter, entries)?.is_some() {
            good.extend_from_slice(group);
        } else if group.len() > 1 {
            let (a, b) = group.split_at(group.len() / 2);
            // pop the first half first to keep positions in order
            stack.push(b);
            stack.push(a);
        }
    }
    good.truncate(want);
    Ok((good, probes))
}

/// Extracts and decodes one structure into its 2^l inputs.
fn extract_structure<L: ServerLink, R: RngCore + ?Sized>(
    params: &SystemParams,
    link: &mut L,
    counter: u64,
    structure: Structure,
    config: &ExtractConfig,
    rng: &mut R,
) -> (StructureReport, Option<Vec<Block>>) {
    let n = params.n;
    let (l, start, addrs) = match structure {
        Structure::Level(l) => {
            let start = schedule::level_start(n, counter, l).expect("level is occupied");
            (l, start, schedule::level_addresses(l))
        }
        Structure::C => (params.log_n(), 0, schedule::c_addresses(n)),
    };
    let size = 1usize << l;
    let mut report = StructureReport {
        structure,
        positions: addrs.len(),
        good: 0,
        probes: 0,
        attempts: 0,
        rank: 0,
        error: None,
    };
    let (good, probes) = match find_good(params, link, counter, &addrs, size, rng) {
        Ok(x) => x,
        Err(e) => {
            report.error = Some(format!("{e}"));
            return (report, None);
        }
    };
    report.good = good.len();
    report.probes = probes;
    if good.len() < size {
        report.error = Some(format!("only {} of {} needed positions answer correctly", good.len(), size));
        return (report, None);
    }
    let extraction = match extract_blocks(params, link, counter, &good, config, rng) {
        Ok(x) => x,
        Err((e, attempts, rank)) => {
            report.attempts = attempts;
            report.rank = rank;
            report.error = Some(format!("{e}"));
            return (report, None);
        }
    };
    report.attempts = extraction.attempts;
    report.rank = extraction.rank;
    let known: Vec<(u64, Block)> = good
        .iter()
        .map(|a| schedule::codeword_position(a, n).expect("H or C address"))
        .zip(extraction.blocks)
        .collect();
    let code = FftCode::new(params);
    match code.decode(&Blocks { q: &params.q, m: params.m() }, &known, l, start) {
        Ok(inputs) => (report, Some(inputs)),
        Err(e) => {
            report.error = Some(format!("{e}"));
            (report, None)
        }
    }
}

/// Applies one logged write to a logical file.
pub fn apply_record(file: &mut Vec<Vec<u8>>, record: &WriteRecord) -> Result<()> {
    let i = record.logical_index as usize;
    let len = file.len() as u64;
    let payload = || record.payload.clone().ok_or(Error::Decode("record lacks a payload"));
    match record.updtype {
        UpdateType::Insert if i <= file.len() => file.insert(i, payload()?),
        UpdateType::Modify if i < file.len() => file[i] = payload()?,
        UpdateType::Delete if i < file.len() => {
            file.remove(i);
        }
        _ => return Err(Error::OutOfRange { index: record.logical_index, len }),
    }
    Ok(())
}

/// Latest file from decoded structures: C's data entries are U as of the last
/// rebuild of C, and the levels hold the writes since, oldest level first.
pub fn replay(params: &SystemParams, c_inputs: &[Block], levels: &[(u32, Vec<Block>)]) -> Result<Vec<Vec<u8>>> {
    let mut file = Vec::new();
    let mut padding = false;
    for b in c_inputs {
        match decode_entry(params, b)? {
            Entry::Data(d) if !padding => file.push(d),
            Entry::Null => padding = true,
            _ => return Err(Error::Extraction("C does not decode to data followed by padding".into())),
        }
    }
    let mut levels: Vec<&(u32, Vec<Block>)> = levels.iter().collect();
    levels.sort_by_key(|(l, _)| core::cmp::Reverse(*l));
    for (l, blocks) in levels {
        for b in blocks {
            match decode_entry(params, b)? {
                Entry::Record(r) => apply_record(&mut file, &r)?,
                _ => return Err(Error::Extraction(format!("level {l} holds a non-record entry"))),
            }
        }
    }
    Ok(file)
}

/// Extracts every structure at the statement's counter and reconstructs the file.
pub fn extract_all<L: ServerLink, R: RngCore + ?Sized>(
    params: &SystemParams,
    link: &mut L,
    statement: &CounterStatement,
    config: &ExtractConfig,
    rng: &mut R,
) -> Result<ExtractReport> {
    if !statement.verify(params) {
        return Err(Error::verification("counter statement does not verify"));
    }
    let counter = statement.counter;
    let w = counter % params.n;
    let mut structures = Vec::new();
    let mut levels = Vec::new();
    let mut c_inputs = None;
    for l in schedule::occupied_levels(w) {
        let (report, inputs) = extract_structure(params, link, counter, Structure::Level(l), config, rng);
        structures.push(report);
        if let Some(b) = inputs {
            levels.push((l, b));
        }
    }
    let (report, inputs) = extract_structure(params, link, counter, Structure::C, config, rng);
    structures.push(report);
    if let Some(b) = inputs {
        c_inputs = Some(b);
    }
    let mut report = ExtractReport { counter, structures, file: None };
    if report.failed().is_empty() {
        let c_inputs = c_inputs.expect("C extracted");
        match replay(params, &c_inputs, &levels) {
            Ok(chunks) => report.file = Some(chunks.concat()),
            Err(e) => {
                let c = report.structures.last_mut().expect("C report");
                c.error = Some(format!("replay failed: {e}"));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auditor::combine_blocks;
    use crate::linalg::Scalars;
    use crate::params::Side;
    use crate::sigtag::{sign_hash, AuthTag};
    use crate::testutil::{rng, tiny};
    use alloc::collections::BTreeMap;
    use alloc::vec;

    fn b(segs: &[u32]) -> Block {
        Block::new(segs.iter().map(|&s| BigUint::from(s)).collect())
    }

    /// Answers audits honestly from a fixed table, or refuses everything.
    struct Table {
        params: SystemParams,
        slots: BTreeMap<Address, (Block, AuthTag)>,
        refuse: bool,
        calls: usize,
    }

    impl ServerLink for Table {
        fn call(&mut self, req: &Request) -> Result<Response> {
            self.calls += 1;
            let Request::Audit(c) = req else { return Ok(Response::Error("audits only".into())) };
            if self.refuse {
                return Ok(Response::Error("no".into()));
            }
            let mut pairs = Vec::new();
            let mut tags = Vec::new();
            for e in &c.entries {
                let (blk, tag) = self.slots.get(&e.addr).ok_or(Error::protocol("empty"))?;
                pairs.push((e.nu.clone(), blk.clone()));
                tags.push(tag.clone());
            }
            Ok(Response::AuditProof(AuditProof { bstar: combine_blocks(&self.params, &pairs), tags, counter: c.counter }))
        }
    }

    fn table(blocks: &[Block]) -> (Table, Vec<Address>) {
        let (params, secret) = tiny();
        let addrs: Vec<Address> = (0..blocks.len() as u64).map(|slot| Address::C { side: Side::X, slot }).collect();
        let slots = addrs
            .iter()
            .zip(blocks)
            .map(|(a, blk)| (*a, (blk.clone(), sign_hash(&params, &secret, hash_block(&params, blk), a, 0).unwrap())))
            .collect();
        (Table { params, slots, refuse: false, calls: 0 }, addrs)
    }

    #[test]
    fn single_position_is_scalar_inverse() {
        let block = b(&[2, 3]);
        let (mut t, j) = table(&[block.clone()]);
        let params = t.params.clone();
        let got = extract_blocks(&params, &mut t, 0, &j, &ExtractConfig::default(), &mut rng(1)).unwrap();
        assert_eq!(got.blocks, [block]);
        assert_eq!((got.attempts, got.rank), (1, 1));
    }

    #[test]
    fn two_by_two_by_hand() {
        // rows [1,1], [1,2] over q = 17 with blocks [1,0], [0,1]
        let (params, _) = tiny();
        let big = |v: u32| BigUint::from(v);
        let rows = vec![vec![big(1), big(1)], vec![big(1), big(2)]];
        let rhs = vec![b(&[1, 1]), b(&[1, 2])];
        let got = solve(&params.q, &Blocks { q: &params.q, m: 2 }, 2, rows, rhs).unwrap();
        assert_eq!(got, [b(&[1, 0]), b(&[0, 1])]);
        let (mut t, j) = table(&got);
        let again = extract_blocks(&params, &mut t, 0, &j, &ExtractConfig::default(), &mut rng(2)).unwrap();
        assert_eq!(again.blocks, got);
    }

    #[test]
    fn refusing_server_fails_extraction() {
        let (mut t, j) = table(&[b(&[1, 2]), b(&[3, 4])]);
        t.refuse = true;
        let params = t.params.clone();
        let cfg = ExtractConfig::default();
        let (err, attempts, rank) = extract_blocks(&params, &mut t, 0, &j, &cfg, &mut rng(3)).unwrap_err();
        assert!(matches!(err, Error::Extraction(_)));
        assert_eq!((attempts, rank), (cfg.max_consecutive_failures, 0));
        assert!(attempts <= j.len() + cfg.extra_attempts);
    }

    #[test]
    fn budget_bounds_attempts_at_tiny_q() {
        // over q = 17 dependent rows are common; the budget still caps the work
        let blocks: Vec<Block> = (0..4).map(|i| b(&[i, 2 * i % 17])).collect();
        let (mut t, j) = table(&blocks);
        let params = t.params.clone();
        let cfg = ExtractConfig { extra_attempts: 64, max_consecutive_failures: 4 };
        let got = extract_blocks(&params, &mut t, 0, &j, &cfg, &mut rng(4)).unwrap();
        assert_eq!(got.blocks, blocks);
        assert!(got.attempts <= j.len() + 64);
        assert_eq!(t.calls, got.attempts);
    }

    #[test]
    fn group_testing_finds_the_good_half() {
        let blocks: Vec<Block> = (0..8).map(|i| b(&[i, 1])).collect();
        let (mut t, addrs) = table(&blocks);
        // corrupt three slots behind their tags
        for k in [1usize, 4, 6] {
            // +1 on the first segment shifts the exponent by γ_1 = 2, so no toy collision
            t.slots.get_mut(&addrs[k]).unwrap().0 = b(&[k as u32 + 1, 1]);
        }
        let params = t.params.clone();
        let expected = [addrs[0], addrs[2], addrs[3], addrs[5]];
        // at q = 17 a corrupted group aliases to a pass with probability 1/17 per probe
        let mut exact = 0;
        for seed in 0..60 {
            let (good, probes) = find_good(&params, &mut t, 0, &addrs, 4, &mut rng(seed)).unwrap();
            assert_eq!(good.len(), 4);
            assert!(probes <= 15);
            exact += usize::from(good == expected);
        }
        assert!(exact >= 40, "{exact}");
    }

    #[test]
    fn replay_applies_oldest_level_first() {
        let (params, _) = tiny();
        let _ = Scalars { q: &params.q };
        let mut file = vec![b"a".to_vec(), b"b".to_vec()];
        apply_record(&mut file, &WriteRecord::insert(1, b"x".to_vec())).unwrap();
        apply_record(&mut file, &WriteRecord::delete(0)).unwrap();
        apply_record(&mut file, &WriteRecord::modify(1, b"y".to_vec())).unwrap();
        assert_eq!(file, [b"x".to_vec(), b"y".to_vec()]);
        assert!(apply_record(&mut file, &WriteRecord::delete(2)).is_err());
        assert!(apply_record(&mut file, &WriteRecord::insert(3, vec![])).is_err());
    }
}
