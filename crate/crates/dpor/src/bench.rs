//! Bandwidth measurement: real frames over the loopback transport, split by
//! operation category.

use dpor_core::auditor::audit;
use dpor_core::block::{payload_capacity, WriteRecord};
use dpor_core::client::ClientState;
use dpor_core::params::{setup, Profile, SetupLimits};
use dpor_core::protocol::Category;
use dpor_core::server::Server;
use dpor_core::sigtag::{AuthTag, SigScheme};
use dpor_core::Result;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::transport::{Link, Loopback};

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub profile: Profile,
    pub m: usize,
    pub per_level: usize,
    pub audit_trials: usize,
    /// Writes measured per n; `None` measures one full cycle of n writes.
    pub writes: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BenchRow {
    pub n: u64,
    /// β in bytes.
    pub block_bytes: usize,
    pub tag_bytes: usize,
    pub read_bytes: f64,
    pub write_bytes: f64,
    pub audit_bytes: f64,
    /// Challenge entries per audit at w = n − 1.
    pub audit_entries: usize,
    pub read_residual: f64,
    pub write_residual: f64,
    pub audit_residual: f64,
}

/// Measures one n. The file fills U so the Merkle tree has full height;
/// writes are modifications at random indices.
pub fn measure(n: u64, spec: &BenchSpec) -> Result<BenchRow> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed ^ n);
    let (params, secret) = setup(&mut rng, spec.profile, n, spec.m, SigScheme::Ed25519, SetupLimits::default())?;
    let cap = payload_capacity(&params);
    let mut file = vec![0u8; cap * n as usize];
    rng.fill_bytes(&mut file);
    let (mut client, upload) = ClientState::init(params.clone(), secret, &file)?;
    let width = params.segment_width();
    let mut link = Link::new(Loopback::new(Server::init(upload)?), width);
    let beta = params.block_bytes();

    client.read(&mut link, 0)?;
    let read_bytes = link.meter.total(Category::Read) as f64;

    let writes = spec.writes.unwrap_or(n).max(1);
    let mut payload = vec![0u8; cap];
    let mut audit_bytes = 0.0;
    let mut audit_entries = 0;
    let mut statement = client.statement()?;
    for k in 0..writes {
        if k % n == n - 1 && audit_entries == 0 {
            // every level is occupied right before the C rebuild
            let before = link.meter.total(Category::Audit);
            for _ in 0..spec.audit_trials {
                let out = audit(&params, &statement, spec.per_level, &mut link, &mut rng)?;
                if !out.passed {
                    return Err(dpor_core::Error::Verification(format!("honest audit failed: {:?}", out.reason)));
                }
            }
            audit_bytes = (link.meter.total(Category::Audit) - before) as f64 / spec.audit_trials.max(1) as f64;
            audit_entries = spec.per_level * (params.log_n() as usize + 1);
        }
        rng.fill_bytes(&mut payload);
        let i = rng.gen_range(0..client.len());
        statement = client.write(&mut link, &WriteRecord::modify(i, payload.clone()))?;
    }
    let write_bytes = (link.meter.total(Category::Write) + link.meter.total(Category::RebuildTags)) as f64 / writes as f64;

    Ok(BenchRow {
        n,
        block_bytes: beta,
        tag_bytes: AuthTag::body_len(&params),
        read_bytes,
        write_bytes,
        audit_bytes,
        audit_entries,
        read_residual: read_bytes - beta as f64,
        write_residual: write_bytes - beta as f64,
        audit_residual: audit_bytes - beta as f64,
    })
}

pub fn run(ns: &[u64], spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    ns.iter().map(|&n| measure(n, spec)).collect()
}

/// Human-readable table with the residual growth between the first and last row.
pub fn render(rows: &[BenchRow]) -> String {
    let mut out = String::from("n\tbeta\ttag\tread\twrite\taudit\tr\tres_read\tres_write\tres_audit\n");
    for r in rows {
        out += &format!(
            "{}\t{}\t{}\t{:.0}\t{:.1}\t{:.0}\t{}\t{:.0}\t{:.1}\t{:.0}\n",
            r.n,
            r.block_bytes,
            r.tag_bytes,
            r.read_bytes,
            r.write_bytes,
            r.audit_bytes,
            r.audit_entries,
            r.read_residual,
            r.write_residual,
            r.audit_residual
        );
    }
    if let (Some(a), Some(b)) = (rows.first(), rows.last()) {
        if rows.len() > 1 {
            out += &format!(
                "residual growth n={}→{}: read {:.2}, write {:.2}, audit {:.2}\n",
                a.n,
                b.n,
                b.read_residual / a.read_residual,
                b.write_residual / a.write_residual,
                b.audit_residual / a.audit_residual
            );
        }
    }
    out
}
