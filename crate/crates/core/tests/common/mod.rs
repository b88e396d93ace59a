#![allow(dead_code)]

use dpor_core::block::{payload_capacity, WriteRecord};
use dpor_core::client::ClientState;
use dpor_core::params::{setup, Profile, SecretState, SetupLimits, SystemParams};
use dpor_core::protocol::{Request, Response, ServerLink};
use dpor_core::server::Server;
use dpor_core::sigtag::SigScheme;
use dpor_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn toy(n: u64, m: usize) -> (SystemParams, SecretState) {
    let mut r = rng(0xC0DE + n * 31 + m as u64);
    setup(&mut r, Profile::TOY, n, m, SigScheme::Ed25519, SetupLimits::default()).unwrap()
}

pub fn random_bytes(r: &mut impl Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| r.gen()).collect()
}

/// Client plus an in-memory reference copy of the logical file.
pub struct Session {
    pub client: ClientState,
    pub server: Server,
    pub reference: Vec<Vec<u8>>,
}

impl Session {
    pub fn new(n: u64, m: usize, blocks: usize, seed: u64) -> Session {
        let (params, secret) = toy(n, m);
        let mut r = rng(seed);
        let cap = payload_capacity(&params);
        let reference: Vec<Vec<u8>> = (0..blocks).map(|_| random_bytes(&mut r, cap)).collect();
        let file = reference.concat();
        let (client, upload) = ClientState::init(params, secret, &file).unwrap();
        let server = Server::init(upload).unwrap();
        let reference = if reference.is_empty() { vec![Vec::new()] } else { reference };
        Session { client, server, reference }
    }

    pub fn random_record(&self, r: &mut impl Rng) -> WriteRecord {
        let len = self.reference.len() as u64;
        let cap = payload_capacity(&self.client.params);
        let size = r.gen_range(0..=cap);
        let data = random_bytes(r, size);
        loop {
            match r.gen_range(0..3) {
                0 => return WriteRecord::modify(r.gen_range(0..len), data),
                1 if len < self.client.params.n => return WriteRecord::insert(r.gen_range(0..=len), data),
                2 if len > 1 => return WriteRecord::delete(r.gen_range(0..len)),
                _ => {}
            }
        }
    }

    pub fn write(&mut self, record: &WriteRecord) -> Result<()> {
        self.client.write(&mut self.server, record)?;
        dpor_core::extractor::apply_record(&mut self.reference, record).unwrap();
        Ok(())
    }

    pub fn file(&self) -> Vec<u8> {
        self.reference.concat()
    }
}

/// Wraps a link and keeps every request and response.
pub struct Recorder<L> {
    pub inner: L,
    pub log: Vec<(Request, Response)>,
}

impl<L: ServerLink> ServerLink for Recorder<L> {
    fn call(&mut self, req: &Request) -> Result<Response> {
        let resp = self.inner.call(req)?;
        self.log.push((req.clone(), resp.clone()));
        Ok(resp)
    }
}
