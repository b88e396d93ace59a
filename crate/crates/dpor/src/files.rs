//! On-disk formats. Each file is a 6-byte tag (`DPOR` + kind + version)
//! followed by the canonical wire encoding of its value.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use dpor_core::client::ClientState;
use dpor_core::params::{SecretState, SystemParams};
use dpor_core::protocol::CounterStatement;
use dpor_core::server::Server;
use dpor_core::wire::{from_bytes, to_bytes, Wire};

const VERSION: u8 = 1;

/// Printed at the top of the client state, which holds the signing key in the clear.
pub const STATE_BANNER: &[u8] =
    b"# WARNING: plaintext client state including the secret signing key. Keep it private.\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Params = 1,
    Secret = 2,
    ClientState = 3,
    Snapshot = 4,
    Statement = 5,
}

impl Kind {
    fn file_name(self) -> &'static str {
        match self {
            Kind::Params => "params.bin",
            Kind::Secret => "secret.key",
            Kind::ClientState => "client.state",
            Kind::Snapshot => "server.snap",
            Kind::Statement => "statement.bin",
        }
    }

    fn banner(self) -> &'static [u8] {
        match self {
            Kind::Secret | Kind::ClientState => STATE_BANNER,
            _ => b"",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: not a {kind:?} file")]
    Format { path: String, kind: Kind },
    #[error("{path}: {source}")]
    Decode { path: String, source: dpor_core::Error },
}

/// Paths of the files one client/server pair keeps in a directory.
#[derive(Debug, Clone)]
pub struct Store {
    pub dir: PathBuf,
}

impl Store {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Store { dir: dir.into() }
    }

    pub fn path(&self, kind: Kind) -> PathBuf {
        self.dir.join(kind.file_name())
    }

    pub fn exists(&self, kind: Kind) -> bool {
        self.path(kind).exists()
    }

    pub fn save<T: Wire>(&self, kind: Kind, value: &T, seg_width: usize) -> Result<(), FileError> {
        write_file(&self.path(kind), kind, value, seg_width)
    }

    pub fn load<T: Wire>(&self, kind: Kind) -> Result<T, FileError> {
        read_file(&self.path(kind), kind)
    }

    pub fn params(&self) -> Result<SystemParams, FileError> {
        self.load(Kind::Params)
    }

    pub fn secret(&self) -> Result<SecretState, FileError> {
        self.load(Kind::Secret)
    }

    pub fn client(&self) -> Result<ClientState, FileError> {
        self.load(Kind::ClientState)
    }

    pub fn save_client(&self, c: &ClientState) -> Result<(), FileError> {
        self.save(Kind::ClientState, c, 0)
    }

    pub fn snapshot(&self) -> Result<Server, FileError> {
        self.load(Kind::Snapshot)
    }

    pub fn save_snapshot(&self, s: &Server) -> Result<(), FileError> {
        self.save(Kind::Snapshot, s, s.params().segment_width())
    }

    pub fn statement(&self) -> Result<CounterStatement, FileError> {
        self.load(Kind::Statement)
    }

    pub fn save_statement(&self, s: &CounterStatement) -> Result<(), FileError> {
        self.save(Kind::Statement, s, 0)
    }
}

pub fn write_file<T: Wire>(path: &Path, kind: Kind, value: &T, seg_width: usize) -> Result<(), FileError> {
    let mut bytes = kind.banner().to_vec();
    bytes.extend_from_slice(b"DPOR");
    bytes.push(kind as u8);
    bytes.push(VERSION);
    bytes.extend(to_bytes(value, seg_width));
    // write-then-rename so a crash never leaves a truncated file behind
    let tmp = path.with_extension("tmp");
    let io = |source| FileError::Io { path: path.display().to_string(), source };
    fs::write(&tmp, &bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn read_file<T: Wire>(path: &Path, kind: Kind) -> Result<T, FileError> {
    let p = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| FileError::Io { path: p.clone(), source })?;
    let body = bytes.strip_prefix(kind.banner()).unwrap_or(&bytes);
    let body = body
        .strip_prefix(b"DPOR".as_slice())
        .and_then(|b| b.strip_prefix([kind as u8, VERSION].as_slice()))
        .ok_or(FileError::Format { path: p.clone(), kind })?;
    from_bytes(body).map_err(|source| FileError::Decode { path: p, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_kind_check() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        store.save(Kind::Params, &42u64, 0).unwrap();
        assert_eq!(store.load::<u64>(Kind::Params).unwrap(), 42);
        assert!(matches!(read_file::<u64>(&store.path(Kind::Params), Kind::Snapshot), Err(FileError::Format { .. })));
        store.save(Kind::Secret, &7u64, 0).unwrap();
        let raw = fs::read(store.path(Kind::Secret)).unwrap();
        assert!(raw.starts_with(STATE_BANNER));
        assert_eq!(store.load::<u64>(Kind::Secret).unwrap(), 7);
        fs::write(store.path(Kind::Statement), b"DPOR\x05\x01\x00").unwrap();
        assert!(matches!(store.statement(), Err(FileError::Decode { .. })));
        assert!(matches!(store.client(), Err(FileError::Io { .. })));
    }
}
