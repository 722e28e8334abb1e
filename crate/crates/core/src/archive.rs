//! External storage for entries pruned out of appendable blocks.
//!
//! Each block header names an external address. Under that address the
//! archive keeps an append-only record stream:
//!
//! ```text
//! record := seq:u64be  entry_len:u32be  entry:[u8; entry_len]
//! ```
//!
//! `seq` is the entry's position in the block's original, unpruned chain and
//! `entry` is the entry's canonical encoding with its original `prev_link`.
//! Relink events are kept in a separate log per address.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::crypto::Digest;
use crate::ledger::LedgerEntry;
use crate::wire::{Decoder, Encoder, WireError};

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive I/O error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt archive record: {0}")]
    Corrupt(#[from] WireError),
    #[error("archive sequence gap for {address}: expected {expected}, got {got}")]
    SequenceGap {
        address: String,
        expected: u64,
        got: u64,
    },
    #[error("archive unavailable: {0}")]
    Unavailable(String),
}

/// Recorded when pruning rewrites the first retained entry's link to the
/// block header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelinkEvent {
    pub seq: u64,
    pub original_prev_link: Digest,
    pub relinked_to: Digest,
}

/// Everything one prune moves out of a block, stored atomically.
#[derive(Debug, Clone)]
pub struct ArchiveBatch<'a> {
    pub first_seq: u64,
    pub entries: &'a [LedgerEntry],
    pub relink: RelinkEvent,
}

pub trait Archive {
    /// Number of entries archived under `address`.
    fn count(&self, address: &str) -> Result<u64, ArchiveError>;
    fn last(&self, address: &str) -> Result<Option<LedgerEntry>, ArchiveError>;
    fn read(&self, address: &str) -> Result<Vec<(u64, LedgerEntry)>, ArchiveError>;
    fn relinks(&self, address: &str) -> Result<Vec<RelinkEvent>, ArchiveError>;
    /// Appends a batch. Either the whole batch is stored or nothing is.
    fn store(&mut self, address: &str, batch: &ArchiveBatch<'_>) -> Result<(), ArchiveError>;
}

pub fn encode_record(enc: &mut Encoder, seq: u64, entry: &LedgerEntry) {
    enc.u64(seq);
    enc.nested(|e| entry.encode(e));
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<(u64, LedgerEntry)>, WireError> {
    let mut d = Decoder::new(bytes);
    let mut out = Vec::new();
    while d.remaining() > 0 {
        let seq = d.u64()?;
        let entry = d.nested(LedgerEntry::decode)?;
        out.push((seq, entry));
    }
    Ok(out)
}

fn encode_batch(batch: &ArchiveBatch<'_>) -> Vec<u8> {
    let mut enc = Encoder::new();
    for (i, entry) in batch.entries.iter().enumerate() {
        encode_record(&mut enc, batch.first_seq + i as u64, entry);
    }
    enc.finish()
}

fn check_seq(address: &str, have: u64, batch: &ArchiveBatch<'_>) -> Result<(), ArchiveError> {
    if batch.first_seq != have {
        return Err(ArchiveError::SequenceGap {
            address: address.to_string(),
            expected: have,
            got: batch.first_seq,
        });
    }
    Ok(())
}

#[derive(Debug, Default, Clone)]
struct Stream {
    bytes: Vec<u8>,
    count: u64,
    last: Option<LedgerEntry>,
    relinks: Vec<RelinkEvent>,
}

/// In-process archive holding the same record bytes a file archive would.
#[derive(Debug, Default, Clone)]
pub struct MemoryArchive {
    streams: BTreeMap<String, Stream>,
}

impl MemoryArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn raw(&self, address: &str) -> Option<&[u8]> {
        self.streams.get(address).map(|s| s.bytes.as_slice())
    }

    pub fn total_entries(&self) -> u64 {
        self.streams.values().map(|s| s.count).sum()
    }

    pub fn addresses(&self) -> impl Iterator<Item = &str> {
        self.streams.keys().map(String::as_str)
    }
}

impl Archive for MemoryArchive {
    fn count(&self, address: &str) -> Result<u64, ArchiveError> {
        Ok(self.streams.get(address).map_or(0, |s| s.count))
    }

    fn last(&self, address: &str) -> Result<Option<LedgerEntry>, ArchiveError> {
        Ok(self.streams.get(address).and_then(|s| s.last.clone()))
    }

    fn read(&self, address: &str) -> Result<Vec<(u64, LedgerEntry)>, ArchiveError> {
        match self.streams.get(address) {
            Some(s) => Ok(decode_records(&s.bytes)?),
            None => Ok(Vec::new()),
        }
    }

    fn relinks(&self, address: &str) -> Result<Vec<RelinkEvent>, ArchiveError> {
        Ok(self
            .streams
            .get(address)
            .map(|s| s.relinks.clone())
            .unwrap_or_default())
    }

    fn store(&mut self, address: &str, batch: &ArchiveBatch<'_>) -> Result<(), ArchiveError> {
        let stream = self.streams.entry(address.to_string()).or_default();
        check_seq(address, stream.count, batch)?;
        stream.bytes.extend_from_slice(&encode_batch(batch));
        stream.count += batch.entries.len() as u64;
        if let Some(last) = batch.entries.last() {
            stream.last = Some(last.clone());
        }
        stream.relinks.push(batch.relink);
        Ok(())
    }
}

/// One record file per address under a root directory. The relink log sits
/// next to it as `<name>.relink`, one tab-separated line per event:
/// `seq original_prev_link_hex relinked_to_hex`.
#[derive(Debug, Clone)]
pub struct FileArchive {
    root: PathBuf,
}

impl FileArchive {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, ArchiveError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| ArchiveError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(Self { root })
    }

    /// Addresses may contain `/` or `:`; anything outside `[A-Za-z0-9._-]`
    /// maps to `_`.
    pub fn path_for(&self, address: &str) -> PathBuf {
        let name: String = address
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        self.root.join(format!("{name}.rec"))
    }

    fn relink_path(&self, address: &str) -> PathBuf {
        self.path_for(address).with_extension("relink")
    }

    fn read_file(path: &Path) -> Result<Vec<u8>, ArchiveError> {
        match fs::read(path) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(source) => Err(ArchiveError::Io {
                path: path.to_path_buf(),
                source,
            }),
        }
    }

    fn append_file(path: &Path, bytes: &[u8]) -> Result<(), ArchiveError> {
        let io_err = |source| ArchiveError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        f.write_all(bytes).map_err(io_err)?;
        f.flush().map_err(io_err)
    }
}

impl Archive for FileArchive {
    fn count(&self, address: &str) -> Result<u64, ArchiveError> {
        Ok(self.read(address)?.len() as u64)
    }

    fn last(&self, address: &str) -> Result<Option<LedgerEntry>, ArchiveError> {
        Ok(self.read(address)?.pop().map(|(_, e)| e))
    }

    fn read(&self, address: &str) -> Result<Vec<(u64, LedgerEntry)>, ArchiveError> {
        Ok(decode_records(&Self::read_file(&self.path_for(address))?)?)
    }

    fn relinks(&self, address: &str) -> Result<Vec<RelinkEvent>, ArchiveError> {
        let bytes = Self::read_file(&self.relink_path(address))?;
        let text = String::from_utf8_lossy(&bytes);
        let corrupt = || ArchiveError::Corrupt(WireError::Invalid("relink log line"));
        let digest = |s: &str| -> Result<Digest, ArchiveError> {
            let mut d = [0u8; 32];
            hex::decode_to_slice(s, &mut d).map_err(|_| corrupt())?;
            Ok(Digest(d))
        };
        text.lines()
            .map(|line| {
                let mut it = line.split('\t');
                let (Some(seq), Some(orig), Some(to), None) =
                    (it.next(), it.next(), it.next(), it.next())
                else {
                    return Err(corrupt());
                };
                Ok(RelinkEvent {
                    seq: seq.parse().map_err(|_| corrupt())?,
                    original_prev_link: digest(orig)?,
                    relinked_to: digest(to)?,
                })
            })
            .collect()
    }

    fn store(&mut self, address: &str, batch: &ArchiveBatch<'_>) -> Result<(), ArchiveError> {
        check_seq(address, self.count(address)?, batch)?;
        Self::append_file(&self.path_for(address), &encode_batch(batch))?;
        let r = batch.relink;
        let line = format!("{}\t{}\t{}\n", r.seq, r.original_prev_link, r.relinked_to);
        Self::append_file(&self.relink_path(address), line.as_bytes())
    }
}
