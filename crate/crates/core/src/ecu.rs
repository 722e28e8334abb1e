//! Per-vehicle ECU state and its Merkle root (the vehicle's SS_ID).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash_parts, Digest};
use crate::wire::{Decoder, Encoder, WireError};

pub const LEAF_PREFIX: u8 = 0x00;
pub const NODE_PREFIX: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EcuError {
    #[error("empty ECU state")]
    Empty,
    #[error("unknown ECU id {id} (vehicle has {count} ECUs)")]
    UnknownEcu { id: usize, count: usize },
    #[error("duplicate ECU id {0} in request")]
    Duplicate(usize),
    #[error("timestamp regression on ECU {id}: {previous} -> {requested}")]
    TimestampRegression {
        id: usize,
        previous: u64,
        requested: u64,
    },
    #[error("ECU ids must be 0..N in order; found {found} at position {position}")]
    NonContiguous { position: usize, found: usize },
}

/// One ECU: firmware digest and the time of its last write, in simulation
/// milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcuRecord {
    pub ecu_id: usize,
    pub firmware_digest: Digest,
    pub last_write_ts: u64,
}

impl EcuRecord {
    pub fn encode(&self, enc: &mut Encoder) {
        enc.nested(|e| {
            e.u64(self.ecu_id as u64)
                .bytes(self.firmware_digest.as_bytes())
                .u64(self.last_write_ts);
        });
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, WireError> {
        dec.nested(|d| {
            let ecu_id = usize::try_from(d.u64()?).map_err(|_| WireError::Invalid("ecu id"))?;
            Ok(EcuRecord {
                ecu_id,
                firmware_digest: Digest(d.fixed()?),
                last_write_ts: d.u64()?,
            })
        })
    }
}

/// The Merkle root over a vehicle's firmware digests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SsId(pub Digest);

/// Ordered ECU records, `records[i].ecu_id == i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcuState {
    records: Vec<EcuRecord>,
}

impl EcuState {
    pub fn new(records: Vec<EcuRecord>) -> Result<Self, EcuError> {
        if records.is_empty() {
            return Err(EcuError::Empty);
        }
        for (position, r) in records.iter().enumerate() {
            if r.ecu_id != position {
                return Err(EcuError::NonContiguous {
                    position,
                    found: r.ecu_id,
                });
            }
        }
        Ok(Self { records })
    }

    /// Builds a state from firmware digests, all written at `ts`.
    pub fn from_digests(digests: &[Digest], ts: u64) -> Result<Self, EcuError> {
        Self::new(
            digests
                .iter()
                .enumerate()
                .map(|(ecu_id, d)| EcuRecord {
                    ecu_id,
                    firmware_digest: *d,
                    last_write_ts: ts,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EcuRecord] {
        &self.records
    }

    pub fn get(&self, ecu_id: usize) -> Option<&EcuRecord> {
        self.records.get(ecu_id)
    }

    pub fn digests(&self) -> impl Iterator<Item = &Digest> + '_ {
        self.records.iter().map(|r| &r.firmware_digest)
    }

    pub fn ssid(&self) -> SsId {
        compute_ssid(self).expect("EcuState is never empty")
    }

    /// Returns a copy with one record rewritten.
    pub fn update_ecu(&self, ecu_id: usize, new_digest: Digest, ts: u64) -> Result<Self, EcuError> {
        let mut next = self.clone();
        next.apply_write(ecu_id, new_digest, ts)?;
        Ok(next)
    }

    /// In-place variant of [`EcuState::update_ecu`].
    pub fn apply_write(
        &mut self,
        ecu_id: usize,
        new_digest: Digest,
        ts: u64,
    ) -> Result<(), EcuError> {
        let count = self.records.len();
        let rec = self
            .records
            .get_mut(ecu_id)
            .ok_or(EcuError::UnknownEcu { id: ecu_id, count })?;
        if ts < rec.last_write_ts {
            return Err(EcuError::TimestampRegression {
                id: ecu_id,
                previous: rec.last_write_ts,
                requested: ts,
            });
        }
        rec.firmware_digest = new_digest;
        rec.last_write_ts = ts;
        Ok(())
    }

    /// The named records, verbatim, in request order.
    pub fn subset_report(&self, indices: &[usize]) -> Result<Vec<EcuRecord>, EcuError> {
        let mut seen = vec![false; self.records.len()];
        indices
            .iter()
            .map(|&i| {
                let rec = self.records.get(i).ok_or(EcuError::UnknownEcu {
                    id: i,
                    count: self.records.len(),
                })?;
                if std::mem::replace(&mut seen[i], true) {
                    return Err(EcuError::Duplicate(i));
                }
                Ok(*rec)
            })
            .collect()
    }
}

pub fn leaf_hash(ecu_id: usize, firmware_digest: &Digest) -> Digest {
    hash_parts(&[
        &[LEAF_PREFIX],
        &(ecu_id as u64).to_be_bytes(),
        firmware_digest.as_bytes(),
    ])
}

pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[&[NODE_PREFIX], left.as_bytes(), right.as_bytes()])
}

/// Merkle root over `(ecu_id, digest)` leaves. Levels with an odd node
/// count pair their last node with itself.
pub fn merkle_root<'a>(digests: impl IntoIterator<Item = &'a Digest>) -> Result<Digest, EcuError> {
    let mut level: Vec<Digest> = digests
        .into_iter()
        .enumerate()
        .map(|(i, d)| leaf_hash(i, d))
        .collect();
    if level.is_empty() {
        return Err(EcuError::Empty);
    }
    while level.len() > 1 {
        let n = level.len();
        for i in 0..n.div_ceil(2) {
            let left = level[2 * i];
            let right = if 2 * i + 1 < n {
                level[2 * i + 1]
            } else {
                left
            };
            level[i] = node_hash(&left, &right);
        }
        level.truncate(n.div_ceil(2));
    }
    Ok(level[0])
}

pub fn compute_ssid(state: &EcuState) -> Result<SsId, EcuError> {
    merkle_root(state.digests()).map(SsId)
}

/// Merkle root over a record list in wire order. The list must be a valid
/// ECU state (ids 0..N).
pub fn ssid_of_records(records: &[EcuRecord]) -> Result<SsId, EcuError> {
    for (position, r) in records.iter().enumerate() {
        if r.ecu_id != position {
            return Err(EcuError::NonContiguous {
                position,
                found: r.ecu_id,
            });
        }
    }
    merkle_root(records.iter().map(|r| &r.firmware_digest)).map(SsId)
}
