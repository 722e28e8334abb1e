//! Appendable-block ledger.
//!
//! Each identity owns exactly one block. A block is a fixed header followed
//! by a hash-linked list of entries: the first entry links to the header
//! hash, every later entry to the hash of its predecessor. Appending needs
//! no consensus round; it is gated only by the signature and ownership
//! checks in [`AppendableBlock::append_entry`].
//!
//! Headers form a second chain in creation order: each header carries the
//! hash of the header created before it, zero for the first block.

use std::collections::HashMap;

use thiserror::Error;

use crate::archive::{Archive, ArchiveBatch, ArchiveError, RelinkEvent};
use crate::crypto::{hash, Digest, PublicKey};
use crate::ecu::{EcuRecord, SsId};
use crate::tx::{Genesis, Transaction};
use crate::wire::{Decoder, Encoder, WireError};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("block exists for {0}")]
    BlockExists(PublicKey),
    #[error("no block for {0}")]
    NoBlock(PublicKey),
    #[error("signature check failed")]
    Signature,
    #[error("ownership: transaction addressed to {addressed} appended to block of {owner}")]
    Ownership {
        owner: PublicKey,
        addressed: PublicKey,
    },
    #[error("genesis ECU list does not hash to its SS_ID")]
    GenesisInconsistent,
    #[error("genesis may only be the first entry of a block")]
    MisplacedGenesis,
    #[error("entry timestamp regression: {previous} -> {requested}")]
    TimestampRegression { previous: u64, requested: u64 },
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub owner_pk: PublicKey,
    pub prev_header_hash: Digest,
    pub created_ts: u64,
    pub external_address: String,
}

impl BlockHeader {
    pub fn encode(&self, e: &mut Encoder) {
        e.bytes(self.owner_pk.as_bytes())
            .bytes(self.prev_header_hash.as_bytes())
            .u64(self.created_ts)
            .str(&self.external_address);
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(BlockHeader {
            owner_pk: PublicKey(d.fixed()?),
            prev_header_hash: Digest(d.fixed()?),
            created_ts: d.u64()?,
            external_address: d.string()?,
        })
    }

    pub fn header_hash(&self) -> Digest {
        let mut e = Encoder::new();
        self.encode(&mut e);
        hash(e.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub payload: Transaction,
    pub prev_link: Digest,
    pub entry_ts: u64,
}

impl LedgerEntry {
    pub fn encode(&self, e: &mut Encoder) {
        e.nested(|p| self.payload.encode(p))
            .bytes(self.prev_link.as_bytes())
            .u64(self.entry_ts);
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(LedgerEntry {
            payload: d.nested(Transaction::decode)?,
            prev_link: Digest(d.fixed()?),
            entry_ts: d.u64()?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode(&mut e);
        e.finish()
    }

    pub fn entry_hash(&self) -> Digest {
        hash(&self.to_bytes())
    }
}

/// Verifier-side state folded from a block's entries: the SS_ID the vehicle
/// must currently prove, the per-ECU registry used for subset checks and the
/// timestamp of the last recorded challenge. Pruning carries it over, so it
/// stays complete after the genesis entry has moved to the archive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttestationView {
    pub expected_ssid: Option<SsId>,
    pub registry: Vec<EcuRecord>,
    pub last_challenge_ts: Option<u64>,
    pub updates_applied: u64,
    pub challenges_recorded: u64,
}

impl AttestationView {
    fn apply(&mut self, tx: &Transaction) {
        match tx {
            Transaction::Genesis(g) => {
                self.expected_ssid = Some(g.ssid);
                self.registry = g.ecu_list.clone();
            }
            Transaction::Update(u) => {
                self.expected_ssid = Some(u.new_ssid);
                for rec in &u.ecu_updates {
                    if let Some(slot) = self.registry.get_mut(rec.ecu_id) {
                        *slot = *rec;
                    }
                }
                self.updates_applied += 1;
            }
            Transaction::Request(_) => {}
            Transaction::ChallengeRecord(c) => {
                self.last_challenge_ts = Some(c.response.ts);
                self.challenges_recorded += 1;
            }
        }
    }

    /// Registry after applying `ecu_updates`, for checking a proposed Update
    /// before it is appended.
    pub fn registry_with(&self, ecu_updates: &[EcuRecord]) -> Vec<EcuRecord> {
        let mut reg = self.registry.clone();
        for rec in ecu_updates {
            if let Some(slot) = reg.get_mut(rec.ecu_id) {
                *slot = *rec;
            }
        }
        reg
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppendableBlock {
    header: BlockHeader,
    entries: Vec<LedgerEntry>,
    view: AttestationView,
}

impl AppendableBlock {
    fn new(header: BlockHeader) -> Self {
        Self {
            header,
            entries: Vec::new(),
            view: AttestationView::default(),
        }
    }

    pub fn header(&self) -> &BlockHeader {
        &self.header
    }

    pub fn owner(&self) -> PublicKey {
        self.header.owner_pk
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn view(&self) -> &AttestationView {
        &self.view
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn next_link(&self) -> Digest {
        self.entries
            .last()
            .map_or_else(|| self.header.header_hash(), LedgerEntry::entry_hash)
    }

    fn check_admissible(&self, tx: &Transaction) -> Result<(), LedgerError> {
        if !tx.verify_signature() {
            return Err(LedgerError::Signature);
        }
        if let Some(addressed) = tx.vehicle() {
            if addressed != self.header.owner_pk {
                return Err(LedgerError::Ownership {
                    owner: self.header.owner_pk,
                    addressed,
                });
            }
        }
        if let Transaction::Genesis(g) = tx {
            if !self.entries.is_empty() {
                return Err(LedgerError::MisplacedGenesis);
            }
            if !g.ssid_consistent() {
                return Err(LedgerError::GenesisInconsistent);
            }
        }
        if let Some(last) = self.entries.last() {
            if tx.ts() < last.entry_ts {
                return Err(LedgerError::TimestampRegression {
                    previous: last.entry_ts,
                    requested: tx.ts(),
                });
            }
        }
        Ok(())
    }

    /// Appends `tx` after checking its signature and that it is addressed to
    /// this block's owner. The entry timestamp is the transaction's own.
    pub fn append_entry(&mut self, tx: Transaction) -> Result<&LedgerEntry, LedgerError> {
        self.check_admissible(&tx)?;
        let entry = LedgerEntry {
            prev_link: self.next_link(),
            entry_ts: tx.ts(),
            payload: tx,
        };
        self.view.apply(&entry.payload);
        self.entries.push(entry);
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Checks the header binding, every link, timestamps and every payload
    /// signature. Any violation yields `false`.
    pub fn validate_block(&self) -> bool {
        let mut link = self.header.header_hash();
        let mut last_ts = 0u64;
        for (i, entry) in self.entries.iter().enumerate() {
            let tx = &entry.payload;
            let ok = entry.prev_link == link
                && entry.entry_ts == tx.ts()
                && entry.entry_ts >= last_ts
                && tx.vehicle().is_none_or(|v| v == self.header.owner_pk)
                && match tx {
                    Transaction::Genesis(g) => i == 0 && g.ssid_consistent(),
                    _ => true,
                }
                && tx.verify_signature();
            if !ok {
                return false;
            }
            link = entry.entry_hash();
            last_ts = entry.entry_ts;
        }
        true
    }

    /// Moves all but the last two entries to `archive` under the block's
    /// external address. Archived entries are written with the links they
    /// had in the unpruned chain; the retained pair is relinked onto the
    /// header so the block still validates. On archive failure the block is
    /// left as it was.
    pub fn prune_to_two(
        &self,
        archive: &mut dyn Archive,
    ) -> Result<(AppendableBlock, usize), LedgerError> {
        let n = self.entries.len();
        if n <= 2 {
            return Ok((self.clone(), 0));
        }
        let address = &self.header.external_address;
        let header_hash = self.header.header_hash();
        let first_seq = archive.count(address)?;
        let mut link = match archive.last(address)? {
            Some(tip) => tip.entry_hash(),
            None => header_hash,
        };

        let mut archived = Vec::with_capacity(n - 2);
        for e in &self.entries[..n - 2] {
            let orig = LedgerEntry {
                prev_link: link,
                ..e.clone()
            };
            link = orig.entry_hash();
            archived.push(orig);
        }

        let mut retained: Vec<LedgerEntry> = self.entries[n - 2..].to_vec();
        let mut relink_to = header_hash;
        for e in &mut retained {
            e.prev_link = relink_to;
            relink_to = e.entry_hash();
        }

        let batch = ArchiveBatch {
            first_seq,
            entries: &archived,
            relink: RelinkEvent {
                seq: first_seq + archived.len() as u64,
                original_prev_link: link,
                relinked_to: header_hash,
            },
        };
        archive.store(address, &batch)?;

        let pruned = AppendableBlock {
            header: self.header.clone(),
            entries: retained,
            view: self.view.clone(),
        };
        Ok((pruned, archived.len()))
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.nested(|h| self.header.encode(h));
        e.count(self.entries.len());
        for entry in &self.entries {
            e.nested(|n| entry.encode(n));
        }
    }

    /// Decodes a block. The attestation view is rebuilt from the entries
    /// present, so for a pruned block it reflects only the retained pair.
    pub fn decode(d: &mut Decoder<'_>) -> Result<Self, WireError> {
        let header = d.nested(BlockHeader::decode)?;
        let n = d.count()?;
        let entries = (0..n)
            .map(|_| d.nested(LedgerEntry::decode))
            .collect::<Result<Vec<_>, _>>()?;
        let mut view = AttestationView::default();
        for e in &entries {
            view.apply(&e.payload);
        }
        Ok(AppendableBlock {
            header,
            entries,
            view,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode(&mut e);
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut d = Decoder::new(bytes);
        let b = Self::decode(&mut d)?;
        d.finish()?;
        Ok(b)
    }
}

/// Rebuilds the unpruned entry sequence from archived and retained entries,
/// restoring every link to its value in the original chain.
pub fn reconstruct_chain(
    header: &BlockHeader,
    archived: &[LedgerEntry],
    retained: &[LedgerEntry],
) -> Vec<LedgerEntry> {
    let mut link = header.header_hash();
    archived
        .iter()
        .chain(retained)
        .map(|e| {
            let orig = LedgerEntry {
                prev_link: link,
                ..e.clone()
            };
            link = orig.entry_hash();
            orig
        })
        .collect()
}

/// True if `entries` form an intact link chain rooted at `header`.
pub fn chain_links_verify(header: &BlockHeader, entries: &[LedgerEntry]) -> bool {
    let mut link = header.header_hash();
    for e in entries {
        if e.prev_link != link {
            return false;
        }
        link = e.entry_hash();
    }
    true
}

#[derive(Debug, Clone, Default)]
pub struct Ledger {
    blocks: HashMap<PublicKey, AppendableBlock>,
    creation_order: Vec<PublicKey>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.creation_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.creation_order.is_empty()
    }

    pub fn creation_order(&self) -> &[PublicKey] {
        &self.creation_order
    }

    pub fn blocks(&self) -> impl Iterator<Item = &AppendableBlock> + '_ {
        self.creation_order.iter().map(|pk| &self.blocks[pk])
    }

    pub fn lookup(&self, pk: &PublicKey) -> Option<&AppendableBlock> {
        self.blocks.get(pk)
    }

    pub fn contains(&self, pk: &PublicKey) -> bool {
        self.blocks.contains_key(pk)
    }

    fn next_header(&self, owner_pk: PublicKey, ts: u64, external_address: String) -> BlockHeader {
        let prev_header_hash = self
            .creation_order
            .last()
            .map_or(Digest::ZERO, |pk| self.blocks[pk].header.header_hash());
        BlockHeader {
            owner_pk,
            prev_header_hash,
            created_ts: ts,
            external_address,
        }
    }

    /// Opens a block for `owner_pk` with `genesis` as its first entry.
    pub fn create_block(
        &mut self,
        owner_pk: PublicKey,
        genesis: Genesis,
        ts: u64,
        external_address: impl Into<String>,
    ) -> Result<&AppendableBlock, LedgerError> {
        if self.blocks.contains_key(&owner_pk) {
            return Err(LedgerError::BlockExists(owner_pk));
        }
        let mut block =
            AppendableBlock::new(self.next_header(owner_pk, ts, external_address.into()));
        block.append_entry(Transaction::Genesis(genesis))?;
        Ok(self.insert(block))
    }

    /// Opens a block with no entries, for identities such as authorities
    /// that are not registered by a genesis transaction.
    pub fn create_empty_block(
        &mut self,
        owner_pk: PublicKey,
        ts: u64,
        external_address: impl Into<String>,
    ) -> Result<&AppendableBlock, LedgerError> {
        if self.blocks.contains_key(&owner_pk) {
            return Err(LedgerError::BlockExists(owner_pk));
        }
        let block = AppendableBlock::new(self.next_header(owner_pk, ts, external_address.into()));
        Ok(self.insert(block))
    }

    fn insert(&mut self, block: AppendableBlock) -> &AppendableBlock {
        let pk = block.owner();
        self.creation_order.push(pk);
        self.blocks.entry(pk).or_insert(block)
    }

    pub fn append(
        &mut self,
        owner: &PublicKey,
        tx: Transaction,
    ) -> Result<&LedgerEntry, LedgerError> {
        self.blocks
            .get_mut(owner)
            .ok_or(LedgerError::NoBlock(*owner))?
            .append_entry(tx)
    }

    /// Prunes one block in place; returns how many entries were archived.
    pub fn prune(
        &mut self,
        owner: &PublicKey,
        archive: &mut dyn Archive,
    ) -> Result<usize, LedgerError> {
        let block = self.blocks.get(owner).ok_or(LedgerError::NoBlock(*owner))?;
        let (pruned, archived) = block.prune_to_two(archive)?;
        self.blocks.insert(*owner, pruned);
        Ok(archived)
    }

    /// Appends `tx` and prunes, committing only if both succeed.
    pub fn append_and_prune(
        &mut self,
        owner: &PublicKey,
        tx: Transaction,
        archive: &mut dyn Archive,
    ) -> Result<usize, LedgerError> {
        let mut block = self
            .blocks
            .get(owner)
            .ok_or(LedgerError::NoBlock(*owner))?
            .clone();
        block.append_entry(tx)?;
        let (pruned, archived) = block.prune_to_two(archive)?;
        self.blocks.insert(*owner, pruned);
        Ok(archived)
    }

    /// Header chain in creation order plus every block.
    pub fn validate(&self) -> bool {
        let mut prev = Digest::ZERO;
        for block in self.blocks() {
            if block.header.prev_header_hash != prev || !block.validate_block() {
                return false;
            }
            prev = block.header.header_hash();
        }
        self.blocks.len() == self.creation_order.len()
    }

    /// Canonical encoding: block count, then each block (length-prefixed) in
    /// creation order.
    pub fn encode(&self, e: &mut Encoder) {
        e.count(self.creation_order.len());
        for block in self.blocks() {
            e.nested(|n| block.encode(n));
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode(&mut e);
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut d = Decoder::new(bytes);
        let n = d.count()?;
        let mut ledger = Ledger::new();
        for _ in 0..n {
            let block = d.nested(AppendableBlock::decode)?;
            if ledger.blocks.contains_key(&block.owner()) {
                return Err(WireError::Invalid("duplicate block owner"));
            }
            ledger.insert(block);
        }
        d.finish()?;
        Ok(ledger)
    }

    /// Exact length of [`Ledger::to_bytes`], computed block by block without
    /// holding the whole encoding in memory.
    pub fn serialized_size(&self) -> usize {
        let mut buf = Encoder::with_capacity(4096);
        let mut total = 4;
        for block in self.blocks() {
            buf.clear();
            block.encode(&mut buf);
            total += 4 + buf.len();
        }
        total
    }
}
