//! Transaction types and their canonical encoding.
//!
//! The signing input for every signed value is its canonical encoding with
//! the signature field left out. For transactions that includes the variant
//! tag, so a signature over one variant never verifies as another.

use serde::{Deserialize, Serialize};

use crate::crypto::{self, hash, Digest, KeyPair, PublicKey, Signature};
use crate::ecu::{ssid_of_records, EcuRecord, SsId};
use crate::wire::{Decoder, Encoder, WireError};

const TAG_GENESIS: u8 = 0x01;
const TAG_UPDATE: u8 = 0x02;
const TAG_REQUEST: u8 = 0x03;
const TAG_CHALLENGE_RECORD: u8 = 0x04;

/// Registration record produced by the manufacturer at assembly time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Genesis {
    pub ssid: SsId,
    pub ts: u64,
    pub ecu_list: Vec<EcuRecord>,
    pub vehicle_pk: PublicKey,
    pub maker_pk: PublicKey,
    pub sig: Signature,
}

/// Maintenance or diagnostics result. `ecu_updates` lists the records that
/// changed so verifiers can keep their per-ECU registry current.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Update {
    pub new_ssid: SsId,
    pub ts: u64,
    pub vehicle_pk: PublicKey,
    pub maintainer_pk: PublicKey,
    pub metadata: String,
    pub ecu_updates: Vec<EcuRecord>,
    pub sig: Signature,
}

/// Insurer query stored for liability decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub insurer_pk: PublicKey,
    pub query: String,
    pub ts: u64,
    pub sig: Signature,
}

/// A vehicle's answer to an RSU challenge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeResponse {
    pub ssid: SsId,
    pub subset: Vec<EcuRecord>,
    pub ts: u64,
    pub vehicle_pk: PublicKey,
    pub sig: Signature,
}

/// A verified response countersigned by the RSU that recorded it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengeRecord {
    pub response: ChallengeResponse,
    pub rsu_pk: PublicKey,
    pub rsu_sig: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transaction {
    Genesis(Genesis),
    Update(Update),
    Request(Request),
    ChallengeRecord(ChallengeRecord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxKind {
    Genesis,
    Update,
    Request,
    ChallengeRecord,
}

fn encode_records(e: &mut Encoder, records: &[EcuRecord]) {
    e.count(records.len());
    for r in records {
        r.encode(e);
    }
}

fn decode_records(d: &mut Decoder<'_>) -> Result<Vec<EcuRecord>, WireError> {
    let n = d.count()?;
    (0..n).map(|_| EcuRecord::decode(d)).collect()
}

fn decode_pk(d: &mut Decoder<'_>) -> Result<PublicKey, WireError> {
    d.fixed().map(PublicKey)
}

fn decode_sig(d: &mut Decoder<'_>) -> Result<Signature, WireError> {
    d.fixed().map(Signature)
}

fn decode_ssid(d: &mut Decoder<'_>) -> Result<SsId, WireError> {
    d.fixed().map(|b| SsId(Digest(b)))
}

impl Genesis {
    pub fn signed(
        maker: &KeyPair,
        vehicle_pk: PublicKey,
        ecu_list: Vec<EcuRecord>,
        ssid: SsId,
        ts: u64,
    ) -> Self {
        let mut g = Genesis {
            ssid,
            ts,
            ecu_list,
            vehicle_pk,
            maker_pk: maker.public(),
            sig: Signature([0; 64]),
        };
        g.sig = maker.sign(&g.signing_bytes());
        g
    }

    fn encode_unsigned(&self, e: &mut Encoder) {
        e.tag(TAG_GENESIS)
            .bytes(self.ssid.0.as_bytes())
            .u64(self.ts);
        encode_records(e, &self.ecu_list);
        e.bytes(self.vehicle_pk.as_bytes())
            .bytes(self.maker_pk.as_bytes());
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode_unsigned(&mut e);
        e.finish()
    }

    pub fn verify_signature(&self) -> bool {
        crypto::verify(&self.maker_pk, &self.signing_bytes(), &self.sig)
    }

    /// True if `ssid` is the Merkle root of `ecu_list`.
    pub fn ssid_consistent(&self) -> bool {
        ssid_of_records(&self.ecu_list).is_ok_and(|s| s == self.ssid)
    }
}

impl Update {
    pub fn signed(
        maintainer: &KeyPair,
        vehicle_pk: PublicKey,
        new_ssid: SsId,
        ecu_updates: Vec<EcuRecord>,
        metadata: String,
        ts: u64,
    ) -> Self {
        let mut u = Update {
            new_ssid,
            ts,
            vehicle_pk,
            maintainer_pk: maintainer.public(),
            metadata,
            ecu_updates,
            sig: Signature([0; 64]),
        };
        u.sig = maintainer.sign(&u.signing_bytes());
        u
    }

    fn encode_unsigned(&self, e: &mut Encoder) {
        e.tag(TAG_UPDATE)
            .bytes(self.new_ssid.0.as_bytes())
            .u64(self.ts)
            .bytes(self.vehicle_pk.as_bytes())
            .bytes(self.maintainer_pk.as_bytes())
            .str(&self.metadata);
        encode_records(e, &self.ecu_updates);
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode_unsigned(&mut e);
        e.finish()
    }

    pub fn verify_signature(&self) -> bool {
        crypto::verify(&self.maintainer_pk, &self.signing_bytes(), &self.sig)
    }
}

impl Request {
    pub fn signed(insurer: &KeyPair, query: String, ts: u64) -> Self {
        let mut r = Request {
            insurer_pk: insurer.public(),
            query,
            ts,
            sig: Signature([0; 64]),
        };
        r.sig = insurer.sign(&r.signing_bytes());
        r
    }

    fn encode_unsigned(&self, e: &mut Encoder) {
        e.tag(TAG_REQUEST)
            .bytes(self.insurer_pk.as_bytes())
            .str(&self.query)
            .u64(self.ts);
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode_unsigned(&mut e);
        e.finish()
    }

    pub fn verify_signature(&self) -> bool {
        crypto::verify(&self.insurer_pk, &self.signing_bytes(), &self.sig)
    }
}

impl ChallengeResponse {
    pub fn signed(vehicle: &KeyPair, ssid: SsId, subset: Vec<EcuRecord>, ts: u64) -> Self {
        let mut r = ChallengeResponse {
            ssid,
            subset,
            ts,
            vehicle_pk: vehicle.public(),
            sig: Signature([0; 64]),
        };
        r.sig = vehicle.sign(&r.signing_bytes());
        r
    }

    fn encode_unsigned(&self, e: &mut Encoder) {
        e.bytes(self.ssid.0.as_bytes());
        encode_records(e, &self.subset);
        e.u64(self.ts).bytes(self.vehicle_pk.as_bytes());
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode_unsigned(&mut e);
        e.finish()
    }

    pub fn encode(&self, e: &mut Encoder) {
        e.nested(|n| {
            self.encode_unsigned(n);
            n.bytes(self.sig.as_bytes());
        });
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self, WireError> {
        d.nested(|n| {
            Ok(ChallengeResponse {
                ssid: decode_ssid(n)?,
                subset: decode_records(n)?,
                ts: n.u64()?,
                vehicle_pk: decode_pk(n)?,
                sig: decode_sig(n)?,
            })
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode(&mut e);
        e.finish()
    }

    pub fn verify_signature(&self) -> bool {
        crypto::verify(&self.vehicle_pk, &self.signing_bytes(), &self.sig)
    }
}

impl ChallengeRecord {
    pub fn signed(rsu: &KeyPair, response: ChallengeResponse) -> Self {
        let mut r = ChallengeRecord {
            response,
            rsu_pk: rsu.public(),
            rsu_sig: Signature([0; 64]),
        };
        r.rsu_sig = rsu.sign(&r.signing_bytes());
        r
    }

    fn encode_unsigned(&self, e: &mut Encoder) {
        e.tag(TAG_CHALLENGE_RECORD);
        self.response.encode(e);
        e.bytes(self.rsu_pk.as_bytes());
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode_unsigned(&mut e);
        e.finish()
    }

    /// Checks both the RSU countersignature and the vehicle's signature on
    /// the embedded response.
    pub fn verify_signature(&self) -> bool {
        crypto::verify(&self.rsu_pk, &self.signing_bytes(), &self.rsu_sig)
            && self.response.verify_signature()
    }
}

impl Transaction {
    pub fn kind(&self) -> TxKind {
        match self {
            Transaction::Genesis(_) => TxKind::Genesis,
            Transaction::Update(_) => TxKind::Update,
            Transaction::Request(_) => TxKind::Request,
            Transaction::ChallengeRecord(_) => TxKind::ChallengeRecord,
        }
    }

    /// The protocol timestamp carried inside the signed payload.
    pub fn ts(&self) -> u64 {
        match self {
            Transaction::Genesis(g) => g.ts,
            Transaction::Update(u) => u.ts,
            Transaction::Request(r) => r.ts,
            Transaction::ChallengeRecord(c) => c.response.ts,
        }
    }

    /// The vehicle a transaction is about. Requests are not addressed to a
    /// vehicle.
    pub fn vehicle(&self) -> Option<PublicKey> {
        match self {
            Transaction::Genesis(g) => Some(g.vehicle_pk),
            Transaction::Update(u) => Some(u.vehicle_pk),
            Transaction::Request(_) => None,
            Transaction::ChallengeRecord(c) => Some(c.response.vehicle_pk),
        }
    }

    /// The key whose signature authenticates this transaction.
    pub fn signer(&self) -> PublicKey {
        match self {
            Transaction::Genesis(g) => g.maker_pk,
            Transaction::Update(u) => u.maintainer_pk,
            Transaction::Request(r) => r.insurer_pk,
            Transaction::ChallengeRecord(c) => c.rsu_pk,
        }
    }

    pub fn verify_signature(&self) -> bool {
        match self {
            Transaction::Genesis(g) => g.verify_signature(),
            Transaction::Update(u) => u.verify_signature(),
            Transaction::Request(r) => r.verify_signature(),
            Transaction::ChallengeRecord(c) => c.verify_signature(),
        }
    }

    pub fn encode(&self, e: &mut Encoder) {
        match self {
            Transaction::Genesis(g) => {
                g.encode_unsigned(e);
                e.bytes(g.sig.as_bytes());
            }
            Transaction::Update(u) => {
                u.encode_unsigned(e);
                e.bytes(u.sig.as_bytes());
            }
            Transaction::Request(r) => {
                r.encode_unsigned(e);
                e.bytes(r.sig.as_bytes());
            }
            Transaction::ChallengeRecord(c) => {
                c.encode_unsigned(e);
                e.bytes(c.rsu_sig.as_bytes());
            }
        }
    }

    pub fn decode(d: &mut Decoder<'_>) -> Result<Self, WireError> {
        Ok(match d.tag()? {
            TAG_GENESIS => Transaction::Genesis(Genesis {
                ssid: decode_ssid(d)?,
                ts: d.u64()?,
                ecu_list: decode_records(d)?,
                vehicle_pk: decode_pk(d)?,
                maker_pk: decode_pk(d)?,
                sig: decode_sig(d)?,
            }),
            TAG_UPDATE => Transaction::Update(Update {
                new_ssid: decode_ssid(d)?,
                ts: d.u64()?,
                vehicle_pk: decode_pk(d)?,
                maintainer_pk: decode_pk(d)?,
                metadata: d.string()?,
                ecu_updates: decode_records(d)?,
                sig: decode_sig(d)?,
            }),
            TAG_REQUEST => Transaction::Request(Request {
                insurer_pk: decode_pk(d)?,
                query: d.string()?,
                ts: d.u64()?,
                sig: decode_sig(d)?,
            }),
            TAG_CHALLENGE_RECORD => Transaction::ChallengeRecord(ChallengeRecord {
                response: ChallengeResponse::decode(d)?,
                rsu_pk: decode_pk(d)?,
                rsu_sig: decode_sig(d)?,
            }),
            t => return Err(WireError::UnknownTag(t)),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode(&mut e);
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut d = Decoder::new(bytes);
        let tx = Self::decode(&mut d)?;
        d.finish()?;
        Ok(tx)
    }

    pub fn digest(&self) -> Digest {
        hash(&self.to_bytes())
    }
}

impl From<Genesis> for Transaction {
    fn from(g: Genesis) -> Self {
        Transaction::Genesis(g)
    }
}

impl From<Update> for Transaction {
    fn from(u: Update) -> Self {
        Transaction::Update(u)
    }
}

impl From<Request> for Transaction {
    fn from(r: Request) -> Self {
        Transaction::Request(r)
    }
}

impl From<ChallengeRecord> for Transaction {
    fn from(c: ChallengeRecord) -> Self {
        Transaction::ChallengeRecord(c)
    }
}
