//! Registration, maintenance updates and the RSU challenge-response round.
//!
//! Two ledgers are involved. The upper tier is kept by the transport and
//! legal authorities: it records registrations, maintenance updates and
//! insurer requests, and every registration or update is countersigned by
//! all configured validators. The lower tier is shared by RSUs and holds
//! each vehicle's current attestation record; RSUs append challenge records
//! to it and prune blocks down to the last two entries.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::Archive;
use crate::crypto::{self, hash_parts, Digest, KeyPair, PublicKey, Signature};
use crate::ecu::{ssid_of_records, EcuError, EcuState};
use crate::ledger::{Ledger, LedgerError};
use crate::tx::{ChallengeRecord, ChallengeResponse, Genesis, Request, Transaction, Update};
use crate::wire::Encoder;

/// Number of ECUs an RSU asks for in the second half of a challenge.
pub const DEFAULT_SUBSET_SIZE: usize = 3;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("maker {0} is not authorized")]
    UnauthorizedMaker(PublicKey),
    #[error("maintainer {0} is not authorized")]
    UnauthorizedMaintainer(PublicKey),
    #[error("insurer {0} is not authorized")]
    UnauthorizedInsurer(PublicKey),
    #[error("vehicle {0} is already registered")]
    DuplicateVehicle(PublicKey),
    #[error("vehicle {0} has no block")]
    UnknownVehicle(PublicKey),
    #[error("bad signature")]
    BadSignature,
    #[error("SS_ID does not match the ECU records it claims to summarize")]
    InconsistentState,
    #[error("challenge needs at least one ECU")]
    NoEcus,
    #[error("challenge was addressed to {expected}, not {actual}")]
    VehicleMismatch {
        expected: PublicKey,
        actual: PublicKey,
    },
    #[error("nothing to report")]
    NothingToReport,
    #[error(transparent)]
    Ecu(#[from] EcuError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Outcome of checking one challenge response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Valid,
    UnknownVehicle,
    BadSignature,
    StaleTimestamp,
    StateMismatch,
    SubsetMismatch,
}

impl Verdict {
    pub const ALL: [Verdict; 6] = [
        Verdict::Valid,
        Verdict::UnknownVehicle,
        Verdict::BadSignature,
        Verdict::StaleTimestamp,
        Verdict::StateMismatch,
        Verdict::SubsetMismatch,
    ];

    pub fn is_valid(self) -> bool {
        self == Verdict::Valid
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Valid => "Valid",
            Verdict::UnknownVehicle => "UnknownVehicle",
            Verdict::BadSignature => "BadSignature",
            Verdict::StaleTimestamp => "StaleTimestamp",
            Verdict::StateMismatch => "StateMismatch",
            Verdict::SubsetMismatch => "SubsetMismatch",
        }
    }

    fn code(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge {
    pub rsu_pk: PublicKey,
    pub vehicle_pk: PublicKey,
    pub subset_indices: Vec<usize>,
    pub issued_ts: u64,
}

/// A validator's signature over an upper-tier event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Countersignature {
    pub validator: PublicKey,
    pub sig: Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditKind {
    Registration,
    Update,
}

/// Audit log line: what was approved and by whom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub kind: AuditKind,
    pub vehicle_pk: PublicKey,
    pub event: Digest,
    pub ts: u64,
    pub countersignatures: Vec<Countersignature>,
}

impl AuditRecord {
    pub fn fully_countersigned(&self, validators: &[PublicKey]) -> bool {
        validators.iter().all(|v| {
            self.countersignatures
                .iter()
                .any(|c| c.validator == *v && crypto::verify(v, self.event.as_bytes(), &c.sig))
        })
    }
}

/// Upper-tier state: validator keys, allow-lists, the upper ledger and the
/// countersignature audit log.
#[derive(Debug, Clone)]
pub struct UpperTier {
    validators: Vec<KeyPair>,
    pub authorized_maintainers: BTreeSet<PublicKey>,
    pub authorized_insurers: BTreeSet<PublicKey>,
    pub ledger: Ledger,
    pub audit: Vec<AuditRecord>,
    audit_owner: PublicKey,
}

impl UpperTier {
    /// The first validator owns the audit block that stores insurer
    /// requests.
    pub fn new(validators: Vec<KeyPair>, ts: u64) -> Self {
        assert!(
            !validators.is_empty(),
            "upper tier needs at least one validator"
        );
        let audit_owner = validators[0].public();
        let mut ledger = Ledger::new();
        ledger
            .create_empty_block(
                audit_owner,
                ts,
                format!("upper/audit/{}", audit_owner.short()),
            )
            .expect("fresh ledger");
        Self {
            validators,
            authorized_maintainers: BTreeSet::new(),
            authorized_insurers: BTreeSet::new(),
            ledger,
            audit: Vec::new(),
            audit_owner,
        }
    }

    pub fn validator_keys(&self) -> Vec<PublicKey> {
        self.validators.iter().map(KeyPair::public).collect()
    }

    pub fn audit_owner(&self) -> PublicKey {
        self.audit_owner
    }

    pub fn requests(&self) -> impl Iterator<Item = &Request> + '_ {
        self.ledger
            .lookup(&self.audit_owner)
            .into_iter()
            .flat_map(|b| b.entries())
            .filter_map(|e| match &e.payload {
                Transaction::Request(r) => Some(r),
                _ => None,
            })
    }

    fn countersign(
        &self,
        kind: AuditKind,
        vehicle_pk: PublicKey,
        payload: &[u8],
        ts: u64,
    ) -> AuditRecord {
        let label: &[u8] = match kind {
            AuditKind::Registration => b"register",
            AuditKind::Update => b"update",
        };
        let event = hash_parts(&[label, payload]);
        AuditRecord {
            kind,
            vehicle_pk,
            event,
            ts,
            countersignatures: self
                .validators
                .iter()
                .map(|v| Countersignature {
                    validator: v.public(),
                    sig: v.sign(event.as_bytes()),
                })
                .collect(),
        }
    }
}

/// Manufacturer-side genesis for a freshly assembled vehicle.
pub fn make_genesis(
    maker: &KeyPair,
    vehicle_pk: PublicKey,
    ecu_state: &EcuState,
    ts: u64,
) -> Genesis {
    Genesis::signed(
        maker,
        vehicle_pk,
        ecu_state.records().to_vec(),
        ecu_state.ssid(),
        ts,
    )
}

/// Verifies a genesis transaction in the upper tier and, once every
/// validator has countersigned it, opens the vehicle's block in both tiers.
pub fn initialize_vehicle(
    upper: &mut UpperTier,
    lower: &mut Ledger,
    genesis: Genesis,
    ts: u64,
    external_address: &str,
) -> Result<(), ProtocolError> {
    if !genesis.verify_signature() {
        return Err(ProtocolError::BadSignature);
    }
    if !upper.authorized_maintainers.contains(&genesis.maker_pk) {
        return Err(ProtocolError::UnauthorizedMaker(genesis.maker_pk));
    }
    if !genesis.ssid_consistent() {
        return Err(ProtocolError::InconsistentState);
    }
    let vehicle = genesis.vehicle_pk;
    if lower.contains(&vehicle) || upper.ledger.contains(&vehicle) {
        return Err(ProtocolError::DuplicateVehicle(vehicle));
    }
    let record = upper.countersign(
        AuditKind::Registration,
        vehicle,
        &genesis.signing_bytes(),
        ts,
    );
    upper.ledger.create_block(
        vehicle,
        genesis.clone(),
        ts,
        format!("upper/{external_address}"),
    )?;
    lower.create_block(vehicle, genesis, ts, external_address)?;
    upper.audit.push(record);
    Ok(())
}

/// Applies a maintainer's update: verified and countersigned in the upper
/// tier, then appended to the vehicle's block in both tiers.
pub fn apply_upper_update(
    upper: &mut UpperTier,
    lower: &mut Ledger,
    update: Update,
) -> Result<(), ProtocolError> {
    if !update.verify_signature() {
        return Err(ProtocolError::BadSignature);
    }
    if !upper.authorized_maintainers.contains(&update.maintainer_pk) {
        return Err(ProtocolError::UnauthorizedMaintainer(update.maintainer_pk));
    }
    let vehicle = update.vehicle_pk;
    let block = lower
        .lookup(&vehicle)
        .ok_or(ProtocolError::UnknownVehicle(vehicle))?;
    let registry = block.view().registry_with(&update.ecu_updates);
    if ssid_of_records(&registry)? != update.new_ssid {
        return Err(ProtocolError::InconsistentState);
    }
    if !upper.ledger.contains(&vehicle) {
        return Err(ProtocolError::UnknownVehicle(vehicle));
    }
    let record = upper.countersign(
        AuditKind::Update,
        vehicle,
        &update.signing_bytes(),
        update.ts,
    );
    // check the lower block first so a rejection leaves both tiers untouched
    let mut lower_block = block.clone();
    lower_block.append_entry(update.clone().into())?;
    upper.ledger.append(&vehicle, update.clone().into())?;
    lower.append(&vehicle, update.into())?;
    upper.audit.push(record);
    Ok(())
}

/// Draws `min(subset_size, ecu_count)` distinct ECU indices uniformly.
pub fn issue_challenge<R: Rng + ?Sized>(
    rsu: &KeyPair,
    vehicle_pk: PublicKey,
    ecu_count: usize,
    subset_size: usize,
    rng: &mut R,
    ts: u64,
) -> Result<Challenge, ProtocolError> {
    if ecu_count == 0 {
        return Err(ProtocolError::NoEcus);
    }
    let k = subset_size.min(ecu_count);
    Ok(Challenge {
        rsu_pk: rsu.public(),
        vehicle_pk,
        subset_indices: rand::seq::index::sample(rng, ecu_count, k).into_vec(),
        issued_ts: ts,
    })
}

/// Like [`issue_challenge`] but the subset always contains `probe`; the
/// remaining slots are drawn uniformly from the other ECUs.
pub fn issue_challenge_including<R: Rng + ?Sized>(
    rsu: &KeyPair,
    vehicle_pk: PublicKey,
    ecu_count: usize,
    subset_size: usize,
    probe: usize,
    rng: &mut R,
    ts: u64,
) -> Result<Challenge, ProtocolError> {
    if ecu_count == 0 {
        return Err(ProtocolError::NoEcus);
    }
    if probe >= ecu_count {
        return Err(EcuError::UnknownEcu {
            id: probe,
            count: ecu_count,
        }
        .into());
    }
    let k = subset_size.min(ecu_count);
    let mut subset = vec![probe];
    if k > 1 {
        subset.extend(
            rand::seq::index::sample(rng, ecu_count - 1, k - 1)
                .into_iter()
                .map(|i| if i >= probe { i + 1 } else { i }),
        );
    }
    Ok(Challenge {
        rsu_pk: rsu.public(),
        vehicle_pk,
        subset_indices: subset,
        issued_ts: ts,
    })
}

/// The vehicle's side of a challenge: current SS_ID plus the requested raw
/// records, signed.
pub fn build_response(
    vehicle: &KeyPair,
    ecu_state: &EcuState,
    challenge: &Challenge,
    ts: u64,
) -> Result<ChallengeResponse, ProtocolError> {
    if challenge.vehicle_pk != vehicle.public() {
        return Err(ProtocolError::VehicleMismatch {
            expected: challenge.vehicle_pk,
            actual: vehicle.public(),
        });
    }
    let subset = ecu_state.subset_report(&challenge.subset_indices)?;
    Ok(ChallengeResponse::signed(
        vehicle,
        ecu_state.ssid(),
        subset,
        ts,
    ))
}

/// Classifies a response. Checks run in a fixed order and the first failure
/// wins: registration, signature, timestamp freshness, SS_ID, subset.
pub fn verify_response(
    lower: &Ledger,
    challenge: &Challenge,
    response: &ChallengeResponse,
) -> Verdict {
    let Some(block) = lower.lookup(&challenge.vehicle_pk) else {
        return Verdict::UnknownVehicle;
    };
    let view = block.view();
    let Some(expected) = view.expected_ssid else {
        return Verdict::UnknownVehicle;
    };
    if response.vehicle_pk != challenge.vehicle_pk || !response.verify_signature() {
        return Verdict::BadSignature;
    }
    let stale_vs_record = view.last_challenge_ts.is_some_and(|t| response.ts <= t);
    if stale_vs_record || response.ts < challenge.issued_ts {
        return Verdict::StaleTimestamp;
    }
    if response.ssid != expected {
        return Verdict::StateMismatch;
    }
    let subset_ok = response.subset.len() == challenge.subset_indices.len()
        && response
            .subset
            .iter()
            .zip(&challenge.subset_indices)
            .all(|(rec, &id)| {
                rec.ecu_id == id
                    && view.registry.get(id).is_some_and(|reg| {
                        reg.firmware_digest == rec.firmware_digest
                            && reg.last_write_ts == rec.last_write_ts
                    })
            });
    if !subset_ok {
        return Verdict::SubsetMismatch;
    }
    Verdict::Valid
}

/// Stores a verified response as a countersigned challenge record and
/// prunes the block to two entries. Returns the number of entries archived.
/// On failure the ledger is unchanged.
pub fn record_response(
    rsu: &KeyPair,
    lower: &mut Ledger,
    response: ChallengeResponse,
    archive: &mut dyn Archive,
) -> Result<usize, ProtocolError> {
    let vehicle = response.vehicle_pk;
    let record = ChallengeRecord::signed(rsu, response);
    Ok(lower.append_and_prune(&vehicle, record.into(), archive)?)
}

/// Signed notice from an RSU to the authorities that a vehicle failed
/// attestation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportEvent {
    pub rsu_pk: PublicKey,
    pub vehicle_pk: PublicKey,
    pub verdict: Verdict,
    pub ts: u64,
    pub sig: Signature,
}

impl ReportEvent {
    fn signing_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.tag(0x10)
            .bytes(self.rsu_pk.as_bytes())
            .bytes(self.vehicle_pk.as_bytes())
            .tag(self.verdict.code())
            .u64(self.ts);
        e.finish()
    }

    pub fn verify_signature(&self) -> bool {
        crypto::verify(&self.rsu_pk, &self.signing_bytes(), &self.sig)
    }
}

pub fn report_malicious(
    rsu: &KeyPair,
    vehicle_pk: PublicKey,
    verdict: Verdict,
    ts: u64,
) -> Result<ReportEvent, ProtocolError> {
    if verdict.is_valid() {
        return Err(ProtocolError::NothingToReport);
    }
    let mut report = ReportEvent {
        rsu_pk: rsu.public(),
        vehicle_pk,
        verdict,
        ts,
        sig: Signature([0; 64]),
    };
    report.sig = rsu.sign(&report.signing_bytes());
    Ok(report)
}

/// Stores an insurer's query in the authorities' audit block.
pub fn submit_request(
    insurer: &KeyPair,
    upper: &mut UpperTier,
    query: &str,
    ts: u64,
) -> Result<Request, ProtocolError> {
    if !upper.authorized_insurers.contains(&insurer.public()) {
        return Err(ProtocolError::UnauthorizedInsurer(insurer.public()));
    }
    let request = Request::signed(insurer, query.to_string(), ts);
    let owner = upper.audit_owner;
    upper.ledger.append(&owner, request.clone().into())?;
    Ok(request)
}
