//! Network participants: vehicles, RSUs, authorities, maintainers and
//! insurers. Each binds a key pair to the state and actions that role has.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash, KeyPair, PublicKey};
use crate::ecu::{EcuError, EcuState};
use crate::protocol::{self, Challenge, ProtocolError, ReportEvent, UpperTier};
use crate::tx::{ChallengeResponse, Request, Update};

#[derive(Debug, Error)]
pub enum EntityError {
    #[error("{0} is not authorized")]
    Unauthorized(PublicKey),
    #[error("report signature does not verify")]
    BadReport,
    #[error(transparent)]
    Ecu(#[from] EcuError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// What a vehicle sends when challenged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Behavior {
    #[default]
    Honest,
    /// Answer every challenge with this previously captured response.
    Replay(ChallengeResponse),
}

#[derive(Debug, Clone)]
pub struct VehicleNode {
    pub id: usize,
    /// Log label, `v<id>` for registered vehicles.
    pub label: String,
    pub keys: KeyPair,
    pub ecu_state: EcuState,
    /// Firmware images by ECU id. Only their digests reach the protocol.
    pub firmware: Vec<Vec<u8>>,
    /// RSU ids in visiting order; encounters wrap around it.
    pub route: Vec<usize>,
    pub honest: bool,
    pub behavior: Behavior,
    pub last_response: Option<ChallengeResponse>,
}

impl VehicleNode {
    pub fn new(
        id: usize,
        label: String,
        keys: KeyPair,
        firmware: Vec<Vec<u8>>,
        route: Vec<usize>,
        ts: u64,
    ) -> Self {
        let digests: Vec<_> = firmware.iter().map(|f| hash(f)).collect();
        let ecu_state =
            EcuState::from_digests(&digests, ts).expect("vehicle needs at least one ECU");
        Self {
            id,
            label,
            keys,
            ecu_state,
            firmware,
            route,
            honest: true,
            behavior: Behavior::Honest,
            last_response: None,
        }
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public()
    }

    pub fn rsu_for(&self, encounter: usize) -> usize {
        self.route[encounter % self.route.len()]
    }

    pub fn respond(
        &mut self,
        challenge: &Challenge,
        ts: u64,
    ) -> Result<ChallengeResponse, ProtocolError> {
        let response = match &self.behavior {
            Behavior::Honest => {
                protocol::build_response(&self.keys, &self.ecu_state, challenge, ts)?
            }
            Behavior::Replay(captured) => captured.clone(),
        };
        self.last_response = Some(response.clone());
        Ok(response)
    }

    fn write_firmware(&mut self, ecu_id: usize, image: Vec<u8>, ts: u64) -> Result<(), EcuError> {
        self.ecu_state.apply_write(ecu_id, hash(&image), ts)?;
        self.firmware[ecu_id] = image;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RsuNode {
    pub id: usize,
    pub keys: KeyPair,
    /// Position on the road.
    pub slot: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuthorityRole {
    Transport,
    Legal,
}

#[derive(Debug, Clone)]
pub struct AuthorityNode {
    pub keys: KeyPair,
    pub role: AuthorityRole,
    revoked: BTreeSet<PublicKey>,
}

impl AuthorityNode {
    pub fn new(keys: KeyPair, role: AuthorityRole) -> Self {
        Self {
            keys,
            role,
            revoked: BTreeSet::new(),
        }
    }

    /// Accepts a signed report from one of `trusted_rsus` and revokes the
    /// reported vehicle. The revocation list only grows.
    pub fn receive_report(
        &mut self,
        report: &ReportEvent,
        trusted_rsus: &[PublicKey],
    ) -> Result<(), EntityError> {
        if !trusted_rsus.contains(&report.rsu_pk) {
            return Err(EntityError::Unauthorized(report.rsu_pk));
        }
        if !report.verify_signature() {
            return Err(EntityError::BadReport);
        }
        self.revoked.insert(report.vehicle_pk);
        Ok(())
    }

    pub fn is_revoked(&self, pk: &PublicKey) -> bool {
        self.revoked.contains(pk)
    }

    pub fn revocations(&self) -> &BTreeSet<PublicKey> {
        &self.revoked
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaintainerRole {
    Manufacturer,
    Technician,
}

#[derive(Debug, Clone)]
pub struct MaintainerNode {
    pub keys: KeyPair,
    pub role: MaintainerRole,
    pub authorized: bool,
}

impl MaintainerNode {
    pub fn role_name(&self) -> &'static str {
        match self.role {
            MaintainerRole::Manufacturer => "manufacturer",
            MaintainerRole::Technician => "technician",
        }
    }
}

#[derive(Debug, Clone)]
pub struct InsurerNode {
    pub keys: KeyPair,
    pub authorized: bool,
}

impl InsurerNode {
    pub fn submit(
        &self,
        upper: &mut UpperTier,
        query: &str,
        ts: u64,
    ) -> Result<Request, EntityError> {
        if !self.authorized {
            return Err(EntityError::Unauthorized(self.keys.public()));
        }
        Ok(protocol::submit_request(&self.keys, upper, query, ts)?)
    }
}

/// Flashes `firmware` onto one ECU and produces the signed Update that
/// records the new SS_ID.
pub fn perform_maintenance(
    maintainer: &MaintainerNode,
    vehicle: &mut VehicleNode,
    ecu_id: usize,
    firmware: Vec<u8>,
    ts: u64,
) -> Result<Update, EntityError> {
    if !maintainer.authorized {
        return Err(EntityError::Unauthorized(maintainer.keys.public()));
    }
    vehicle.write_firmware(ecu_id, firmware, ts)?;
    let record = *vehicle.ecu_state.get(ecu_id).expect("just written");
    let metadata = format!(
        "ecu={ecu_id};action=firmware-update;by={}",
        maintainer.role_name()
    );
    Ok(Update::signed(
        &maintainer.keys,
        vehicle.public(),
        vehicle.ecu_state.ssid(),
        vec![record],
        metadata,
        ts,
    ))
}

/// Writes `image` to an ECU with no Update transaction, as an attacker
/// with physical or remote access would.
pub fn tamper(
    vehicle: &mut VehicleNode,
    ecu_id: usize,
    image: Vec<u8>,
    ts: u64,
) -> Result<(), EcuError> {
    vehicle.write_firmware(ecu_id, image, ts)?;
    vehicle.honest = false;
    Ok(())
}
