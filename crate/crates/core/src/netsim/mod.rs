//! Deterministic discrete-event simulation of vehicles driving past a line
//! of RSUs.
//!
//! RSUs sit at integer slots on a one-dimensional road. Vehicle `v` visits
//! them in order starting at RSU `v mod n_rsus`, wrapping around, and its
//! `e`-th encounter happens at `(e + 1) * hop_ms` of simulated time. Every
//! encounter is one challenge-response round against the shared lower-tier
//! ledger. Protocol timestamps are simulated time, never wall-clock.
//!
//! All randomness comes from ChaCha streams seeded by the config, and the
//! event queue breaks ties by `(kind, subject)`, so a config replays to the
//! same event log and the same ledger bytes.

pub mod config;
pub mod log;
pub mod queue;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::{self, AdversaryError};
use crate::archive::{Archive, ArchiveError, MemoryArchive};
use crate::crypto::{derive_seed, generate_keypair, PublicKey};
use crate::entities::{
    perform_maintenance, AuthorityNode, AuthorityRole, EntityError, InsurerNode, MaintainerNode,
    MaintainerRole, RsuNode, VehicleNode,
};
use crate::ledger::Ledger;
use crate::protocol::{self, ProtocolError, UpperTier, Verdict};
use crate::tx::Transaction;

pub use config::{AttackPlan, ConfigError, MaintenancePlan, SimConfig};
pub use log::{EventLog, LogKind, LogRecord};
pub use queue::{EventKind, EventPayload, EventQueue, SchedulePastError, SimClock, SimEvent};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Entity(#[from] EntityError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Schedule(#[from] SchedulePastError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

/// Run counters. Timings are not collected here; see the bench module.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SimMetrics {
    pub vehicles: usize,
    pub rsus: usize,
    pub encounters: usize,
    pub verdicts: BTreeMap<Verdict, usize>,
    pub reports: usize,
    pub revoked: usize,
    pub refused: usize,
    pub maintenance_applied: usize,
    pub attacks_injected: usize,
    pub archived_entries: u64,
    pub lower_ledger_bytes: usize,
    pub upper_ledger_bytes: usize,
    pub ledgers_valid: bool,
    pub final_ts: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: SimMetrics,
    pub log: EventLog,
}

pub struct World {
    pub config: SimConfig,
    /// The fleet first, then any identities fabricated by attacks.
    pub vehicles: Vec<VehicleNode>,
    pub rsus: Vec<RsuNode>,
    pub authorities: Vec<AuthorityNode>,
    pub manufacturer: MaintainerNode,
    pub technician: MaintainerNode,
    pub insurer: InsurerNode,
    pub upper: UpperTier,
    pub lower: Ledger,
    pub archive: MemoryArchive,
    pub log: EventLog,
    pub(crate) queue: EventQueue,
    challenge_rng: ChaCha8Rng,
    pub(crate) attack_rng: ChaCha8Rng,
    metrics: SimMetrics,
}

impl World {
    pub fn now(&self) -> u64 {
        self.queue.now()
    }

    /// Simulated time of a vehicle's `encounter`-th RSU visit.
    pub fn arrival_ts(&self, encounter: usize) -> u64 {
        (encounter as u64 + 1) * self.config.hop_ms
    }

    pub fn vehicle_by_label(&self, label: &str) -> Option<&VehicleNode> {
        self.vehicles.iter().find(|v| v.label == label)
    }

    pub fn is_revoked(&self, pk: &PublicKey) -> bool {
        self.authorities.iter().any(|a| a.is_revoked(pk))
    }

    fn rsu_keys(&self) -> Vec<PublicKey> {
        self.rsus.iter().map(|r| r.keys.public()).collect()
    }

    pub(crate) fn schedule(&mut self, event: SimEvent) -> Result<(), SchedulePastError> {
        self.queue.schedule(event)
    }

    fn log(
        &mut self,
        ts: u64,
        kind: LogKind,
        subject: usize,
        verdict: Option<Verdict>,
        detail: Option<String>,
    ) {
        self.log.push(LogRecord {
            ts,
            kind,
            subject: self.vehicles[subject].label.clone(),
            verdict,
            detail,
        });
    }

    /// Number of challenge records for `pk` still in its block plus those
    /// already archived.
    pub fn challenge_records(&self, pk: &PublicKey) -> Result<usize, ArchiveError> {
        let Some(block) = self.lower.lookup(pk) else {
            return Ok(0);
        };
        let is_record = |t: &Transaction| matches!(t, Transaction::ChallengeRecord(_));
        let retained = block
            .entries()
            .iter()
            .filter(|e| is_record(&e.payload))
            .count();
        let archived = self
            .archive
            .read(&block.header().external_address)?
            .iter()
            .filter(|(_, e)| is_record(&e.payload))
            .count();
        Ok(retained + archived)
    }
}

/// Creates every node, registers each vehicle through the upper tier and
/// schedules the first encounters plus all configured maintenance and
/// attacks.
pub fn build_world(config: SimConfig) -> Result<World, SimError> {
    config.validate()?;
    let seed = config.seed;
    let key = |label: &str, i: usize| generate_keypair(derive_seed(label, seed, i as u64));

    let authorities = vec![
        AuthorityNode::new(key("authority/transport", 0), AuthorityRole::Transport),
        AuthorityNode::new(key("authority/legal", 0), AuthorityRole::Legal),
    ];
    let mut upper = UpperTier::new(authorities.iter().map(|a| a.keys.clone()).collect(), 0);
    let manufacturer = MaintainerNode {
        keys: key("maintainer/manufacturer", 0),
        role: MaintainerRole::Manufacturer,
        authorized: true,
    };
    let technician = MaintainerNode {
        keys: key("maintainer/technician", 0),
        role: MaintainerRole::Technician,
        authorized: true,
    };
    let insurer = InsurerNode {
        keys: key("insurer", 0),
        authorized: true,
    };
    upper
        .authorized_maintainers
        .insert(manufacturer.keys.public());
    upper
        .authorized_maintainers
        .insert(technician.keys.public());
    upper.authorized_insurers.insert(insurer.keys.public());

    let rsus: Vec<_> = (0..config.n_rsus)
        .map(|i| RsuNode {
            id: i,
            keys: key("rsu", i),
            slot: i as u64,
        })
        .collect();

    let mut lower = Ledger::new();
    let mut vehicles = Vec::with_capacity(config.n_vehicles);
    for v in 0..config.n_vehicles {
        let firmware = (0..config.ecus_per_vehicle)
            .map(|e| format!("seed{seed}/v{v}/ecu{e}/fw-1.0").into_bytes())
            .collect();
        let route = (0..config.n_rsus)
            .map(|k| (v + k) % config.n_rsus)
            .collect();
        let node = VehicleNode::new(v, format!("v{v}"), key("vehicle", v), firmware, route, 0);
        let genesis = protocol::make_genesis(&manufacturer.keys, node.public(), &node.ecu_state, 0);
        protocol::initialize_vehicle(&mut upper, &mut lower, genesis, 0, &format!("cloud/v{v}"))?;
        vehicles.push(node);
    }

    let mut world = World {
        challenge_rng: ChaCha8Rng::seed_from_u64(seed),
        attack_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a77a_c4ed_0000),
        metrics: SimMetrics {
            vehicles: config.n_vehicles,
            rsus: config.n_rsus,
            ..SimMetrics::default()
        },
        config,
        vehicles,
        rsus,
        authorities,
        manufacturer,
        technician,
        insurer,
        upper,
        lower,
        archive: MemoryArchive::new(),
        log: EventLog::default(),
        queue: EventQueue::new(),
    };

    let hop = world.config.hop_ms;
    for v in 0..world.config.n_vehicles {
        world.schedule(SimEvent::new(
            world.arrival_ts(0),
            v,
            EventPayload::Arrival { encounter: 0 },
        ))?;
    }
    for m in world.config.maintenance.clone() {
        let ts = world.arrival_ts(m.round) - hop / 2;
        world.schedule(SimEvent::new(
            ts,
            m.vehicle,
            EventPayload::MaintenanceVisit { ecu: m.ecu },
        ))?;
    }
    for a in world.config.attacks.clone() {
        let ts = world.arrival_ts(a.round) - hop / 4;
        let payload = EventPayload::AttackTrigger {
            kind: a.kind,
            round: a.round,
            ecu: a.ecu,
        };
        world.schedule(SimEvent::new(ts, a.target, payload))?;
    }
    Ok(world)
}

fn on_arrival(world: &mut World, subject: usize, encounter: usize) -> Result<(), SimError> {
    let now = world.now();
    let lat = world.config.latency_ms;
    let pk = world.vehicles[subject].public();
    if world.is_revoked(&pk) {
        world.metrics.refused += 1;
        world.log(now, LogKind::Refused, subject, None, None);
        return Ok(());
    }

    let rsu_id = world.vehicles[subject].rsu_for(encounter);
    // a registered vehicle's ECU count comes from its record; anything else
    // gets challenged on the count it announces
    let ecu_count = world
        .lower
        .lookup(&pk)
        .map(|b| b.view().registry.len())
        .filter(|&n| n > 0)
        .unwrap_or(world.vehicles[subject].ecu_state.len());
    let rsu_keys = world.rsus[rsu_id].keys.clone();
    let size = world.config.subset_size;
    let challenge = match world.config.probe_ecu {
        Some(p) if p < ecu_count => protocol::issue_challenge_including(
            &rsu_keys,
            pk,
            ecu_count,
            size,
            p,
            &mut world.challenge_rng,
            now,
        )?,
        _ => protocol::issue_challenge(
            &rsu_keys,
            pk,
            ecu_count,
            size,
            &mut world.challenge_rng,
            now,
        )?,
    };
    let response = world.vehicles[subject].respond(&challenge, now + lat)?;
    let verdict = protocol::verify_response(&world.lower, &challenge, &response);

    world.metrics.encounters += 1;
    *world.metrics.verdicts.entry(verdict).or_default() += 1;
    world.log(now, LogKind::Encounter, subject, Some(verdict), None);

    if verdict.is_valid() {
        protocol::record_response(&rsu_keys, &mut world.lower, response, &mut world.archive)?;
    } else {
        let report = protocol::report_malicious(&rsu_keys, pk, verdict, now + 2 * lat)?;
        world.schedule(SimEvent::new(
            now + 3 * lat,
            subject,
            EventPayload::Report(Box::new(report)),
        ))?;
    }
    // a reported vehicle keeps driving; its next RSU refuses it once the
    // revocation has landed
    let next = encounter + 1;
    if subject < world.config.n_vehicles && next < world.config.n_rounds {
        let ts = world.arrival_ts(next);
        world.schedule(SimEvent::new(
            ts,
            subject,
            EventPayload::Arrival { encounter: next },
        ))?;
    }
    Ok(())
}

fn on_report(
    world: &mut World,
    subject: usize,
    report: &protocol::ReportEvent,
) -> Result<(), SimError> {
    let trusted = world.rsu_keys();
    for authority in &mut world.authorities {
        authority.receive_report(report, &trusted)?;
    }
    world.metrics.reports += 1;
    let now = world.now();
    world.log(now, LogKind::Report, subject, Some(report.verdict), None);
    Ok(())
}

fn on_maintenance(world: &mut World, subject: usize, ecu: usize) -> Result<(), SimError> {
    let now = world.now();
    let image = format!("seed{}/v{subject}/ecu{ecu}/maint@{now}", world.config.seed).into_bytes();
    let update = perform_maintenance(
        &world.technician,
        &mut world.vehicles[subject],
        ecu,
        image,
        now,
    )?;
    protocol::apply_upper_update(&mut world.upper, &mut world.lower, update)?;
    world.metrics.maintenance_applied += 1;
    world.log(
        now,
        LogKind::Maintenance,
        subject,
        None,
        Some(format!("ecu{ecu}")),
    );
    Ok(())
}

/// Processes every scheduled event in order and returns the run's counters
/// and log.
pub fn run(world: &mut World) -> Result<RunOutput, SimError> {
    while let Some(event) = world.queue.pop() {
        let subject = event.subject;
        match event.payload {
            EventPayload::Arrival { encounter } => on_arrival(world, subject, encounter)?,
            EventPayload::Report(report) => on_report(world, subject, &report)?,
            EventPayload::MaintenanceVisit { ecu } => on_maintenance(world, subject, ecu)?,
            EventPayload::AttackTrigger { kind, round, ecu } => {
                let now = world.now();
                let detail = match adversary::inject(world, kind, subject, round, ecu, now) {
                    Ok(_) => {
                        world.metrics.attacks_injected += 1;
                        kind.to_string()
                    }
                    Err(AdversaryError::NothingCaptured) => format!("{kind}:skipped"),
                    Err(e) => return Err(e.into()),
                };
                world.log(now, LogKind::Attack, subject, None, Some(detail));
            }
        }
    }
    let m = &mut world.metrics;
    m.final_ts = world.queue.now();
    m.revoked = world.authorities[0].revocations().len();
    m.archived_entries = world.archive.total_entries();
    m.lower_ledger_bytes = world.lower.serialized_size();
    m.upper_ledger_bytes = world.upper.ledger.serialized_size();
    m.ledgers_valid = world.lower.validate() && world.upper.ledger.validate();
    Ok(RunOutput {
        metrics: world.metrics.clone(),
        log: world.log.clone(),
    })
}

/// Builds and runs a world in one step.
pub fn simulate(config: SimConfig) -> Result<(World, RunOutput), SimError> {
    let mut world = build_world(config)?;
    let out = run(&mut world)?;
    Ok((world, out))
}
