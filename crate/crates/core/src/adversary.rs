//! Scripted attacks and the verdicts each one should provoke.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::crypto::{derive_seed, generate_keypair};
use crate::ecu::EcuError;
use crate::entities::{tamper, Behavior, VehicleNode};
use crate::netsim::{EventLog, EventPayload, SchedulePastError, SimEvent, World};
use crate::protocol::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttackKind {
    FakeData,
    CodeInjection,
    Sybil,
    Masquerade,
    EcuReversal,
    Replay,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::FakeData,
        AttackKind::CodeInjection,
        AttackKind::Sybil,
        AttackKind::Masquerade,
        AttackKind::EcuReversal,
        AttackKind::Replay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::FakeData => "FakeData",
            AttackKind::CodeInjection => "CodeInjection",
            AttackKind::Sybil => "Sybil",
            AttackKind::Masquerade => "Masquerade",
            AttackKind::EcuReversal => "EcuReversal",
            AttackKind::Replay => "Replay",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown attack kind {0:?}")]
pub struct UnknownAttack(pub String);

impl FromStr for AttackKind {
    type Err = UnknownAttack;

    /// Case-insensitive; `_` and `-` are ignored, so `ecu_reversal`,
    /// `ecu-reversal` and `EcuReversal` all parse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-'))
            .map(|c| c.to_ascii_lowercase())
            .collect();
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str().to_ascii_lowercase() == norm)
            .ok_or_else(|| UnknownAttack(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("no vehicle {0}")]
    NoTarget(usize),
    #[error("replay target has not answered any challenge yet")]
    NothingCaptured,
    #[error(transparent)]
    Ecu(#[from] EcuError),
    #[error(transparent)]
    Schedule(#[from] SchedulePastError),
}

/// What an injection changed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Injection {
    /// ECUs written by firmware attacks.
    pub ecus: Vec<usize>,
    /// Indices of fabricated vehicles in `world.vehicles`.
    pub spawned: Vec<usize>,
}

const SYBIL_IDENTITIES: usize = 3;

/// Applies `kind` to vehicle `target` at `ts`, ahead of its `round`-th
/// encounter. Firmware attacks hit `ecu`, or one drawn from the world's
/// attack stream when `None`. EcuReversal reverts `config.reversal_ecus`
/// distinct ECUs, `ecu` among them when given.
pub fn inject(
    world: &mut World,
    kind: AttackKind,
    target: usize,
    round: usize,
    ecu: Option<usize>,
    ts: u64,
) -> Result<Injection, AdversaryError> {
    if target >= world.vehicles.len() {
        return Err(AdversaryError::NoTarget(target));
    }
    let n_ecus = world.vehicles[target].ecu_state.len();
    let pick = |world: &mut World| ecu.unwrap_or_else(|| world.attack_rng.gen_range(0..n_ecus));
    let mut out = Injection::default();
    match kind {
        AttackKind::FakeData | AttackKind::CodeInjection => {
            let e = pick(world);
            let image = format!(
                "{}@{ts}",
                if kind == AttackKind::FakeData {
                    "spoofed-sensor"
                } else {
                    "implant"
                }
            );
            tamper(&mut world.vehicles[target], e, image.into_bytes(), ts)?;
            out.ecus.push(e);
        }
        AttackKind::EcuReversal => {
            let width = world.config.reversal_ecus.clamp(1, n_ecus);
            let mut chosen = vec![pick(world)];
            while chosen.len() < width {
                let e = world.attack_rng.gen_range(0..n_ecus);
                if !chosen.contains(&e) {
                    chosen.push(e);
                }
            }
            let v = &mut world.vehicles[target];
            for &e in &chosen {
                let original = v.firmware[e].clone();
                tamper(v, e, format!("malicious@{ts}").into_bytes(), ts)?;
                tamper(v, e, original, ts + 1)?;
            }
            out.ecus = chosen;
        }
        AttackKind::Replay => {
            let v = &mut world.vehicles[target];
            let captured = v
                .last_response
                .clone()
                .ok_or(AdversaryError::NothingCaptured)?;
            v.behavior = Behavior::Replay(captured);
            v.honest = false;
        }
        AttackKind::Sybil | AttackKind::Masquerade => {
            let count = if kind == AttackKind::Sybil {
                SYBIL_IDENTITIES
            } else {
                1
            };
            let arrival = world.arrival_ts(round);
            for k in 0..count {
                let idx = world.vehicles.len();
                let src = &world.vehicles[target];
                let (label, firmware) = if kind == AttackKind::Sybil {
                    let fw = (0..n_ecus)
                        .map(|i| format!("sybil{k}/ecu{i}").into_bytes())
                        .collect();
                    (format!("{}~sybil{k}", src.label), fw)
                } else {
                    // a convincing clone of the target's software under a
                    // key the ledger has never seen
                    (format!("{}~masq", src.label), src.firmware.clone())
                };
                let keys = generate_keypair(derive_seed(
                    &format!("adversary/{kind}"),
                    world.config.seed,
                    (target * 16 + k) as u64,
                ));
                let mut fake = VehicleNode::new(idx, label, keys, firmware, src.route.clone(), ts);
                fake.honest = false;
                if kind == AttackKind::Masquerade {
                    fake.ecu_state = src.ecu_state.clone();
                }
                world.vehicles.push(fake);
                world.schedule(SimEvent::new(
                    arrival,
                    idx,
                    EventPayload::Arrival { encounter: round },
                ))?;
                out.spawned.push(idx);
            }
        }
    }
    Ok(out)
}

/// Verdicts that count as detecting `kind`. For EcuReversal this only
/// holds at an encounter whose subset samples the reverted ECU.
pub fn expected_verdict(kind: AttackKind) -> BTreeSet<Verdict> {
    let v = match kind {
        AttackKind::FakeData | AttackKind::CodeInjection => Verdict::StateMismatch,
        AttackKind::Sybil | AttackKind::Masquerade => Verdict::UnknownVehicle,
        AttackKind::EcuReversal => Verdict::SubsetMismatch,
        AttackKind::Replay => Verdict::StaleTimestamp,
    };
    BTreeSet::from([v])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionOracle {
    /// `None` checks an attack-free run: no non-Valid verdicts at all.
    pub kind: Option<AttackKind>,
    pub expected: BTreeSet<Verdict>,
    /// Latest encounter after the trigger (1 = the next one) by which a
    /// detection must occur.
    pub bound: usize,
}

impl DetectionOracle {
    pub fn new(kind: AttackKind, bound: usize) -> Self {
        Self {
            kind: Some(kind),
            expected: expected_verdict(kind),
            bound,
        }
    }

    pub fn honest() -> Self {
        Self {
            kind: None,
            expected: BTreeSet::new(),
            bound: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    pub passed: bool,
    /// 1-based index of the first detecting encounter after the trigger.
    pub first_detection: Option<usize>,
}

/// Checks the log for encounters concerning `target` (or identities
/// fabricated against it) after `trigger_ts`. Encounters sharing a timestamp
/// share an index, so a Sybil swarm arriving alongside its target counts as
/// one encounter.
pub fn assert_detected(
    log: &EventLog,
    oracle: &DetectionOracle,
    target: &str,
    trigger_ts: u64,
) -> Detection {
    let relevant = log
        .encounters()
        .filter(|r| r.ts > trigger_ts && r.concerns(target));
    if oracle.kind.is_none() {
        let clean = relevant.filter_map(|r| r.verdict).all(Verdict::is_valid);
        return Detection {
            passed: clean,
            first_detection: None,
        };
    }
    let mut index = 0;
    let mut last_ts = None;
    for r in relevant {
        if last_ts != Some(r.ts) {
            index += 1;
            last_ts = Some(r.ts);
        }
        if r.verdict.is_some_and(|v| oracle.expected.contains(&v)) {
            return Detection {
                passed: index <= oracle.bound,
                first_detection: Some(index),
            };
        }
    }
    Detection {
        passed: false,
        first_detection: None,
    }
}
