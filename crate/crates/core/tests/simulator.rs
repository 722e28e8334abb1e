use bferl::adversary::AttackKind;
use bferl::archive::Archive;
use bferl::ledger::{chain_links_verify, reconstruct_chain};
use bferl::netsim::{simulate, AttackPlan, EventLog, LogKind, SimConfig};
use bferl::protocol::Verdict;

fn attacked(kind: AttackKind, target: usize, round: usize) -> SimConfig {
    SimConfig {
        n_vehicles: 4,
        n_rounds: 4,
        seed: 11,
        attacks: vec![AttackPlan {
            kind,
            target,
            round,
            ecu: None,
        }],
        ..SimConfig::default()
    }
}

fn lines_for(log: &EventLog, subject: &str) -> Vec<(LogKind, Option<Verdict>)> {
    log.records
        .iter()
        .filter(|r| r.subject == subject)
        .map(|r| (r.kind, r.verdict))
        .collect()
}

#[test]
fn tampered_vehicle_is_reported_and_then_refused() {
    let (world, out) = simulate(attacked(AttackKind::FakeData, 2, 1)).unwrap();
    assert_eq!(
        lines_for(&out.log, "v2"),
        vec![
            (LogKind::Encounter, Some(Verdict::Valid)),
            (LogKind::Attack, None),
            (LogKind::Encounter, Some(Verdict::StateMismatch)),
            (LogKind::Report, Some(Verdict::StateMismatch)),
            (LogKind::Refused, None),
        ]
    );
    let pk = world.vehicles[2].public();
    assert!(world.authorities.iter().all(|a| a.is_revoked(&pk)));
    assert_eq!(out.metrics.revoked, 1);
    assert_eq!(out.metrics.refused, 1);
    // every other vehicle is untouched
    for v in ["v0", "v1", "v3"] {
        assert!(lines_for(&out.log, v)
            .iter()
            .all(|(_, verdict)| verdict.is_none_or(Verdict::is_valid)));
    }
}

#[test]
fn replay_is_stale() {
    let (world, out) = simulate(attacked(AttackKind::Replay, 0, 2)).unwrap();
    let verdicts: Vec<_> = out
        .log
        .encounters()
        .filter(|r| r.subject == "v0")
        .map(|r| r.verdict.unwrap())
        .collect();
    assert_eq!(
        verdicts,
        vec![Verdict::Valid, Verdict::Valid, Verdict::StaleTimestamp]
    );
    // the stale response was not recorded
    assert_eq!(
        world
            .challenge_records(&world.vehicles[0].public())
            .unwrap(),
        2
    );
}

#[test]
fn fabricated_identities_are_unknown() {
    let (world, out) = simulate(attacked(AttackKind::Sybil, 1, 2)).unwrap();
    for k in 0..3 {
        let label = format!("v1~sybil{k}");
        assert_eq!(
            lines_for(&out.log, &label),
            vec![
                (LogKind::Encounter, Some(Verdict::UnknownVehicle)),
                (LogKind::Report, Some(Verdict::UnknownVehicle)),
            ]
        );
        assert!(world
            .lower
            .lookup(&world.vehicle_by_label(&label).unwrap().public())
            .is_none());
    }
    // the real v1 is unaffected
    assert!(lines_for(&out.log, "v1")
        .iter()
        .all(|(_, v)| v.is_none_or(Verdict::is_valid)));
}

#[test]
fn latency_keeps_honest_runs_valid() {
    let cfg = SimConfig {
        latency_ms: 50,
        hop_ms: 400,
        n_rounds: 5,
        ..SimConfig::default()
    };
    let (_, out) = simulate(cfg).unwrap();
    assert_eq!(out.metrics.encounters, 50);
    assert!(out.log.verdicts().all(Verdict::is_valid));
}

#[test]
fn event_log_text_roundtrips() {
    let (_, out) = simulate(attacked(AttackKind::Masquerade, 3, 1)).unwrap();
    let text = out.log.to_text();
    assert_eq!(EventLog::parse(&text).unwrap(), out.log);
    let line = text.lines().find(|l| l.contains("v3~masq")).unwrap();
    assert_eq!(line, "2000\tencounter\tv3~masq\tUnknownVehicle");
}

#[test]
fn archive_reconstructs_every_vehicle() {
    let (world, _) = simulate(SimConfig {
        n_rounds: 6,
        ..SimConfig::default()
    })
    .unwrap();
    for block in world.lower.blocks() {
        assert_eq!(block.len(), 2);
        let addr = &block.header().external_address;
        let archived: Vec<_> = world
            .archive
            .read(addr)
            .unwrap()
            .into_iter()
            .map(|(_, e)| e)
            .collect();
        assert_eq!(archived.len(), 5);
        assert!(chain_links_verify(block.header(), &archived));
        let full = reconstruct_chain(block.header(), &archived, block.entries());
        assert_eq!(full.len(), 7);
        assert!(chain_links_verify(block.header(), &full));
        assert_eq!(world.archive.relinks(addr).unwrap().len(), 5);
    }
}
