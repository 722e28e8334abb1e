use bferl::archive::{Archive, FileArchive, MemoryArchive};
use bferl::crypto::{derive_seed, generate_keypair};
use bferl::ecu::EcuState;
use bferl::ledger::{reconstruct_chain, Ledger};
use bferl::protocol;
use bferl::tx::{ChallengeRecord, ChallengeResponse};

/// Drives one block through `n` pruned appends into both archive kinds.
fn run(n: u64, file: &mut FileArchive, mem: &mut MemoryArchive) -> (Ledger, Ledger) {
    let maker = generate_keypair(derive_seed("maker", 4, 0));
    let rsu = generate_keypair(derive_seed("rsu", 4, 0));
    let v = generate_keypair(derive_seed("vehicle", 4, 0));
    let digests: Vec<_> = (0..5u8).map(|i| bferl::crypto::hash(&[i])).collect();
    let state = EcuState::from_digests(&digests, 0).unwrap();
    let g = protocol::make_genesis(&maker, v.public(), &state, 0);
    let mut a = Ledger::new();
    a.create_block(v.public(), g, 0, "cloud/fleet:7").unwrap();
    let mut b = a.clone();
    for t in 1..=n {
        let subset = state.subset_report(&[(t % 5) as usize]).unwrap();
        let rec = ChallengeRecord::signed(
            &rsu,
            ChallengeResponse::signed(&v, state.ssid(), subset, t * 10),
        );
        a.append_and_prune(&v.public(), rec.clone().into(), file)
            .unwrap();
        b.append_and_prune(&v.public(), rec.into(), mem).unwrap();
    }
    (a, b)
}

#[test]
fn file_and_memory_archives_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = FileArchive::new(dir.path()).unwrap();
    let mut mem = MemoryArchive::new();
    let (a, b) = run(6, &mut file, &mut mem);
    assert_eq!(a.to_bytes(), b.to_bytes());

    let addr = "cloud/fleet:7";
    let path = file.path_for(addr);
    assert_eq!(path.file_name().unwrap(), "cloud_fleet_7.rec");
    assert_eq!(std::fs::read(&path).unwrap(), mem.raw(addr).unwrap());
    assert_eq!(file.read(addr).unwrap(), mem.read(addr).unwrap());
    assert_eq!(file.relinks(addr).unwrap(), mem.relinks(addr).unwrap());
    assert_eq!(file.count(addr).unwrap(), 5);

    let relink_log = std::fs::read_to_string(path.with_extension("relink")).unwrap();
    assert_eq!(relink_log.lines().count(), 5);
    assert!(relink_log.lines().all(|l| l.split('\t').count() == 3));
}

#[test]
fn reopened_archive_reconstructs() {
    let dir = tempfile::tempdir().unwrap();
    let (ledger, _) = {
        let mut file = FileArchive::new(dir.path()).unwrap();
        run(4, &mut file, &mut MemoryArchive::new())
    };
    let reopened = FileArchive::new(dir.path()).unwrap();
    let block = ledger.blocks().next().unwrap();
    let archived: Vec<_> = reopened
        .read("cloud/fleet:7")
        .unwrap()
        .into_iter()
        .map(|(_, e)| e)
        .collect();
    let full = reconstruct_chain(block.header(), &archived, block.entries());
    assert_eq!(full.len(), 5);
    assert_eq!(&full[..archived.len()], &archived[..]);
    assert_eq!(full[3].payload, block.entries()[0].payload);
}

#[test]
fn truncated_file_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = FileArchive::new(dir.path()).unwrap();
    run(3, &mut file, &mut MemoryArchive::new());
    let path = file.path_for("cloud/fleet:7");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(file.read("cloud/fleet:7").is_err());
}
