//! End-to-end coverage of the beacon-mode pipeline through the bundled
//! demo: trilateration with an outlier beacon, required social proofs,
//! an elliptical fence, revisit supersession, slashing at the epoch
//! boundary and a verifiable export.

use std::path::PathBuf;

use witnessnet::consensus::Ledger;
use witnessnet::harness::scenario::load_scenario;
use witnessnet::harness::sim;

fn load() -> witnessnet::harness::LoadedScenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/beacons.scenario");
    load_scenario(&path).expect("bundled scenario loads")
}

#[test]
fn beacon_demo_replays_and_verifies() {
    let result = sim::run(&load(), None).expect("scenario runs");
    let report = &result.report;

    // Three first visits and three revisits, all accepted.
    assert_eq!(report.verdict_counts.get("accepted"), Some(&6));
    assert_eq!(
        report.verdict_counts.len(),
        1,
        "no rejections: {:?}",
        report.verdict_counts
    );

    // The drifted beacon is the excluded outlier on every pre-slash
    // claim and silent afterwards.
    let mut excluded_then = 0;
    let mut clean_after = 0;
    for line in result.ledger_export.lines().skip(2) {
        let block: serde_json::Value = serde_json::from_str(line).unwrap();
        for record in block["records"].as_array().unwrap() {
            assert_eq!(record["accepted"], serde_json::json!(true));
            let excluded = record["excluded_beacons"].as_array().unwrap();
            let height = block["height"].as_u64().unwrap();
            if height <= 300 {
                assert_eq!(excluded.len(), 1);
                assert_eq!(excluded[0], "anchor-drift");
                excluded_then += 1;
            } else {
                assert!(excluded.is_empty());
                clean_after += 1;
            }
        }
    }
    assert_eq!((excluded_then, clean_after), (3, 3));

    // One slash at the first epoch boundary: half the operator's stake.
    assert_eq!(report.slash_events.len(), 1);
    let slash = &report.slash_events[0];
    assert_eq!(slash.height, 300);
    assert_eq!(slash.validator, "anchor-op");
    assert_eq!(slash.beacon_ids, vec!["anchor-drift".to_string()]);
    assert_eq!(slash.burned, 100);

    // Revisits superseded the first answers: one live row per visitor.
    let table = &report.poi_tables["plaza"].questions["crowding"];
    assert_eq!(table.count, 3);
    assert!((table.mean.unwrap() - 11.0 / 3.0).abs() < 1e-9);

    // Both maps (localized and distributed) converge for all visitors.
    for map_id in ["crowding-live", "crowding-anywhere"] {
        let agents = &report.final_estimates[map_id];
        assert_eq!(agents.len(), 3, "{map_id} should cover all visitors");
        let truth = report.map_truths[map_id]["mean"];
        assert!((truth - 11.0 / 3.0).abs() < 1e-9);
        for (agent, fns) in agents {
            assert!((fns["mean"] - truth).abs() <= 1e-9, "{map_id}/{agent}");
        }
    }

    // The export replays from genesis, beacon ranges and all.
    assert!(report.balance_sheet.conserved);
    assert_eq!(Ledger::verify_export(&result.ledger_export).unwrap(), 760);
}

#[test]
fn beacon_demo_is_deterministic() {
    let a = sim::run(&load(), None).unwrap();
    let b = sim::run(&load(), None).unwrap();
    assert_eq!(a.ledger_export, b.ledger_export);
    assert_eq!(
        serde_json::to_string(&a.report).unwrap(),
        serde_json::to_string(&b.report).unwrap()
    );
}
