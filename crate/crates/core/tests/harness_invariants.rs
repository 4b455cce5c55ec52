//! Harness-level invariants over the bundled scenarios: section-order
//! invariance, scripted-response fidelity and the report text contract.

use std::path::PathBuf;

use witnessnet::harness::report::Format;
use witnessnet::harness::scenario::load_scenario;
use witnessnet::harness::{report_render, sim};

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn permuting_section_order_never_changes_the_report() {
    let path = scenario_path("testnet.scenario");
    let text = std::fs::read_to_string(&path).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let obj = value.as_object().unwrap();

    // Re-emit the document with top-level sections in reverse order.
    let mut keys: Vec<&String> = obj.keys().collect();
    keys.reverse();
    let mut permuted = String::from("{");
    for (i, key) in keys.iter().enumerate() {
        if i > 0 {
            permuted.push(',');
        }
        permuted.push_str(&serde_json::to_string(key).unwrap());
        permuted.push(':');
        permuted.push_str(&serde_json::to_string(&obj[*key]).unwrap());
    }
    permuted.push('}');

    let dir = std::env::temp_dir().join(format!("witnessnet-permuted-{}", std::process::id()));
    std::fs::create_dir_all(dir.join("traces")).unwrap();
    std::fs::copy(
        scenario_path("traces/testnet.csv"),
        dir.join("traces/testnet.csv"),
    )
    .unwrap();
    let permuted_path = dir.join("permuted.scenario");
    std::fs::write(&permuted_path, permuted).unwrap();

    let original = sim::run(&load_scenario(&path).unwrap(), None).unwrap();
    let reordered = sim::run(&load_scenario(&permuted_path).unwrap(), None).unwrap();
    assert_eq!(original.ledger_export, reordered.ledger_export);
    assert_eq!(
        report_render(&original.report, Format::Text),
        report_render(&reordered.report, Format::Text)
    );
    assert_eq!(
        report_render(&original.report, Format::JsonLines),
        report_render(&reordered.report, Format::JsonLines)
    );
}

#[test]
fn every_reported_answer_matches_its_script() {
    let loaded = load_scenario(&scenario_path("testnet.scenario")).unwrap();
    let result = sim::run(&loaded, None).unwrap();
    let mut checked = 0usize;
    for (poi_id, table) in &result.report.poi_tables {
        for (question_id, summary) in &table.questions {
            for (participant, rendered) in &summary.rows {
                let scripted = loaded
                    .scenario
                    .participants
                    .iter()
                    .find(|p| p.name == *participant)
                    .and_then(|p| p.answers.get(poi_id))
                    .and_then(|a| a.get(question_id))
                    .expect("every reported answer was scripted");
                assert_eq!(rendered, &scripted.to_string(), "{participant} at {poi_id}");
                checked += 1;
            }
        }
    }
    // Six participants, two pois each.
    assert_eq!(checked, 12);
}

#[test]
fn interactive_branching_through_the_full_pipeline() {
    use witnessnet::geo::{from_tangent_plane, GeoPoint};
    use witnessnet::harness::scenario::{load_inline, Scenario};

    let origin = GeoPoint {
        lat: 47.0,
        lon: 8.0,
    };
    let at = |x: f64| from_tangent_plane(origin, x, 0.0);
    // Walk from -200 m past three fences at 0 / 400 / 800 m, 1.4 m/s,
    // sampled every 2 s.
    let mut samples: Vec<(f64, f64, f64)> = Vec::new();
    let mut t = 0.0f64;
    while t <= 800.0 {
        let x = (-200.0 + 1.4 * t).min(800.0);
        let p = at(x);
        samples.push((t, p.lat, p.lon));
        t += 2.0;
    }
    let poi = |id: &str, x: f64| {
        serde_json::json!({
            "id": id,
            "name": id.to_uppercase(),
            "fence": {"circle": {"center": {"lat": at(x).lat, "lon": at(x).lon},
                                  "radius_m": 50.0}},
            "questions": [{
                "id": "pick",
                "kind": "radio",
                "prompt": "choose",
                "options": [{"label": "left", "value": 1, "reward": 1},
                             {"label": "right", "value": 2, "reward": 1}]
            }]
        })
    };
    let scenario: Scenario = serde_json::from_value(serde_json::json!({
        "schema": 1,
        "name": "branching",
        "seed": 5,
        "duration_s": 800.0,
        "pois": [poi("a", 0.0), poi("b", 400.0), poi("c", 800.0)],
        "validators": [{"name": "v0", "deposit": 110, "role": "full"}],
        "participants": [{"name": "walker", "balance": 10,
                           "answers": {"a": {"pick": 1}, "b": {"pick": 2}, "c": {"pick": 1}}}],
        "assets": [{"id": "quest", "modality": "interactive", "pois": ["a", "b", "c"],
                     "branch": {"a:1": "c", "a:2": "b"}}],
        "assignments": [{"id": "go", "asset": "quest", "task": "t",
                          "filter": {"fraction": 1.0}}],
        "traces": {"inline": [{"participant": "walker", "samples": samples}]}
    }))
    .unwrap();
    let result = sim::run(&load_inline(scenario).unwrap(), None).unwrap();
    // Answering 1 at poi a branches straight to c: b never triggers even
    // though the walk crosses its fence, and the missing branch after c
    // ends the asset.
    assert_eq!(result.report.verdict_counts.get("accepted"), Some(&2));
    assert_eq!(result.report.poi_tables["a"].questions["pick"].count, 1);
    assert_eq!(result.report.poi_tables["b"].questions["pick"].count, 0);
    assert_eq!(result.report.poi_tables["c"].questions["pick"].count, 1);
}

#[test]
fn gossip_converges_despite_message_drops() {
    let mut loaded = load_scenario(&scenario_path("testnet.scenario")).unwrap();
    loaded.scenario.network.drop_probability = 0.3;
    let result = sim::run(&loaded, None).unwrap();
    assert!(result.report.dropped_messages > 0);
    for (map_id, agents) in &result.report.final_estimates {
        let truth = result.report.map_truths[map_id]["mean"];
        for (agent, fns) in agents {
            assert!(
                (fns["mean"] - truth).abs() <= 1e-9,
                "map {map_id} agent {agent} diverged under drops"
            );
        }
    }
}

#[test]
fn text_reports_carry_the_summary_rows() {
    let testnet = sim::run(
        &load_scenario(&scenario_path("testnet.scenario")).unwrap(),
        None,
    )
    .unwrap();
    let text = String::from_utf8(report_render(&testnet.report, Format::Text)).unwrap();
    assert!(
        text.contains("mean 3.83"),
        "testnet text lists the first poi mean"
    );
    assert!(
        text.contains("mean 4.17"),
        "testnet text lists the second poi mean"
    );

    let cycling = sim::run(
        &load_scenario(&scenario_path("cycling.scenario")).unwrap(),
        None,
    )
    .unwrap();
    let text = String::from_utf8(report_render(&cycling.report, Format::Text)).unwrap();
    for needle in ["0.94", "0.85", "1.0", "0.949"] {
        assert!(
            text.contains(needle),
            "cycling text lists correlation {needle}"
        );
    }
    // The estimate time series lands in the csv rendering.
    let csv = String::from_utf8(report_render(&testnet.report, Format::Csv)).unwrap();
    assert!(csv.starts_with("time_ms,agent,map,function,value"));
    assert!(csv.lines().count() > 100);
}
