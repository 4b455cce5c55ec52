//! Regenerates the bundled scenarios and their trace CSVs.
//!
//! Usage: cargo run --example gen_scenarios [output-dir]
//!
//! Traces are synthesized as straight-line movements between waypoints
//! at constant speed, sampled every 2 s, with coordinates written at six
//! fractional digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use witnessnet::geo::{haversine_distance, GeoPoint};

const SAMPLE_INTERVAL_S: f64 = 2.0;

struct Walk {
    participant: String,
    /// (waypoint, dwell seconds after arriving).
    legs: Vec<(GeoPoint, f64)>,
    speed_mps: f64,
    start_s: f64,
}

fn synthesize(walks: &[Walk], duration_s: f64) -> String {
    let mut out = String::from("participant,timestamp_s,lat,lon\n");
    for walk in walks {
        let mut samples: Vec<(f64, GeoPoint)> = Vec::new();
        let mut t = 0.0;
        let mut here = walk.legs[0].0;
        samples.push((t, here));
        t += walk.legs[0].1;
        for (target, dwell) in walk.legs.iter().skip(1) {
            let distance = haversine_distance(here, *target);
            let travel = distance / walk.speed_mps;
            samples.push((t + travel, *target));
            here = *target;
            t += travel + dwell;
        }
        // Hold the final position through the end of the scenario.
        let horizon = duration_s - walk.start_s;
        if samples.last().map(|(st, _)| *st < horizon).unwrap_or(false) {
            samples.push((horizon, here));
        }
        // Resample on a fixed cadence with linear interpolation.
        let mut clock = 0.0;
        while clock <= horizon {
            let p = interpolate(&samples, clock);
            writeln!(
                out,
                "{},{:.1},{:.6},{:.6}",
                walk.participant,
                walk.start_s + clock,
                p.lat,
                p.lon
            )
            .unwrap();
            clock += SAMPLE_INTERVAL_S;
        }
        if clock - SAMPLE_INTERVAL_S < horizon {
            let p = interpolate(&samples, horizon);
            writeln!(
                out,
                "{},{:.1},{:.6},{:.6}",
                walk.participant,
                walk.start_s + horizon,
                p.lat,
                p.lon
            )
            .unwrap();
        }
    }
    out
}

fn interpolate(samples: &[(f64, GeoPoint)], t: f64) -> GeoPoint {
    if t <= samples[0].0 {
        return samples[0].1;
    }
    for pair in samples.windows(2) {
        let (t0, p0) = pair[0];
        let (t1, p1) = pair[1];
        if t <= t1 {
            let alpha = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
            return GeoPoint {
                lat: p0.lat + (p1.lat - p0.lat) * alpha,
                lon: p0.lon + (p1.lon - p0.lon) * alpha,
            };
        }
    }
    samples.last().unwrap().1
}

fn likert(id: &str, labels: &[(&str, i64)]) -> serde_json::Value {
    let options: Vec<serde_json::Value> = labels
        .iter()
        .map(|(label, value)| serde_json::json!({"label": label, "value": value, "reward": 1}))
        .collect();
    serde_json::json!({
        "id": id,
        "kind": "likert",
        "prompt": match id {
            "transport" => "Which transport mean did you use to reach this place?",
            _ => "How dangerous was the road section leading to this spot?",
        },
        "options": options
    })
}

fn testnet(dir: &Path) -> std::io::Result<()> {
    let start = GeoPoint {
        lat: 47.380660,
        lon: 8.542470,
    };
    let hb = GeoPoint {
        lat: 47.377840,
        lon: 8.540370,
    };
    let eth = GeoPoint {
        lat: 47.376390,
        lon: 8.548000,
    };
    let duration_s = 1100.0;

    let group1 = ["g1u1", "g1u2", "g1u3"];
    let group2 = ["g2u1", "g2u2", "g2u3"];
    let mut walks = Vec::new();
    for name in group1 {
        walks.push(Walk {
            participant: name.to_string(),
            legs: vec![(start, 0.0), (hb, 120.0), (eth, 0.0)],
            speed_mps: 1.4,
            start_s: 0.0,
        });
    }
    for name in group2 {
        walks.push(Walk {
            participant: name.to_string(),
            legs: vec![(start, 0.0), (eth, 120.0), (hb, 0.0)],
            speed_mps: 1.4,
            start_s: 0.0,
        });
    }
    std::fs::create_dir_all(dir.join("traces"))?;
    std::fs::write(
        dir.join("traces/testnet.csv"),
        synthesize(&walks, duration_s),
    )?;

    let transport = likert(
        "transport",
        &[
            ("Car", 0),
            ("Bus", 1),
            ("Train", 2),
            ("Tram", 3),
            ("Bike", 4),
            ("Walking", 5),
        ],
    );
    let radii = [50.0, 100.0, 150.0];
    let answers_hb = [
        ("g1u1", 5),
        ("g1u2", 3),
        ("g1u3", 5),
        ("g2u1", 3),
        ("g2u2", 3),
        ("g2u3", 4),
    ];
    let answers_eth = [
        ("g1u1", 3),
        ("g1u2", 5),
        ("g1u3", 5),
        ("g2u1", 4),
        ("g2u2", 5),
        ("g2u3", 3),
    ];
    let participants: Vec<serde_json::Value> = group1
        .iter()
        .map(|n| ("group-1", n))
        .chain(group2.iter().map(|n| ("group-2", n)))
        .enumerate()
        .map(|(i, (group, name))| {
            let hb_answer = answers_hb.iter().find(|(n, _)| n == name).unwrap().1;
            let eth_answer = answers_eth.iter().find(|(n, _)| n == name).unwrap().1;
            serde_json::json!({
                "name": name,
                "group": group,
                "radius_m": radii[i % 3],
                "balance": 50,
                "answers": {
                    "hb": {"transport": hb_answer},
                    "eth": {"transport": eth_answer}
                }
            })
        })
        .collect();

    let scenario = serde_json::json!({
        "schema": 1,
        "name": "testnet",
        "seed": 42,
        "duration_s": duration_s,
        "pois": [
            {
                "id": "hb",
                "name": "Zurich Hauptbahnhof",
                "fence": {"circle": {"center": {"lat": hb.lat, "lon": hb.lon}, "radius_m": 150.0}},
                "mode": "gps_oracle",
                "questions": [transport.clone()]
            },
            {
                "id": "eth",
                "name": "ETH Zurich Hauptgebaeude",
                "fence": {"circle": {"center": {"lat": eth.lat, "lon": eth.lon}, "radius_m": 150.0}},
                "mode": "gps_oracle",
                "questions": [transport]
            }
        ],
        "beacons": [],
        "validators": [
            {"name": "val-1", "deposit": 110, "role": "full"},
            {"name": "val-2", "deposit": 210, "role": "full"},
            {"name": "val-3", "deposit": 310, "role": "full"}
        ],
        "economics": {
            "entry_cost": 10,
            "existence_cost": 0,
            "exit_penalty_fraction": 0.5,
            "claim_fee": 1,
            "block_reward": 2,
            "min_stake": 100,
            "epoch_length": 300
        },
        "participants": participants,
        "assets": [
            {"id": "asset-g1", "modality": "sequential", "pois": ["hb", "eth"]},
            {"id": "asset-g2", "modality": "sequential", "pois": ["eth", "hb"]}
        ],
        "assignments": [
            {"id": "assign-g1", "asset": "asset-g1", "task": "task-g1",
             "filter": {"keys": ["g1u1", "g1u2", "g1u3"]}},
            {"id": "assign-g2", "asset": "asset-g2", "task": "task-g2",
             "filter": {"keys": ["g2u1", "g2u2", "g2u3"]}}
        ],
        "maps": [
            {"id": "sustainability-hb", "kind": "distributed", "pois": ["hb"],
             "question": "transport", "functions": ["mean", "count"]},
            {"id": "sustainability-eth", "kind": "distributed", "pois": ["eth"],
             "question": "transport", "functions": ["mean", "count"]},
            {"id": "sustainability-any", "kind": "distributed", "pois": ["hb", "eth"],
             "question": "transport", "functions": ["mean", "count"]}
        ],
        "traces": {"file": "traces/testnet.csv"},
        "network": {
            "latency_ms": [10, 50],
            "drop_probability": 0.0,
            "block_interval_s": 1.0,
            "gossip_interval_s": 1.0,
            "fanout": 2,
            "topology_degree": 4,
            "metrics_interval_rounds": 10
        },
        "tolerances": {
            "residual_m": 5.0,
            "position_m": 10.0,
            "max_speed_mps": 50.0,
            "qr_window_s": 300,
            "witness_window_s": 600,
            "slash_threshold": 3,
            "range_noise_std_m": 0.0,
            "bloom_fp_rate": 0.01,
            "bloom_capacity": 4096,
            "recompute_interval_rounds": 10
        }
    });
    std::fs::write(
        dir.join("testnet.scenario"),
        serde_json::to_string_pretty(&scenario)?,
    )?;
    Ok(())
}

fn cycling(dir: &Path) -> std::io::Result<()> {
    // Four spots 500 m apart heading north; riders approach from 300 m
    // south of the first spot.
    let spot = |i: f64| GeoPoint {
        lat: 47.366000 + i * 0.004497,
        lon: 8.540000,
    };
    let spots = [spot(0.0), spot(1.0), spot(2.0), spot(3.0)];
    let start = GeoPoint {
        lat: 47.363302,
        lon: 8.540000,
    };
    let duration_s = 720.0;

    // Answer matrix rows: spots a-d, columns: riders 1-11.
    let answers = [
        [2, 2, 2, 1, 1, 1, 1, 2, 2, 1, 2],
        [1, 1, 1, 1, 1, 1, 1, 2, 1, 1, 1],
        [2, 1, 1, 1, 2, 3, 1, 3, 4, 2, 2],
        [3, 3, 3, 2, 4, 4, 2, 2, 3, 4, 4],
    ];
    let baseline = [("a", 1.36), ("b", 0.42), ("c", 6.21), ("d", 8.31)];

    let mut walks = Vec::new();
    let mut participants = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for rider in 0..11usize {
        let name = format!("rider-{:02}", rider + 1);
        walks.push(Walk {
            participant: name.clone(),
            legs: vec![
                (start, 0.0),
                (spots[0], 0.0),
                (spots[1], 0.0),
                (spots[2], 0.0),
                (spots[3], 0.0),
            ],
            speed_mps: 5.0,
            start_s: 30.0 * rider as f64,
        });
        let mut scripted = serde_json::Map::new();
        for (s, (id, _)) in baseline.iter().enumerate() {
            scripted.insert(
                id.to_string(),
                serde_json::json!({"risk": answers[s][rider]}),
            );
        }
        participants.push(serde_json::json!({
            "name": name,
            "group": "cyclists",
            "balance": 10,
            "answers": scripted
        }));
    }
    std::fs::create_dir_all(dir.join("traces"))?;
    std::fs::write(
        dir.join("traces/cycling.csv"),
        synthesize(&walks, duration_s),
    )?;

    let risk = likert(
        "risk",
        &[
            ("very safe", 1),
            ("safe", 2),
            ("neutral", 3),
            ("dangerous", 4),
            ("very dangerous", 5),
        ],
    );
    let pois: Vec<serde_json::Value> = baseline
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            serde_json::json!({
                "id": id,
                "name": format!("Spot {}", id.to_uppercase()),
                "fence": {"circle": {"center": {"lat": spots[i].lat, "lon": spots[i].lon},
                                      "radius_m": 50.0}},
                "mode": "gps_oracle",
                "questions": [risk.clone()]
            })
        })
        .collect();

    let scenario = serde_json::json!({
        "schema": 1,
        "name": "cycling",
        "seed": 7,
        "duration_s": duration_s,
        "pois": pois,
        "beacons": [],
        "validators": [
            {"name": "val-1", "deposit": 110, "role": "full"},
            {"name": "val-2", "deposit": 210, "role": "full"}
        ],
        "economics": {
            "entry_cost": 10,
            "existence_cost": 0,
            "exit_penalty_fraction": 0.5,
            "claim_fee": 1,
            "block_reward": 2,
            "min_stake": 100,
            "epoch_length": 300
        },
        "participants": participants,
        "assets": [
            {"id": "route", "modality": "sequential", "pois": ["a", "b", "c", "d"]}
        ],
        "assignments": [
            {"id": "ride", "asset": "route", "task": "risk-survey",
             "filter": {"keys": (1..=11).map(|i| format!("rider-{i:02}")).collect::<Vec<_>>()}}
        ],
        "maps": [],
        "traces": {"file": "traces/cycling.csv"},
        "network": {
            "latency_ms": [10, 50],
            "drop_probability": 0.0,
            "block_interval_s": 1.0,
            "gossip_interval_s": 1.0,
            "fanout": 2,
            "topology_degree": 4,
            "metrics_interval_rounds": 10
        },
        "tolerances": {
            "residual_m": 5.0,
            "position_m": 10.0,
            "max_speed_mps": 50.0,
            "qr_window_s": 300,
            "witness_window_s": 600,
            "slash_threshold": 3,
            "range_noise_std_m": 0.0,
            "bloom_fp_rate": 0.01,
            "bloom_capacity": 4096,
            "recompute_interval_rounds": 10
        },
        "baseline": baseline.iter().map(|(id, v)| (id.to_string(), *v))
            .collect::<std::collections::BTreeMap<String, f64>>()
    });
    std::fs::write(
        dir.join("cycling.scenario"),
        serde_json::to_string_pretty(&scenario)?,
    )?;
    Ok(())
}

fn beacons(dir: &Path) -> std::io::Result<()> {
    // One elliptical plaza ranged by six beacons, one of them running a
    // corrupted clock. Three visitors enter a minute apart, answer, walk
    // out east, come back and stay; the revisit supersedes their first
    // answer. The corrupted beacon is the excluded outlier in every
    // first-visit claim and crosses the slash threshold at the first
    // epoch boundary.
    let plaza = GeoPoint {
        lat: 47.372000,
        lon: 8.535000,
    };
    let east = |x: f64, y: f64| {
        let lat = plaza.lat + y / 111_194.92664455873;
        let lon = plaza.lon + x / (111_194.92664455873 * plaza.lat.to_radians().cos());
        GeoPoint { lat, lon }
    };
    let duration_s = 760.0;

    let mut walks = Vec::new();
    let mut participants = Vec::new();
    for (i, (name, answer)) in [("visitor-1", 2), ("visitor-2", 4), ("visitor-3", 5)]
        .iter()
        .enumerate()
    {
        walks.push(Walk {
            participant: name.to_string(),
            legs: vec![
                (east(320.0, 0.0), 0.0),  // outside the 120 m semi-major axis
                (east(0.0, 0.0), 40.0),   // dwell at the center, answer
                (east(260.0, 0.0), 20.0), // walk out: exit re-arms the fence
                (east(10.0, 5.0), 0.0),   // come back and stay
            ],
            speed_mps: 1.4,
            start_s: 40.0 * i as f64,
        });
        participants.push(serde_json::json!({
            "name": name,
            "group": "visitors",
            "balance": 20,
            "answers": {"plaza": {"crowding": answer}}
        }));
    }
    std::fs::create_dir_all(dir.join("traces"))?;
    std::fs::write(
        dir.join("traces/beacons.csv"),
        synthesize(&walks, duration_s),
    )?;

    // Five community-run honest beacons plus one validator-operated
    // beacon with a microsecond of clock offset (about 300 m of ranging
    // error); the operator is the slashing target.
    let spots = [
        (-180.0, -120.0),
        (200.0, -140.0),
        (160.0, 210.0),
        (-140.0, 170.0),
        (20.0, -230.0),
    ];
    let mut beacon_list: Vec<serde_json::Value> = spots
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let p = east(x, y);
            serde_json::json!({
                "id": format!("anchor-{i}"),
                "position": {"lat": p.lat, "lon": p.lon},
                "comm_range_m": 2000.0
            })
        })
        .collect();
    let drifted = east(-40.0, -210.0);
    beacon_list.push(serde_json::json!({
        "id": "anchor-drift",
        "position": {"lat": drifted.lat, "lon": drifted.lon},
        "comm_range_m": 2000.0,
        "clock_offset_s": 1e-6,
        "byzantine": true,
        "operator": "anchor-op"
    }));

    let crowding = likert(
        "crowding",
        &[
            ("empty", 1),
            ("quiet", 2),
            ("lively", 3),
            ("busy", 4),
            ("packed", 5),
        ],
    );
    let scenario = serde_json::json!({
        "schema": 1,
        "name": "beacon-demo",
        "seed": 11,
        "duration_s": duration_s,
        "pois": [{
            "id": "plaza",
            "name": "Plaza",
            "fence": {"ellipse": {"center": {"lat": plaza.lat, "lon": plaza.lon},
                                   "semi_major_m": 120.0, "semi_minor_m": 80.0,
                                   "orientation_deg": 90.0}},
            "mode": "beacon",
            "questions": [crowding],
            "challenge_answer": "lion fountain",
            "qr_secret": "plaza-rotations",
            "required_social": ["challenge_answer", "qr_token"],
            "beacons": ["anchor-0", "anchor-1", "anchor-2", "anchor-3", "anchor-4",
                         "anchor-drift"]
        }],
        "beacons": beacon_list,
        "validators": [
            {"name": "plaza-full", "deposit": 110, "role": "full"},
            {"name": "anchor-op", "deposit": 210, "role": "location",
             "served_pois": ["plaza"]}
        ],
        "economics": {
            "entry_cost": 10,
            "existence_cost": 0,
            "exit_penalty_fraction": 0.5,
            "claim_fee": 1,
            "block_reward": 2,
            "min_stake": 100,
            "epoch_length": 300
        },
        "participants": participants,
        "assets": [{"id": "plaza-visit", "modality": "arbitrary", "pois": ["plaza"]}],
        "assignments": [{"id": "survey", "asset": "plaza-visit", "task": "crowding-task",
                          "filter": {"keys": ["visitor-1", "visitor-2", "visitor-3"]}}],
        "maps": [
            {"id": "crowding-live", "kind": "localized", "pois": ["plaza"],
             "question": "crowding", "functions": ["mean", "count", "max"]},
            {"id": "crowding-anywhere", "kind": "distributed", "pois": ["plaza"],
             "question": "crowding", "functions": ["mean", "count"]}
        ],
        "traces": {"file": "traces/beacons.csv"},
        "network": {
            "latency_ms": [10, 50],
            "drop_probability": 0.0,
            "block_interval_s": 1.0,
            "gossip_interval_s": 1.0,
            "fanout": 2,
            "topology_degree": 4,
            "metrics_interval_rounds": 10
        },
        "tolerances": {
            "residual_m": 5.0,
            "position_m": 10.0,
            "max_speed_mps": 50.0,
            "qr_window_s": 300,
            "witness_window_s": 600,
            "slash_threshold": 3,
            "range_noise_std_m": 0.0,
            "bloom_fp_rate": 0.01,
            "bloom_capacity": 4096,
            "recompute_interval_rounds": 10
        }
    });
    std::fs::write(
        dir.join("beacons.scenario"),
        serde_json::to_string_pretty(&scenario)?,
    )?;
    Ok(())
}

fn main() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios"));
    testnet(&dir)?;
    cycling(&dir)?;
    beacons(&dir)?;
    println!("wrote scenarios to {}", dir.display());
    Ok(())
}
