//! The deterministic discrete-event loop: trace replay, fence-entry
//! detection, question dispatch, claim construction, the consensus
//! pipeline, block production, gossip rounds and metrics snapshots.
//!
//! Events are processed from a priority queue ordered by
//! (time, event-kind priority, participant key, poi id, sequence), so
//! identical (scenario, seed) inputs replay to byte-identical ledgers
//! and reports.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};

use crate::aggregate::{
    build_topology, eligibility, gossip_round, AggregateConfig, AggregateFunction, AggregatorAgent,
    GossipMessage, MeasurementMap, PresenceSnapshot,
};
use crate::consensus::{ChainContext, GenesisValidator, Ledger, PoiVerifyInfo, TokenAmount};
use crate::crowdsense::{
    self, launch_assignment, localization_events, AnswerValue, Asset, AssetProgress,
    ParticipantFilter, PointOfInterest, Project, Response, Task,
};
use crate::crypto::{sha256, CanonicalBuf, Digest, KeyPair, PublicKey};
use crate::geo::{GeoPoint, Geofence};
use crate::harness::log;
use crate::harness::report::{
    BalanceSheet, CorrelationReport, EstimateRecord, PoiTable, QuestionSummary, ReportHeader,
    RunReport, SlashEventReport,
};
use crate::harness::scenario::{parse_answer, FilterSpec, LoadedScenario};
use crate::harness::stats;
use crate::proofs::{
    make_peer_witness, measure_ranges, qr_token, BeaconStation, LocationClaim, PresenceView,
    ProofMode, SocialProof, SocialProofKind, WitnessClaim,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("ledger: {0}")]
    Ledger(#[from] crate::consensus::LedgerError),
    #[error("project: {0}")]
    Project(String),
}

/// Event kinds in processing priority order within one timestamp.
const PRIO_POSITION: u8 = 0;
const PRIO_BLOCK: u8 = 1;
const PRIO_GOSSIP: u8 = 2;
const PRIO_DELIVERY: u8 = 3;
const PRIO_END: u8 = 4;

enum EventKind {
    Position {
        participant: String,
        position: GeoPoint,
    },
    BlockTick,
    GossipTick,
    Delivery {
        map_id: String,
        to: PublicKey,
        message: GossipMessage,
    },
    End,
}

struct Event {
    time_ms: u64,
    prio: u8,
    actor: String,
    poi: String,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (u64, u8, &str, &str, u64) {
        (self.time_ms, self.prio, &self.actor, &self.poi, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

/// A verified response usable as aggregation input.
#[derive(Debug, Clone)]
struct VerifiedResponse {
    answer: AnswerValue,
    time_ms: u64,
    claim_digest: Digest,
}

pub struct SimResult {
    pub report: RunReport,
    pub ledger_export: String,
}

fn sub_rng(seed: u64, label: &str) -> ChaCha20Rng {
    let mut buf = CanonicalBuf::new();
    buf.put_u64(seed);
    buf.put_str(label);
    ChaCha20Rng::from_seed(sha256(buf.as_bytes()).0)
}

/// Run a loaded scenario to completion and build its report.
pub fn run(loaded: &LoadedScenario, seed_override: Option<u64>) -> Result<SimResult, SimError> {
    let scenario = &loaded.scenario;
    let seed = seed_override.unwrap_or(scenario.seed);
    let duration_ms = (scenario.duration_s * 1000.0).round() as u64;
    log::info!(
        "run: scenario {} seed {} duration {} ms",
        scenario.name,
        seed,
        duration_ms
    );

    // Identities derive from the seed and role-qualified names.
    let participant_keys: BTreeMap<String, KeyPair> = scenario
        .participants
        .iter()
        .map(|p| {
            (
                p.name.clone(),
                KeyPair::derive(seed, &format!("participant:{}", p.name)),
            )
        })
        .collect();
    let validator_keys: BTreeMap<String, KeyPair> = scenario
        .validators
        .iter()
        .map(|v| {
            (
                v.name.clone(),
                KeyPair::derive(seed, &format!("validator:{}", v.name)),
            )
        })
        .collect();
    let mut names: BTreeMap<PublicKey, String> = BTreeMap::new();
    for (name, kp) in participant_keys.iter().chain(validator_keys.iter()) {
        names.insert(kp.public(), name.clone());
    }

    let stations: Vec<BeaconStation> = scenario
        .beacons
        .iter()
        .map(|b| {
            BeaconStation::new(
                seed,
                &b.id,
                b.position,
                b.comm_range_m,
                b.clock_offset_s,
                b.byzantine,
                b.operator.as_ref().map(|op| validator_keys[op].public()),
            )
        })
        .collect();

    // Chain context and genesis.
    let pois_ctx: BTreeMap<String, PoiVerifyInfo> = scenario
        .pois
        .iter()
        .map(|p| {
            (
                p.id.clone(),
                PoiVerifyInfo {
                    fence: p.fence,
                    mode: p.mode,
                    social: crate::proofs::SocialRules {
                        challenge_answer: p.challenge_answer.clone(),
                        qr_secret: p.qr_secret.clone(),
                        required: p.required_social.clone(),
                    },
                    questions: p.questions.clone(),
                    beacon_ids: p.beacons.clone(),
                },
            )
        })
        .collect();
    let context = ChainContext {
        seed,
        economics: scenario.economics.clone(),
        verify_cfg: scenario.tolerances.verify_config(),
        slash_threshold: scenario.tolerances.slash_threshold,
        genesis_validators: scenario
            .validators
            .iter()
            .map(|v| GenesisValidator {
                key: validator_keys[&v.name].public(),
                deposit: v.deposit,
                role: v.role,
                served_pois: v.served_pois.iter().cloned().collect(),
            })
            .collect(),
        initial_balances: scenario
            .participants
            .iter()
            .map(|p| (participant_keys[&p.name].public(), p.balance))
            .collect(),
        beacons: stations
            .iter()
            .map(|s| (s.info.id.clone(), s.info.clone()))
            .collect(),
        pois: pois_ctx,
        participant_radii: scenario
            .participants
            .iter()
            .filter_map(|p| p.radius_m.map(|r| (participant_keys[&p.name].public(), r)))
            .collect(),
    };
    let signers: Vec<KeyPair> = participant_keys
        .values()
        .chain(validator_keys.values())
        .cloned()
        .collect();
    let mut ledger = Ledger::genesis(context, signers)?;

    // Crowd-sensing project: pois, assets, tasks, launched assignments.
    let mut project = Project {
        id: scenario.name.clone(),
        ..Default::default()
    };
    for p in &scenario.pois {
        project.pois.insert(
            p.id.clone(),
            PointOfInterest {
                id: p.id.clone(),
                name: p.name.clone(),
                fence: p.fence,
                questions: p.questions.clone(),
            },
        );
    }
    for a in &scenario.assets {
        project.assets.insert(
            a.id.clone(),
            Asset {
                id: a.id.clone(),
                modality: a.modality,
                poi_order: a.pois.clone(),
                branch_map: a.branch.clone(),
            },
        );
    }
    let population: Vec<PublicKey> = {
        let mut keys: Vec<PublicKey> = participant_keys.values().map(|k| k.public()).collect();
        keys.sort();
        keys
    };
    let mut launch_rng = sub_rng(seed, "assignment-sampling");
    for spec in &scenario.assignments {
        let asset = project.assets[&spec.asset].clone();
        let filter = match &spec.filter {
            FilterSpec::Keys { keys } => {
                ParticipantFilter::Keys(keys.iter().map(|n| participant_keys[n].public()).collect())
            }
            FilterSpec::Fraction { fraction } => ParticipantFilter::Fraction(*fraction),
        };
        let assignment = launch_assignment(
            &spec.id,
            &asset,
            &spec.task,
            &filter,
            &population,
            &mut launch_rng,
        )
        .map_err(|e| SimError::Project(format!("assignment {}: {e}", spec.id)))?;
        project
            .tasks
            .entry(spec.task.clone())
            .or_insert_with(|| Task::new(&spec.task));
        project.assignments.push(assignment);
    }
    project.validate().map_err(SimError::Project)?;

    // Per-(participant, assignment) navigation progress.
    let mut progress: BTreeMap<(PublicKey, String), AssetProgress> = BTreeMap::new();
    for assignment in &project.assignments {
        for key in &assignment.participants {
            progress.insert((*key, assignment.id.clone()), AssetProgress::default());
        }
    }

    // Aggregation networks: one agent per participant per map.
    let aggregate_cfg = AggregateConfig {
        bloom_capacity: scenario.tolerances.bloom_capacity,
        bloom_fp_rate: scenario.tolerances.bloom_fp_rate,
        recompute_interval: scenario.tolerances.recompute_interval_rounds,
    };
    let maps: Vec<MeasurementMap> = scenario
        .maps
        .iter()
        .map(|m| MeasurementMap {
            id: m.id.clone(),
            kind: m.kind,
            pois: m.pois.clone(),
            question: m.question.clone(),
            option: m.option,
        })
        .collect();
    let map_functions: BTreeMap<String, Vec<AggregateFunction>> = scenario
        .maps
        .iter()
        .map(|m| {
            (
                m.id.clone(),
                m.functions
                    .iter()
                    .filter_map(|f| AggregateFunction::parse(f))
                    .collect(),
            )
        })
        .collect();
    // Agents start with no peers; the overlay is (re)built over the
    // currently eligible set whenever membership changes, since
    // ineligible agents neither contribute nor relay.
    let mut agents: BTreeMap<String, BTreeMap<PublicKey, AggregatorAgent>> = BTreeMap::new();
    let mut map_membership: BTreeMap<String, BTreeSet<PublicKey>> = BTreeMap::new();
    for map in &maps {
        let mut net = BTreeMap::new();
        for key in &population {
            net.insert(*key, AggregatorAgent::new(*key, aggregate_cfg));
        }
        agents.insert(map.id.clone(), net);
        map_membership.insert(map.id.clone(), BTreeSet::new());
    }

    // Event queue.
    let mut queue: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let mut seq = 0u64;
    let push = |queue: &mut BinaryHeap<Reverse<Event>>,
                seq: &mut u64,
                time_ms: u64,
                prio: u8,
                actor: String,
                poi: String,
                kind: EventKind| {
        *seq += 1;
        queue.push(Reverse(Event {
            time_ms,
            prio,
            actor,
            poi,
            seq: *seq,
            kind,
        }));
    };
    for (name, trace) in &loaded.traces {
        for &(t, p) in &trace.samples {
            if t > duration_ms {
                break;
            }
            push(
                &mut queue,
                &mut seq,
                t,
                PRIO_POSITION,
                name.clone(),
                String::new(),
                EventKind::Position {
                    participant: name.clone(),
                    position: p,
                },
            );
        }
    }
    let block_interval_ms = (scenario.network.block_interval_s * 1000.0)
        .round()
        .max(1.0) as u64;
    let mut t = block_interval_ms;
    while t <= duration_ms {
        push(
            &mut queue,
            &mut seq,
            t,
            PRIO_BLOCK,
            String::new(),
            String::new(),
            EventKind::BlockTick,
        );
        t += block_interval_ms;
    }
    let gossip_interval_ms = (scenario.network.gossip_interval_s * 1000.0)
        .round()
        .max(1.0) as u64;
    let mut t = gossip_interval_ms;
    while t <= duration_ms {
        push(
            &mut queue,
            &mut seq,
            t,
            PRIO_GOSSIP,
            String::new(),
            String::new(),
            EventKind::GossipTick,
        );
        t += gossip_interval_ms;
    }
    push(
        &mut queue,
        &mut seq,
        duration_ms,
        PRIO_END,
        String::new(),
        String::new(),
        EventKind::End,
    );

    // Seeded randomness streams.
    let mut gossip_rng = sub_rng(seed, "gossip-fanout");
    let mut net_rng = sub_rng(seed, "network");
    let mut noise_rng = sub_rng(seed, "ranging-noise");
    let mut answer_rng = sub_rng(seed, "random-answers");

    // Run state.
    let mut pending_claims: Vec<WitnessClaim> = Vec::new();
    let mut claim_assignment: BTreeMap<Digest, String> = BTreeMap::new();
    let mut nonce_counters: BTreeMap<PublicKey, u64> = BTreeMap::new();
    let mut verified: BTreeMap<(PublicKey, String, String), VerifiedResponse> = BTreeMap::new();
    let mut estimates: Vec<EstimateRecord> = Vec::new();
    let mut deliveries_hasher = Sha256::new();
    let mut dropped_messages = 0u64;
    let mut gossip_rounds_done = 0u64;

    while let Some(Reverse(event)) = queue.pop() {
        if event.time_ms > duration_ms {
            continue;
        }
        let now = event.time_ms;
        match event.kind {
            EventKind::End => break,
            EventKind::Position {
                participant,
                position,
            } => {
                let key = participant_keys[&participant].public();
                for assignment in &project.assignments {
                    if !assignment.participants.contains(&key) {
                        continue;
                    }
                    let asset = &project.assets[&assignment.asset_id];
                    let fences: BTreeMap<String, Geofence> = asset
                        .poi_order
                        .iter()
                        .map(|poi_id| {
                            let info = &ledger.context.pois[poi_id];
                            (poi_id.clone(), ledger.context.effective_fence(&key, info))
                        })
                        .collect();
                    let state = progress.get_mut(&(key, assignment.id.clone())).unwrap();
                    let triggered = localization_events(position, asset, &fences, state);
                    for poi_id in triggered {
                        let spec = scenario
                            .pois
                            .iter()
                            .find(|p| p.id == poi_id)
                            .expect("validated");
                        let mut answered_any = false;
                        for question in &spec.questions {
                            let answer = resolve_answer(
                                scenario,
                                &participant,
                                &poi_id,
                                question,
                                &mut answer_rng,
                            );
                            let Some(answer) = answer else { continue };
                            answered_any = true;
                            let nonce = {
                                let c = nonce_counters.entry(key).or_insert(0);
                                let v = *c;
                                *c += 1;
                                v
                            };
                            let location = match spec.mode {
                                ProofMode::GpsOracle => LocationClaim {
                                    claimant: key,
                                    claimed_position: position,
                                    time_ms: now,
                                    receipts: vec![],
                                    mode: ProofMode::GpsOracle,
                                },
                                ProofMode::Beacon => {
                                    let zone: Vec<BeaconStation> = stations
                                        .iter()
                                        .filter(|s| spec.beacons.contains(&s.info.id))
                                        .cloned()
                                        .collect();
                                    let receipts = measure_ranges(
                                        position,
                                        &zone,
                                        now,
                                        scenario.tolerances.range_noise_std_m,
                                        &mut noise_rng,
                                    );
                                    LocationClaim {
                                        claimant: key,
                                        claimed_position: position,
                                        time_ms: now,
                                        receipts,
                                        mode: ProofMode::Beacon,
                                    }
                                }
                            };
                            let social = build_social_proofs(
                                spec,
                                &ledger,
                                &participant_keys[&participant],
                                now,
                                &scenario.tolerances.verify_config(),
                            );
                            let response = Response {
                                participant: key,
                                poi_id: poi_id.clone(),
                                question_id: question.id.clone(),
                                answer,
                                time_ms: now,
                            };
                            let claim = WitnessClaim::build(
                                &participant_keys[&participant],
                                location,
                                social,
                                &poi_id,
                                response,
                                nonce,
                            );
                            claim_assignment.insert(
                                crate::crypto::CanonicalEncode::digest(&claim),
                                assignment.id.clone(),
                            );
                            pending_claims.push(claim);
                        }
                        if answered_any {
                            crowdsense::mark_pending(state, &poi_id);
                        }
                    }
                }
            }
            EventKind::BlockTick => {
                let claims = std::mem::take(&mut pending_claims);
                let block = ledger.produce_block(claims)?;
                let records: Vec<(Digest, bool, String, AnswerValue, PublicKey, u64, String)> =
                    block
                        .records
                        .iter()
                        .map(|r| {
                            (
                                crate::crypto::CanonicalEncode::digest(&r.claim),
                                r.accepted,
                                r.claim.poi_id.clone(),
                                r.claim.response.answer.clone(),
                                r.claim.location.claimant,
                                r.claim.location.time_ms,
                                r.claim.response.question_id.clone(),
                            )
                        })
                        .collect();
                for (digest, accepted, poi_id, answer, claimant, time_ms, question_id) in records {
                    let Some(assignment_id) = claim_assignment.get(&digest).cloned() else {
                        continue;
                    };
                    let assignment = project
                        .assignments
                        .iter()
                        .find(|a| a.id == assignment_id)
                        .expect("assignment exists");
                    let asset = project.assets[&assignment.asset_id].clone();
                    let task_id = assignment.task_id.clone();
                    let state = progress.get_mut(&(claimant, assignment_id)).unwrap();
                    if accepted {
                        crowdsense::on_claim_accepted(state, &asset, &poi_id, &answer);
                        let question = project.pois[&poi_id]
                            .question(&question_id)
                            .expect("validated")
                            .clone();
                        let response = Response {
                            participant: claimant,
                            poi_id: poi_id.clone(),
                            question_id: question_id.clone(),
                            answer: answer.clone(),
                            time_ms,
                        };
                        let task = project.tasks.get_mut(&task_id).unwrap();
                        task.record_response(response, &question)
                            .map_err(|e| SimError::Project(e.to_string()))?;
                        verified.insert(
                            (claimant, poi_id, question_id),
                            VerifiedResponse {
                                answer,
                                time_ms,
                                claim_digest: digest,
                            },
                        );
                    } else {
                        crowdsense::on_claim_rejected(state, &poi_id);
                    }
                }
                debug_assert!(ledger.conserved());
            }
            EventKind::GossipTick => {
                gossip_rounds_done += 1;
                // Invalidation from slashing flows into the inputs first.
                let invalidated = ledger.invalidated_claims().clone();
                verified.retain(|_, v| !invalidated.contains(&v.claim_digest));
                for map in &maps {
                    let net = agents.get_mut(&map.id).unwrap();
                    // Registry sync: eligibility and input refresh.
                    let mut eligible_sources: BTreeSet<PublicKey> = BTreeSet::new();
                    for key in &population {
                        let snapshot = presence_snapshot(&ledger, key, now);
                        let ok = eligibility(map, &snapshot, |poi_id| {
                            ledger
                                .context
                                .pois
                                .get(poi_id)
                                .map(|info| ledger.context.effective_fence(key, info))
                        });
                        if ok {
                            eligible_sources.insert(*key);
                        }
                    }
                    if map_membership[&map.id] != eligible_sources {
                        let members: Vec<PublicKey> = eligible_sources.iter().copied().collect();
                        let mut buf = CanonicalBuf::new();
                        buf.put_u64(seed);
                        buf.put_str("map-topology");
                        buf.put_str(&map.id);
                        for m in &members {
                            buf.put_key(m);
                        }
                        let mut rng = ChaCha20Rng::from_seed(sha256(buf.as_bytes()).0);
                        let topology =
                            build_topology(&members, scenario.network.topology_degree, &mut rng);
                        for (key, agent) in net.iter_mut() {
                            agent.peers = topology.get(key).cloned().unwrap_or_default();
                        }
                        map_membership.insert(map.id.clone(), eligible_sources.clone());
                    }
                    for (key, agent) in net.iter_mut() {
                        agent.eligible = eligible_sources.contains(key);
                        agent.sync_registry(&eligible_sources);
                        if agent.eligible {
                            match map_input(map, key, &verified) {
                                Some((value, version)) => agent.set_local_input(value, version),
                                None => agent.clear_local_input(),
                            }
                        } else {
                            agent.clear_local_input();
                        }
                    }
                    // Push round; deliveries go through the network model.
                    let deliveries = gossip_round(net, &mut gossip_rng, scenario.network.fanout);
                    for (from, to, message) in deliveries {
                        if scenario.network.drop_probability > 0.0
                            && net_rng.gen::<f64>() < scenario.network.drop_probability
                        {
                            dropped_messages += 1;
                            continue;
                        }
                        let (lat_min, lat_max) = scenario.network.latency_ms;
                        let latency = if lat_max > lat_min {
                            net_rng.gen_range(lat_min..=lat_max)
                        } else {
                            lat_min
                        };
                        // Hash by display name so digests are comparable
                        // across seeds (keys derive from the seed).
                        deliveries_hasher.update(map.id.as_bytes());
                        deliveries_hasher.update(names[&from].as_bytes());
                        deliveries_hasher.update(names[&to].as_bytes());
                        deliveries_hasher.update(now.to_le_bytes());
                        deliveries_hasher.update(latency.to_le_bytes());
                        push(
                            &mut queue,
                            &mut seq,
                            now + latency,
                            PRIO_DELIVERY,
                            map.id.clone(),
                            format!("{from}->{to}"),
                            EventKind::Delivery {
                                map_id: map.id.clone(),
                                to,
                                message,
                            },
                        );
                    }
                    for agent in net.values_mut() {
                        agent.end_round();
                    }
                }
                // Metrics snapshots on the configured cadence.
                if gossip_rounds_done
                    .is_multiple_of(scenario.network.metrics_interval_rounds.max(1))
                {
                    for map in &maps {
                        let net = &agents[&map.id];
                        for (key, agent) in net {
                            if !agent.eligible {
                                continue;
                            }
                            for function in &map_functions[&map.id] {
                                if let Ok(value) = agent.read_estimate(*function) {
                                    estimates.push(EstimateRecord {
                                        time_ms: now,
                                        agent: names[key].clone(),
                                        map: map.id.clone(),
                                        function: function.label().to_string(),
                                        value,
                                    });
                                }
                            }
                        }
                    }
                }
            }
            EventKind::Delivery {
                map_id,
                to,
                message,
            } => {
                if let Some(agent) = agents.get_mut(&map_id).and_then(|net| net.get_mut(&to)) {
                    agent.receive(&message);
                }
            }
        }
    }

    // Assemble the report.
    let mut poi_tables: BTreeMap<String, PoiTable> = BTreeMap::new();
    for poi in &scenario.pois {
        let mut questions: BTreeMap<String, QuestionSummary> = BTreeMap::new();
        for question in &poi.questions {
            let mut rows: Vec<(String, String)> = Vec::new();
            let mut values: Vec<f64> = Vec::new();
            let mut seen: BTreeSet<PublicKey> = BTreeSet::new();
            for task in project.tasks.values() {
                for response in task.responses_at(&poi.id) {
                    if response.question_id != question.id || !seen.insert(response.participant) {
                        continue;
                    }
                    let who = names
                        .get(&response.participant)
                        .cloned()
                        .unwrap_or_else(|| response.participant.to_hex());
                    rows.push((who, render_answer(&response.answer)));
                    if let Some(v) = response.answer.as_numeric() {
                        values.push(v);
                    }
                }
            }
            rows.sort();
            let mean = stats::mean(&values).ok();
            let median = stats::median(&values).ok();
            questions.insert(
                question.id.clone(),
                QuestionSummary {
                    rows,
                    count: values.len() as u64,
                    mean,
                    median,
                },
            );
        }
        poi_tables.insert(
            poi.id.clone(),
            PoiTable {
                name: poi.name.clone(),
                questions,
            },
        );
    }

    let mut final_estimates: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> =
        BTreeMap::new();
    let mut map_truths: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for map in &maps {
        let net = &agents[&map.id];
        let mut per_agent: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (key, agent) in net {
            if !agent.eligible {
                continue;
            }
            let mut per_fn = BTreeMap::new();
            for function in &map_functions[&map.id] {
                if let Ok(value) = agent.read_estimate(*function) {
                    per_fn.insert(function.label().to_string(), value);
                }
            }
            per_agent.insert(names[key].clone(), per_fn);
        }
        final_estimates.insert(map.id.clone(), per_agent);
        // Central oracle over the live inputs.
        let inputs: Vec<f64> = population
            .iter()
            .filter_map(|key| map_input(map, key, &verified).map(|(v, _)| v))
            .collect();
        let mut truths = BTreeMap::new();
        if !inputs.is_empty() {
            truths.insert("count".to_string(), inputs.len() as f64);
            truths.insert("sum".to_string(), inputs.iter().sum());
            truths.insert("mean".to_string(), stats::mean(&inputs).unwrap());
            truths.insert(
                "min".to_string(),
                inputs.iter().copied().fold(f64::INFINITY, f64::min),
            );
            truths.insert(
                "max".to_string(),
                inputs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            );
            let mean = stats::mean(&inputs).unwrap();
            let var =
                inputs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / inputs.len() as f64;
            truths.insert("std".to_string(), var.sqrt());
        }
        map_truths.insert(map.id.clone(), truths);
    }

    let mut verdict_counts: BTreeMap<String, u64> = BTreeMap::new();
    for block in ledger.blocks() {
        for record in &block.records {
            let label = if record.accepted {
                "accepted".to_string()
            } else {
                record
                    .reason
                    .as_ref()
                    .map(|r| r.label().to_string())
                    .unwrap_or_default()
            };
            *verdict_counts.entry(label).or_insert(0) += 1;
        }
    }

    let slash_events: Vec<SlashEventReport> = ledger
        .slash_events()
        .iter()
        .map(|e| SlashEventReport {
            height: e.height,
            validator: names
                .get(&e.validator)
                .cloned()
                .unwrap_or_else(|| e.validator.to_hex()),
            beacon_ids: e.beacon_ids.clone(),
            exclusion_count: e.exclusion_count,
            burned: e.burned,
        })
        .collect();

    let balances: BTreeMap<String, TokenAmount> = ledger
        .balances
        .iter()
        .map(|(key, amount)| {
            (
                names.get(key).cloned().unwrap_or_else(|| key.to_hex()),
                *amount,
            )
        })
        .collect();
    let stakes: BTreeMap<String, TokenAmount> = ledger
        .validators
        .values()
        .map(|v| {
            (
                names.get(&v.key).cloned().unwrap_or_else(|| v.key.to_hex()),
                v.stake,
            )
        })
        .collect();
    let circulating = ledger.balances.values().sum::<u64>()
        + ledger.validators.values().map(|v| v.stake).sum::<u64>()
        + ledger.fee_pool();
    let balance_sheet = BalanceSheet {
        initial_supply: ledger.initial_supply,
        minted: ledger.minted,
        burned: ledger.burned,
        fee_pool: ledger.fee_pool(),
        circulating,
        conserved: ledger.conserved(),
        balances,
        stakes,
    };

    let correlations = scenario.baseline.as_ref().map(|baseline| {
        let order: Vec<String> = baseline.keys().cloned().collect();
        let mut means = Vec::new();
        let mut medians = Vec::new();
        let mut actuals = Vec::new();
        for poi in &order {
            let table = &poi_tables[poi];
            // Single-question pois in validation scenarios.
            let summary = table.questions.values().next().expect("poi has a question");
            means.push(summary.mean.unwrap_or(f64::NAN));
            medians.push(summary.median.unwrap_or(f64::NAN));
            actuals.push(baseline[poi]);
        }
        CorrelationReport {
            order,
            means: means.clone(),
            medians: medians.clone(),
            actuals: actuals.clone(),
            pearson_mean: stats::pearson(&means, &actuals).unwrap_or(f64::NAN),
            pearson_median: stats::pearson(&medians, &actuals).unwrap_or(f64::NAN),
            spearman_mean: stats::spearman(&means, &actuals).unwrap_or(f64::NAN),
            spearman_median: stats::spearman(&medians, &actuals).unwrap_or(f64::NAN),
            note: "spearman uses average ranks; ties in the median column make the \
                   tie-corrected value fall below the 1.0 a pure rank-order match would give"
                .to_string(),
        }
    });

    let mut echo = loaded.echo.clone();
    if let Some(obj) = echo.as_object_mut() {
        // The trace body can be megabytes; echo its digest instead.
        if let Some(traces_value) = obj.get("traces") {
            let digest = sha256(traces_value.to_string().as_bytes()).to_hex();
            obj.insert(
                "traces".to_string(),
                serde_json::json!({ "digest": digest }),
            );
        }
        obj.insert("seed".to_string(), serde_json::json!(seed));
    }

    let report = RunReport {
        header: ReportHeader {
            name: scenario.name.clone(),
            seed,
            schema: 1,
            hash_scheme: crate::crypto::HASH_SCHEME.to_string(),
            signature_scheme: crate::crypto::SIGNATURE_SCHEME.to_string(),
        },
        poi_tables,
        estimates,
        final_estimates,
        map_truths,
        verdict_counts,
        slash_events,
        balance_sheet,
        correlations,
        deliveries_digest: hex::encode(deliveries_hasher.finalize()),
        dropped_messages,
        chain_height: ledger.height(),
        config_echo: echo,
    };
    log::debug!(
        "run complete: height {} estimates {}",
        report.chain_height,
        report.estimates.len()
    );
    Ok(SimResult {
        report,
        ledger_export: ledger.export(),
    })
}

fn presence_snapshot(ledger: &Ledger, key: &PublicKey, now: u64) -> PresenceSnapshot {
    let mut snapshot = PresenceSnapshot::default();
    for record in ledger.presence_records() {
        if record.claimant != *key || record.time_ms > now {
            continue;
        }
        snapshot.accepted_pois.insert(record.poi_id.clone());
    }
    snapshot.latest_position = ledger.last_accepted(key, now).map(|(p, _)| p);
    snapshot
}

/// The participant's latest verified numeric answer at any poi of the
/// map (and matching question, when the map names one).
fn map_input(
    map: &MeasurementMap,
    key: &PublicKey,
    verified: &BTreeMap<(PublicKey, String, String), VerifiedResponse>,
) -> Option<(f64, u64)> {
    let mut best: Option<(f64, u64)> = None;
    for poi in &map.pois {
        for ((who, poi_id, question_id), response) in verified.range(
            (*key, poi.clone(), String::new())..=(*key, poi.clone(), "\u{10FFFF}".to_string()),
        ) {
            debug_assert_eq!(who, key);
            debug_assert_eq!(poi_id, poi);
            if let Some(wanted) = &map.question {
                if question_id != wanted {
                    continue;
                }
            }
            let value = match map.option {
                Some(option_value) => response.answer.indicator(option_value),
                None => match response.answer.as_numeric() {
                    Some(v) => v,
                    None => continue,
                },
            };
            if best.map(|(_, t)| response.time_ms > t).unwrap_or(true) {
                best = Some((value, response.time_ms));
            }
        }
    }
    best
}

fn resolve_answer(
    scenario: &crate::harness::scenario::Scenario,
    participant: &str,
    poi_id: &str,
    question: &crate::crowdsense::Question,
    rng: &mut ChaCha20Rng,
) -> Option<AnswerValue> {
    let scripted = scenario
        .participants
        .iter()
        .find(|p| p.name == participant)
        .and_then(|p| p.answers.get(poi_id))
        .and_then(|by_question| by_question.get(&question.id))
        .and_then(parse_answer);
    if scripted.is_some() {
        return scripted;
    }
    if scenario.random_answers && !question.options.is_empty() {
        let pick = rng.gen_range(0..question.options.len());
        return Some(AnswerValue::Integer(question.options[pick].value));
    }
    None
}

fn build_social_proofs(
    spec: &crate::harness::scenario::PoiSpec,
    ledger: &Ledger,
    claimant: &KeyPair,
    now: u64,
    cfg: &crate::proofs::VerifyConfig,
) -> Vec<SocialProof> {
    let mut proofs = Vec::new();
    for kind in &spec.required_social {
        match kind {
            SocialProofKind::ChallengeAnswer => {
                if let Some(answer) = &spec.challenge_answer {
                    proofs.push(SocialProof {
                        kind: SocialProofKind::ChallengeAnswer,
                        payload: answer.clone(),
                        witness: None,
                    });
                }
            }
            SocialProofKind::QrToken => {
                if let Some(secret) = &spec.qr_secret {
                    let window = (now / 1000) / cfg.qr_window_s.max(1);
                    proofs.push(SocialProof {
                        kind: SocialProofKind::QrToken,
                        payload: qr_token(secret, window),
                        witness: None,
                    });
                }
            }
            SocialProofKind::PeerWitness => {
                // The most recently present other participant testifies.
                let window_ms = cfg.witness_window_s * 1000;
                let witness = ledger
                    .presence_records()
                    .filter(|r| {
                        r.poi_id == spec.id
                            && r.claimant != claimant.public()
                            && r.time_ms <= now
                            && now - r.time_ms <= window_ms
                    })
                    .max_by_key(|r| (r.time_ms, r.claimant))
                    .map(|r| r.claimant);
                if let Some(signer) = witness.and_then(|w| ledger.signer(&w)) {
                    proofs.push(make_peer_witness(signer, &claimant.public(), &spec.id, now));
                }
            }
        }
    }
    proofs
}

fn render_answer(answer: &AnswerValue) -> String {
    match answer {
        AnswerValue::Integer(v) => v.to_string(),
        AnswerValue::Text(s) => s.clone(),
        AnswerValue::Selection(vs) => vs
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("+"),
    }
}
