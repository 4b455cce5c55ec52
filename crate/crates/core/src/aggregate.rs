//! Gossip-based collective measurement among presence-verified
//! participants: incremental aggregates with Bloom-filter memory,
//! corrective rollback on change and leave, and distributed or localized
//! measurement maps.
//!
//! Each agent keeps a known-entry table (source, version, value,
//! tombstone) plus a Bloom pair remembering seen and removed
//! (source, version) keys. Values travel with the entries; the Bloom
//! side answers only "have I processed this exact key", which is where
//! the configured false-positive rate can skip a genuinely new entry.
//! Tombstones carry the last known value so subtraction stays possible,
//! and are garbage-collected one epoch after application. Min and max
//! are candidate-tracked and recomputed exactly at epoch boundaries,
//! since order statistics cannot be rolled back incrementally.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bloom::BloomFilter;
use crate::crypto::{CanonicalBuf, PublicKey};
use crate::geo::{inside_geofence, GeoPoint, Geofence};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AggregateError {
    #[error("estimate undefined on an empty state")]
    EmptyState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Distributed,
    Localized,
}

/// Binds an aggregation network to points of interest: distributed maps
/// admit presence at any poi of the set (logical OR), localized maps
/// demand presence at the single poi and lapse when the participant's
/// latest verified position leaves its fence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementMap {
    pub id: String,
    pub kind: MapKind,
    pub pois: Vec<String>,
    /// Which question feeds the aggregate; None accepts any numeric answer.
    #[serde(default)]
    pub question: Option<String>,
    /// For checkbox questions: aggregate the 0/1 indicator of this option
    /// value instead of the answer itself.
    #[serde(default)]
    pub option: Option<i64>,
}

/// Presence facts needed for an eligibility decision, prepared by the
/// caller from the registry.
#[derive(Debug, Clone, Default)]
pub struct PresenceSnapshot {
    /// Pois where the participant holds a valid accepted claim.
    pub accepted_pois: BTreeSet<String>,
    /// Position of the participant's latest valid accepted claim.
    pub latest_position: Option<GeoPoint>,
}

/// OR-semantics for distributed maps; localized maps additionally lapse
/// once the latest verified position exits the poi fence.
pub fn eligibility(
    map: &MeasurementMap,
    snapshot: &PresenceSnapshot,
    fence_of: impl Fn(&str) -> Option<Geofence>,
) -> bool {
    match map.kind {
        MapKind::Distributed => map.pois.iter().any(|p| snapshot.accepted_pois.contains(p)),
        MapKind::Localized => {
            let Some(poi) = map.pois.first() else {
                return false;
            };
            if !snapshot.accepted_pois.contains(poi) {
                return false;
            }
            match (snapshot.latest_position, fence_of(poi)) {
                (Some(position), Some(fence)) => inside_geofence(position, &fence),
                _ => false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GossipEntry {
    pub source: PublicKey,
    pub version: u64,
    pub value: f64,
    pub tombstone: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GossipMessage {
    pub sender: PublicKey,
    pub entries: Vec<GossipEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classification {
    New,
    Duplicate,
    Updated { previous: f64 },
    Removed { value: f64 },
}

/// Running aggregate over live inputs. Mean and standard deviation
/// derive from count, sum and sum of squares; min and max are candidates
/// that may go stale until the next epoch recompute.
#[derive(Debug, Clone, Default, Serialize)]
pub struct AggregateState {
    pub count: i64,
    pub sum: f64,
    pub sum_sq: f64,
    pub min_candidate: Option<f64>,
    pub max_candidate: Option<f64>,
    pub epoch: u64,
    min_stale: bool,
    max_stale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateFunction {
    Count,
    Sum,
    Mean,
    Min,
    Max,
    Std,
}

impl AggregateFunction {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "count" => AggregateFunction::Count,
            "sum" => AggregateFunction::Sum,
            "mean" => AggregateFunction::Mean,
            "min" => AggregateFunction::Min,
            "max" => AggregateFunction::Max,
            "std" => AggregateFunction::Std,
            _ => return None,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            AggregateFunction::Count => "count",
            AggregateFunction::Sum => "sum",
            AggregateFunction::Mean => "mean",
            AggregateFunction::Min => "min",
            AggregateFunction::Max => "max",
            AggregateFunction::Std => "std",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AggregateConfig {
    pub bloom_capacity: usize,
    pub bloom_fp_rate: f64,
    /// Gossip rounds between epoch recomputes.
    pub recompute_interval: u64,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        AggregateConfig {
            bloom_capacity: 4096,
            bloom_fp_rate: 0.01,
            recompute_interval: 10,
        }
    }
}

#[derive(Debug, Clone)]
struct TableEntry {
    version: u64,
    value: f64,
    tombstone: bool,
    epoch_recorded: u64,
}

/// One gossip participant: an isolated state machine advanced purely by
/// message receipt and its own input changes.
pub struct AggregatorAgent {
    pub id: PublicKey,
    pub peers: Vec<PublicKey>,
    pub eligible: bool,
    table: BTreeMap<PublicKey, TableEntry>,
    seen: BloomFilter,
    removed: BloomFilter,
    state: AggregateState,
    rounds_since_recompute: u64,
    config: AggregateConfig,
}

fn bloom_key(source: &PublicKey, version: u64) -> Vec<u8> {
    let mut buf = CanonicalBuf::new();
    buf.put_key(source);
    buf.put_u64(version);
    buf.as_bytes().to_vec()
}

impl AggregatorAgent {
    pub fn new(id: PublicKey, config: AggregateConfig) -> Self {
        AggregatorAgent {
            id,
            peers: Vec::new(),
            eligible: false,
            table: BTreeMap::new(),
            seen: BloomFilter::new(config.bloom_capacity, config.bloom_fp_rate),
            removed: BloomFilter::new(config.bloom_capacity, config.bloom_fp_rate),
            state: AggregateState::default(),
            rounds_since_recompute: 0,
            config,
        }
    }

    pub fn state(&self) -> &AggregateState {
        &self.state
    }

    /// Classify a wire entry against the memory. The table resolves
    /// version ordering; the Bloom seen-set answers replay questions for
    /// sources the table no longer (or never) holds, where a false
    /// positive may wrongly skip a new entry.
    pub fn classify(&self, entry: &GossipEntry) -> Classification {
        match self.table.get(&entry.source) {
            Some(current) => {
                if entry.version < current.version {
                    Classification::Duplicate
                } else if entry.version == current.version {
                    if entry.tombstone && !current.tombstone {
                        Classification::Removed {
                            value: current.value,
                        }
                    } else {
                        Classification::Duplicate
                    }
                } else if entry.tombstone {
                    if current.tombstone {
                        Classification::Duplicate
                    } else {
                        Classification::Removed {
                            value: current.value,
                        }
                    }
                } else if current.tombstone {
                    // Re-join after a leave.
                    Classification::New
                } else {
                    Classification::Updated {
                        previous: current.value,
                    }
                }
            }
            None => {
                if entry.tombstone {
                    // Nothing of this source ever entered the state here.
                    Classification::Duplicate
                } else {
                    let key = bloom_key(&entry.source, entry.version);
                    // A version once removed must not re-enter the state;
                    // the seen-set catches plain replays after table GC.
                    if self.removed.contains(&key) || self.seen.contains(&key) {
                        Classification::Duplicate
                    } else {
                        Classification::New
                    }
                }
            }
        }
    }

    fn apply(&mut self, entry: &GossipEntry, classification: Classification) {
        match classification {
            Classification::Duplicate => {}
            Classification::New => {
                self.state.count += 1;
                self.state.sum += entry.value;
                self.state.sum_sq += entry.value * entry.value;
                self.tighten_candidates(entry.value);
            }
            Classification::Updated { previous } => {
                self.state.sum += entry.value - previous;
                self.state.sum_sq += entry.value * entry.value - previous * previous;
                self.mark_stale_if_candidate(previous);
                self.tighten_candidates(entry.value);
            }
            Classification::Removed { value } => {
                self.state.count -= 1;
                self.state.sum -= value;
                self.state.sum_sq -= value * value;
                self.mark_stale_if_candidate(value);
            }
        }
    }

    fn tighten_candidates(&mut self, value: f64) {
        self.state.min_candidate = Some(self.state.min_candidate.map_or(value, |m| m.min(value)));
        self.state.max_candidate = Some(self.state.max_candidate.map_or(value, |m| m.max(value)));
    }

    fn mark_stale_if_candidate(&mut self, value: f64) {
        if self.state.min_candidate == Some(value) {
            self.state.min_stale = true;
        }
        if self.state.max_candidate == Some(value) {
            self.state.max_stale = true;
        }
    }

    /// Process one entry end to end: classify, roll the state, remember.
    pub fn ingest(&mut self, entry: &GossipEntry) -> Classification {
        let classification = self.classify(entry);
        self.apply(entry, classification);
        let mut remember = !matches!(classification, Classification::Duplicate);
        match classification {
            Classification::Duplicate => {
                // A tombstone for an already-removed source still moves
                // the table version forward so the leave keeps relaying.
                if let Some(current) = self.table.get_mut(&entry.source) {
                    if entry.tombstone && entry.version >= current.version {
                        current.version = entry.version;
                        current.tombstone = true;
                        current.epoch_recorded = self.state.epoch;
                        remember = true;
                    }
                }
            }
            _ => {
                self.table.insert(
                    entry.source,
                    TableEntry {
                        version: entry.version,
                        value: entry.value,
                        tombstone: entry.tombstone,
                        epoch_recorded: self.state.epoch,
                    },
                );
            }
        }
        // Plain replays were remembered when first ingested; only novel
        // keys pay for filter insertion.
        if remember {
            self.seen.insert(&bloom_key(&entry.source, entry.version));
            if entry.tombstone {
                self.removed
                    .insert(&bloom_key(&entry.source, entry.version));
            }
        }
        classification
    }

    pub fn receive(&mut self, message: &GossipMessage) {
        for entry in &message.entries {
            self.ingest(entry);
        }
    }

    /// Set or update this agent's own contributed value.
    pub fn set_local_input(&mut self, value: f64, version: u64) {
        let entry = GossipEntry {
            source: self.id,
            version,
            value,
            tombstone: false,
        };
        self.ingest(&entry);
    }

    /// Withdraw this agent's contribution (presence lapsed).
    pub fn clear_local_input(&mut self) {
        if let Some(current) = self.table.get(&self.id) {
            if !current.tombstone {
                let entry = GossipEntry {
                    source: self.id,
                    version: current.version,
                    value: current.value,
                    tombstone: true,
                };
                self.ingest(&entry);
            }
        }
    }

    /// Tombstone sources that lost their witness presence per the
    /// registry snapshot.
    pub fn sync_registry(&mut self, still_eligible: &BTreeSet<PublicKey>) {
        let lapsed: Vec<(PublicKey, u64, f64)> = self
            .table
            .iter()
            .filter(|(source, e)| !e.tombstone && !still_eligible.contains(*source))
            .map(|(source, e)| (*source, e.version, e.value))
            .collect();
        for (source, version, value) in lapsed {
            let entry = GossipEntry {
                source,
                version,
                value,
                tombstone: true,
            };
            self.ingest(&entry);
        }
    }

    /// The full known entry set, deduplicated by source.
    pub fn make_message(&self) -> GossipMessage {
        GossipMessage {
            sender: self.id,
            entries: self
                .table
                .iter()
                .map(|(source, e)| GossipEntry {
                    source: *source,
                    version: e.version,
                    value: e.value,
                    tombstone: e.tombstone,
                })
                .collect(),
        }
    }

    /// Epoch boundary: recompute min/max exactly from live table values
    /// and garbage-collect tombstones applied before this epoch.
    pub fn epoch_recompute(&mut self) {
        let live: Vec<f64> = self
            .table
            .values()
            .filter(|e| !e.tombstone)
            .map(|e| e.value)
            .collect();
        self.state.min_candidate = live.iter().copied().reduce(f64::min);
        self.state.max_candidate = live.iter().copied().reduce(f64::max);
        self.state.min_stale = false;
        self.state.max_stale = false;
        let epoch = self.state.epoch;
        self.table
            .retain(|_, e| !(e.tombstone && e.epoch_recorded < epoch));
        self.state.epoch += 1;
        self.rounds_since_recompute = 0;
    }

    /// Count a finished gossip round; recompute on the configured cadence.
    pub fn end_round(&mut self) {
        self.rounds_since_recompute += 1;
        if self.rounds_since_recompute >= self.config.recompute_interval {
            self.epoch_recompute();
        }
    }

    pub fn read_estimate(&self, function: AggregateFunction) -> Result<f64, AggregateError> {
        let s = &self.state;
        match function {
            AggregateFunction::Count => Ok(s.count as f64),
            AggregateFunction::Sum => Ok(s.sum),
            AggregateFunction::Mean => {
                if s.count <= 0 {
                    return Err(AggregateError::EmptyState);
                }
                Ok(s.sum / s.count as f64)
            }
            AggregateFunction::Std => {
                if s.count <= 0 {
                    return Err(AggregateError::EmptyState);
                }
                let mean = s.sum / s.count as f64;
                Ok((s.sum_sq / s.count as f64 - mean * mean).max(0.0).sqrt())
            }
            AggregateFunction::Min => s.min_candidate.ok_or(AggregateError::EmptyState),
            AggregateFunction::Max => s.max_candidate.ok_or(AggregateError::EmptyState),
        }
    }

    /// Live (source, value) view, for oracles and debugging.
    pub fn live_values(&self) -> BTreeMap<PublicKey, f64> {
        self.table
            .iter()
            .filter(|(_, e)| !e.tombstone)
            .map(|(source, e)| (*source, e.value))
            .collect()
    }
}

/// Build a connected gossip overlay: a union of seeded Hamiltonian
/// cycles approximating a `degree`-regular graph (complete graph for
/// small populations).
pub fn build_topology(
    ids: &[PublicKey],
    degree: usize,
    rng: &mut impl rand::Rng,
) -> BTreeMap<PublicKey, Vec<PublicKey>> {
    let mut peers: BTreeMap<PublicKey, BTreeSet<PublicKey>> =
        ids.iter().map(|id| (*id, BTreeSet::new())).collect();
    let n = ids.len();
    if n <= degree + 1 {
        for a in ids {
            for b in ids {
                if a != b {
                    peers.get_mut(a).unwrap().insert(*b);
                }
            }
        }
    } else {
        let cycles = degree.div_ceil(2).max(1);
        let mut order: Vec<PublicKey> = ids.to_vec();
        order.sort();
        for _ in 0..cycles {
            // Seeded Fisher-Yates, then close the walk into a cycle.
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            for i in 0..n {
                let a = order[i];
                let b = order[(i + 1) % n];
                peers.get_mut(&a).unwrap().insert(b);
                peers.get_mut(&b).unwrap().insert(a);
            }
        }
    }
    peers
        .into_iter()
        .map(|(id, set)| (id, set.into_iter().collect()))
        .collect()
}

/// One push round: every eligible agent sends its full known entry set
/// to `fanout` uniformly drawn peers. Deliveries are returned for the
/// caller to schedule (the simulator applies latency and drops).
pub fn gossip_round(
    agents: &BTreeMap<PublicKey, AggregatorAgent>,
    rng: &mut impl rand::Rng,
    fanout: usize,
) -> Vec<(PublicKey, PublicKey, GossipMessage)> {
    let mut deliveries = Vec::new();
    for (id, agent) in agents {
        if !agent.eligible || agent.peers.is_empty() {
            continue;
        }
        let mut pool = agent.peers.clone();
        let k = fanout.min(pool.len());
        for i in 0..k {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        let message = agent.make_message();
        for target in pool.into_iter().take(k) {
            deliveries.push((*id, target, message.clone()));
        }
    }
    deliveries
}
