//! Scenario files: the declarative description of pois, beacons,
//! validators, economics, participants, assets, assignments, measurement
//! maps, mobility traces, network model and tolerances.
//!
//! Files are JSON with `"schema": 1`. Traces come either from a CSV
//! sidecar (`participant,timestamp_s,lat,lon`) or inline. Loading either
//! returns a fully validated scenario or the complete list of
//! validation errors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::{EconomicsConfig, TokenAmount, ValidatorRole};
use crate::crowdsense::{AnswerValue, NavigationModality, Question};
use crate::geo::{GeoPoint, Geofence};
use crate::proofs::{ProofMode, SocialProofKind, VerifyConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_s: f64,
    pub pois: Vec<PoiSpec>,
    #[serde(default)]
    pub beacons: Vec<BeaconSpec>,
    pub validators: Vec<ValidatorSpec>,
    #[serde(default = "EconomicsConfig::default")]
    pub economics: EconomicsConfig,
    pub participants: Vec<ParticipantSpec>,
    pub assets: Vec<AssetSpec>,
    pub assignments: Vec<AssignmentSpec>,
    #[serde(default)]
    pub maps: Vec<MapSpec>,
    pub traces: TracesSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub tolerances: TolerancesSpec,
    /// Reference values per poi, correlated against collected answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BTreeMap<String, f64>>,
    /// Draw unscripted answers from the question options (seeded).
    #[serde(default)]
    pub random_answers: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoiSpec {
    pub id: String,
    pub name: String,
    pub fence: Geofence,
    #[serde(default = "default_mode")]
    pub mode: ProofMode,
    pub questions: Vec<Question>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub challenge_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qr_secret: Option<String>,
    #[serde(default)]
    pub required_social: Vec<SocialProofKind>,
    /// Beacon ids forming this poi's ranging zone (beacon mode).
    #[serde(default)]
    pub beacons: Vec<String>,
}

fn default_mode() -> ProofMode {
    ProofMode::GpsOracle
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeaconSpec {
    pub id: String,
    pub position: GeoPoint,
    pub comm_range_m: f64,
    #[serde(default)]
    pub clock_offset_s: f64,
    #[serde(default)]
    pub byzantine: bool,
    /// Validator (by name) operating this beacon; slashing target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidatorSpec {
    pub name: String,
    pub deposit: TokenAmount,
    pub role: ValidatorRole,
    #[serde(default)]
    pub served_pois: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticipantSpec {
    pub name: String,
    #[serde(default)]
    pub group: String,
    /// Localization radius in meters; overrides circle fences for this
    /// participant when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
    #[serde(default)]
    pub balance: TokenAmount,
    /// Scripted answers: poi id -> question id -> value.
    #[serde(default)]
    pub answers: BTreeMap<String, BTreeMap<String, serde_json::Value>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssetSpec {
    pub id: String,
    pub modality: NavigationModality,
    pub pois: Vec<String>,
    /// Interactive branches: "poi:answer" -> next poi id.
    #[serde(default)]
    pub branch: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignmentSpec {
    pub id: String,
    pub asset: String,
    pub task: String,
    pub filter: FilterSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterSpec {
    Keys { keys: Vec<String> },
    Fraction { fraction: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSpec {
    pub id: String,
    pub kind: crate::aggregate::MapKind,
    pub pois: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    /// Checkbox questions aggregate as selection indicators of this option.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<i64>,
    #[serde(default = "default_functions")]
    pub functions: Vec<String>,
}

fn default_functions() -> Vec<String> {
    vec!["mean".to_string()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracesSpec {
    /// CSV sidecar path, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inline: Vec<InlineTrace>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InlineTrace {
    pub participant: String,
    /// (timestamp_s, lat, lon) samples, strictly increasing timestamps.
    pub samples: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Uniform delivery latency range in milliseconds.
    pub latency_ms: (u64, u64),
    pub drop_probability: f64,
    pub block_interval_s: f64,
    pub gossip_interval_s: f64,
    pub fanout: usize,
    pub topology_degree: usize,
    /// Gossip rounds between estimate snapshots in the metrics stream.
    pub metrics_interval_rounds: u64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            latency_ms: (10, 50),
            drop_probability: 0.0,
            block_interval_s: 1.0,
            gossip_interval_s: 1.0,
            fanout: 2,
            topology_degree: 4,
            metrics_interval_rounds: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TolerancesSpec {
    pub residual_m: f64,
    pub position_m: f64,
    pub max_speed_mps: f64,
    pub qr_window_s: u64,
    pub witness_window_s: u64,
    pub slash_threshold: u32,
    /// Gaussian noise applied to simulated ranging.
    pub range_noise_std_m: f64,
    pub bloom_fp_rate: f64,
    pub bloom_capacity: usize,
    pub recompute_interval_rounds: u64,
}

impl Default for TolerancesSpec {
    fn default() -> Self {
        TolerancesSpec {
            residual_m: 5.0,
            position_m: 10.0,
            max_speed_mps: 50.0,
            qr_window_s: 300,
            witness_window_s: 600,
            slash_threshold: 3,
            range_noise_std_m: 0.0,
            bloom_fp_rate: 0.01,
            bloom_capacity: 4096,
            recompute_interval_rounds: 10,
        }
    }
}

impl TolerancesSpec {
    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            residual_tol_m: self.residual_m,
            position_tol_m: self.position_m,
            max_speed_mps: self.max_speed_mps,
            qr_window_s: self.qr_window_s,
            witness_window_s: self.witness_window_s,
        }
    }
}

/// One participant's time-ordered track; position between samples is
/// linear interpolation.
#[derive(Debug, Clone)]
pub struct MobilityTrace {
    pub participant: String,
    pub samples: Vec<(u64, GeoPoint)>,
}

impl MobilityTrace {
    pub fn position_at(&self, time_ms: u64) -> Option<GeoPoint> {
        let samples = &self.samples;
        if samples.is_empty() {
            return None;
        }
        if time_ms <= samples[0].0 {
            return Some(samples[0].1);
        }
        if time_ms >= samples[samples.len() - 1].0 {
            return Some(samples[samples.len() - 1].1);
        }
        let idx = samples.partition_point(|(t, _)| *t <= time_ms);
        let (t0, p0) = samples[idx - 1];
        let (t1, p1) = samples[idx];
        let alpha = (time_ms - t0) as f64 / (t1 - t0) as f64;
        Some(GeoPoint {
            lat: p0.lat + (p1.lat - p0.lat) * alpha,
            lon: p0.lon + (p1.lon - p0.lon) * alpha,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario invalid:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// A parsed scenario plus its resolved traces.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub traces: BTreeMap<String, MobilityTrace>,
    /// The scenario document as parsed, echoed into reports.
    pub echo: serde_json::Value,
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario: Scenario = serde_json::from_str(&text)?;
    let echo: serde_json::Value = serde_json::from_str(&text)?;
    let traces = resolve_traces(&scenario, path.parent().unwrap_or(Path::new(".")))?;
    let errors = validate(&scenario, &traces);
    if !errors.is_empty() {
        return Err(ScenarioError::Invalid(errors));
    }
    Ok(LoadedScenario {
        scenario,
        traces,
        echo,
    })
}

/// Build from an in-memory scenario with inline traces (for tests).
pub fn load_inline(scenario: Scenario) -> Result<LoadedScenario, ScenarioError> {
    let echo = serde_json::to_value(&scenario).expect("scenario serializes");
    let traces = resolve_traces(&scenario, Path::new("."))?;
    let errors = validate(&scenario, &traces);
    if !errors.is_empty() {
        return Err(ScenarioError::Invalid(errors));
    }
    Ok(LoadedScenario {
        scenario,
        traces,
        echo,
    })
}

fn resolve_traces(
    scenario: &Scenario,
    base: &Path,
) -> Result<BTreeMap<String, MobilityTrace>, ScenarioError> {
    let mut traces: BTreeMap<String, MobilityTrace> = BTreeMap::new();
    let mut push = |participant: &str, t_s: f64, lat: f64, lon: f64| {
        let entry = traces
            .entry(participant.to_string())
            .or_insert_with(|| MobilityTrace {
                participant: participant.to_string(),
                samples: Vec::new(),
            });
        entry
            .samples
            .push(((t_s * 1000.0).round() as u64, GeoPoint { lat, lon }));
    };
    for inline in &scenario.traces.inline {
        for &(t, lat, lon) in &inline.samples {
            push(&inline.participant, t, lat, lon);
        }
    }
    if let Some(file) = &scenario.traces.file {
        let path = base.join(file);
        let text =
            std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("participant,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(ScenarioError::Invalid(vec![format!(
                    "trace line {}: expected participant,timestamp_s,lat,lon",
                    lineno + 1
                )]));
            }
            let parse = |s: &str| -> Result<f64, ScenarioError> {
                s.trim().parse::<f64>().map_err(|e| {
                    ScenarioError::Invalid(vec![format!("trace line {}: {e}", lineno + 1)])
                })
            };
            push(
                fields[0].trim(),
                parse(fields[1])?,
                parse(fields[2])?,
                parse(fields[3])?,
            );
        }
    }
    Ok(traces)
}

/// Every validation error, not just the first.
pub fn validate(scenario: &Scenario, traces: &BTreeMap<String, MobilityTrace>) -> Vec<String> {
    let mut errors = Vec::new();
    if scenario.schema != 1 {
        errors.push(format!("unsupported schema version {}", scenario.schema));
    }
    if let Err(e) = scenario.economics.validate() {
        errors.push(format!("economics: {e}"));
    }
    let poi_ids: BTreeSet<&str> = scenario.pois.iter().map(|p| p.id.as_str()).collect();
    let beacon_ids: BTreeSet<&str> = scenario.beacons.iter().map(|b| b.id.as_str()).collect();
    let participant_names: BTreeSet<&str> = scenario
        .participants
        .iter()
        .map(|p| p.name.as_str())
        .collect();
    let validator_names: BTreeSet<&str> = scenario
        .validators
        .iter()
        .map(|v| v.name.as_str())
        .collect();

    for poi in &scenario.pois {
        if let Err(e) = poi.fence.validate() {
            errors.push(format!("poi {}: {e}", poi.id));
        }
        if poi.questions.is_empty() {
            errors.push(format!("poi {} has no questions", poi.id));
        }
        for q in &poi.questions {
            if let Err(e) = q.validate() {
                errors.push(format!("poi {}: {e}", poi.id));
            }
        }
        for b in &poi.beacons {
            if !beacon_ids.contains(b.as_str()) {
                errors.push(format!("poi {} references unknown beacon {b}", poi.id));
            }
        }
        if poi.mode == ProofMode::Beacon && poi.beacons.len() < 4 {
            errors.push(format!(
                "poi {} uses beacon mode but lists {} beacons (need at least 4)",
                poi.id,
                poi.beacons.len()
            ));
        }
        for kind in &poi.required_social {
            match kind {
                SocialProofKind::ChallengeAnswer if poi.challenge_answer.is_none() => {
                    errors.push(format!(
                        "poi {} requires a challenge answer but configures none",
                        poi.id
                    ))
                }
                SocialProofKind::QrToken if poi.qr_secret.is_none() => errors.push(format!(
                    "poi {} requires qr tokens but configures no secret",
                    poi.id
                )),
                _ => {}
            }
        }
    }
    for beacon in &scenario.beacons {
        if beacon.comm_range_m <= 0.0 {
            errors.push(format!("beacon {}: comm_range must be positive", beacon.id));
        }
        if let Some(op) = &beacon.operator {
            if !validator_names.contains(op.as_str()) {
                errors.push(format!("beacon {} names unknown operator {op}", beacon.id));
            }
        }
    }
    for v in &scenario.validators {
        for poi in &v.served_pois {
            if !poi_ids.contains(poi.as_str()) {
                errors.push(format!("validator {} serves unknown poi {poi}", v.name));
            }
        }
        if v.deposit < scenario.economics.entry_cost + scenario.economics.min_stake {
            errors.push(format!(
                "validator {} deposit {} below entry cost + min stake",
                v.name, v.deposit
            ));
        }
    }
    for p in &scenario.participants {
        if let Some(r) = p.radius_m {
            if r <= 0.0 {
                errors.push(format!("participant {} radius must be positive", p.name));
            }
        }
        for (poi, answers) in &p.answers {
            let Some(spec) = scenario.pois.iter().find(|x| x.id == *poi) else {
                errors.push(format!(
                    "participant {} scripts answers for unknown poi {poi}",
                    p.name
                ));
                continue;
            };
            for (qid, value) in answers {
                let Some(question) = spec.questions.iter().find(|q| q.id == *qid) else {
                    errors.push(format!(
                        "participant {} scripts answer for unknown question {poi}/{qid}",
                        p.name
                    ));
                    continue;
                };
                match parse_answer(value) {
                    Some(answer) => {
                        if crate::crowdsense::check_admissible(question, &answer).is_err() {
                            errors.push(format!(
                                "participant {}: inadmissible scripted answer for {poi}/{qid}",
                                p.name
                            ));
                        }
                    }
                    None => errors.push(format!(
                        "participant {}: unparseable scripted answer for {poi}/{qid}",
                        p.name
                    )),
                }
            }
        }
    }
    let asset_ids: BTreeSet<&str> = scenario.assets.iter().map(|a| a.id.as_str()).collect();
    for asset in &scenario.assets {
        for poi in &asset.pois {
            if !poi_ids.contains(poi.as_str()) {
                errors.push(format!("asset {} references unknown poi {poi}", asset.id));
            }
        }
        if asset.pois.is_empty() {
            errors.push(format!("asset {} lists no pois", asset.id));
        }
        for (key, next) in &asset.branch {
            if !poi_ids.contains(next.as_str()) {
                errors.push(format!(
                    "asset {} branch {key} targets unknown poi {next}",
                    asset.id
                ));
            }
        }
    }
    for a in &scenario.assignments {
        if !asset_ids.contains(a.asset.as_str()) {
            errors.push(format!(
                "assignment {} references unknown asset {}",
                a.id, a.asset
            ));
        }
        if let FilterSpec::Keys { keys } = &a.filter {
            if keys.is_empty() {
                errors.push(format!("assignment {} filter selects nobody", a.id));
            }
            for k in keys {
                if !participant_names.contains(k.as_str()) {
                    errors.push(format!("assignment {} names unknown participant {k}", a.id));
                }
            }
        }
    }
    for map in &scenario.maps {
        if map.pois.is_empty() {
            errors.push(format!("map {} lists no pois", map.id));
        }
        for poi in &map.pois {
            if !poi_ids.contains(poi.as_str()) {
                errors.push(format!("map {} references unknown poi {poi}", map.id));
            }
        }
        if map.kind == crate::aggregate::MapKind::Localized && map.pois.len() != 1 {
            errors.push(format!(
                "localized map {} must bind exactly one poi",
                map.id
            ));
        }
        for f in &map.functions {
            if crate::aggregate::AggregateFunction::parse(f).is_none() {
                errors.push(format!("map {} lists unknown function {f}", map.id));
            }
        }
    }
    let (lat_min, lat_max) = scenario.network.latency_ms;
    if lat_min > lat_max {
        errors.push(format!(
            "network latency range ({lat_min}, {lat_max}) inverted"
        ));
    }
    if !(0.0..1.0).contains(&scenario.network.drop_probability) {
        errors.push("network drop probability outside [0, 1)".into());
    }
    let duration_ms = (scenario.duration_s * 1000.0).round() as u64;
    for (name, trace) in traces {
        if !participant_names.contains(name.as_str()) {
            errors.push(format!("trace references unknown participant {name}"));
            continue;
        }
        let strictly_increasing = trace.samples.windows(2).all(|w| w[0].0 < w[1].0);
        if !strictly_increasing {
            errors.push(format!("trace for {name} has non-increasing timestamps"));
        }
        if trace
            .samples
            .last()
            .map(|(t, _)| *t < duration_ms)
            .unwrap_or(true)
        {
            errors.push(format!(
                "trace for {name} does not cover the scenario duration"
            ));
        }
        for (_, p) in &trace.samples {
            if GeoPoint::new(p.lat, p.lon).is_err() {
                errors.push(format!("trace for {name} carries an invalid coordinate"));
                break;
            }
        }
    }
    for p in &scenario.participants {
        if !traces.contains_key(&p.name) {
            errors.push(format!("participant {} has no mobility trace", p.name));
        }
    }
    errors
}

/// Scripted answers are plain JSON scalars or arrays in the scenario.
pub fn parse_answer(value: &serde_json::Value) -> Option<AnswerValue> {
    match value {
        serde_json::Value::Number(n) => n.as_i64().map(AnswerValue::Integer),
        serde_json::Value::String(s) => Some(AnswerValue::Text(s.clone())),
        serde_json::Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                out.push(item.as_i64()?);
            }
            Some(AnswerValue::Selection(out))
        }
        _ => None,
    }
}
