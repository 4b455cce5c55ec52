//! The crowd-sensing domain model: projects, assets, tasks, assignments,
//! questions, and localization-triggered question dispatch under the
//! arbitrary, sequential and interactive navigation modalities.
//!
//! Triggers are edge-triggered on fence entry: a stationary agent inside
//! a fence produces exactly one trigger per entry, and an answered point
//! of interest re-arms only after the agent exits and re-enters.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::{CanonicalBuf, CanonicalEncode, PublicKey};
use crate::geo::{inside_geofence, GeoPoint, Geofence};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CrowdError {
    #[error("answer not admissible for question {question}: {detail}")]
    InadmissibleAnswer { question: String, detail: String },
    #[error("unknown question {0}")]
    UnknownQuestion(String),
    #[error("participant filter selects nobody")]
    EmptySelection,
    #[error("invalid question definition {id}: {detail}")]
    InvalidQuestion { id: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavigationModality {
    Arbitrary,
    Sequential,
    Interactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Radio,
    Checkbox,
    Likert,
    Textbox,
}

/// An answer option with its numeric coding and token reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOption {
    pub label: String,
    pub value: i64,
    #[serde(default)]
    pub reward: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub kind: QuestionKind,
    pub prompt: String,
    #[serde(default)]
    pub options: Vec<QuestionOption>,
}

impl Question {
    pub fn validate(&self) -> Result<(), CrowdError> {
        let fail = |detail: &str| CrowdError::InvalidQuestion {
            id: self.id.clone(),
            detail: detail.to_string(),
        };
        match self.kind {
            QuestionKind::Radio | QuestionKind::Checkbox => {
                if self.options.len() < 2 {
                    return Err(fail("radio/checkbox need at least 2 options"));
                }
            }
            QuestionKind::Likert => {
                if self.options.is_empty() {
                    return Err(fail("likert needs options"));
                }
                let mut values: Vec<i64> = self.options.iter().map(|o| o.value).collect();
                values.sort_unstable();
                if values.windows(2).any(|w| w[1] != w[0] + 1) {
                    return Err(fail("likert values must form a contiguous integer range"));
                }
            }
            QuestionKind::Textbox => {
                if !self.options.is_empty() {
                    return Err(fail("textbox takes no options"));
                }
            }
        }
        Ok(())
    }

    pub fn option_values(&self) -> BTreeSet<i64> {
        self.options.iter().map(|o| o.value).collect()
    }

    /// Reward attached to the option carrying `value` (0 for textbox).
    pub fn reward_for(&self, answer: &AnswerValue) -> u64 {
        match answer {
            AnswerValue::Integer(v) => self
                .options
                .iter()
                .find(|o| o.value == *v)
                .map(|o| o.reward)
                .unwrap_or(0),
            AnswerValue::Selection(vs) => self
                .options
                .iter()
                .filter(|o| vs.contains(&o.value))
                .map(|o| o.reward)
                .sum(),
            AnswerValue::Text(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerValue {
    Integer(i64),
    Text(String),
    /// Checkbox selections; aggregation sees them as per-option indicators.
    Selection(Vec<i64>),
}

impl AnswerValue {
    /// Numeric coding for aggregation, if the answer has one.
    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            AnswerValue::Integer(v) => Some(*v as f64),
            _ => None,
        }
    }

    /// 0/1 indicator for a checkbox option.
    pub fn indicator(&self, option_value: i64) -> f64 {
        match self {
            AnswerValue::Selection(vs) if vs.contains(&option_value) => 1.0,
            AnswerValue::Integer(v) if *v == option_value => 1.0,
            _ => 0.0,
        }
    }
}

impl CanonicalEncode for AnswerValue {
    fn encode(&self, buf: &mut CanonicalBuf) {
        match self {
            AnswerValue::Integer(v) => {
                buf.put_u8(0);
                buf.put_i64(*v);
            }
            AnswerValue::Text(s) => {
                buf.put_u8(1);
                buf.put_str(s);
            }
            AnswerValue::Selection(vs) => {
                buf.put_u8(2);
                buf.put_u32(vs.len() as u32);
                for v in vs {
                    buf.put_i64(*v);
                }
            }
        }
    }
}

/// A geofenced urban location carrying questions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointOfInterest {
    pub id: String,
    pub name: String,
    pub fence: Geofence,
    pub questions: Vec<Question>,
}

impl PointOfInterest {
    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }
}

/// One collected answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    pub participant: PublicKey,
    pub poi_id: String,
    pub question_id: String,
    pub answer: AnswerValue,
    pub time_ms: u64,
}

impl CanonicalEncode for Response {
    fn encode(&self, buf: &mut CanonicalBuf) {
        buf.put_key(&self.participant);
        buf.put_str(&self.poi_id);
        buf.put_str(&self.question_id);
        self.answer.encode(buf);
        buf.put_u64(self.time_ms);
    }
}

/// A crowd-sensing process: an ordered set of points of interest plus the
/// visiting discipline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Asset {
    pub id: String,
    pub modality: NavigationModality,
    /// Points of interest by id; the order is the sequential order.
    pub poi_order: Vec<String>,
    /// Interactive only: (poi id, answer value) -> next poi id.
    #[serde(default)]
    pub branch_map: BTreeMap<String, String>,
}

impl Asset {
    pub fn branch_key(poi_id: &str, answer: i64) -> String {
        format!("{poi_id}:{answer}")
    }

    pub fn next_after(&self, poi_id: &str, answer: &AnswerValue) -> Option<&String> {
        let value = match answer {
            AnswerValue::Integer(v) => *v,
            _ => return None,
        };
        self.branch_map.get(&Self::branch_key(poi_id, value))
    }
}

/// Stored answers for one task, keyed by (participant, poi, question).
/// A verified revisit supersedes the previous value.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Task {
    pub id: String,
    responses: BTreeMap<(PublicKey, String, String), Response>,
}

/// What happened when a response was recorded, for the aggregation layer.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordOutcome {
    Stored,
    Superseded { previous: AnswerValue },
}

impl Task {
    pub fn new(id: &str) -> Self {
        Task {
            id: id.to_string(),
            responses: BTreeMap::new(),
        }
    }

    /// Store a verified response, superseding any earlier value for the
    /// same (participant, poi, question).
    pub fn record_response(
        &mut self,
        response: Response,
        question: &Question,
    ) -> Result<RecordOutcome, CrowdError> {
        check_admissible(question, &response.answer)?;
        let key = (
            response.participant,
            response.poi_id.clone(),
            response.question_id.clone(),
        );
        match self.responses.insert(key, response) {
            Some(prev) => Ok(RecordOutcome::Superseded {
                previous: prev.answer,
            }),
            None => Ok(RecordOutcome::Stored),
        }
    }

    pub fn responses(&self) -> impl Iterator<Item = &Response> {
        self.responses.values()
    }

    pub fn responses_at(&self, poi_id: &str) -> Vec<&Response> {
        self.responses
            .values()
            .filter(|r| r.poi_id == poi_id)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

pub fn check_admissible(question: &Question, answer: &AnswerValue) -> Result<(), CrowdError> {
    let fail = |detail: String| CrowdError::InadmissibleAnswer {
        question: question.id.clone(),
        detail,
    };
    match (question.kind, answer) {
        (QuestionKind::Radio, AnswerValue::Integer(v))
        | (QuestionKind::Likert, AnswerValue::Integer(v)) => {
            if question.option_values().contains(v) {
                Ok(())
            } else {
                Err(fail(format!("value {v} not among options")))
            }
        }
        (QuestionKind::Checkbox, AnswerValue::Selection(vs)) => {
            if vs.is_empty() {
                return Err(fail("empty selection".into()));
            }
            let admissible = question.option_values();
            match vs.iter().find(|v| !admissible.contains(v)) {
                Some(v) => Err(fail(format!("value {v} not among options"))),
                None => Ok(()),
            }
        }
        (QuestionKind::Textbox, AnswerValue::Text(_)) => Ok(()),
        _ => Err(fail("answer shape does not match question kind".into())),
    }
}

/// Participant selection for an assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantFilter {
    Keys(Vec<PublicKey>),
    Fraction(f64),
}

/// A launched (asset, task, participants) binding.
#[derive(Debug, Clone, Serialize)]
pub struct Assignment {
    pub id: String,
    pub asset_id: String,
    pub task_id: String,
    pub participants: Vec<PublicKey>,
}

/// Resolve a filter against the population and fix the participant set.
pub fn launch_assignment(
    id: &str,
    asset: &Asset,
    task_id: &str,
    filter: &ParticipantFilter,
    population: &[PublicKey],
    rng: &mut impl rand::Rng,
) -> Result<Assignment, CrowdError> {
    let mut participants = match filter {
        ParticipantFilter::Keys(keys) => keys
            .iter()
            .filter(|k| population.contains(k))
            .copied()
            .collect::<Vec<_>>(),
        ParticipantFilter::Fraction(f) => {
            let take = ((population.len() as f64) * f).round() as usize;
            let mut pool: Vec<PublicKey> = population.to_vec();
            pool.sort();
            // Seeded partial Fisher-Yates.
            for i in 0..take.min(pool.len()) {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            pool.truncate(take);
            pool
        }
    };
    participants.sort();
    participants.dedup();
    if participants.is_empty() {
        return Err(CrowdError::EmptySelection);
    }
    Ok(Assignment {
        id: id.to_string(),
        asset_id: asset.id.clone(),
        task_id: task_id.to_string(),
        participants,
    })
}

/// Per-participant progress through one asset. Containment state is
/// tracked per point of interest so triggers stay edge-triggered.
#[derive(Debug, Clone, Default)]
pub struct AssetProgress {
    inside: BTreeSet<String>,
    /// Fired this containment visit (cleared on fence exit).
    triggered: BTreeSet<String>,
    /// Answered this containment visit (cleared on fence exit).
    answered_this_visit: BTreeSet<String>,
    /// Claim submitted, verdict pending.
    pending: BTreeSet<String>,
    /// Sequential cursor into `poi_order`.
    pub seq_cursor: usize,
    /// Interactive: the poi selected by the last branch, if any.
    interactive_target: Option<String>,
    started: bool,
}

impl AssetProgress {
    pub fn is_inside(&self, poi_id: &str) -> bool {
        self.inside.contains(poi_id)
    }

    fn triggerable(&self, asset: &Asset, poi_id: &str) -> bool {
        match asset.modality {
            NavigationModality::Arbitrary => true,
            NavigationModality::Sequential => {
                asset.poi_order.get(self.seq_cursor).map(|p| p.as_str()) == Some(poi_id)
            }
            NavigationModality::Interactive => {
                let target = if self.started {
                    self.interactive_target.as_deref()
                } else {
                    asset.poi_order.first().map(|s| s.as_str())
                };
                target == Some(poi_id)
            }
        }
    }
}

/// Advance containment state for one position sample and return the
/// newly triggered poi ids, in asset order.
pub fn localization_events(
    position: GeoPoint,
    asset: &Asset,
    fences: &BTreeMap<String, Geofence>,
    progress: &mut AssetProgress,
) -> Vec<String> {
    let mut triggered = Vec::new();
    for poi_id in &asset.poi_order {
        let Some(fence) = fences.get(poi_id) else {
            continue;
        };
        let now_inside = inside_geofence(position, fence);
        let was_inside = progress.inside.contains(poi_id);
        if was_inside && !now_inside {
            // Exit re-arms the fence.
            progress.inside.remove(poi_id);
            progress.triggered.remove(poi_id);
            progress.answered_this_visit.remove(poi_id);
        } else if !was_inside && now_inside {
            progress.inside.insert(poi_id.clone());
        }
        if now_inside
            && progress.triggerable(asset, poi_id)
            && !progress.triggered.contains(poi_id)
            && !progress.answered_this_visit.contains(poi_id)
            && !progress.pending.contains(poi_id)
        {
            progress.triggered.insert(poi_id.clone());
            triggered.push(poi_id.clone());
        }
    }
    triggered
}

/// Mark a triggered poi as pending claim verification.
pub fn mark_pending(progress: &mut AssetProgress, poi_id: &str) {
    progress.pending.insert(poi_id.to_string());
}

/// Claim accepted: record the visit and advance the modality state.
pub fn on_claim_accepted(
    progress: &mut AssetProgress,
    asset: &Asset,
    poi_id: &str,
    answer: &AnswerValue,
) {
    progress.pending.remove(poi_id);
    progress.answered_this_visit.insert(poi_id.to_string());
    progress.started = true;
    match asset.modality {
        NavigationModality::Sequential => {
            if asset.poi_order.get(progress.seq_cursor).map(|p| p.as_str()) == Some(poi_id) {
                progress.seq_cursor += 1;
            }
        }
        NavigationModality::Interactive => {
            // A missing branch ends the asset.
            progress.interactive_target = asset.next_after(poi_id, answer).cloned();
        }
        NavigationModality::Arbitrary => {}
    }
}

/// Claim rejected: the poi stays armed-but-silent until exit and re-entry.
pub fn on_claim_rejected(progress: &mut AssetProgress, poi_id: &str) {
    progress.pending.remove(poi_id);
}

/// A crowd-sensing project: the poi pool plus assets, tasks, assignments.
#[derive(Debug, Clone, Default)]
pub struct Project {
    pub id: String,
    pub pois: BTreeMap<String, PointOfInterest>,
    pub assets: BTreeMap<String, Asset>,
    pub tasks: BTreeMap<String, Task>,
    pub assignments: Vec<Assignment>,
}

impl Project {
    /// Every assignment must reference an existing asset and task.
    pub fn validate(&self) -> Result<(), String> {
        for a in &self.assignments {
            if !self.assets.contains_key(&a.asset_id) {
                return Err(format!(
                    "assignment {} references unknown asset {}",
                    a.id, a.asset_id
                ));
            }
            if !self.tasks.contains_key(&a.task_id) {
                return Err(format!(
                    "assignment {} references unknown task {}",
                    a.id, a.task_id
                ));
            }
        }
        for asset in self.assets.values() {
            for poi in &asset.poi_order {
                if !self.pois.contains_key(poi) {
                    return Err(format!("asset {} references unknown poi {}", asset.id, poi));
                }
            }
        }
        for poi in self.pois.values() {
            if poi.questions.is_empty() {
                return Err(format!("poi {} has no questions", poi.id));
            }
            for q in &poi.questions {
                q.validate().map_err(|e| e.to_string())?;
            }
            poi.fence.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use crate::geo::from_tangent_plane;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn key(n: u64) -> PublicKey {
        KeyPair::derive(n, "participant:test").public()
    }

    fn likert(id: &str, lo: i64, hi: i64) -> Question {
        Question {
            id: id.into(),
            kind: QuestionKind::Likert,
            prompt: "rate".into(),
            options: (lo..=hi)
                .map(|v| QuestionOption {
                    label: format!("{v}"),
                    value: v,
                    reward: 1,
                })
                .collect(),
        }
    }

    fn two_poi_setup() -> (Asset, BTreeMap<String, Geofence>, GeoPoint) {
        let origin = GeoPoint {
            lat: 47.3769,
            lon: 8.5417,
        };
        let mut fences = BTreeMap::new();
        fences.insert(
            "p1".to_string(),
            Geofence::circle(from_tangent_plane(origin, 0.0, 0.0), 50.0).unwrap(),
        );
        fences.insert(
            "p2".to_string(),
            Geofence::circle(from_tangent_plane(origin, 500.0, 0.0), 50.0).unwrap(),
        );
        let asset = Asset {
            id: "a".into(),
            modality: NavigationModality::Sequential,
            poi_order: vec!["p1".into(), "p2".into()],
            branch_map: BTreeMap::new(),
        };
        (asset, fences, origin)
    }

    #[test]
    fn sequential_blocks_out_of_order_trigger() {
        let (asset, fences, origin) = two_poi_setup();
        let mut progress = AssetProgress::default();
        // Standing inside poi 2 with poi 1 unanswered: nothing fires.
        let inside_p2 = from_tangent_plane(origin, 500.0, 0.0);
        assert!(localization_events(inside_p2, &asset, &fences, &mut progress).is_empty());
        // Walk to poi 1: fires.
        let inside_p1 = from_tangent_plane(origin, 0.0, 0.0);
        assert_eq!(
            localization_events(inside_p1, &asset, &fences, &mut progress),
            vec!["p1"]
        );
    }

    #[test]
    fn arbitrary_triggers_on_first_entry_only() {
        let (mut asset, fences, origin) = two_poi_setup();
        asset.modality = NavigationModality::Arbitrary;
        let mut progress = AssetProgress::default();
        let inside_p1 = from_tangent_plane(origin, 10.0, 0.0);
        assert_eq!(
            localization_events(inside_p1, &asset, &fences, &mut progress),
            vec!["p1"]
        );
        // Stationary: no second trigger.
        assert!(localization_events(inside_p1, &asset, &fences, &mut progress).is_empty());
        // Exit and re-enter: fires again.
        let outside = from_tangent_plane(origin, 200.0, 0.0);
        assert!(localization_events(outside, &asset, &fences, &mut progress).is_empty());
        assert_eq!(
            localization_events(inside_p1, &asset, &fences, &mut progress),
            vec!["p1"]
        );
    }

    #[test]
    fn interactive_follows_branch_map() {
        let origin = GeoPoint {
            lat: 47.0,
            lon: 8.0,
        };
        let mut fences = BTreeMap::new();
        for (id, x) in [("a", 0.0), ("b", 500.0), ("c", 1000.0)] {
            fences.insert(
                id.to_string(),
                Geofence::circle(from_tangent_plane(origin, x, 0.0), 50.0).unwrap(),
            );
        }
        let mut branch_map = BTreeMap::new();
        branch_map.insert(Asset::branch_key("a", 1), "c".to_string());
        let asset = Asset {
            id: "i".into(),
            modality: NavigationModality::Interactive,
            poi_order: vec!["a".into(), "b".into(), "c".into()],
            branch_map,
        };
        let mut progress = AssetProgress::default();
        let at = |x: f64| from_tangent_plane(origin, x, 0.0);
        assert_eq!(
            localization_events(at(0.0), &asset, &fences, &mut progress),
            vec!["a"]
        );
        on_claim_accepted(&mut progress, &asset, "a", &AnswerValue::Integer(1));
        // Branch selected c; entering b stays silent.
        assert!(localization_events(at(500.0), &asset, &fences, &mut progress).is_empty());
        assert_eq!(
            localization_events(at(1000.0), &asset, &fences, &mut progress),
            vec!["c"]
        );
        // Missing branch after c: end of asset, nothing further triggers.
        on_claim_accepted(&mut progress, &asset, "c", &AnswerValue::Integer(1));
        assert!(localization_events(at(0.0), &asset, &fences, &mut progress).is_empty());
    }

    #[test]
    fn likert_admissibility() {
        let q = likert("q", 1, 5);
        let mut task = Task::new("t");
        let ok = Response {
            participant: key(1),
            poi_id: "p".into(),
            question_id: "q".into(),
            answer: AnswerValue::Integer(4),
            time_ms: 10,
        };
        assert_eq!(task.record_response(ok, &q).unwrap(), RecordOutcome::Stored);
        let bad = Response {
            participant: key(1),
            poi_id: "p".into(),
            question_id: "q".into(),
            answer: AnswerValue::Integer(0),
            time_ms: 20,
        };
        assert!(matches!(
            task.record_response(bad, &q),
            Err(CrowdError::InadmissibleAnswer { .. })
        ));
    }

    #[test]
    fn revisit_supersedes_and_reports_previous() {
        let q = likert("q", 1, 5);
        let mut task = Task::new("t");
        let mk = |v: i64, t: u64| Response {
            participant: key(1),
            poi_id: "p".into(),
            question_id: "q".into(),
            answer: AnswerValue::Integer(v),
            time_ms: t,
        };
        task.record_response(mk(3, 10), &q).unwrap();
        let outcome = task.record_response(mk(5, 20), &q).unwrap();
        assert_eq!(
            outcome,
            RecordOutcome::Superseded {
                previous: AnswerValue::Integer(3)
            }
        );
        assert_eq!(task.len(), 1);
        assert_eq!(
            task.responses().next().unwrap().answer,
            AnswerValue::Integer(5)
        );
    }

    #[test]
    fn launch_whole_population_and_fraction() {
        let population: Vec<PublicKey> = (0..6).map(key).collect();
        let asset = Asset {
            id: "a".into(),
            modality: NavigationModality::Arbitrary,
            poi_order: vec![],
            branch_map: BTreeMap::new(),
        };
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let all = launch_assignment(
            "x",
            &asset,
            "t",
            &ParticipantFilter::Keys(population.clone()),
            &population,
            &mut rng,
        )
        .unwrap();
        assert_eq!(all.participants.len(), 6);

        let mut rng_a = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let mut rng_b = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let half_a = launch_assignment(
            "h",
            &asset,
            "t",
            &ParticipantFilter::Fraction(0.5),
            &population,
            &mut rng_a,
        )
        .unwrap();
        let half_b = launch_assignment(
            "h",
            &asset,
            "t",
            &ParticipantFilter::Fraction(0.5),
            &population,
            &mut rng_b,
        )
        .unwrap();
        assert_eq!(half_a.participants.len(), 3);
        assert_eq!(half_a.participants, half_b.participants);

        let err = launch_assignment(
            "e",
            &asset,
            "t",
            &ParticipantFilter::Keys(vec![]),
            &population,
            &mut rng,
        );
        assert_eq!(err.unwrap_err(), CrowdError::EmptySelection);
    }

    proptest! {
        /// Over random walks, the accepted sequence for a sequential asset
        /// is always a prefix of the asset order.
        #[test]
        fn sequential_accepts_form_a_prefix(steps in proptest::collection::vec(0usize..5, 1..60)) {
            let origin = GeoPoint { lat: 47.0, lon: 8.0 };
            let mut fences = BTreeMap::new();
            let ids = ["s0", "s1", "s2", "s3"];
            for (i, id) in ids.iter().enumerate() {
                fences.insert(
                    id.to_string(),
                    Geofence::circle(from_tangent_plane(origin, i as f64 * 400.0, 0.0), 50.0).unwrap(),
                );
            }
            let asset = Asset {
                id: "seq".into(),
                modality: NavigationModality::Sequential,
                poi_order: ids.iter().map(|s| s.to_string()).collect(),
                branch_map: BTreeMap::new(),
            };
            let mut progress = AssetProgress::default();
            let mut accepted = Vec::new();
            for step in steps {
                // Positions 0..3 visit poi cells, 4 is in between fences.
                let x = if step < 4 { step as f64 * 400.0 } else { 200.0 };
                let triggered = localization_events(
                    from_tangent_plane(origin, x, 0.0),
                    &asset,
                    &fences,
                    &mut progress,
                );
                for poi in triggered {
                    on_claim_accepted(&mut progress, &asset, &poi, &AnswerValue::Integer(1));
                    accepted.push(poi);
                }
            }
            let expected: Vec<String> = asset.poi_order[..accepted.len()].to_vec();
            prop_assert_eq!(accepted, expected);
        }

        /// A supersession chain keeps exactly one live response.
        #[test]
        fn one_live_response_per_key(values in proptest::collection::vec(1i64..=5, 1..20)) {
            let q = likert("q", 1, 5);
            let mut task = Task::new("t");
            for (i, v) in values.iter().enumerate() {
                let r = Response {
                    participant: key(1),
                    poi_id: "p".into(),
                    question_id: "q".into(),
                    answer: AnswerValue::Integer(*v),
                    time_ms: i as u64,
                };
                task.record_response(r, &q).unwrap();
            }
            prop_assert_eq!(task.len(), 1);
            let live = task.responses().next().unwrap();
            prop_assert_eq!(live.answer.clone(), AnswerValue::Integer(*values.last().unwrap()));
        }
    }
}
