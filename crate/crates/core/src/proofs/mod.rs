//! Witness-presence claims and their local verification.
//!
//! A claim bundles a location proof (GPS-oracle or signed beacon ranging
//! receipts), optional social proofs and the answer payload, all covered
//! by the claimant signature. Beacon-mode verification searches for a
//! consistent receipt subset: at least four receipts whose trilateration
//! residual stays under tolerance after excluding at most `f` outliers,
//! with `n >= 3f + 1`. Clock faults appear as fixed per-beacon offsets
//! corrupting time-of-flight ranges.

pub mod trilateration;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crowdsense::Response;
use crate::crypto::{sha256, CanonicalBuf, CanonicalEncode, KeyPair, PublicKey, SignatureBytes};
use crate::geo::{haversine_distance, inside_geofence, GeoPoint, Geofence};

pub use trilateration::{trilaterate, Fix, TrilaterationError};

/// Signal propagation speed used to turn clock offsets into range error.
pub const SPEED_OF_LIGHT_MPS: f64 = 3e8;

/// Verification thresholds. All scenario-configurable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub residual_tol_m: f64,
    pub position_tol_m: f64,
    pub max_speed_mps: f64,
    pub qr_window_s: u64,
    pub witness_window_s: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            residual_tol_m: 5.0,
            position_tol_m: 10.0,
            max_speed_mps: 50.0,
            qr_window_s: 300,
            witness_window_s: 600,
        }
    }
}

/// Machine-readable rejection reasons.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadClaimantSignature,
    Replay,
    MalformedClaim,
    UnknownBeacon,
    BadReceiptSignature,
    InsufficientConsistentReceipts,
    OutsideFence,
    PositionMismatch,
    Teleport,
    SocialNotConfigured,
    WrongChallengeAnswer,
    StaleToken,
    BadToken,
    BadWitnessSignature,
    SelfWitness,
    WitnessNotPresent,
    MissingSocialProof,
    UnservedPoi,
    InsufficientStake,
    InsufficientFee,
}

impl RejectReason {
    pub fn label(&self) -> &'static str {
        match self {
            RejectReason::BadClaimantSignature => "bad_claimant_signature",
            RejectReason::Replay => "replay",
            RejectReason::MalformedClaim => "malformed_claim",
            RejectReason::UnknownBeacon => "unknown_beacon",
            RejectReason::BadReceiptSignature => "bad_receipt_signature",
            RejectReason::InsufficientConsistentReceipts => "insufficient_consistent_receipts",
            RejectReason::OutsideFence => "outside_fence",
            RejectReason::PositionMismatch => "position_mismatch",
            RejectReason::Teleport => "teleport",
            RejectReason::SocialNotConfigured => "social_not_configured",
            RejectReason::WrongChallengeAnswer => "wrong_challenge_answer",
            RejectReason::StaleToken => "stale_token",
            RejectReason::BadToken => "bad_token",
            RejectReason::BadWitnessSignature => "bad_witness_signature",
            RejectReason::SelfWitness => "self_witness",
            RejectReason::WitnessNotPresent => "witness_not_present",
            RejectReason::MissingSocialProof => "missing_social_proof",
            RejectReason::UnservedPoi => "unserved_poi",
            RejectReason::InsufficientStake => "insufficient_stake",
            RejectReason::InsufficientFee => "insufficient_fee",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A ranging beacon (zone anchor) as seen by verifiers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Beacon {
    pub id: String,
    pub position: GeoPoint,
    pub comm_range_m: f64,
    /// Local clock offset in seconds; corrupts ranges when `byzantine`.
    pub clock_offset_s: f64,
    pub byzantine: bool,
    pub key: PublicKey,
    /// Validator operating this beacon; the slashing target.
    pub operator: Option<PublicKey>,
}

/// A beacon together with its signing key, for the simulated radio side.
#[derive(Debug, Clone)]
pub struct BeaconStation {
    pub info: Beacon,
    keys: KeyPair,
}

impl BeaconStation {
    pub fn new(
        seed: u64,
        id: &str,
        position: GeoPoint,
        comm_range_m: f64,
        clock_offset_s: f64,
        byzantine: bool,
        operator: Option<PublicKey>,
    ) -> Self {
        let keys = KeyPair::derive(seed, &format!("beacon:{id}"));
        BeaconStation {
            info: Beacon {
                id: id.to_string(),
                position,
                comm_range_m,
                clock_offset_s,
                byzantine,
                key: keys.public(),
                operator,
            },
            keys,
        }
    }

    pub fn sign_receipt(
        &self,
        measured_distance_m: f64,
        beacon_timestamp_ms: u64,
    ) -> RangingReceipt {
        let mut receipt = RangingReceipt {
            beacon_id: self.info.id.clone(),
            measured_distance_m,
            beacon_timestamp_ms,
            signature: SignatureBytes([0u8; 64]),
        };
        receipt.signature = self.keys.sign(&receipt.signed_bytes());
        receipt
    }
}

/// A signed range measurement from one beacon.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangingReceipt {
    pub beacon_id: String,
    pub measured_distance_m: f64,
    pub beacon_timestamp_ms: u64,
    pub signature: SignatureBytes,
}

impl RangingReceipt {
    fn signed_bytes(&self) -> Vec<u8> {
        let mut buf = CanonicalBuf::new();
        buf.put_str(&self.beacon_id);
        buf.put_f64(self.measured_distance_m);
        buf.put_u64(self.beacon_timestamp_ms);
        buf.as_bytes().to_vec()
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.verify(&self.signed_bytes(), &self.signature).is_ok()
    }
}

impl CanonicalEncode for RangingReceipt {
    fn encode(&self, buf: &mut CanonicalBuf) {
        buf.put_str(&self.beacon_id);
        buf.put_f64(self.measured_distance_m);
        buf.put_u64(self.beacon_timestamp_ms);
        buf.put_signature(&self.signature);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofMode {
    GpsOracle,
    Beacon,
}

/// The location half of a witness claim.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationClaim {
    pub claimant: PublicKey,
    pub claimed_position: GeoPoint,
    pub time_ms: u64,
    pub receipts: Vec<RangingReceipt>,
    pub mode: ProofMode,
}

impl CanonicalEncode for LocationClaim {
    fn encode(&self, buf: &mut CanonicalBuf) {
        buf.put_key(&self.claimant);
        buf.put_f64(self.claimed_position.lat);
        buf.put_f64(self.claimed_position.lon);
        buf.put_u64(self.time_ms);
        buf.put_u32(self.receipts.len() as u32);
        for r in &self.receipts {
            r.encode(buf);
        }
        buf.put_u8(match self.mode {
            ProofMode::GpsOracle => 0,
            ProofMode::Beacon => 1,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocialProofKind {
    ChallengeAnswer,
    QrToken,
    PeerWitness,
}

/// Non-geometric presence evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocialProof {
    pub kind: SocialProofKind,
    pub payload: String,
    pub witness: Option<PublicKey>,
}

impl CanonicalEncode for SocialProof {
    fn encode(&self, buf: &mut CanonicalBuf) {
        buf.put_u8(match self.kind {
            SocialProofKind::ChallengeAnswer => 0,
            SocialProofKind::QrToken => 1,
            SocialProofKind::PeerWitness => 2,
        });
        buf.put_str(&self.payload);
        match &self.witness {
            Some(k) => {
                buf.put_u8(1);
                buf.put_key(k);
            }
            None => buf.put_u8(0),
        }
    }
}

/// Per-poi social proof configuration from the scenario.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SocialRules {
    pub challenge_answer: Option<String>,
    pub qr_secret: Option<String>,
    #[serde(default)]
    pub required: Vec<SocialProofKind>,
}

/// The unit verified by consensus: location proof + social proofs +
/// answer, signed by the claimant. The nonce guards against replay.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessClaim {
    pub location: LocationClaim,
    pub social: Vec<SocialProof>,
    pub poi_id: String,
    pub response: Response,
    pub nonce: u64,
    pub signature: SignatureBytes,
}

impl WitnessClaim {
    fn signed_bytes(
        location: &LocationClaim,
        social: &[SocialProof],
        poi_id: &str,
        response: &Response,
        nonce: u64,
    ) -> Vec<u8> {
        let mut buf = CanonicalBuf::new();
        location.encode(&mut buf);
        buf.put_u32(social.len() as u32);
        for s in social {
            s.encode(&mut buf);
        }
        buf.put_str(poi_id);
        response.encode(&mut buf);
        buf.put_u64(nonce);
        buf.as_bytes().to_vec()
    }

    pub fn build(
        claimant: &KeyPair,
        location: LocationClaim,
        social: Vec<SocialProof>,
        poi_id: &str,
        response: Response,
        nonce: u64,
    ) -> Self {
        let bytes = Self::signed_bytes(&location, &social, poi_id, &response, nonce);
        let signature = claimant.sign(&bytes);
        WitnessClaim {
            location,
            social,
            poi_id: poi_id.to_string(),
            response,
            nonce,
            signature,
        }
    }

    pub fn verify_signature(&self) -> bool {
        let bytes = Self::signed_bytes(
            &self.location,
            &self.social,
            &self.poi_id,
            &self.response,
            self.nonce,
        );
        self.location
            .claimant
            .verify(&bytes, &self.signature)
            .is_ok()
    }
}

impl CanonicalEncode for WitnessClaim {
    fn encode(&self, buf: &mut CanonicalBuf) {
        self.location.encode(buf);
        buf.put_u32(self.social.len() as u32);
        for s in &self.social {
            s.encode(buf);
        }
        buf.put_str(&self.poi_id);
        self.response.encode(buf);
        buf.put_u64(self.nonce);
        buf.put_signature(&self.signature);
    }
}

/// Registry view needed by behavior and peer-witness checks. Implemented
/// by the consensus ledger; tests provide fixtures.
pub trait PresenceView {
    /// Latest accepted (position, time) of `participant` at or before `time_ms`.
    fn last_accepted(&self, participant: &PublicKey, time_ms: u64) -> Option<(GeoPoint, u64)>;

    /// Whether `participant` has an accepted claim at `poi_id` within
    /// `window_ms` before (or at) `time_ms`.
    fn accepted_at_poi_within(
        &self,
        participant: &PublicKey,
        poi_id: &str,
        time_ms: u64,
        window_ms: u64,
    ) -> bool;
}

/// An empty registry: first-ever claims, no witnesses.
pub struct NoPresence;

impl PresenceView for NoPresence {
    fn last_accepted(&self, _: &PublicKey, _: u64) -> Option<(GeoPoint, u64)> {
        None
    }
    fn accepted_at_poi_within(&self, _: &PublicKey, _: &str, _: u64, _: u64) -> bool {
        false
    }
}

fn gaussian(rng: &mut impl rand::Rng) -> f64 {
    // Box-Muller; u1 shifted into (0, 1].
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Simulate ranging: beacons in communication range answer with signed
/// receipts. Honest ranges carry Gaussian noise; Byzantine beacons add
/// `clock_offset_s * c` of drift-induced error on top.
pub fn measure_ranges(
    true_position: GeoPoint,
    stations: &[BeaconStation],
    time_ms: u64,
    noise_std_m: f64,
    rng: &mut impl rand::Rng,
) -> Vec<RangingReceipt> {
    let mut receipts = Vec::new();
    for station in stations {
        let info = &station.info;
        let true_distance = haversine_distance(true_position, info.position);
        if true_distance > info.comm_range_m {
            continue;
        }
        let noise = if noise_std_m > 0.0 {
            gaussian(rng) * noise_std_m
        } else {
            0.0
        };
        let corruption = if info.byzantine {
            info.clock_offset_s * SPEED_OF_LIGHT_MPS
        } else {
            0.0
        };
        let measured = (true_distance + noise + corruption).max(0.0);
        let beacon_timestamp =
            (time_ms as i64 + (info.clock_offset_s * 1000.0) as i64).max(0) as u64;
        receipts.push(station.sign_receipt(measured, beacon_timestamp));
    }
    receipts
}

/// An accepted location with its supporting evidence summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocationAcceptance {
    pub solved_position: GeoPoint,
    pub residual_m: f64,
    /// Beacons whose receipts were excluded as outliers.
    pub excluded_beacons: Vec<String>,
}

/// Lexicographic k-combinations of 0..n.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if k > n {
        return vec![];
    }
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        out.push(combo.clone());
        // Advance to next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

/// Verify the location half of a claim against the poi fence.
///
/// GPS-oracle mode trusts the claimed position and only checks fence
/// containment. Beacon mode demands verified receipt signatures and a
/// consistent subset: at least 4 receipts with trilateration residual
/// within tolerance after excluding at most `f` outliers, where the
/// receipt count satisfies `n >= 3f + 1`; the solved position must fall
/// inside the fence and within `position_tol_m` of the claim.
pub fn verify_location_claim(
    claim: &LocationClaim,
    fence: &Geofence,
    beacons: &BTreeMap<String, Beacon>,
    ignored_beacons: &[String],
    cfg: &VerifyConfig,
) -> Result<LocationAcceptance, RejectReason> {
    match claim.mode {
        ProofMode::GpsOracle => {
            if !claim.receipts.is_empty() {
                return Err(RejectReason::MalformedClaim);
            }
            if !inside_geofence(claim.claimed_position, fence) {
                return Err(RejectReason::OutsideFence);
            }
            Ok(LocationAcceptance {
                solved_position: claim.claimed_position,
                residual_m: 0.0,
                excluded_beacons: Vec::new(),
            })
        }
        ProofMode::Beacon => {
            if claim.receipts.len() < 4 {
                return Err(RejectReason::MalformedClaim);
            }
            let mut usable: Vec<&RangingReceipt> = Vec::new();
            for receipt in &claim.receipts {
                let beacon = beacons
                    .get(&receipt.beacon_id)
                    .ok_or(RejectReason::UnknownBeacon)?;
                if !receipt.verify_signature(&beacon.key) {
                    return Err(RejectReason::BadReceiptSignature);
                }
                if ignored_beacons.contains(&receipt.beacon_id) {
                    continue;
                }
                usable.push(receipt);
            }
            let n = usable.len();
            if n < 4 {
                return Err(RejectReason::InsufficientConsistentReceipts);
            }
            // Largest tolerable outlier count: quorum n >= 3f + 1 and a
            // remaining subset of at least 4 receipts.
            let f_max = ((n - 1) / 3).min(n - 4);
            let mut accepted: Option<(Fix, Vec<usize>)> = None;
            'search: for f in 0..=f_max {
                let mut best_for_f: Option<(Fix, Vec<usize>)> = None;
                for excluded in combinations(n, f) {
                    let subset: Vec<(GeoPoint, f64)> = usable
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| !excluded.contains(i))
                        .map(|(_, r)| (beacons[&r.beacon_id].position, r.measured_distance_m))
                        .collect();
                    let Ok(fix) = trilaterate(&subset) else {
                        continue;
                    };
                    if fix.residual_m <= cfg.residual_tol_m {
                        let better = match &best_for_f {
                            Some((cur, _)) => fix.residual_m < cur.residual_m,
                            None => true,
                        };
                        if better {
                            best_for_f = Some((fix, excluded));
                        }
                    }
                }
                if let Some(found) = best_for_f {
                    accepted = Some(found);
                    break 'search;
                }
            }
            let Some((fix, excluded)) = accepted else {
                return Err(RejectReason::InsufficientConsistentReceipts);
            };
            if !inside_geofence(fix.position, fence) {
                return Err(RejectReason::OutsideFence);
            }
            if haversine_distance(fix.position, claim.claimed_position) > cfg.position_tol_m {
                return Err(RejectReason::PositionMismatch);
            }
            Ok(LocationAcceptance {
                solved_position: fix.position,
                residual_m: fix.residual_m,
                excluded_beacons: excluded
                    .into_iter()
                    .map(|i| usable[i].beacon_id.clone())
                    .collect(),
            })
        }
    }
}

/// Plausibility check against prior verified movement: reject when the
/// implied speed from the last verified position exceeds the limit.
pub fn check_behavior_over_time(
    history: &[(GeoPoint, u64)],
    new_position: GeoPoint,
    new_time_ms: u64,
    cfg: &VerifyConfig,
) -> Result<(), RejectReason> {
    let Some(&(last_position, last_time_ms)) = history.last() else {
        return Ok(());
    };
    let distance = haversine_distance(last_position, new_position);
    let dt_s = (new_time_ms.abs_diff(last_time_ms)) as f64 / 1000.0;
    if dt_s == 0.0 {
        if distance > 0.0 {
            return Err(RejectReason::Teleport);
        }
        return Ok(());
    }
    if distance / dt_s > cfg.max_speed_mps {
        return Err(RejectReason::Teleport);
    }
    Ok(())
}

/// The rotating QR token for a poi secret and time window.
pub fn qr_token(secret: &str, window: u64) -> String {
    let mut buf = CanonicalBuf::new();
    buf.put_str("qr-token");
    buf.put_str(secret);
    buf.put_u64(window);
    sha256(buf.as_bytes()).to_hex()
}

fn peer_witness_bytes(claimant: &PublicKey, poi_id: &str, time_ms: u64) -> Vec<u8> {
    let mut buf = CanonicalBuf::new();
    buf.put_str("peer-witness");
    buf.put_key(claimant);
    buf.put_str(poi_id);
    buf.put_u64(time_ms);
    buf.as_bytes().to_vec()
}

/// Witness-side constructor: testify that `claimant` is present at the poi.
pub fn make_peer_witness(
    witness: &KeyPair,
    claimant: &PublicKey,
    poi_id: &str,
    time_ms: u64,
) -> SocialProof {
    let sig = witness.sign(&peer_witness_bytes(claimant, poi_id, time_ms));
    SocialProof {
        kind: SocialProofKind::PeerWitness,
        payload: sig.to_hex(),
        witness: Some(witness.public()),
    }
}

/// Verify one social proof against the poi configuration and the
/// presence registry.
pub fn verify_social_proof(
    proof: &SocialProof,
    rules: &SocialRules,
    claimant: &PublicKey,
    poi_id: &str,
    claim_time_ms: u64,
    presence: &impl PresenceView,
    cfg: &VerifyConfig,
) -> Result<(), RejectReason> {
    match proof.kind {
        SocialProofKind::ChallengeAnswer => {
            let Some(expected) = &rules.challenge_answer else {
                return Err(RejectReason::SocialNotConfigured);
            };
            let normalize = |s: &str| s.trim().to_lowercase();
            if normalize(&proof.payload) == normalize(expected) {
                Ok(())
            } else {
                Err(RejectReason::WrongChallengeAnswer)
            }
        }
        SocialProofKind::QrToken => {
            let Some(secret) = &rules.qr_secret else {
                return Err(RejectReason::SocialNotConfigured);
            };
            let window = (claim_time_ms / 1000) / cfg.qr_window_s.max(1);
            if proof.payload == qr_token(secret, window) {
                return Ok(());
            }
            // Distinguish an outdated rotation from garbage.
            for age in 1..=4u64 {
                if window >= age && proof.payload == qr_token(secret, window - age) {
                    return Err(RejectReason::StaleToken);
                }
            }
            Err(RejectReason::BadToken)
        }
        SocialProofKind::PeerWitness => {
            let Some(witness) = &proof.witness else {
                return Err(RejectReason::BadWitnessSignature);
            };
            if witness == claimant {
                return Err(RejectReason::SelfWitness);
            }
            let Ok(sig) = SignatureBytes::from_hex(&proof.payload) else {
                return Err(RejectReason::BadWitnessSignature);
            };
            if witness
                .verify(&peer_witness_bytes(claimant, poi_id, claim_time_ms), &sig)
                .is_err()
            {
                return Err(RejectReason::BadWitnessSignature);
            }
            let window_ms = cfg.witness_window_s * 1000;
            if !presence.accepted_at_poi_within(witness, poi_id, claim_time_ms, window_ms) {
                return Err(RejectReason::WitnessNotPresent);
            }
            Ok(())
        }
    }
}
