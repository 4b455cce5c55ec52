//! The consensus network: staked validators verify witness claims,
//! produce hash-chained blocks, enforce slashing and run the
//! entry-cost / existence-cost / exit-penalty token economy.
//!
//! The chain is fork-free with one deterministic producer per height,
//! drawn stake-weighted from a digest of (seed, height). Block validity
//! is the rule triple (signature against the validator set, minimum
//! stake, no slashing condition), never a hash-difficulty puzzle.
//! Verdicts enter blocks in (claim time, claimant key) order, so
//! concurrent verification can never change the chain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crowdsense::Question;
use crate::crypto::{
    sha256, CanonicalBuf, CanonicalEncode, Digest, KeyPair, PublicKey, SignatureBytes,
};
use crate::geo::{GeoPoint, Geofence};
use crate::proofs::{
    check_behavior_over_time, verify_location_claim, verify_social_proof, Beacon, PresenceView,
    ProofMode, RejectReason, SocialRules, VerifyConfig, WitnessClaim,
};

pub type TokenAmount = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorRole {
    Location,
    Social,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorStatus {
    Active,
    Exited,
    Slashed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Validator {
    pub key: PublicKey,
    pub stake: TokenAmount,
    pub role: ValidatorRole,
    #[serde(default)]
    pub served_pois: BTreeSet<String>,
    pub status: ValidatorStatus,
}

/// The crypto-economic knobs: one-time join burn, per-epoch participation
/// fee and the violation burn fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EconomicsConfig {
    pub entry_cost: TokenAmount,
    pub existence_cost: TokenAmount,
    pub exit_penalty_fraction: f64,
    pub claim_fee: TokenAmount,
    pub block_reward: TokenAmount,
    pub min_stake: TokenAmount,
    pub epoch_length: u64,
}

impl Default for EconomicsConfig {
    fn default() -> Self {
        EconomicsConfig {
            entry_cost: 10,
            existence_cost: 0,
            exit_penalty_fraction: 0.5,
            claim_fee: 1,
            block_reward: 2,
            min_stake: 100,
            epoch_length: 100,
        }
    }
}

impl EconomicsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.exit_penalty_fraction > 0.0 && self.exit_penalty_fraction <= 1.0) {
            return Err(format!(
                "exit_penalty_fraction {} outside (0, 1]",
                self.exit_penalty_fraction
            ));
        }
        if self.epoch_length == 0 {
            return Err("epoch_length must be positive".into());
        }
        Ok(())
    }
}

/// Everything a verifier needs to re-check a chain from its export:
/// the poi verification data, beacon roster, genesis validator set and
/// participant starting balances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainContext {
    pub seed: u64,
    pub economics: EconomicsConfig,
    pub verify_cfg: VerifyConfig,
    pub slash_threshold: u32,
    pub genesis_validators: Vec<GenesisValidator>,
    pub initial_balances: BTreeMap<PublicKey, TokenAmount>,
    pub beacons: BTreeMap<String, Beacon>,
    pub pois: BTreeMap<String, PoiVerifyInfo>,
    /// Per-participant localization radius overriding circle fences.
    #[serde(default)]
    pub participant_radii: BTreeMap<PublicKey, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenesisValidator {
    pub key: PublicKey,
    pub deposit: TokenAmount,
    pub role: ValidatorRole,
    #[serde(default)]
    pub served_pois: BTreeSet<String>,
}

/// Consensus-relevant poi data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoiVerifyInfo {
    pub fence: Geofence,
    pub mode: ProofMode,
    pub social: SocialRules,
    pub questions: Vec<Question>,
    #[serde(default)]
    pub beacon_ids: Vec<String>,
}

impl ChainContext {
    /// The fence used for triggering and verification: the poi fence,
    /// with the circle radius overridden by the participant's own
    /// localization radius when one is configured.
    pub fn effective_fence(&self, participant: &PublicKey, poi: &PoiVerifyInfo) -> Geofence {
        match (self.participant_radii.get(participant), poi.fence) {
            (Some(&radius), Geofence::Circle { center, .. }) if radius > 0.0 => Geofence::Circle {
                center,
                radius_m: radius,
            },
            _ => poi.fence,
        }
    }
}

/// The verdict on one processed claim, as written to the chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRecord {
    pub claim: WitnessClaim,
    pub accepted: bool,
    pub reason: Option<RejectReason>,
    pub solved_position: Option<GeoPoint>,
    pub residual_m: f64,
    #[serde(default)]
    pub excluded_beacons: Vec<String>,
    /// Eligible verifiers attesting the verdict digest.
    pub attestations: Vec<(PublicKey, SignatureBytes)>,
}

impl VerdictRecord {
    /// Digest signed by attesting verifiers: the claim plus the verdict
    /// core, excluding the attestations themselves.
    pub fn verdict_digest(&self) -> Digest {
        let mut buf = CanonicalBuf::new();
        self.claim.encode(&mut buf);
        buf.put_bool(self.accepted);
        buf.put_str(self.reason.as_ref().map(|r| r.label()).unwrap_or(""));
        match &self.solved_position {
            Some(p) => {
                buf.put_u8(1);
                buf.put_f64(p.lat);
                buf.put_f64(p.lon);
            }
            None => buf.put_u8(0),
        }
        buf.put_f64(self.residual_m);
        buf.put_u32(self.excluded_beacons.len() as u32);
        for b in &self.excluded_beacons {
            buf.put_str(b);
        }
        buf.digest()
    }
}

impl CanonicalEncode for VerdictRecord {
    fn encode(&self, buf: &mut CanonicalBuf) {
        buf.put_digest(&self.verdict_digest());
        buf.put_u32(self.attestations.len() as u32);
        for (key, sig) in &self.attestations {
            buf.put_key(key);
            buf.put_signature(sig);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub records: Vec<VerdictRecord>,
    pub producer: PublicKey,
    pub signature: SignatureBytes,
    pub hash: Digest,
}

impl Block {
    /// Bytes covered by the producer signature.
    fn content_bytes(
        height: u64,
        prev_hash: &Digest,
        records: &[VerdictRecord],
        producer: &PublicKey,
    ) -> Vec<u8> {
        let mut buf = CanonicalBuf::new();
        buf.put_u64(height);
        buf.put_digest(prev_hash);
        buf.put_u32(records.len() as u32);
        for r in records {
            r.encode(&mut buf);
        }
        buf.put_key(producer);
        buf.as_bytes().to_vec()
    }

    /// Block hash: digest over every field except the hash itself.
    fn compute_hash(content: &[u8], signature: &SignatureBytes) -> Digest {
        let mut buf = CanonicalBuf::new();
        buf.put_bytes(content);
        buf.put_signature(signature);
        buf.digest()
    }

    pub fn recompute_hash(&self) -> Digest {
        let content =
            Self::content_bytes(self.height, &self.prev_hash, &self.records, &self.producer);
        Self::compute_hash(&content, &self.signature)
    }

    pub fn verify_producer_signature(&self) -> bool {
        let content =
            Self::content_bytes(self.height, &self.prev_hash, &self.records, &self.producer);
        self.producer.verify(&content, &self.signature).is_ok()
    }
}

/// An accepted presence fact derived from the chain.
#[derive(Debug, Clone, Serialize)]
pub struct PresenceRecord {
    pub claimant: PublicKey,
    pub poi_id: String,
    pub time_ms: u64,
    pub position: GeoPoint,
    pub claim_digest: Digest,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlashEvent {
    pub height: u64,
    pub validator: PublicKey,
    pub beacon_ids: Vec<String>,
    pub exclusion_count: u32,
    pub burned: TokenAmount,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LedgerError {
    #[error("deposit {deposit} below entry cost {entry_cost} + min stake {min_stake}")]
    UnderDeposit {
        deposit: TokenAmount,
        entry_cost: TokenAmount,
        min_stake: TokenAmount,
    },
    #[error("slashed key may not rejoin")]
    SlashedKeyRejoin,
    #[error("key already registered")]
    AlreadyRegistered,
    #[error("insufficient balance for deposit")]
    InsufficientBalance,
    #[error("no active validators")]
    NoActiveValidators,
    #[error("block height {got} does not extend chain at height {expected}")]
    WrongHeight { got: u64, expected: u64 },
    #[error("chain verification failed at height {height}: {message}")]
    ChainInvalid { height: u64, message: String },
}

/// The hash-chained ledger plus the state it induces: validator set,
/// balances, presence registry, nonce set and economics counters.
pub struct Ledger {
    pub context: ChainContext,
    blocks: Vec<Block>,
    pub validators: BTreeMap<PublicKey, Validator>,
    pub balances: BTreeMap<PublicKey, TokenAmount>,
    presence: Vec<PresenceRecord>,
    invalidated: BTreeSet<Digest>,
    nonces: BTreeSet<(PublicKey, u64)>,
    slashed_keys: BTreeSet<PublicKey>,
    ignored_beacons: Vec<String>,
    fee_pool: TokenAmount,
    pub initial_supply: TokenAmount,
    pub minted: TokenAmount,
    pub burned: TokenAmount,
    slash_events: Vec<SlashEvent>,
    /// Secret keys for producing and attesting; never exported.
    signers: BTreeMap<PublicKey, KeyPair>,
}

impl Ledger {
    /// Build the genesis state: grant starting balances, then register
    /// every genesis validator from a granted deposit.
    pub fn genesis(context: ChainContext, signers: Vec<KeyPair>) -> Result<Self, LedgerError> {
        let mut ledger = Ledger {
            blocks: Vec::new(),
            validators: BTreeMap::new(),
            balances: BTreeMap::new(),
            presence: Vec::new(),
            invalidated: BTreeSet::new(),
            nonces: BTreeSet::new(),
            slashed_keys: BTreeSet::new(),
            ignored_beacons: Vec::new(),
            fee_pool: 0,
            initial_supply: 0,
            minted: 0,
            burned: 0,
            slash_events: Vec::new(),
            signers: signers.into_iter().map(|k| (k.public(), k)).collect(),
            context,
        };
        for (key, balance) in ledger.context.initial_balances.clone() {
            *ledger.balances.entry(key).or_insert(0) += balance;
            ledger.initial_supply += balance;
        }
        for gv in ledger.context.genesis_validators.clone() {
            *ledger.balances.entry(gv.key).or_insert(0) += gv.deposit;
            ledger.initial_supply += gv.deposit;
            ledger.register_validator(gv.key, gv.deposit, gv.role, gv.served_pois)?;
        }
        Ok(ledger)
    }

    pub fn add_signer(&mut self, keys: KeyPair) {
        self.signers.insert(keys.public(), keys);
    }

    pub fn signer(&self, key: &PublicKey) -> Option<&KeyPair> {
        self.signers.get(key)
    }

    /// Stake a deposit: the entry cost burns, the remainder escrows.
    pub fn register_validator(
        &mut self,
        key: PublicKey,
        deposit: TokenAmount,
        role: ValidatorRole,
        served_pois: BTreeSet<String>,
    ) -> Result<&Validator, LedgerError> {
        if self.slashed_keys.contains(&key) {
            return Err(LedgerError::SlashedKeyRejoin);
        }
        if self.validators.contains_key(&key) {
            return Err(LedgerError::AlreadyRegistered);
        }
        let economics = &self.context.economics;
        if deposit < economics.entry_cost + economics.min_stake {
            return Err(LedgerError::UnderDeposit {
                deposit,
                entry_cost: economics.entry_cost,
                min_stake: economics.min_stake,
            });
        }
        let entry_cost = economics.entry_cost;
        let balance = self.balances.entry(key).or_insert(0);
        if *balance < deposit {
            return Err(LedgerError::InsufficientBalance);
        }
        *balance -= deposit;
        self.burned += entry_cost;
        let stake = deposit - entry_cost;
        self.validators.insert(
            key,
            Validator {
                key,
                stake,
                role,
                served_pois,
                status: ValidatorStatus::Active,
            },
        );
        Ok(&self.validators[&key])
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_hash(&self) -> Digest {
        self.blocks.last().map(|b| b.hash).unwrap_or(Digest::ZERO)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn slash_events(&self) -> &[SlashEvent] {
        &self.slash_events
    }

    pub fn presence_records(&self) -> impl Iterator<Item = &PresenceRecord> {
        self.presence
            .iter()
            .filter(move |p| !self.invalidated.contains(&p.claim_digest))
    }

    pub fn invalidated_claims(&self) -> &BTreeSet<Digest> {
        &self.invalidated
    }

    pub fn fee_pool(&self) -> TokenAmount {
        self.fee_pool
    }

    pub fn balance(&self, key: &PublicKey) -> TokenAmount {
        self.balances.get(key).copied().unwrap_or(0)
    }

    /// Token conservation: initial supply plus minted equals circulating
    /// (balances + live stakes + fee pool) plus burned.
    pub fn conserved(&self) -> bool {
        let circulating: TokenAmount = self.balances.values().sum::<TokenAmount>()
            + self
                .validators
                .values()
                .map(|v| v.stake)
                .sum::<TokenAmount>()
            + self.fee_pool;
        self.initial_supply + self.minted == circulating + self.burned
    }

    fn active_validators(&self) -> impl Iterator<Item = &Validator> {
        self.validators
            .values()
            .filter(|v| v.status == ValidatorStatus::Active)
    }

    /// Validators eligible to verify `claim`: location validators serving
    /// the poi plus full nodes; claims carrying social proofs additionally
    /// admit social validators meeting the minimum stake.
    pub fn eligible_verifiers(
        &self,
        claim: &WitnessClaim,
    ) -> Result<Vec<&Validator>, RejectReason> {
        let mut out: Vec<&Validator> = Vec::new();
        for v in self.active_validators() {
            let eligible = match v.role {
                ValidatorRole::Full => true,
                ValidatorRole::Location => v.served_pois.contains(&claim.poi_id),
                ValidatorRole::Social => {
                    !claim.social.is_empty() && v.stake >= self.context.economics.min_stake
                }
            };
            if eligible {
                out.push(v);
            }
        }
        if out.is_empty() {
            return Err(RejectReason::UnservedPoi);
        }
        Ok(out)
    }

    /// Run the ordered verification pipeline for one claim against the
    /// current state. Pure: effects are applied separately.
    pub fn evaluate_claim(&self, claim: &WitnessClaim) -> VerdictRecord {
        let mut record = VerdictRecord {
            claim: claim.clone(),
            accepted: false,
            reason: None,
            solved_position: None,
            residual_m: 0.0,
            excluded_beacons: Vec::new(),
            attestations: Vec::new(),
        };
        match self.evaluate_inner(claim, &mut record) {
            Ok(()) => record.accepted = true,
            Err(reason) => record.reason = Some(reason),
        }
        record
    }

    fn zone_beacons(&self, poi: &PoiVerifyInfo) -> BTreeMap<String, Beacon> {
        self.context
            .beacons
            .iter()
            .filter(|(id, _)| poi.beacon_ids.contains(id))
            .map(|(id, b)| (id.clone(), b.clone()))
            .collect()
    }

    fn evaluate_inner(
        &self,
        claim: &WitnessClaim,
        record: &mut VerdictRecord,
    ) -> Result<(), RejectReason> {
        // (1) claimant signature and nonce freshness
        if !claim.verify_signature() {
            return Err(RejectReason::BadClaimantSignature);
        }
        if self
            .nonces
            .contains(&(claim.location.claimant, claim.nonce))
        {
            return Err(RejectReason::Replay);
        }
        // (2) a non-empty eligible verifier set
        let verifiers = self.eligible_verifiers(claim)?;
        // (3) the stake threshold
        let min_stake = self.context.economics.min_stake;
        if !verifiers.iter().any(|v| v.stake >= min_stake) {
            return Err(RejectReason::InsufficientStake);
        }
        let poi = self
            .context
            .pois
            .get(&claim.poi_id)
            .ok_or(RejectReason::UnservedPoi)?;
        // (4) the location proof
        let fence = self.context.effective_fence(&claim.location.claimant, poi);
        let acceptance = verify_location_claim(
            &claim.location,
            &fence,
            &self.zone_beacons(poi),
            &self.ignored_beacons,
            &self.context.verify_cfg,
        )?;
        record.solved_position = Some(acceptance.solved_position);
        record.residual_m = acceptance.residual_m;
        record.excluded_beacons = acceptance.excluded_beacons;
        // (5) behavior over time
        let history: Vec<(GeoPoint, u64)> = self
            .last_accepted(&claim.location.claimant, claim.location.time_ms)
            .map(|(p, t)| vec![(p, t)])
            .unwrap_or_default();
        check_behavior_over_time(
            &history,
            claim.location.claimed_position,
            claim.location.time_ms,
            &self.context.verify_cfg,
        )?;
        // (6) every required social proof verifies
        for kind in &poi.social.required {
            let proof = claim
                .social
                .iter()
                .find(|p| p.kind == *kind)
                .ok_or(RejectReason::MissingSocialProof)?;
            verify_social_proof(
                proof,
                &poi.social,
                &claim.location.claimant,
                &claim.poi_id,
                claim.location.time_ms,
                self,
                &self.context.verify_cfg,
            )?;
        }
        // Acceptance debits the claim fee, so it must be affordable.
        if self.balance(&claim.location.claimant) < self.context.economics.claim_fee {
            return Err(RejectReason::InsufficientFee);
        }
        Ok(())
    }

    fn attest(&self, record: &mut VerdictRecord) {
        let digest = record.verdict_digest();
        let keys: Vec<PublicKey> = match self.eligible_verifiers(&record.claim) {
            Ok(vs) => vs.iter().map(|v| v.key).collect(),
            Err(_) => return,
        };
        for key in keys {
            if let Some(signer) = self.signers.get(&key) {
                record.attestations.push((key, signer.sign(&digest.0)));
            }
        }
    }

    /// Apply one verdict's effects: nonce burn, fee transfer, answer
    /// reward mint and presence registration.
    fn apply_record(&mut self, record: &VerdictRecord) {
        let claim = &record.claim;
        self.nonces.insert((claim.location.claimant, claim.nonce));
        if !record.accepted {
            return;
        }
        let fee = self.context.economics.claim_fee;
        let balance = self.balances.entry(claim.location.claimant).or_insert(0);
        *balance = balance.saturating_sub(fee);
        self.fee_pool += fee;
        let reward = self
            .context
            .pois
            .get(&claim.poi_id)
            .and_then(|poi| {
                poi.questions
                    .iter()
                    .find(|q| q.id == claim.response.question_id)
                    .map(|q| q.reward_for(&claim.response.answer))
            })
            .unwrap_or(0);
        if reward > 0 {
            self.minted += reward;
            *self.balances.entry(claim.location.claimant).or_insert(0) += reward;
        }
        self.presence.push(PresenceRecord {
            claimant: claim.location.claimant,
            poi_id: claim.poi_id.clone(),
            time_ms: claim.location.time_ms,
            position: record
                .solved_position
                .unwrap_or(claim.location.claimed_position),
            claim_digest: claim.digest(),
        });
    }

    /// Stake-weighted deterministic producer draw for `height`.
    pub fn select_producer(&self, height: u64) -> Result<PublicKey, LedgerError> {
        select_producer(self.active_validators(), height, self.context.seed)
    }

    /// Verify pending claims in deterministic (time, claimant) order,
    /// seal them into the next block and credit the producer.
    pub fn produce_block(&mut self, mut pending: Vec<WitnessClaim>) -> Result<&Block, LedgerError> {
        let height = self.height() + 1;
        let producer = self.select_producer(height)?;
        pending.sort_by(|a, b| {
            (a.location.time_ms, a.location.claimant, a.nonce).cmp(&(
                b.location.time_ms,
                b.location.claimant,
                b.nonce,
            ))
        });
        let mut records = Vec::with_capacity(pending.len());
        for claim in &pending {
            let mut record = self.evaluate_claim(claim);
            self.attest(&mut record);
            self.apply_record(&record);
            records.push(record);
        }
        // Producer reward: minted block reward plus the pooled claim fees.
        self.minted += self.context.economics.block_reward;
        let payout = self.context.economics.block_reward + self.fee_pool;
        self.fee_pool = 0;
        *self.balances.entry(producer).or_insert(0) += payout;

        let prev_hash = self.tip_hash();
        let content = Block::content_bytes(height, &prev_hash, &records, &producer);
        let signature = self
            .signers
            .get(&producer)
            .map(|k| k.sign(&content))
            .unwrap_or(SignatureBytes([0u8; 64]));
        let hash = Block::compute_hash(&content, &signature);
        self.blocks.push(Block {
            height,
            prev_hash,
            records,
            producer,
            signature,
            hash,
        });

        if height.is_multiple_of(self.context.economics.epoch_length) {
            self.detect_and_slash(height);
            self.settle_epoch();
        }
        Ok(self.blocks.last().unwrap())
    }

    /// Close an epoch's fraud scan: a beacon whose receipts were the
    /// excluded outlier in at least `slash_threshold` accepted claims this
    /// epoch gets its operating validator slashed, once, and its future
    /// receipts ignored. Accepted claims that no longer verify without
    /// the offending beacon are retroactively invalidated.
    pub fn detect_and_slash(&mut self, height: u64) -> Vec<SlashEvent> {
        let epoch_len = self.context.economics.epoch_length;
        let first = height.saturating_sub(epoch_len) + 1;
        let mut exclusions: BTreeMap<String, u32> = BTreeMap::new();
        for block in &self.blocks {
            if block.height < first || block.height > height {
                continue;
            }
            for record in &block.records {
                if !record.accepted {
                    continue;
                }
                for beacon_id in &record.excluded_beacons {
                    *exclusions.entry(beacon_id.clone()).or_insert(0) += 1;
                }
            }
        }
        let mut new_events = Vec::new();
        for (beacon_id, count) in exclusions {
            if count < self.context.slash_threshold {
                continue;
            }
            if self.ignored_beacons.contains(&beacon_id) {
                continue;
            }
            let Some(operator) = self
                .context
                .beacons
                .get(&beacon_id)
                .and_then(|b| b.operator)
            else {
                self.ignored_beacons.push(beacon_id);
                continue;
            };
            let fraction = self.context.economics.exit_penalty_fraction;
            let Some(validator) = self.validators.get_mut(&operator) else {
                continue;
            };
            if validator.status != ValidatorStatus::Active {
                continue;
            }
            let burn = ((validator.stake as f64) * fraction).round() as TokenAmount;
            let burn = burn.min(validator.stake);
            let refund = validator.stake - burn;
            validator.stake = 0;
            validator.status = ValidatorStatus::Slashed;
            self.burned += burn;
            *self.balances.entry(operator).or_insert(0) += refund;
            self.slashed_keys.insert(operator);
            // Every beacon run by the slashed operator goes quiet.
            let mut beacon_ids: Vec<String> = self
                .context
                .beacons
                .values()
                .filter(|b| b.operator == Some(operator))
                .map(|b| b.id.clone())
                .collect();
            beacon_ids.sort();
            for id in &beacon_ids {
                if !self.ignored_beacons.contains(id) {
                    self.ignored_beacons.push(id.clone());
                }
            }
            new_events.push(SlashEvent {
                height,
                validator: operator,
                beacon_ids,
                exclusion_count: count,
                burned: burn,
            });
        }
        if !new_events.is_empty() {
            self.invalidate_tainted_claims(first, height);
        }
        self.slash_events.extend(new_events.iter().cloned());
        new_events
    }

    /// Re-check accepted claims whose evidence references a now-ignored
    /// beacon; those that no longer verify lose their presence record.
    fn invalidate_tainted_claims(&mut self, first_height: u64, last_height: u64) {
        let mut newly_invalid = Vec::new();
        for block in &self.blocks {
            if block.height < first_height || block.height > last_height {
                continue;
            }
            for record in &block.records {
                if !record.accepted {
                    continue;
                }
                let claim = &record.claim;
                let touched = claim
                    .location
                    .receipts
                    .iter()
                    .any(|r| self.ignored_beacons.contains(&r.beacon_id));
                if !touched {
                    continue;
                }
                let Some(poi) = self.context.pois.get(&claim.poi_id) else {
                    continue;
                };
                let fence = self.context.effective_fence(&claim.location.claimant, poi);
                if verify_location_claim(
                    &claim.location,
                    &fence,
                    &self.zone_beacons(poi),
                    &self.ignored_beacons,
                    &self.context.verify_cfg,
                )
                .is_err()
                {
                    newly_invalid.push(claim.digest());
                }
            }
        }
        self.invalidated.extend(newly_invalid);
    }

    /// Epoch settlement: the existence cost burns out of every active
    /// stake, and validators left under the minimum stake exit with the
    /// remainder refunded.
    pub fn settle_epoch(&mut self) {
        let cost = self.context.economics.existence_cost;
        let min_stake = self.context.economics.min_stake;
        let mut refunds: Vec<(PublicKey, TokenAmount)> = Vec::new();
        for v in self.validators.values_mut() {
            if v.status != ValidatorStatus::Active {
                continue;
            }
            let debit = cost.min(v.stake);
            v.stake -= debit;
            self.burned += debit;
            if v.stake < min_stake {
                v.status = ValidatorStatus::Exited;
                refunds.push((v.key, v.stake));
                v.stake = 0;
            }
        }
        for (key, refund) in refunds {
            *self.balances.entry(key).or_insert(0) += refund;
        }
    }

    /// Export: a meta line, the chain context line it digests, then one
    /// canonical block record per line.
    pub fn export(&self) -> String {
        let context_line = serde_json::to_string(&self.context).expect("context serializes");
        let meta = ExportMeta {
            schema: 1,
            hash_scheme: crate::crypto::HASH_SCHEME.to_string(),
            signature_scheme: crate::crypto::SIGNATURE_SCHEME.to_string(),
            context_digest: sha256(context_line.as_bytes()),
        };
        let mut out = serde_json::to_string(&meta).expect("meta serializes");
        out.push('\n');
        out.push_str(&context_line);
        out.push('\n');
        for block in &self.blocks {
            out.push_str(&serde_json::to_string(block).expect("block serializes"));
            out.push('\n');
        }
        out
    }

    /// Full chain re-verification from genesis: hash linkage, producer
    /// selection and signature, attestor membership and signatures, and
    /// every verdict record re-derived from the replayed state. Returns
    /// the verified chain height.
    pub fn verify_export(exported: &str) -> Result<u64, LedgerError> {
        let fail0 = |message: String| LedgerError::ChainInvalid { height: 0, message };
        let mut lines = exported.lines();
        let meta_line = lines.next().ok_or_else(|| fail0("empty export".into()))?;
        let meta: ExportMeta = serde_json::from_str(meta_line)
            .map_err(|e| fail0(format!("malformed meta line: {e}")))?;
        if meta.schema != 1 {
            return Err(fail0(format!("unsupported schema {}", meta.schema)));
        }
        if meta.hash_scheme != crate::crypto::HASH_SCHEME
            || meta.signature_scheme != crate::crypto::SIGNATURE_SCHEME
        {
            return Err(fail0(format!(
                "unsupported scheme pair {}/{}",
                meta.hash_scheme, meta.signature_scheme
            )));
        }
        // The digest covers the raw context line, so any byte of it that
        // changes is caught before interpretation.
        let context_line = lines
            .next()
            .ok_or_else(|| fail0("missing context line".into()))?;
        if sha256(context_line.as_bytes()) != meta.context_digest {
            return Err(fail0("context does not match its digest".into()));
        }
        let context: ChainContext = serde_json::from_str(context_line)
            .map_err(|e| fail0(format!("malformed context: {e}")))?;
        let mut replay =
            Ledger::genesis(context, Vec::new()).map_err(|e| fail0(format!("bad genesis: {e}")))?;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let block: Block =
                serde_json::from_str(line).map_err(|e| LedgerError::ChainInvalid {
                    height: replay.height() + 1,
                    message: format!("malformed block: {e}"),
                })?;
            replay.check_and_apply_block(&block)?;
        }
        Ok(replay.height())
    }

    /// Validate `block` against the replayed state and apply it.
    fn check_and_apply_block(&mut self, block: &Block) -> Result<(), LedgerError> {
        let height = self.height() + 1;
        let fail = |message: String| LedgerError::ChainInvalid { height, message };
        if block.height != height {
            return Err(LedgerError::WrongHeight {
                got: block.height,
                expected: height,
            });
        }
        if block.prev_hash != self.tip_hash() {
            return Err(fail("prev_hash does not match predecessor".into()));
        }
        if block.recompute_hash() != block.hash {
            return Err(fail("block hash mismatch".into()));
        }
        if !block.verify_producer_signature() {
            return Err(fail("producer signature invalid".into()));
        }
        let expected_producer = self
            .select_producer(height)
            .map_err(|e| fail(e.to_string()))?;
        if block.producer != expected_producer {
            return Err(fail(format!(
                "producer {} is not the selected {}",
                block.producer, expected_producer
            )));
        }
        let ordered = block.records.windows(2).all(|w| {
            let a = &w[0].claim.location;
            let b = &w[1].claim.location;
            (a.time_ms, a.claimant, w[0].claim.nonce) <= (b.time_ms, b.claimant, w[1].claim.nonce)
        });
        if !ordered {
            return Err(fail("verdict records out of queue order".into()));
        }
        for (i, record) in block.records.iter().enumerate() {
            let expected = self.evaluate_claim(&record.claim);
            if expected.accepted != record.accepted
                || expected.reason != record.reason
                || expected.excluded_beacons != record.excluded_beacons
            {
                return Err(fail(format!(
                    "verdict record {i} does not re-verify: expected {:?}/{:?}, recorded {:?}/{:?}",
                    expected.accepted, expected.reason, record.accepted, record.reason
                )));
            }
            // Attestors must belong to the eligible verifier set, each
            // with a valid signature over the verdict digest.
            let digest = record.verdict_digest();
            let eligible: BTreeSet<PublicKey> = self
                .eligible_verifiers(&record.claim)
                .map(|vs| vs.iter().map(|v| v.key).collect())
                .unwrap_or_default();
            for (key, sig) in &record.attestations {
                if !eligible.contains(key) {
                    return Err(fail(format!(
                        "attestor {key} not in the eligible validator set"
                    )));
                }
                if key.verify(&digest.0, sig).is_err() {
                    return Err(fail(format!("attestation by {key} does not verify")));
                }
            }
            self.apply_record(record);
        }
        self.minted += self.context.economics.block_reward;
        let payout = self.context.economics.block_reward + self.fee_pool;
        self.fee_pool = 0;
        *self.balances.entry(block.producer).or_insert(0) += payout;
        self.blocks.push(block.clone());
        if height.is_multiple_of(self.context.economics.epoch_length) {
            self.detect_and_slash(height);
            self.settle_epoch();
        }
        if !self.conserved() {
            return Err(LedgerError::ChainInvalid {
                height,
                message: "token conservation violated".into(),
            });
        }
        Ok(())
    }
}

impl PresenceView for Ledger {
    fn last_accepted(&self, participant: &PublicKey, time_ms: u64) -> Option<(GeoPoint, u64)> {
        self.presence_records()
            .filter(|p| p.claimant == *participant && p.time_ms <= time_ms)
            .max_by_key(|p| p.time_ms)
            .map(|p| (p.position, p.time_ms))
    }

    fn accepted_at_poi_within(
        &self,
        participant: &PublicKey,
        poi_id: &str,
        time_ms: u64,
        window_ms: u64,
    ) -> bool {
        self.presence_records().any(|p| {
            p.claimant == *participant
                && p.poi_id == poi_id
                && p.time_ms <= time_ms
                && time_ms - p.time_ms <= window_ms
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExportMeta {
    schema: u32,
    hash_scheme: String,
    signature_scheme: String,
    /// Digest over the raw context line that follows.
    context_digest: Digest,
}

/// Stake-weighted deterministic draw keyed by digest(seed, height).
pub fn select_producer<'a>(
    validators: impl Iterator<Item = &'a Validator>,
    height: u64,
    seed: u64,
) -> Result<PublicKey, LedgerError> {
    let mut sorted: Vec<&Validator> = validators.collect();
    sorted.sort_by_key(|v| v.key);
    if sorted.is_empty() {
        return Err(LedgerError::NoActiveValidators);
    }
    let mut buf = CanonicalBuf::new();
    buf.put_str("producer");
    buf.put_u64(seed);
    buf.put_u64(height);
    let digest = sha256(buf.as_bytes());
    let draw = u128::from_le_bytes(digest.0[0..16].try_into().unwrap());
    let total: u128 = sorted.iter().map(|v| v.stake as u128).sum();
    if total == 0 {
        // All stakes zero: fall back to a uniform draw.
        return Ok(sorted[(draw % sorted.len() as u128) as usize].key);
    }
    let mut target = draw % total;
    for v in &sorted {
        let w = v.stake as u128;
        if target < w {
            return Ok(v.key);
        }
        target -= w;
    }
    Ok(sorted.last().unwrap().key)
}
