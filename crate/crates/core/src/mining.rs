//! Miner-side validation of produced batches.
//!
//! Each batch runs five checks in a fixed order (ingredients, production
//! amount, temperature, expiry, quality) and stops at the first failure.
//! Accepted batches are recorded as `MineVerdict` transactions; rejected
//! ones as `ReturnToProducer` carrying the failure label. All verdicts of
//! one mining round go into a single new block.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::KeyPair;
use crate::events::{SignedTx, TxDetail, TxPayload};
use crate::ledger::{build_block, Chain, LedgerError};
use crate::overlay::NodeId;
use crate::storage::{MedicineListStore, PayloadStore};

pub const LABEL_INGREDIENTS: &str = "Inaccurate Ingredients";
pub const LABEL_QUANTITY: &str = "Insufficient quantity";
pub const LABEL_TEMPERATURE: &str = "Unsafe Temperature";
pub const LABEL_EXPIRY: &str = "Date Expired";
pub const LABEL_QUALITY: &str = "Quality Assurance Problem";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureReading {
    pub sensor_id: String,
    pub timestamp: u64,
    /// Deci-degrees Celsius.
    pub temp: i64,
}

/// Cold-chain sensor readings. Empty means the report is missing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemperatureLog {
    pub readings: Vec<TemperatureReading>,
}

impl TemperatureLog {
    pub fn new(readings: Vec<TemperatureReading>) -> Self {
        Self { readings }
    }

    pub fn is_ordered(&self) -> bool {
        self.readings
            .windows(2)
            .all(|w| w[0].timestamp <= w[1].timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAReport {
    pub present: bool,
    pub passed: bool,
    pub issues: Vec<String>,
}

impl QAReport {
    pub fn passing() -> Self {
        Self {
            present: true,
            passed: true,
            issues: Vec::new(),
        }
    }

    pub fn failing(issues: Vec<String>) -> Self {
        Self {
            present: true,
            passed: false,
            issues,
        }
    }

    pub fn absent() -> Self {
        Self {
            present: false,
            passed: false,
            issues: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BatchError {
    #[error("batch {0}: expiry must be after manufacture")]
    ExpiryBeforeManufacture(String),
    #[error("batch {0}: quantity must be positive")]
    ZeroQuantity(String),
    #[error("batch {0}: temperature readings out of time order")]
    UnorderedLog(String),
    #[error("batch {0}: a passed QA report cannot list issues")]
    InconsistentQa(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MedicineBatch {
    pub batch_id: String,
    pub medicine_name: String,
    pub producer: NodeId,
    pub ingredients: BTreeMap<String, u64>,
    pub quantity: u64,
    pub manufacture_date: u64,
    pub expiry_date: u64,
    pub temperature_log: TemperatureLog,
    pub qa_report: QAReport,
}

impl MedicineBatch {
    pub fn validate(&self) -> Result<(), BatchError> {
        let id = || self.batch_id.clone();
        if self.expiry_date <= self.manufacture_date {
            return Err(BatchError::ExpiryBeforeManufacture(id()));
        }
        if self.quantity == 0 {
            return Err(BatchError::ZeroQuantity(id()));
        }
        if !self.temperature_log.is_ordered() {
            return Err(BatchError::UnorderedLog(id()));
        }
        if self.qa_report.passed && !self.qa_report.issues.is_empty() {
            return Err(BatchError::InconsistentQa(id()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandLedger {
    pub current_demand: BTreeMap<String, u64>,
    pub past_orders: BTreeMap<String, Vec<u64>>,
}

impl DemandLedger {
    pub fn demand_for(&self, medicine: &str) -> u64 {
        self.current_demand.get(medicine).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Ingredients,
    ProductionAmount,
    Temperature,
    Expiry,
    Quality,
}

impl Stage {
    pub const PIPELINE: [Stage; 5] = [
        Stage::Ingredients,
        Stage::ProductionAmount,
        Stage::Temperature,
        Stage::Expiry,
        Stage::Quality,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Stage::Ingredients => LABEL_INGREDIENTS,
            Stage::ProductionAmount => LABEL_QUANTITY,
            Stage::Temperature => LABEL_TEMPERATURE,
            Stage::Expiry => LABEL_EXPIRY,
            Stage::Quality => LABEL_QUALITY,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageResult {
    pub stage: Stage,
    pub passed: bool,
    /// Empty when passed.
    pub label: String,
}

impl StageResult {
    fn of(stage: Stage, passed: bool) -> Self {
        Self {
            stage,
            passed,
            label: if passed { String::new() } else { stage.label().to_string() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Accepted,
    Rejected { stage: Stage, label: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub batch_id: String,
    pub outcome: Outcome,
    pub stages_run: Vec<StageResult>,
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self.outcome, Outcome::Accepted)
    }

    pub fn label(&self) -> Option<&str> {
        match &self.outcome {
            Outcome::Accepted => None,
            Outcome::Rejected { label, .. } => Some(label),
        }
    }
}

/// Knobs for the pipeline. The defaults are the strict rules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningPolicy {
    /// Allowed relative deviation of each ingredient amount, in parts per
    /// million of the formulary amount. 0 means exact match.
    pub ingredient_tolerance_ppm: u64,
}

pub fn check_ingredients(batch: &MedicineBatch, formulary: &MedicineListStore) -> StageResult {
    check_ingredients_with(batch, formulary, MiningPolicy::default())
}

pub fn check_ingredients_with(
    batch: &MedicineBatch,
    formulary: &MedicineListStore,
    policy: MiningPolicy,
) -> StageResult {
    let passed = formulary
        .get_medicine(&batch.medicine_name)
        .is_some_and(|spec| {
            spec.ingredients.len() == batch.ingredients.len()
                && spec.ingredients.iter().all(|(name, &want)| {
                    batch.ingredients.get(name).is_some_and(|&got| {
                        let deviation = u128::from(got.abs_diff(want)) * 1_000_000;
                        deviation <= u128::from(want) * u128::from(policy.ingredient_tolerance_ppm)
                    })
                })
        });
    StageResult::of(Stage::Ingredients, passed)
}

pub fn check_production_amount(batch: &MedicineBatch, demand: &DemandLedger) -> StageResult {
    StageResult::of(
        Stage::ProductionAmount,
        batch.quantity >= demand.demand_for(&batch.medicine_name),
    )
}

/// Fails on a missing (empty) log, an unregistered medicine, or any reading
/// outside the inclusive storage range.
pub fn check_temperature(batch: &MedicineBatch, formulary: &MedicineListStore) -> StageResult {
    let passed = formulary
        .get_medicine(&batch.medicine_name)
        .is_some_and(|spec| {
            !batch.temperature_log.readings.is_empty()
                && batch
                    .temperature_log
                    .readings
                    .iter()
                    .all(|r| (spec.storage_temp_min..=spec.storage_temp_max).contains(&r.temp))
        });
    StageResult::of(Stage::Temperature, passed)
}

/// A batch is expired at the instant `now` reaches its expiry date.
pub fn check_expiry(batch: &MedicineBatch, now: u64) -> StageResult {
    StageResult::of(Stage::Expiry, batch.expiry_date > now)
}

pub fn check_quality(batch: &MedicineBatch) -> StageResult {
    StageResult::of(
        Stage::Quality,
        batch.qa_report.present && batch.qa_report.passed,
    )
}

/// Runs the pipeline with first-failure short-circuit.
pub fn evaluate_batch(
    batch: &MedicineBatch,
    formulary: &MedicineListStore,
    demand: &DemandLedger,
    now: u64,
    policy: MiningPolicy,
) -> Verdict {
    let mut stages_run = Vec::with_capacity(Stage::PIPELINE.len());
    for stage in Stage::PIPELINE {
        let result = match stage {
            Stage::Ingredients => check_ingredients_with(batch, formulary, policy),
            Stage::ProductionAmount => check_production_amount(batch, demand),
            Stage::Temperature => check_temperature(batch, formulary),
            Stage::Expiry => check_expiry(batch, now),
            Stage::Quality => check_quality(batch),
        };
        let failed = !result.passed;
        stages_run.push(result);
        if failed {
            return Verdict {
                batch_id: batch.batch_id.clone(),
                outcome: Outcome::Rejected {
                    stage,
                    label: stage.label().to_string(),
                },
                stages_run,
            };
        }
    }
    Verdict {
        batch_id: batch.batch_id.clone(),
        outcome: Outcome::Accepted,
        stages_run,
    }
}

/// Parties a mining round addresses its verdicts to.
#[derive(Debug, Clone, Copy)]
pub struct MiningRound<'a> {
    pub formulary: &'a MedicineListStore,
    pub demand: &'a DemandLedger,
    pub now: u64,
    pub miner: &'a KeyPair,
    /// Receives accepted batches.
    pub supplier: &'a NodeId,
    pub policy: MiningPolicy,
}

/// Verdict transaction for one batch, signed by the miner.
pub fn verdict_transaction(verdict: &Verdict, batch: &MedicineBatch, round: &MiningRound<'_>) -> SignedTx {
    let (recipient, detail) = match &verdict.outcome {
        Outcome::Accepted => (
            round.supplier.clone(),
            TxDetail::MineVerdict {
                stages: verdict.stages_run.clone(),
            },
        ),
        Outcome::Rejected { stage, label } => (
            batch.producer.clone(),
            TxDetail::ReturnToProducer {
                stage: *stage,
                label: label.clone(),
                stages: verdict.stages_run.clone(),
            },
        ),
    };
    SignedTx::sign(
        round.miner,
        TxPayload::new(&round.miner.owner, &batch.batch_id, round.now, recipient, detail),
    )
}

/// Evaluates every batch, stores one verdict payload each, and appends one
/// block holding all verdict records. Verdicts come back in input order; an
/// empty input leaves the chain untouched.
pub fn mine_batches(
    batches: &[MedicineBatch],
    round: &MiningRound<'_>,
    chain: &Chain,
    payloads: &mut PayloadStore,
) -> Result<(Vec<Verdict>, Chain), LedgerError> {
    if batches.is_empty() {
        return Ok((Vec::new(), chain.clone()));
    }
    let mut verdicts = Vec::with_capacity(batches.len());
    let mut records = Vec::with_capacity(batches.len());
    for batch in batches {
        let verdict = evaluate_batch(batch, round.formulary, round.demand, round.now, round.policy);
        records.push(verdict_transaction(&verdict, batch, round).commit(payloads));
        verdicts.push(verdict);
    }
    let block = build_block(&chain.head().header, records, round.miner.owner.clone(), round.now)?;
    Ok((verdicts, chain.append_block(block)?))
}

/// Advisory only: batches produced well beyond what the order history
/// suggests. Never causes a rejection.
pub fn overproduction_warnings(batches: &[MedicineBatch], demand: &DemandLedger) -> Vec<String> {
    batches
        .iter()
        .filter_map(|b| {
            let largest_past = demand
                .past_orders
                .get(&b.medicine_name)
                .and_then(|orders| orders.iter().max().copied())
                .unwrap_or(0);
            let ceiling = demand.demand_for(&b.medicine_name) + largest_past;
            (b.quantity > ceiling).then(|| {
                format!(
                    "{}: produced {} units of {}, above current demand plus largest past order ({ceiling})",
                    b.batch_id, b.quantity, b.medicine_name
                )
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keypair;
    use crate::storage::MedicineSpec;
    use crate::supply::Role;

    fn formulary() -> MedicineListStore {
        let mut f = MedicineListStore::new();
        f.register_medicine(MedicineSpec {
            name: "Amoxicillin".into(),
            ingredients: [("amoxicillin_trihydrate".to_string(), 500)].into(),
            storage_temp_min: 20,
            storage_temp_max: 250,
            shelf_life_days: 730,
        })
        .unwrap();
        f
    }

    fn reading(t: u64, temp: i64) -> TemperatureReading {
        TemperatureReading {
            sensor_id: "s0".into(),
            timestamp: t,
            temp,
        }
    }

    fn batch() -> MedicineBatch {
        MedicineBatch {
            batch_id: "B0".into(),
            medicine_name: "Amoxicillin".into(),
            producer: NodeId::new(Role::Producer, 0),
            ingredients: [("amoxicillin_trihydrate".to_string(), 500)].into(),
            quantity: 100,
            manufacture_date: 0,
            expiry_date: 1_000,
            temperature_log: TemperatureLog::new(vec![reading(1, 20), reading(2, 250), reading(3, 135)]),
            qa_report: QAReport::passing(),
        }
    }

    fn demand(n: u64) -> DemandLedger {
        DemandLedger {
            current_demand: [("Amoxicillin".to_string(), n)].into(),
            past_orders: BTreeMap::new(),
        }
    }

    #[test]
    fn ingredients_identity_passes() {
        assert!(check_ingredients(&batch(), &formulary()).passed);
    }

    #[test]
    fn ingredients_deviation_fails_with_label() {
        let mut b = batch();
        b.ingredients.insert("amoxicillin_trihydrate".into(), 450);
        let r = check_ingredients(&b, &formulary());
        assert!(!r.passed);
        assert_eq!(r.label, "Inaccurate Ingredients");
    }

    #[test]
    fn ingredients_extra_or_missing_name_fails() {
        let mut b = batch();
        b.ingredients.insert("talc".into(), 5);
        assert!(!check_ingredients(&b, &formulary()).passed);
        b.ingredients.clear();
        assert!(!check_ingredients(&b, &formulary()).passed);
    }

    #[test]
    fn unregistered_medicine_fails_ingredients() {
        let mut b = batch();
        b.medicine_name = "Ghostamol".into();
        let r = check_ingredients(&b, &formulary());
        assert_eq!(r.label, LABEL_INGREDIENTS);
    }

    #[test]
    fn ingredient_tolerance() {
        let mut b = batch();
        b.ingredients.insert("amoxicillin_trihydrate".into(), 495);
        let loose = MiningPolicy {
            ingredient_tolerance_ppm: 10_000,
        };
        assert!(check_ingredients_with(&b, &formulary(), loose).passed);
        b.ingredients.insert("amoxicillin_trihydrate".into(), 494);
        assert!(!check_ingredients_with(&b, &formulary(), loose).passed);
    }

    #[test]
    fn production_amount_boundaries() {
        assert!(check_production_amount(&batch(), &demand(100)).passed);
        let r = check_production_amount(&batch(), &demand(101));
        assert_eq!(r.label, "Insufficient quantity");
        let mut b = batch();
        b.quantity = 99;
        assert!(!check_production_amount(&b, &demand(100)).passed);
        assert!(check_production_amount(&b, &DemandLedger::default()).passed);
    }

    #[test]
    fn temperature_inclusive_range() {
        assert!(check_temperature(&batch(), &formulary()).passed);
        let mut b = batch();
        b.temperature_log.readings.push(reading(4, 251));
        assert_eq!(check_temperature(&b, &formulary()).label, "Unsafe Temperature");
        b.temperature_log.readings.clear();
        assert_eq!(check_temperature(&b, &formulary()).label, "Unsafe Temperature");
        let mut cold = batch();
        cold.temperature_log.readings.push(reading(4, 19));
        assert!(!check_temperature(&cold, &formulary()).passed);
    }

    #[test]
    fn expiry_boundary() {
        let b = batch();
        assert_eq!(check_expiry(&b, 1_000).label, "Date Expired");
        assert!(check_expiry(&b, 999).passed);
    }

    #[test]
    fn expiry_before_manufacture_rejected_at_construction() {
        let mut b = batch();
        b.expiry_date = 0;
        assert!(matches!(b.validate(), Err(BatchError::ExpiryBeforeManufacture(_))));
    }

    #[test]
    fn quality_boolean_pair() {
        assert!(check_quality(&batch()).passed);
        let mut b = batch();
        b.qa_report = QAReport::failing(vec!["dissolution out of spec".into()]);
        assert_eq!(check_quality(&b).label, "Quality Assurance Problem");
        b.qa_report = QAReport::absent();
        assert_eq!(check_quality(&b).label, "Quality Assurance Problem");
    }

    #[test]
    fn short_circuit_at_first_failure() {
        let mut b = batch();
        b.temperature_log.readings.push(reading(9, 999));
        let v = evaluate_batch(&b, &formulary(), &demand(1), 5_000, MiningPolicy::default());
        assert_eq!(v.stages_run.len(), 3);
        assert_eq!(
            v.outcome,
            Outcome::Rejected {
                stage: Stage::Temperature,
                label: LABEL_TEMPERATURE.into()
            }
        );
        assert!(v.stages_run.iter().all(|s| s.stage != Stage::Expiry));
    }

    fn round<'a>(f: &'a MedicineListStore, d: &'a DemandLedger, miner: &'a KeyPair, supplier: &'a NodeId) -> MiningRound<'a> {
        MiningRound {
            formulary: f,
            demand: d,
            now: 10,
            miner,
            supplier,
            policy: MiningPolicy::default(),
        }
    }

    #[test]
    fn mine_appends_one_block_in_input_order() {
        let miner = generate_keypair([2; 32], NodeId::new(Role::Miner, 0));
        let supplier = NodeId::new(Role::Supplier, 0);
        let (f, d) = (formulary(), demand(100));
        let chain = Chain::new(miner.owner.clone());
        let mut payloads = PayloadStore::new();
        let mut bad = batch();
        bad.batch_id = "B1".into();
        bad.qa_report = QAReport::absent();
        let (verdicts, next) =
            mine_batches(&[batch(), bad], &round(&f, &d, &miner, &supplier), &chain, &mut payloads).unwrap();
        assert_eq!(next.len(), 2);
        assert_eq!(verdicts[0].batch_id, "B0");
        assert!(verdicts[0].is_accepted());
        assert_eq!(verdicts[1].label(), Some(LABEL_QUALITY));
        let body = &next.head().body;
        assert_eq!(body[0].kind, crate::ledger::TxKind::MineVerdict);
        assert_eq!(body[1].kind, crate::ledger::TxKind::ReturnToProducer);
        assert_eq!(payloads.len(), 2);
    }

    #[test]
    fn mine_nothing_leaves_chain() {
        let miner = generate_keypair([2; 32], NodeId::new(Role::Miner, 0));
        let supplier = NodeId::new(Role::Supplier, 0);
        let (f, d) = (formulary(), demand(1));
        let chain = Chain::new(miner.owner.clone());
        let mut payloads = PayloadStore::new();
        let (v, next) = mine_batches(&[], &round(&f, &d, &miner, &supplier), &chain, &mut payloads).unwrap();
        assert!(v.is_empty());
        assert_eq!(next, chain);
        assert!(payloads.is_empty());
    }

    #[test]
    fn mining_is_byte_deterministic() {
        let miner = generate_keypair([2; 32], NodeId::new(Role::Miner, 0));
        let supplier = NodeId::new(Role::Supplier, 0);
        let (f, d) = (formulary(), demand(1));
        let chain = Chain::new(miner.owner.clone());
        let run = || {
            let mut p = PayloadStore::new();
            let (_, c) = mine_batches(&[batch()], &round(&f, &d, &miner, &supplier), &chain, &mut p).unwrap();
            c.head().to_canonical_bytes()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn overproduction_is_advisory() {
        let mut d = demand(10);
        d.past_orders.insert("Amoxicillin".into(), vec![5, 20]);
        let warnings = overproduction_warnings(&[batch()], &d);
        assert_eq!(warnings.len(), 1);
        assert!(evaluate_batch(&batch(), &formulary(), &d, 0, MiningPolicy::default()).is_accepted());
    }
}
