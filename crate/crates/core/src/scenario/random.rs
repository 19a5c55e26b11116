use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ComplaintSpec, FaultKind, FaultSpec, Scenario, ScenarioOrder};
use crate::mining::TemperatureReading;
use crate::overlay::{DropRate, NodeId};
use crate::storage::MedicineSpec;
use crate::supply::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomLimits {
    pub max_batches: usize,
    pub max_orders: usize,
    /// Include in-run faults, production caps and odd telemetry.
    pub faults: bool,
}

impl Default for RandomLimits {
    fn default() -> Self {
        Self {
            max_batches: 20,
            max_orders: 50,
            faults: true,
        }
    }
}

/// A valid scenario drawn from `seed`. Batches are at most
/// `limits.max_batches` because each ordered medicine makes one batch.
pub fn random_scenario(seed: u64, limits: RandomLimits) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_meds = rng.gen_range(1..=limits.max_batches.max(1));
    let medicines: Vec<MedicineSpec> = (0..n_meds)
        .map(|i| {
            let min = rng.gen_range(-200..=100);
            MedicineSpec {
                name: format!("Med{i:02}"),
                ingredients: (0..rng.gen_range(1..=3))
                    .map(|k| (format!("api_{k}"), rng.gen_range(1..=1_000)))
                    .collect(),
                storage_temp_min: min,
                storage_temp_max: min + rng.gen_range(20..=300),
                // Short shelf lives exercise the supplier's return path.
                shelf_life_days: if rng.gen_ratio(1, 6) {
                    rng.gen_range(5..=45)
                } else {
                    rng.gen_range(180..=1_000)
                },
            }
        })
        .collect();

    let pharmacists: Vec<NodeId> = (0..rng.gen_range(1..=4)).map(|i| NodeId::new(Role::Pharmacist, i)).collect();
    let customers: Vec<NodeId> = (0..rng.gen_range(1..=5)).map(|i| NodeId::new(Role::Customer, i)).collect();
    let mut nodes = vec![
        NodeId::new(Role::Producer, 0),
        NodeId::new(Role::Miner, 0),
        NodeId::new(Role::Supplier, 0),
        NodeId::new(Role::Distributor, 0),
    ];
    nodes.extend(pharmacists.iter().cloned());
    nodes.extend(customers.iter().cloned());

    let n_orders = rng.gen_range(1..=limits.max_orders.max(1));
    let orders: Vec<ScenarioOrder> = (0..n_orders)
        .map(|i| ScenarioOrder {
            order_id: format!("o{i:03}"),
            pharmacist: pharmacists.choose(&mut rng).expect("non-empty").clone(),
            medicine_name: medicines.choose(&mut rng).expect("non-empty").name.clone(),
            quantity: rng.gen_range(1..=200),
            timestamp: rng.gen_range(0..=1_000),
            customer: rng
                .gen_bool(0.5)
                .then(|| customers.choose(&mut rng).expect("non-empty").clone()),
        })
        .collect();

    let mut scenario = Scenario {
        seed,
        supplier_policy_days: rng.gen_range(10..=40),
        link_latency: rng.gen_range(0..=5),
        drop_rate: DropRate {
            num: rng.gen_range(0..=3),
            den: 10,
        },
        medicines,
        nodes,
        orders,
        telemetry: BTreeMap::new(),
        faults: Vec::new(),
        complaints: Vec::new(),
        production_limits: BTreeMap::new(),
    };

    let batches = scenario.batch_count();
    if limits.faults {
        let kinds = [
            FaultKind::ExpireBatch,
            FaultKind::TemperatureSpike,
            FaultKind::WithholdQAReport,
            FaultKind::CounterfeitInject,
        ];
        for _ in 0..rng.gen_range(0..=3) {
            let kind = *kinds.choose(&mut rng).expect("non-empty");
            let target = rng.gen_range(0..batches) as u64;
            if !scenario.faults.iter().any(|f| f.kind == kind && f.target == target) {
                scenario.faults.push(FaultSpec::new(kind, target));
            }
        }
        if rng.gen_ratio(1, 4) {
            let name = scenario.orders.choose(&mut rng).expect("non-empty").medicine_name.clone();
            scenario.production_limits.insert(name, rng.gen_range(1..=50));
        }
        if rng.gen_ratio(1, 4) {
            let index = rng.gen_range(0..batches);
            let readings = (0..rng.gen_range(1..=4))
                .map(|i| TemperatureReading {
                    sensor_id: "probe".into(),
                    timestamp: 100 + i * 60,
                    temp: rng.gen_range(-300..=400),
                })
                .collect();
            scenario.telemetry.insert(index, readings);
        }
    }
    for o in scenario.orders.iter().filter(|_| rng.gen_ratio(1, 8)).collect::<Vec<_>>() {
        scenario.complaints.push(ComplaintSpec {
            order_id: o.order_id.clone(),
            description: format!("issue with {}", o.medicine_name),
            response: if rng.gen_bool(0.7) { "replacement sent".into() } else { String::new() },
        });
    }
    scenario
}
