//! Fixtures shared by the kernel benchmarks.

use std::collections::BTreeSet;
use std::sync::Arc;

use linkdrift_core::eon::{SimConfig, Simulation};
use linkdrift_core::forecast::{LtcCell, LtcModel};
use linkdrift_core::traffic::{TrafficModel, TrafficModelConfig};
use linkdrift_core::{CandidatePath, Demand, NodeId, Topology};

/// Euro28 simulation advanced `steps` steps at the default load.
pub fn warm_simulation(steps: u32) -> Simulation {
    let topo = Arc::new(Topology::euro28().with_default_dcs(7).expect("euro28 has 7 DCs"));
    let cfg = TrafficModelConfig { steps: steps + 100, ..Default::default() };
    let traffic = Arc::new(TrafficModel::new(&topo, &cfg).expect("valid traffic config"));
    let mut sim = Simulation::new(topo, traffic, SimConfig::default(), 1).expect("valid sim").without_event_log();
    for _ in 0..steps {
        sim.run_step().expect("step");
    }
    sim
}

/// A long-haul demand and its candidate paths on the simulation's topology.
pub fn long_haul_request(sim: &Simulation) -> (Demand, Vec<CandidatePath>) {
    let topo = sim.topology();
    let (src, dst) = (NodeId(0), NodeId(topo.node_count() as u32 - 1));
    let paths = topo.k_shortest_paths(src, dst, 10, &BTreeSet::new()).expect("connected");
    let demand = Demand { id: 0, src, dst, bitrate_gbps: 150.0, holding_steps: 10, arrival: 0 };
    (demand, paths)
}

/// Randomly initialized cell of the default model shape.
pub fn default_cell(hidden: usize) -> LtcCell {
    LtcModel::with_dims(hidden, &[10, 5, 1], 3, 6, 7).cell().clone()
}

/// Deterministic prediction/actual pair with a drift at the midpoint.
pub fn drifting_pair(n: usize) -> (Vec<f64>, Vec<f64>) {
    let actual: Vec<f64> =
        (0..n).map(|t| 400.0 + 80.0 * (t as f64 * 0.26).sin() - if t > n / 2 { 250.0 } else { 0.0 }).collect();
    let pred = actual.iter().enumerate().map(|(t, a)| a * (1.0 + 0.5 / (1.0 + t as f64))).collect();
    (pred, actual)
}
