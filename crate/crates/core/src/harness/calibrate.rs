use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::HarnessError;
use crate::eon::Simulation;
use crate::seed::derive_seed;
use crate::topology::{LinkId, Topology};
use crate::traffic::TrafficModel;

/// Outcome of one pilot simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub load_tbps: f64,
    pub pilot: usize,
    pub rejected: u64,
    pub restoration_rejected: u64,
    /// Link failed for the restoration pilot, if any could be failed.
    pub failed_link: Option<u32>,
}

impl Probe {
    pub fn clean(&self) -> bool {
        self.rejected == 0 && self.restoration_rejected == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub load_tbps: f64,
    pub probes: Vec<Probe>,
}

/// Runs `cfg.calibration.pilot_steps` steps at `load_tbps`, then fails the
/// most loaded link whose loss keeps the graph strongly connected and counts
/// restoration failures. Pilot 0 uses the config's own seeds.
pub fn pilot_probe(
    cfg: &ScenarioConfig,
    topo: &Arc<Topology>,
    load_tbps: f64,
    pilot: usize,
) -> Result<Probe, HarnessError> {
    let mut tcfg = cfg.traffic.clone();
    tcfg.total_load_tbps = load_tbps;
    let mut sim_seed = cfg.sim_seed();
    if pilot > 0 {
        tcfg.seed = derive_seed(tcfg.seed, &format!("pilot-{pilot}"));
        sim_seed = derive_seed(sim_seed, &format!("pilot-{pilot}"));
    }
    let traffic = Arc::new(TrafficModel::new(topo, &tcfg)?);
    let mut sim = Simulation::new(topo.clone(), traffic, cfg.sim.clone(), sim_seed)?.without_event_log();
    let steps = cfg.calibration.pilot_steps.min(tcfg.steps);
    while sim.current_step() < steps {
        sim.run_step()?;
    }
    let rejected = sim.stats().rejected;
    let mut probe = Probe { load_tbps, pilot, rejected, restoration_rejected: 0, failed_link: None };
    if rejected > 0 {
        return Ok(probe);
    }
    if let Some(link) = worst_case_link(topo, sim.link_loads()) {
        sim.inject_failure(sim.current_step(), link)?;
        probe.restoration_rejected = sim.stats().restoration_rejected;
        probe.failed_link = Some(link.0);
    }
    Ok(probe)
}

/// Most loaded link (lowest id on ties) whose failure leaves every node
/// reachable from every other.
fn worst_case_link(topo: &Topology, loads: &[f64]) -> Option<LinkId> {
    let mut order: Vec<usize> = (0..topo.link_count()).collect();
    order.sort_by(|&a, &b| loads[b].total_cmp(&loads[a]).then(a.cmp(&b)));
    order.into_iter().map(|pos| topo.links()[pos].id).find(|id| topo.is_strongly_connected(&BTreeSet::from([*id])))
}

/// Largest mean total load (Tbps) at which pilots see neither blocking nor
/// restoration failures: doubling from the initial probe, then bisection.
pub fn calibrate_load(cfg: &ScenarioConfig, topo: &Arc<Topology>) -> Result<CalibrationResult, HarnessError> {
    let cal = &cfg.calibration;
    if !(cal.floor_tbps > 0.0) || cal.pilot_seeds == 0 || !(cal.headroom >= 0.0) {
        return Err(HarnessError::Config("calibration needs a positive floor, pilot seeds and headroom >= 0".into()));
    }
    if !topo.is_strongly_connected(&BTreeSet::new()) {
        return Err(HarnessError::NotStronglyConnected);
    }
    let mut probes = Vec::new();
    let feasible = |b: f64, probes: &mut Vec<Probe>| -> Result<bool, HarnessError> {
        for pilot in 0..cal.pilot_seeds {
            let p = pilot_probe(cfg, topo, b * (1.0 + cal.headroom), pilot)?;
            let clean = p.clean();
            probes.push(p);
            if !clean {
                return Ok(false);
            }
        }
        Ok(true)
    };

    let mut lo = cal.floor_tbps;
    if !feasible(lo, &mut probes)? {
        return Err(HarnessError::NoFeasibleLoad { floor_tbps: lo });
    }
    let mut hi = cal.initial_tbps.max(2.0 * lo);
    let mut bounded = false;
    for _ in 0..30 {
        if feasible(hi, &mut probes)? {
            lo = hi;
            hi *= 2.0;
        } else {
            bounded = true;
            break;
        }
    }
    if bounded {
        for _ in 0..cal.iterations {
            let mid = 0.5 * (lo + hi);
            if feasible(mid, &mut probes)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(CalibrationResult { load_tbps: lo, probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eon::SimConfig;
    use crate::harness::CalibrationConfig;
    use crate::topology::tests::{link, node};
    use crate::topology::NodeId;
    use crate::traffic::TrafficModelConfig;

    fn toy(slices: usize) -> (ScenarioConfig, Arc<Topology>) {
        let topo = Topology::new(vec![node(0), node(1)], vec![link(0, 0, 1, 100.0), link(1, 1, 0, 100.0)])
            .unwrap()
            .with_dcs([NodeId(0), NodeId(1)])
            .unwrap();
        let cfg = ScenarioConfig {
            traffic: TrafficModelConfig { steps: 300, ..Default::default() },
            sim: SimConfig { slices_per_link: slices, k_paths: 2 },
            calibration: CalibrationConfig {
                floor_tbps: 0.001,
                initial_tbps: 0.01,
                iterations: 10,
                pilot_steps: 200,
                pilot_seeds: 2,
                headroom: 0.0,
            },
            ..Default::default()
        };
        (cfg, Arc::new(topo))
    }

    #[test]
    fn toy_calibration_admits_no_blocking() {
        let (cfg, topo) = toy(6);
        let r = calibrate_load(&cfg, &topo).unwrap();
        // two 16QAM channels per direction carry at most 400 Gbps per pair
        assert!(r.load_tbps > 0.0 && r.load_tbps < 0.8, "{}", r.load_tbps);
        for pilot in 0..2 {
            assert!(pilot_probe(&cfg, &topo, r.load_tbps, pilot).unwrap().clean());
        }
        // an exhaustive check of the same run on the toy grid
        let mut tcfg = cfg.traffic.clone();
        tcfg.total_load_tbps = r.load_tbps;
        let traffic = Arc::new(TrafficModel::new(&topo, &tcfg).unwrap());
        let mut sim = Simulation::new(topo.clone(), traffic, cfg.sim.clone(), cfg.sim_seed()).unwrap();
        for _ in 0..200 {
            sim.run_step().unwrap();
            sim.check_invariants().unwrap();
            for g in sim.grid() {
                assert!(g.occupied_count() <= 6);
            }
        }
        assert_eq!(sim.stats().rejected, 0);
    }

    #[test]
    fn more_spectrum_never_lowers_load() {
        let (c6, t) = toy(6);
        let (c12, _) = toy(12);
        let b6 = calibrate_load(&c6, &t).unwrap().load_tbps;
        let b12 = calibrate_load(&c12, &t).unwrap().load_tbps;
        assert!(b12 >= b6, "{b12} < {b6}");
    }

    #[test]
    fn one_way_topology_is_rejected() {
        let topo = Arc::new(
            Topology::new(vec![node(0), node(1)], vec![link(0, 0, 1, 100.0)])
                .unwrap()
                .with_dcs([NodeId(0), NodeId(1)])
                .unwrap(),
        );
        let (cfg, _) = toy(6);
        assert!(matches!(calibrate_load(&cfg, &topo), Err(HarnessError::NotStronglyConnected)));
    }

    #[test]
    fn infeasible_floor() {
        let (mut cfg, topo) = toy(3);
        cfg.calibration.floor_tbps = 5.0;
        assert!(matches!(calibrate_load(&cfg, &topo), Err(HarnessError::NoFeasibleLoad { .. })));
    }
}
