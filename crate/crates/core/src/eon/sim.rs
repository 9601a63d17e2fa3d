//! Step-driven dynamic network operation with link-failure restoration.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rsa::{select_lightpath, Lightpath};
use super::spectrum::{SliceRange, SpectrumBitmap, CHANNEL_SLICES};
use crate::seed::derive_seed;
use crate::topology::{CandidatePath, LinkId, NodeId, Topology, TopologyError};
use crate::traffic::{anycast_resolve, demands_for_step, AnycastMap, Demand, DemandId, TrafficModel};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("link {0} is already failed")]
    AlreadyFailed(LinkId),
    #[error("step {step} is before the current step {current}")]
    StepOutOfOrder { step: u32, current: u32 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub slices_per_link: usize,
    pub k_paths: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { slices_per_link: 320, k_paths: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Allocated,
    Rejected,
    Expired,
    FailedAffected,
    Restored,
    RestorationRejected,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Allocated => "allocated",
            Self::Rejected => "rejected",
            Self::Expired => "expired",
            Self::FailedAffected => "failed_affected",
            Self::Restored => "restored",
            Self::RestorationRejected => "restoration_rejected",
        }
    }

    /// Sign of the event's contribution to the load of the links it lists.
    pub fn load_sign(self) -> f64 {
        match self {
            Self::Allocated | Self::Restored => 1.0,
            Self::Expired | Self::FailedAffected => -1.0,
            Self::Rejected | Self::RestorationRejected => 0.0,
        }
    }
}

/// One entry of the audit trail. `links` is the lightpath's route for events
/// that add or remove load, and empty otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub step: u32,
    pub kind: EventKind,
    pub demand: DemandId,
    pub bitrate_gbps: f64,
    pub links: Vec<LinkId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub allocated: u64,
    pub rejected: u64,
    pub expired: u64,
    pub failed_affected: u64,
    pub restored: u64,
    pub restoration_rejected: u64,
}

impl SimStats {
    fn record(&mut self, kind: EventKind) {
        match kind {
            EventKind::Allocated => self.allocated += 1,
            EventKind::Rejected => self.rejected += 1,
            EventKind::Expired => self.expired += 1,
            EventKind::FailedAffected => self.failed_affected += 1,
            EventKind::Restored => self.restored += 1,
            EventKind::RestorationRejected => self.restoration_rejected += 1,
        }
    }
}

#[derive(Debug, Clone)]
struct ActiveDemand {
    demand: Demand,
    lightpath: Lightpath,
    pair: usize,
}

/// An invariant violation found by [`Simulation::check_invariants`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invariant violated: {0}")]
pub struct InvariantViolation(pub String);

/// Full mutable network state. Cloning gives an independent snapshot.
#[derive(Debug, Clone)]
pub struct Simulation {
    topo: Arc<Topology>,
    traffic: Arc<TrafficModel>,
    cfg: SimConfig,
    grid: Vec<SpectrumBitmap>,
    failed: BTreeSet<LinkId>,
    active: BTreeMap<DemandId, ActiveDemand>,
    expiries: BTreeMap<u32, Vec<DemandId>>,
    carried: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    paths: HashMap<(NodeId, NodeId), Arc<Vec<CandidatePath>>>,
    mapping: AnycastMap,
    link_load: Vec<f64>,
    next_id: DemandId,
    current_step: u32,
    record_events: bool,
    events: Vec<SimEvent>,
    stats: SimStats,
    targets: Vec<f64>,
}

impl Simulation {
    pub fn new(topo: Arc<Topology>, traffic: Arc<TrafficModel>, cfg: SimConfig, seed: u64) -> Result<Self, SimError> {
        let mapping = anycast_resolve(&topo, &BTreeSet::new())?;
        let base = derive_seed(seed, "demand-streams");
        let rngs = (0..traffic.pairs().len())
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(base);
                r.set_stream(i as u64);
                r
            })
            .collect();
        Ok(Self {
            grid: vec![SpectrumBitmap::new(cfg.slices_per_link); topo.link_count()],
            link_load: vec![0.0; topo.link_count()],
            carried: vec![0.0; traffic.pairs().len()],
            rngs,
            topo,
            traffic,
            cfg,
            failed: BTreeSet::new(),
            active: BTreeMap::new(),
            expiries: BTreeMap::new(),
            paths: HashMap::new(),
            mapping,
            next_id: 0,
            current_step: 0,
            record_events: true,
            events: Vec::new(),
            stats: SimStats::default(),
            targets: Vec::new(),
        })
    }

    /// Turns the event log off (statistics and link loads are still kept).
    pub fn without_event_log(mut self) -> Self {
        self.record_events = false;
        self
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topo
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<SimEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn failed_links(&self) -> &BTreeSet<LinkId> {
        &self.failed
    }

    pub fn anycast(&self) -> &AnycastMap {
        &self.mapping
    }

    pub fn grid(&self) -> &[SpectrumBitmap] {
        &self.grid
    }

    /// Current carried load per link position, Gbps.
    pub fn link_loads(&self) -> &[f64] {
        &self.link_load
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn active_lightpaths(&self) -> impl Iterator<Item = (&Demand, &Lightpath)> {
        self.active.values().map(|a| (&a.demand, &a.lightpath))
    }

    /// Step that the next call to [`Simulation::run_step`] will simulate.
    pub fn current_step(&self) -> u32 {
        self.current_step
    }

    fn emit(
        &mut self,
        out: &mut Vec<SimEvent>,
        step: u32,
        kind: EventKind,
        demand: DemandId,
        b: f64,
        links: Vec<LinkId>,
    ) {
        self.stats.record(kind);
        let ev = SimEvent { step, kind, demand, bitrate_gbps: b, links };
        if self.record_events {
            self.events.push(ev.clone());
        }
        out.push(ev);
    }

    fn candidates(&mut self, s: NodeId, d: NodeId) -> Result<Arc<Vec<CandidatePath>>, SimError> {
        if let Some(p) = self.paths.get(&(s, d)) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(self.topo.k_shortest_paths(s, d, self.cfg.k_paths, &self.failed)?);
        self.paths.insert((s, d), Arc::clone(&p));
        Ok(p)
    }

    fn commit(&mut self, lp: &Lightpath, b: f64) {
        for l in &lp.path.links {
            let pos = self.topo.link_position(*l).expect("path link exists");
            for ch in &lp.channels {
                let ok = self.grid[pos].occupy(*ch);
                debug_assert!(ok, "double booking on link {l}");
            }
            self.link_load[pos] += b;
        }
    }

    fn tear_down(&mut self, lp: &Lightpath, b: f64) {
        for l in &lp.path.links {
            let pos = self.topo.link_position(*l).expect("path link exists");
            for ch in &lp.channels {
                let ok = self.grid[pos].release(*ch);
                debug_assert!(ok, "releasing free slices on link {l}");
            }
            self.link_load[pos] -= b;
        }
    }

    /// Releases every demand whose holding time ends at `step`.
    pub fn release_expired(&mut self, step: u32, out: &mut Vec<SimEvent>) {
        let due: Vec<DemandId> = self.expiries.remove(&step).unwrap_or_default();
        for id in due {
            // demands dropped during restoration leave stale ids behind
            let Some(a) = self.active.remove(&id) else { continue };
            if a.lightpath.expiry != step {
                self.active.insert(id, a);
                continue;
            }
            self.tear_down(&a.lightpath, a.demand.bitrate_gbps);
            self.carried[a.pair] -= a.demand.bitrate_gbps;
            self.emit(out, step, EventKind::Expired, id, a.demand.bitrate_gbps, a.lightpath.path.links);
        }
    }

    /// Tries to allocate one arriving demand at its arrival step.
    pub fn allocate(&mut self, demand: Demand, out: &mut Vec<SimEvent>) -> Result<bool, SimError> {
        let pair = self.traffic.pair_index((demand.src, demand.dst)).ok_or(TopologyError::SameEndpoints(demand.src))?;
        let cands = self.candidates(demand.src, demand.dst)?;
        let step = demand.arrival;
        match select_lightpath(&self.topo, &self.grid, &demand, &cands) {
            Some(lp) => {
                self.commit(&lp, demand.bitrate_gbps);
                self.carried[pair] += demand.bitrate_gbps;
                self.expiries.entry(lp.expiry).or_default().push(demand.id);
                let links = lp.path.links.clone();
                let (id, b) = (demand.id, demand.bitrate_gbps);
                self.active.insert(id, ActiveDemand { demand, lightpath: lp, pair });
                self.emit(out, step, EventKind::Allocated, id, b, links);
                Ok(true)
            }
            None => {
                self.emit(out, step, EventKind::Rejected, demand.id, demand.bitrate_gbps, Vec::new());
                Ok(false)
            }
        }
    }

    /// Release-then-allocate for one step. Arrivals are served in the given
    /// order; a rejected arrival is never retried.
    pub fn advance_step(&mut self, step: u32, arrivals: Vec<Demand>) -> Result<Vec<SimEvent>, SimError> {
        if step < self.current_step {
            return Err(SimError::StepOutOfOrder { step, current: self.current_step });
        }
        let mut out = Vec::new();
        self.release_expired(step, &mut out);
        for d in arrivals {
            self.allocate(d, &mut out)?;
        }
        self.current_step = step + 1;
        Ok(out)
    }

    /// New demands for every pair whose target exceeds what it currently
    /// carries. Call after the step's expiries have been released.
    pub fn generate_arrivals(&mut self, step: u32) -> Vec<Demand> {
        let mut targets = std::mem::take(&mut self.targets);
        self.traffic.targets_into(step, &self.mapping, &mut targets);
        let mut out = Vec::new();
        for (i, &(s, d)) in self.traffic.pairs().iter().enumerate() {
            for mut dem in demands_for_step((s, d), targets[i], self.carried[i], &mut self.rngs[i]) {
                dem.id = self.next_id;
                dem.arrival = step;
                self.next_id += 1;
                out.push(dem);
            }
        }
        self.targets = targets;
        out
    }

    /// One full step of dynamic operation: expiries, then arrivals.
    pub fn run_step(&mut self) -> Result<Vec<SimEvent>, SimError> {
        let step = self.current_step;
        let mut out = Vec::new();
        self.release_expired(step, &mut out);
        let arrivals = self.generate_arrivals(step);
        for d in arrivals {
            self.allocate(d, &mut out)?;
        }
        self.current_step = step + 1;
        Ok(out)
    }

    /// Fails `link` at the start of `step`: tears down every lightpath on it
    /// and restores the affected demands (largest bitrate first) over the
    /// surviving graph with their remaining holding time.
    pub fn inject_failure(&mut self, step: u32, link: LinkId) -> Result<Vec<SimEvent>, SimError> {
        self.topo.link(link)?;
        if self.failed.contains(&link) {
            return Err(SimError::AlreadyFailed(link));
        }
        if step < self.current_step {
            return Err(SimError::StepOutOfOrder { step, current: self.current_step });
        }
        self.failed.insert(link);
        self.paths.clear();

        let mut affected: Vec<DemandId> =
            self.active.iter().filter(|(_, a)| a.lightpath.path.links.contains(&link)).map(|(id, _)| *id).collect();
        affected.sort_by(|a, b| {
            let (da, db) = (&self.active[a].demand, &self.active[b].demand);
            db.bitrate_gbps.total_cmp(&da.bitrate_gbps).then(a.cmp(b))
        });

        let mut out = Vec::new();
        for id in affected {
            let a = self.active.remove(&id).expect("affected demand is active");
            let b = a.demand.bitrate_gbps;
            self.tear_down(&a.lightpath, b);
            self.carried[a.pair] -= b;
            let expiry = a.lightpath.expiry;
            self.emit(&mut out, step, EventKind::FailedAffected, id, b, a.lightpath.path.links.clone());
            if expiry <= step {
                continue;
            }
            // restored demands keep their original expiry
            let residual = Demand { arrival: step, holding_steps: expiry - step, ..a.demand.clone() };
            let cands = self.candidates(residual.src, residual.dst)?;
            match select_lightpath(&self.topo, &self.grid, &residual, &cands) {
                Some(lp) => {
                    debug_assert_eq!(lp.expiry, expiry);
                    self.commit(&lp, b);
                    self.carried[a.pair] += b;
                    let links = lp.path.links.clone();
                    self.active.insert(id, ActiveDemand { demand: a.demand, lightpath: lp, pair: a.pair });
                    self.emit(&mut out, step, EventKind::Restored, id, b, links);
                }
                None => {
                    self.emit(&mut out, step, EventKind::RestorationRejected, id, b, Vec::new());
                }
            }
        }
        self.mapping = anycast_resolve(&self.topo, &self.failed)?;
        Ok(out)
    }

    /// Verifies every spectrum and routing invariant against a from-scratch
    /// rebuild of the occupancy.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let fail = |m: String| Err(InvariantViolation(m));
        let mut rebuilt = vec![SpectrumBitmap::new(self.cfg.slices_per_link); self.topo.link_count()];
        let mut load = vec![0.0; self.topo.link_count()];
        for (id, a) in &self.active {
            let lp = &a.lightpath;
            let links = &lp.path.links;
            if links.is_empty() {
                return fail(format!("demand {id} has an empty path"));
            }
            // continuity and simplicity
            let first = self.topo.link(links[0]).map_err(|e| InvariantViolation(e.to_string()))?;
            if first.src != a.demand.src {
                return fail(format!("demand {id} path does not start at its source"));
            }
            let mut seen = BTreeSet::from([first.src]);
            let mut at = first.src;
            let mut length = 0.0;
            for l in links {
                let link = self.topo.link(*l).map_err(|e| InvariantViolation(e.to_string()))?;
                if link.src != at {
                    return fail(format!("demand {id} path is discontinuous at link {l}"));
                }
                if !seen.insert(link.dst) {
                    return fail(format!("demand {id} path revisits node {}", link.dst));
                }
                if self.failed.contains(l) {
                    return fail(format!("demand {id} rides failed link {l}"));
                }
                at = link.dst;
                length += link.length_km;
            }
            if at != a.demand.dst {
                return fail(format!("demand {id} path does not end at its destination"));
            }
            if (length - lp.path.length_km).abs() > 1e-6 * length.max(1.0) {
                return fail(format!("demand {id} path length mismatch"));
            }
            if length > f64::from(lp.regenerators + 1) * lp.modulation.reach_km() + 1e-9 {
                return fail(format!("demand {id} exceeds reach per regenerator segment"));
            }
            if lp.capacity_gbps() < a.demand.bitrate_gbps {
                return fail(format!("demand {id} under-provisioned"));
            }
            if lp.channels.len() != lp.modulation.channels_for(a.demand.bitrate_gbps) {
                return fail(format!("demand {id} has the wrong channel count"));
            }
            for ch in &lp.channels {
                if ch.width != CHANNEL_SLICES {
                    return fail(format!("demand {id} channel is not {CHANNEL_SLICES} slices"));
                }
            }
            for l in links {
                let pos = self.topo.link_position(*l).expect("checked above");
                for ch in &lp.channels {
                    if !rebuilt[pos].occupy(SliceRange { ..*ch }) {
                        return fail(format!("slice double-booked on link {l} by demand {id}"));
                    }
                }
                load[pos] += a.demand.bitrate_gbps;
            }
        }
        if rebuilt != self.grid {
            return fail("grid occupancy differs from active lightpaths".into());
        }
        for (pos, (a, b)) in load.iter().zip(&self.link_load).enumerate() {
            if (a - b).abs() > 1e-6 {
                return fail(format!("link position {pos} load {b} but lightpaths sum to {a}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::tests::{link, node};
    use crate::traffic::TrafficModelConfig;

    /// Two nodes, one fiber each direction, both DCs.
    fn toy(slices: usize) -> Simulation {
        let topo = Arc::new(
            Topology::new(vec![node(0), node(1)], vec![link(0, 0, 1, 500.0), link(1, 1, 0, 500.0)])
                .unwrap()
                .with_dcs([NodeId(0), NodeId(1)])
                .unwrap(),
        );
        let traffic = Arc::new(
            TrafficModel::new(&topo, &TrafficModelConfig { steps: 100, total_load_tbps: 0.1, ..Default::default() })
                .unwrap(),
        );
        Simulation::new(topo, traffic, SimConfig { slices_per_link: slices, k_paths: 3 }, 1).unwrap()
    }

    fn dem(id: DemandId, b: f64, h: u32, arrival: u32) -> Demand {
        Demand { id, src: NodeId(0), dst: NodeId(1), bitrate_gbps: b, holding_steps: h, arrival }
    }

    #[test]
    fn release_before_allocate() {
        let mut sim = toy(3);
        let ev = sim.advance_step(0, vec![dem(1, 100.0, 2, 0)]).unwrap();
        assert_eq!(ev[0].kind, EventKind::Allocated);
        sim.advance_step(1, vec![]).unwrap();
        // at step 2 the first demand expires and frees the only channel
        let ev = sim.advance_step(2, vec![dem(2, 100.0, 2, 2)]).unwrap();
        let kinds: Vec<_> = ev.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::Expired, EventKind::Allocated]);
        sim.check_invariants().unwrap();
    }

    #[test]
    fn arrival_exceeding_spectrum_is_rejected() {
        let mut sim = toy(3);
        let ev = sim.advance_step(0, vec![dem(1, 250.0, 2, 0)]).unwrap();
        assert_eq!(ev[0].kind, EventKind::Rejected);
        assert_eq!(sim.active_count(), 0);
        assert_eq!(sim.grid()[0].occupied_count(), 0);
    }

    #[test]
    fn earlier_arrival_wins_last_channel() {
        for order in [[1u64, 2], [2, 1]] {
            let mut sim = toy(3);
            let arrivals = order.iter().map(|&id| dem(id, 100.0, 5, 0)).collect();
            let ev = sim.advance_step(0, arrivals).unwrap();
            assert_eq!(ev[0].demand, order[0]);
            assert_eq!(ev[0].kind, EventKind::Allocated);
            assert_eq!(ev[1].kind, EventKind::Rejected);
        }
    }

    #[test]
    fn failure_on_idle_link_changes_nothing_else() {
        let mut sim = toy(9);
        sim.advance_step(0, vec![dem(1, 100.0, 5, 0)]).unwrap();
        let ev = sim.inject_failure(1, LinkId(1)).unwrap();
        assert!(ev.is_empty());
        assert_eq!(sim.active_count(), 1);
        assert!(sim.failed_links().contains(&LinkId(1)));
        assert!(matches!(sim.inject_failure(1, LinkId(1)), Err(SimError::AlreadyFailed(_))));
    }

    #[test]
    fn demand_expiring_at_failure_step_is_dropped() {
        let mut sim = toy(9);
        sim.advance_step(0, vec![dem(1, 100.0, 3, 0)]).unwrap();
        let ev = sim.inject_failure(3, LinkId(0)).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::FailedAffected);
        assert_eq!(sim.active_count(), 0);
        // the stale expiry entry must not panic or double-release
        let ev = sim.advance_step(3, vec![]).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn restoration_over_detour_keeps_expiry() {
        // square 0->1 direct, detour 0->2->1
        let topo = Arc::new(
            Topology::new(
                vec![node(0), node(1), node(2)],
                vec![
                    link(0, 0, 1, 100.0),
                    link(1, 0, 2, 100.0),
                    link(2, 2, 1, 100.0),
                    link(3, 1, 0, 100.0),
                    link(4, 2, 0, 100.0),
                    link(5, 1, 2, 100.0),
                ],
            )
            .unwrap()
            .with_dcs([NodeId(1), NodeId(2)])
            .unwrap(),
        );
        let traffic = Arc::new(
            TrafficModel::new(&topo, &TrafficModelConfig { steps: 50, total_load_tbps: 0.1, ..Default::default() })
                .unwrap(),
        );
        let mut sim = Simulation::new(topo, traffic, SimConfig { slices_per_link: 30, k_paths: 3 }, 0).unwrap();
        sim.advance_step(0, vec![dem(7, 150.0, 10, 0)]).unwrap();
        let ev = sim.inject_failure(4, LinkId(0)).unwrap();
        let kinds: Vec<_> = ev.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::FailedAffected, EventKind::Restored]);
        assert_eq!(ev[1].links, vec![LinkId(1), LinkId(2)]);
        let (_, lp) = sim.active_lightpaths().next().unwrap();
        assert_eq!(lp.expiry, 10);
        assert!(!lp.path.links.contains(&LinkId(0)));
        sim.check_invariants().unwrap();
    }

    #[test]
    fn restoration_failure_when_no_detour() {
        let mut sim = toy(9);
        sim.advance_step(0, vec![dem(1, 100.0, 8, 0)]).unwrap();
        let ev = sim.inject_failure(2, LinkId(0)).unwrap();
        assert_eq!(ev[1].kind, EventKind::RestorationRejected);
        assert_eq!(sim.stats().restoration_rejected, 1);
        sim.check_invariants().unwrap();
    }

    #[test]
    fn generated_run_holds_invariants() {
        let topo = Arc::new(Topology::euro28().with_default_dcs(7).unwrap());
        let traffic = Arc::new(
            TrafficModel::new(&topo, &TrafficModelConfig { steps: 80, total_load_tbps: 10.0, ..Default::default() })
                .unwrap(),
        );
        let mut sim = Simulation::new(topo, traffic, SimConfig::default(), 5).unwrap();
        for _ in 0..60 {
            sim.run_step().unwrap();
            sim.check_invariants().unwrap();
        }
        sim.inject_failure(60, LinkId(0)).unwrap();
        sim.check_invariants().unwrap();
        for _ in 60..80 {
            sim.run_step().unwrap();
            sim.check_invariants().unwrap();
        }
        assert!(sim.stats().allocated > 0);
    }
}
