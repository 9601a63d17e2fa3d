//! Offered-traffic model and its translation into demand arrivals.
//!
//! Each ordered pair of communicating nodes carries a sum of sine processes,
//! one per transmission type that applies to it: city to city, city to the
//! closest data center, data center to city, and data center to data center.
//! The anycast components follow the client's current data-center mapping, so
//! after a failure they move to whichever DC is now closest.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::derive_seed;
use crate::topology::{LinkId, NodeId, Topology, TopologyError};

/// Maximum bitrate of a single demand, Gbps.
pub const MAX_DEMAND_GBPS: f64 = 250.0;
/// Bitrate granularity of generated demands, Gbps.
pub const DEMAND_GRANULARITY_GBPS: f64 = 5.0;
/// Holding times are drawn from 1..=MAX_HOLDING_STEPS.
pub const MAX_HOLDING_STEPS: u32 = 30;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("invalid traffic config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmissionType {
    CityToCity,
    CityToDc,
    DcToCity,
    DcToDc,
}

/// Fraction of the total load assigned to each transmission type before the
/// global rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeShares {
    pub city_to_city: f64,
    pub city_to_dc: f64,
    pub dc_to_city: f64,
    pub dc_to_dc: f64,
}

impl Default for TypeShares {
    fn default() -> Self {
        Self { city_to_city: 0.4, city_to_dc: 0.15, dc_to_city: 0.35, dc_to_dc: 0.10 }
    }
}

impl TypeShares {
    fn get(&self, t: TransmissionType) -> f64 {
        match t {
            TransmissionType::CityToCity => self.city_to_city,
            TransmissionType::CityToDc => self.city_to_dc,
            TransmissionType::DcToCity => self.dc_to_city,
            TransmissionType::DcToDc => self.dc_to_dc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficModelConfig {
    /// Number of simulated time steps.
    pub steps: u32,
    /// Mean total offered load, Tbps.
    pub total_load_tbps: f64,
    /// Base sine period, in time steps.
    pub period: f64,
    pub amplitude_fraction: f64,
    /// Half-width of the per-pair phase spread around each type's phase, radians.
    pub phase_spread: f64,
    pub shares: TypeShares,
    pub seed: u64,
}

impl Default for TrafficModelConfig {
    fn default() -> Self {
        Self {
            steps: 6400,
            total_load_tbps: 4.0,
            period: 24.0,
            amplitude_fraction: 0.3,
            phase_spread: PI / 3.0,
            shares: TypeShares::default(),
            seed: 0,
        }
    }
}

impl TrafficModelConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: &str| Err(TrafficError::InvalidConfig(m.to_string()));
        if self.steps == 0 {
            return bad("steps must be > 0");
        }
        if !(self.total_load_tbps.is_finite() && self.total_load_tbps > 0.0) {
            return bad("total_load_tbps must be > 0");
        }
        if !(self.period >= 2.0) {
            return bad("period must be >= 2");
        }
        if !(0.0..1.0).contains(&self.amplitude_fraction) {
            return bad("amplitude_fraction must be in [0, 1)");
        }
        let s = self.shares;
        let all = [s.city_to_city, s.city_to_dc, s.dc_to_city, s.dc_to_dc];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || all.iter().sum::<f64>() <= 0.0 {
            return bad("type shares must be non-negative with a positive sum");
        }
        Ok(())
    }
}

/// One sine component: `base * (1 + amplitude * sin(2*pi*step/period + phase))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineProcess {
    pub base: f64,
    pub amplitude_fraction: f64,
    pub period: f64,
    pub phase: f64,
}

impl SineProcess {
    pub fn value(&self, step: u32) -> f64 {
        let angle = 2.0 * PI * f64::from(step) / self.period + self.phase;
        self.base * (1.0 + self.amplitude_fraction * angle.sin())
    }
}

/// Per-entity bitrate sequence, Gbps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSeries {
    pub entity: String,
    pub values: Vec<f64>,
}

impl TrafficSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub type DemandId = u64;

/// A bitrate request d = (s, t, b, h) arriving at `arrival`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub id: DemandId,
    pub src: NodeId,
    pub dst: NodeId,
    pub bitrate_gbps: f64,
    pub holding_steps: u32,
    pub arrival: u32,
}

#[derive(Debug, Clone)]
struct Component {
    kind: TransmissionType,
    process: SineProcess,
}

/// The anycast mapping client -> serving data center.
pub type AnycastMap = BTreeMap<NodeId, NodeId>;

/// All sine components of the offered traffic, keyed by the entity they
/// belong to (fixed pairs or anycast clients).
#[derive(Debug, Clone)]
pub struct TrafficModel {
    cfg: TrafficModelConfig,
    /// Ordered communicating pairs; the index is the pair's stable identity.
    pairs: Vec<(NodeId, NodeId)>,
    pair_index: BTreeMap<(NodeId, NodeId), usize>,
    unicast: Vec<Vec<Component>>,
    to_dc: BTreeMap<NodeId, Component>,
    from_dc: BTreeMap<NodeId, Component>,
}

impl TrafficModel {
    /// Builds the sine components for every communicating pair and rescales
    /// them so the time-averaged total offered load equals the configured
    /// value.
    pub fn new(topo: &Topology, cfg: &TrafficModelConfig) -> Result<Self, TrafficError> {
        cfg.validate()?;
        if topo.dc_nodes().len() < 2 {
            return Err(TopologyError::TooFewDcs(topo.dc_nodes().len()).into());
        }
        let none = BTreeSet::new();
        let mut pairs = Vec::new();
        for a in topo.nodes() {
            let dist = topo.distances_from(a.id, &none)?;
            for b in topo.nodes() {
                if a.id != b.id && dist[topo.node_position(b.id)?].is_finite() {
                    pairs.push((a.id, b.id));
                }
            }
        }
        let pair_index: BTreeMap<_, _> = pairs.iter().enumerate().map(|(i, p)| (*p, i)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "traffic-phases"));
        let type_phase: BTreeMap<TransmissionType, f64> = [
            TransmissionType::CityToCity,
            TransmissionType::CityToDc,
            TransmissionType::DcToCity,
            TransmissionType::DcToDc,
        ]
        .into_iter()
        .map(|t| (t, rng.gen_range(0.0..2.0 * PI)))
        .collect();

        let mut draw = |kind: TransmissionType, weight: f64| -> Component {
            let jitter = if cfg.phase_spread > 0.0 { rng.gen_range(-cfg.phase_spread..=cfg.phase_spread) } else { 0.0 };
            Component {
                kind,
                process: SineProcess {
                    base: weight,
                    amplitude_fraction: cfg.amplitude_fraction,
                    period: cfg.period,
                    phase: type_phase[&kind] + jitter,
                },
            }
        };

        let weight = |n: NodeId| topo.node(n).map(|n| n.population_weight);
        let mut unicast: Vec<Vec<Component>> = vec![Vec::new(); pairs.len()];
        for (i, &(s, d)) in pairs.iter().enumerate() {
            unicast[i].push(draw(TransmissionType::CityToCity, weight(s)? * weight(d)?));
            if topo.is_dc(s) && topo.is_dc(d) {
                unicast[i].push(draw(TransmissionType::DcToDc, 1.0));
            }
        }
        let mut to_dc = BTreeMap::new();
        let mut from_dc = BTreeMap::new();
        for n in topo.nodes() {
            if topo.is_dc(n.id) {
                continue;
            }
            to_dc.insert(n.id, draw(TransmissionType::CityToDc, n.population_weight));
            from_dc.insert(n.id, draw(TransmissionType::DcToCity, n.population_weight));
        }

        let mut model = Self { cfg: cfg.clone(), pairs, pair_index, unicast, to_dc, from_dc };
        model.normalize();
        Ok(model)
    }

    fn components_mut(&mut self) -> impl Iterator<Item = &mut Component> {
        self.unicast.iter_mut().flatten().chain(self.to_dc.values_mut()).chain(self.from_dc.values_mut())
    }

    fn components(&self) -> impl Iterator<Item = &Component> {
        self.unicast.iter().flatten().chain(self.to_dc.values()).chain(self.from_dc.values())
    }

    fn normalize(&mut self) {
        let target_gbps = self.cfg.total_load_tbps * 1000.0;
        // per-type share scaling
        let mut type_weight: BTreeMap<TransmissionType, f64> = BTreeMap::new();
        for c in self.components() {
            *type_weight.entry(c.kind).or_default() += c.process.base;
        }
        let shares = self.cfg.shares;
        for c in self.components_mut() {
            let tw = type_weight[&c.kind];
            c.process.base = if tw > 0.0 { c.process.base / tw * shares.get(c.kind) * target_gbps } else { 0.0 };
        }
        // global rescaling so the mean over time of the total equals the target
        let steps = self.cfg.steps;
        let total: f64 = (0..steps).map(|t| self.total_offered(t)).sum::<f64>() / f64::from(steps);
        if total > 0.0 {
            let k = target_gbps / total;
            for c in self.components_mut() {
                c.process.base *= k;
            }
        }
    }

    pub fn config(&self) -> &TrafficModelConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u32 {
        self.cfg.steps
    }

    /// Ordered communicating pairs. The position of a pair in this slice is
    /// its stable index (used for per-pair random streams).
    pub fn pairs(&self) -> &[(NodeId, NodeId)] {
        &self.pairs
    }

    pub fn pair_index(&self, pair: (NodeId, NodeId)) -> Option<usize> {
        self.pair_index.get(&pair).copied()
    }

    /// Sum of all offered bitrate at `step`, Gbps. Independent of the anycast
    /// mapping.
    pub fn total_offered(&self, step: u32) -> f64 {
        self.components().map(|c| c.process.value(step)).sum()
    }

    /// Offered bitrate per pair index at `step` under `mapping`.
    pub fn targets_into(&self, step: u32, mapping: &AnycastMap, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.unicast.iter().map(|cs| cs.iter().map(|c| c.process.value(step)).sum::<f64>()));
        for (client, c) in &self.to_dc {
            if let Some(&dc) = mapping.get(client) {
                if let Some(i) = self.pair_index((*client, dc)) {
                    out[i] += c.process.value(step);
                }
            }
        }
        for (client, c) in &self.from_dc {
            if let Some(&dc) = mapping.get(client) {
                if let Some(i) = self.pair_index((dc, *client)) {
                    out[i] += c.process.value(step);
                }
            }
        }
    }

    /// Fully resolved per-pair series under a fixed mapping.
    pub fn pair_series(&self, mapping: &AnycastMap) -> BTreeMap<(NodeId, NodeId), TrafficSeries> {
        let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(self.cfg.steps as usize); self.pairs.len()];
        let mut buf = Vec::new();
        for t in 0..self.cfg.steps {
            self.targets_into(t, mapping, &mut buf);
            for (v, x) in values.iter_mut().zip(&buf) {
                v.push(*x);
            }
        }
        self.pairs
            .iter()
            .zip(values)
            .map(|(&(s, d), values)| ((s, d), TrafficSeries { entity: format!("{s}->{d}"), values }))
            .collect()
    }
}

/// Pair series under the failure-free anycast mapping.
pub fn generate_pair_series(
    topo: &Topology,
    cfg: &TrafficModelConfig,
) -> Result<BTreeMap<(NodeId, NodeId), TrafficSeries>, TrafficError> {
    let model = TrafficModel::new(topo, cfg)?;
    let mapping = anycast_resolve(topo, &BTreeSet::new())?;
    Ok(model.pair_series(&mapping))
}

/// Maps every non-DC node to its closest working data center.
pub fn anycast_resolve(topo: &Topology, failed: &BTreeSet<LinkId>) -> Result<AnycastMap, TopologyError> {
    topo.nodes()
        .iter()
        .filter(|n| !topo.is_dc(n.id))
        .map(|n| topo.nearest_dc(n.id, failed).map(|dc| (n.id, dc)))
        .collect()
}

/// Splits the uncovered part of a pair's target into new demands.
///
/// The returned demands carry id 0 and the caller's arrival step is not known
/// here; the simulator stamps both.
pub fn demands_for_step<R: Rng + ?Sized>(
    pair: (NodeId, NodeId),
    target_gbps: f64,
    carried_gbps: f64,
    rng: &mut R,
) -> Vec<Demand> {
    let gap = target_gbps - carried_gbps;
    let mut out = Vec::new();
    if !(gap > 0.0) {
        return out;
    }
    let half = DEMAND_GRANULARITY_GBPS / 2.0;
    let mut remaining = gap;
    while remaining >= half {
        let upper = remaining.min(MAX_DEMAND_GBPS);
        // uniform on (0, upper]
        let raw = upper - rng.gen_range(0.0..upper);
        let b = ((raw / DEMAND_GRANULARITY_GBPS).round() * DEMAND_GRANULARITY_GBPS).max(DEMAND_GRANULARITY_GBPS);
        let h = rng.gen_range(1..=MAX_HOLDING_STEPS);
        out.push(Demand { id: 0, src: pair.0, dst: pair.1, bitrate_gbps: b, holding_steps: h, arrival: 0 });
        remaining -= b;
    }
    out
}

/// Writes `pair_src,pair_dst,step,gbps` rows.
pub fn write_pair_series_csv<W: Write>(
    mut w: W,
    series: &BTreeMap<(NodeId, NodeId), TrafficSeries>,
) -> std::io::Result<()> {
    writeln!(w, "pair_src,pair_dst,step,gbps")?;
    for ((s, d), ser) in series {
        for (t, v) in ser.values.iter().enumerate() {
            writeln!(w, "{s},{d},{t},{v}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euro() -> Topology {
        Topology::euro28().with_default_dcs(7).unwrap()
    }

    fn small_cfg() -> TrafficModelConfig {
        TrafficModelConfig { steps: 240, total_load_tbps: 12.0, seed: 3, ..Default::default() }
    }

    #[test]
    fn zero_amplitude_is_constant() {
        let cfg = TrafficModelConfig { amplitude_fraction: 0.0, ..small_cfg() };
        let series = generate_pair_series(&euro(), &cfg).unwrap();
        for s in series.values() {
            assert!(s.values.iter().all(|v| *v == s.values[0]), "{} not constant", s.entity);
        }
    }

    #[test]
    fn mean_total_matches_target() {
        let cfg = small_cfg();
        let series = generate_pair_series(&euro(), &cfg).unwrap();
        let steps = cfg.steps as usize;
        let mean: f64 =
            (0..steps).map(|t| series.values().map(|s| s.values[t]).sum::<f64>()).sum::<f64>() / steps as f64;
        let target = cfg.total_load_tbps * 1000.0;
        assert!((mean - target).abs() <= 0.001 * target, "mean {mean} target {target}");
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_pair_series(&euro(), &small_cfg()).unwrap();
        let b = generate_pair_series(&euro(), &small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = generate_pair_series(&euro(), &TrafficModelConfig { seed: 4, ..small_cfg() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn series_are_non_negative() {
        let cfg = TrafficModelConfig { amplitude_fraction: 0.99, ..small_cfg() };
        let series = generate_pair_series(&euro(), &cfg).unwrap();
        assert!(series.values().flat_map(|s| &s.values).all(|v| *v >= 0.0));
        assert_eq!(series.len(), 28 * 27);
        assert!(series.values().all(|s| s.len() == cfg.steps as usize));
    }

    #[test]
    fn config_validation() {
        for bad in [
            TrafficModelConfig { steps: 0, ..Default::default() },
            TrafficModelConfig { total_load_tbps: 0.0, ..Default::default() },
            TrafficModelConfig { period: 1.5, ..Default::default() },
            TrafficModelConfig { amplitude_fraction: 1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn anycast_matches_nearest_dc() {
        let t = euro();
        let map = anycast_resolve(&t, &BTreeSet::new()).unwrap();
        assert_eq!(map.len(), 28 - 7);
        for (client, dc) in &map {
            assert!(!t.is_dc(*client));
            assert_eq!(*dc, t.nearest_dc(*client, &BTreeSet::new()).unwrap());
        }
    }

    #[test]
    fn anycast_remaps_when_closest_dc_cut_off() {
        use crate::topology::tests::{link, node};
        // client 0 reaches DC 1 directly (2 km) or via DC 2 (3 + 4 km)
        let t = Topology::new(
            vec![node(0), node(1), node(2)],
            vec![link(0, 0, 1, 2.0), link(1, 0, 2, 3.0), link(2, 2, 1, 4.0), link(3, 1, 0, 2.0), link(4, 2, 0, 3.0)],
        )
        .unwrap()
        .with_dcs([NodeId(1), NodeId(2)])
        .unwrap();
        assert_eq!(anycast_resolve(&t, &BTreeSet::new()).unwrap()[&NodeId(0)], NodeId(1));
        // with the direct link gone DC 1 is 7 km away, DC 2 is 3 km
        let failed = BTreeSet::from([LinkId(0)]);
        assert_eq!(anycast_resolve(&t, &failed).unwrap()[&NodeId(0)], NodeId(2));
    }

    #[test]
    fn no_gap_no_demands() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(demands_for_step((NodeId(0), NodeId(1)), 400.0, 400.0, &mut rng).is_empty());
        assert!(demands_for_step((NodeId(0), NodeId(1)), 100.0, 250.0, &mut rng).is_empty());
    }

    #[test]
    fn gap_is_filled_within_granularity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let ds = demands_for_step((NodeId(0), NodeId(1)), 300.0, 0.0, &mut rng);
            let sum: f64 = ds.iter().map(|d| d.bitrate_gbps).sum();
            assert!((295.0..=305.0).contains(&sum), "sum {sum}");
            for d in &ds {
                assert!(d.bitrate_gbps > 0.0 && d.bitrate_gbps <= MAX_DEMAND_GBPS);
                assert_eq!(d.bitrate_gbps % DEMAND_GRANULARITY_GBPS, 0.0);
                assert!((1..=MAX_HOLDING_STEPS).contains(&d.holding_steps));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn demand_sum_tracks_gap(target in 0.0f64..3000.0, carried in 0.0f64..3000.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ds = demands_for_step((NodeId(0), NodeId(1)), target, carried, &mut rng);
            let sum: f64 = ds.iter().map(|d| d.bitrate_gbps).sum();
            let gap = target - carried;
            if gap <= 0.0 {
                proptest::prop_assert!(ds.is_empty());
            } else {
                proptest::prop_assert!(sum >= gap - 5.0 && sum <= gap + 5.0);
            }
        }
    }
}
