use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::eon::SimConfig;
use crate::forecast::{ForecasterConfig, IncrementalConfig};
use crate::metrics::{default_tconv_configs, TConvConfig, DEFAULT_EPS, IMPACT_WINDOW};
use crate::seed::derive_seed;
use crate::topology::{LinkId, NodeId, Topology};
use crate::traffic::{TrafficModel, TrafficModelConfig};

/// How `scenario_suite` searches for failed/inspected link pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub highly: usize,
    pub moderately: usize,
    /// Maximum number of candidate failed links to pilot.
    pub search_budget: usize,
    /// Minimum pre-failure mean load for a link to be inspected, Gbps.
    pub min_inspected_load_gbps: f64,
    /// Minimum relative change for a moderately impacted pick.
    pub min_moderate_change: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { highly: 5, moderately: 5, search_budget: 82, min_inspected_load_gbps: 100.0, min_moderate_change: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub floor_tbps: f64,
    /// First upper probe; doubled while still feasible.
    pub initial_tbps: f64,
    pub iterations: usize,
    pub pilot_steps: u32,
    pub pilot_seeds: usize,
    /// Pilots run at B·(1 + headroom) so the returned B has slack against
    /// demand-stream randomness.
    pub headroom: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { floor_tbps: 1.0, initial_tbps: 8.0, iterations: 10, pilot_steps: 600, pilot_seeds: 2, headroom: 0.1 }
    }
}

/// Everything one experiment needs; also the on-disk TOML layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Option<String>,
    /// Topology document; the bundled Euro28 instance when absent.
    pub topology: Option<PathBuf>,
    pub dc_count: usize,
    pub dc_nodes: Option<Vec<u32>>,
    pub traffic: TrafficModelConfig,
    pub sim: SimConfig,
    pub forecaster: ForecasterConfig,
    pub incremental: IncrementalConfig,
    pub retrain_windows: Vec<usize>,
    pub tconv: Vec<TConvConfig>,
    /// Post-failure steps covered by the cumulative curves.
    pub horizon: usize,
    pub failure_step: u32,
    pub failed_link: Option<u32>,
    pub inspected_link: Option<u32>,
    pub eps: f64,
    pub seed: u64,
    pub suite: SuiteConfig,
    pub calibration: CalibrationConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mut cfg = Self {
            name: None,
            topology: None,
            dc_count: 7,
            dc_nodes: None,
            traffic: TrafficModelConfig::default(),
            sim: SimConfig::default(),
            forecaster: ForecasterConfig::default(),
            incremental: IncrementalConfig::default(),
            retrain_windows: vec![5, 20],
            tconv: default_tconv_configs(),
            horizon: 50,
            failure_step: 6100,
            failed_link: None,
            inspected_link: None,
            eps: DEFAULT_EPS,
            seed: 0,
            suite: SuiteConfig::default(),
            calibration: CalibrationConfig::default(),
        };
        cfg.reseed(0);
        cfg
    }
}

/// Topology and traffic model shared read-only by every run of a config.
#[derive(Debug, Clone)]
pub struct Network {
    pub topo: Arc<Topology>,
    pub traffic: Arc<TrafficModel>,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets the master seed and derives the traffic and forecaster seeds from it.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.traffic.seed = derive_seed(seed, "traffic");
        self.forecaster.seed = derive_seed(seed, "forecaster");
    }

    pub fn sim_seed(&self) -> u64 {
        derive_seed(self.seed, "simulation")
    }

    pub fn scenario_name(&self) -> String {
        match (&self.name, self.failed_link, self.inspected_link) {
            (Some(n), _, _) => n.clone(),
            (None, Some(f), Some(i)) => format!("f{f}-i{i}"),
            _ => "unnamed".into(),
        }
    }

    pub fn approach_names(&self) -> Vec<String> {
        let mut names = vec![LNN_NAME.to_string()];
        names.extend(self.retrain_windows.iter().map(|w| incremental_name(*w)));
        names
    }

    /// Checks everything except the failure pair.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.traffic.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.forecaster.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        for t in &self.tconv {
            t.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            if self.horizon < t.x {
                return bad(format!("horizon {} is shorter than the convergence run x = {}", self.horizon, t.x));
            }
        }
        if self.sim.slices_per_link < crate::eon::CHANNEL_SLICES || self.sim.k_paths == 0 {
            return bad("sim needs at least one channel per link and k_paths >= 1".into());
        }
        if self.retrain_windows.contains(&0) {
            return bad("retrain windows must be positive".into());
        }
        let f = self.failure_step as usize;
        if f < self.forecaster.train_steps + self.forecaster.p {
            return bad(format!(
                "failure step {f} must be at least train_steps + p = {}",
                self.forecaster.train_steps + self.forecaster.p
            ));
        }
        if f < IMPACT_WINDOW {
            return bad(format!("failure step must leave {IMPACT_WINDOW} pre-failure samples"));
        }
        let post = (self.traffic.steps as usize).saturating_sub(f);
        let need = (self.horizon + 1).max(IMPACT_WINDOW);
        if post < need {
            return bad(format!("traffic.steps leaves {post} post-failure steps, need {need}"));
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive".into());
        }
        Ok(())
    }

    /// The failure pair, after full validation against the topology.
    pub fn failure_pair(&self, topo: &Topology) -> Result<(LinkId, LinkId), HarnessError> {
        self.validate()?;
        let (Some(f), Some(i)) = (self.failed_link, self.inspected_link) else {
            return Err(HarnessError::Config("failed_link and inspected_link are required".into()));
        };
        if f == i {
            return Err(HarnessError::Config("failed and inspected link must differ".into()));
        }
        let (f, i) = (LinkId(f), LinkId(i));
        topo.link(f)?;
        topo.link(i)?;
        Ok((f, i))
    }

    pub fn load_topology(&self) -> Result<Topology, HarnessError> {
        let base = match &self.topology {
            Some(p) => Topology::from_path(p)?,
            None => Topology::euro28(),
        };
        let topo = match &self.dc_nodes {
            Some(list) => base.with_dcs(list.iter().map(|&n| NodeId(n)))?,
            None => base.with_default_dcs(self.dc_count)?,
        };
        Ok(topo)
    }

    pub fn network(&self) -> Result<Network, HarnessError> {
        let topo = Arc::new(self.load_topology()?);
        self.network_on(topo)
    }

    pub fn network_on(&self, topo: Arc<Topology>) -> Result<Network, HarnessError> {
        let traffic = Arc::new(TrafficModel::new(&topo, &self.traffic)?);
        Ok(Network { topo, traffic })
    }
}

pub const LNN_NAME: &str = "LNN";

pub fn incremental_name(window: usize) -> String {
    format!("Incremental-{window}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_roundtrip() {
        let c = ScenarioConfig { failed_link: Some(3), inspected_link: Some(8), ..Default::default() };
        let back = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_document_uses_defaults() {
        let c = ScenarioConfig::from_toml_str("failure_step = 6200\n[traffic]\nsteps = 6500\n").unwrap();
        assert_eq!(c.failure_step, 6200);
        assert_eq!(c.traffic.steps, 6500);
        assert_eq!(c.horizon, 50);
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn horizon_shorter_than_run_is_rejected() {
        let c = ScenarioConfig { horizon: 3, ..Default::default() };
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn early_failure_rejected() {
        let c = ScenarioConfig { failure_step: 6001, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn failure_pair_checks() {
        let topo = Topology::euro28();
        let mut c = ScenarioConfig::default();
        assert!(c.failure_pair(&topo).is_err());
        c.failed_link = Some(4);
        c.inspected_link = Some(4);
        assert!(c.failure_pair(&topo).is_err());
        c.inspected_link = Some(500);
        assert!(c.failure_pair(&topo).is_err());
        c.inspected_link = Some(5);
        assert_eq!(c.failure_pair(&topo).unwrap(), (LinkId(4), LinkId(5)));
    }

    #[test]
    fn reseed_changes_stage_seeds() {
        let mut c = ScenarioConfig::default();
        let before = (c.traffic.seed, c.forecaster.seed);
        c.reseed(7);
        assert_ne!(before, (c.traffic.seed, c.forecaster.seed));
        assert_ne!(c.traffic.seed, c.forecaster.seed);
    }
}
