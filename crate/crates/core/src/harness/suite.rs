use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Network, ScenarioConfig};
use super::pipeline::{record_loads, run_scenario_on, simulate_to_failure, ScenarioRun, SimTrace};
use super::report::emit_report;
use super::{HarnessError, StageExt};
use crate::eon::Simulation;
use crate::metrics::{ImpactClass, IMPACT_THRESHOLD, IMPACT_WINDOW};
use crate::seed::derive_seed;

/// A failed/inspected pair found by the pilot search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCandidate {
    pub failed: u32,
    pub inspected: u32,
    pub class: ImpactClass,
    pub relative_change: f64,
}

fn window_mean(rows: &[Vec<f64>], pos: usize) -> f64 {
    rows.iter().map(|r| r[pos]).sum::<f64>() / rows.len() as f64
}

/// Searches failed/inspected link pairs until `cfg.suite.highly` highly and
/// `cfg.suite.moderately` moderately impacted scenarios exist.
///
/// Each candidate failed link (seeded order) is piloted for 50 post-failure
/// steps from the shared pre-failure snapshot. At most one inspected link
/// per class is taken from each failed link, drawn at random among the
/// links that qualify.
pub fn scenario_suite(
    cfg: &ScenarioConfig,
    net: &Network,
    base: Option<(&Simulation, &SimTrace)>,
) -> Result<Vec<ScenarioConfig>, HarnessError> {
    cfg.validate()?;
    let owned;
    let (sim, pre) = match base {
        Some(b) => b,
        None => {
            owned = simulate_to_failure(cfg, net)?;
            (&owned.0, &owned.1)
        }
    };
    let topo = &net.topo;
    let f = cfg.failure_step as usize;
    let pre_window = &pre[f - IMPACT_WINDOW..f];
    let pre_means: Vec<f64> = (0..topo.link_count()).map(|p| window_mean(pre_window, p)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "suite"));
    let mut links: Vec<_> =
        topo.links().iter().map(|l| l.id).filter(|id| topo.is_strongly_connected(&BTreeSet::from([*id]))).collect();
    links.shuffle(&mut rng);

    let want = [(ImpactClass::Highly, cfg.suite.highly), (ImpactClass::Moderately, cfg.suite.moderately)];
    let mut found: Vec<SuiteCandidate> = Vec::new();
    let count = |found: &[SuiteCandidate], c: ImpactClass| found.iter().filter(|s| s.class == c).count();
    let mut tried = 0;
    for failed in links.into_iter().take(cfg.suite.search_budget) {
        if want.iter().all(|(c, n)| count(&found, *c) >= *n) {
            break;
        }
        tried += 1;
        let mut pilot = sim.clone();
        pilot.inject_failure(cfg.failure_step, failed).stage("suite-pilot")?;
        let mut post = Vec::with_capacity(IMPACT_WINDOW);
        record_loads(&mut pilot, cfg.failure_step + IMPACT_WINDOW as u32, &mut post).stage("suite-pilot")?;

        let mut highly = Vec::new();
        let mut moderately = Vec::new();
        for (pos, link) in topo.links().iter().enumerate() {
            if link.id == failed || pre_means[pos] < cfg.suite.min_inspected_load_gbps {
                continue;
            }
            let change = (window_mean(&post, pos) - pre_means[pos]).abs() / pre_means[pos].max(cfg.eps);
            if change > IMPACT_THRESHOLD {
                highly.push((link.id, change));
            } else if change >= cfg.suite.min_moderate_change {
                moderately.push((link.id, change));
            }
        }
        for (class, n) in want {
            if count(&found, class) >= n {
                continue;
            }
            let pool = if class == ImpactClass::Highly { &highly } else { &moderately };
            if let Some(&(inspected, change)) = pool.choose(&mut rng) {
                found.push(SuiteCandidate { failed: failed.0, inspected: inspected.0, class, relative_change: change });
            }
        }
    }
    let (h, m) = (count(&found, ImpactClass::Highly), count(&found, ImpactClass::Moderately));
    if h < cfg.suite.highly || m < cfg.suite.moderately {
        return Err(HarnessError::SearchBudget { tried, highly: h, moderately: m });
    }
    Ok(found
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut s = cfg.clone();
            s.failed_link = Some(c.failed);
            s.inspected_link = Some(c.inspected);
            s.name = Some(format!("s{i:02}-{}-f{}-i{}", c.class, c.failed, c.inspected));
            s
        })
        .collect())
}

/// Searches the suite, runs every scenario from one shared pre-failure
/// snapshot and, with `out`, persists per-scenario artifacts under
/// `out/scenarios` and the aggregate tables under `out/report`.
pub fn run_suite(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<Vec<ScenarioRun>, HarnessError> {
    cfg.validate().stage("config")?;
    let net = cfg.network().stage("generate")?;
    let (sim, pre) = simulate_to_failure(cfg, &net).stage("simulate")?;
    let scenarios = scenario_suite(cfg, &net, Some((&sim, &pre))).stage("suite-search")?;
    let scenario_dir = out.map(|o| o.join("scenarios"));
    let runs = scenarios
        .par_iter()
        .map(|s| run_scenario_on(s, &net, Some((&sim, &pre)), scenario_dir.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(o) = out {
        let reports: Vec<_> = runs.iter().map(|r| r.report.clone()).collect();
        emit_report(&reports, &o.join("report")).stage("report")?;
    }
    Ok(runs)
}
