use std::sync::Arc;

use linkdrift_core::eon::{all_link_loads, Simulation};
use linkdrift_core::forecast::Checkpoint;
use linkdrift_core::harness::{
    run_scenario, run_scenario_on, scenario_suite, simulate_to_failure, HarnessError, ScenarioConfig,
};
use linkdrift_core::metrics::TConvConfig;
use linkdrift_core::LinkId;

fn small() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.traffic.steps = 1000;
    c.forecaster.train_steps = 700;
    c.forecaster.epochs = 3;
    c.forecaster.hidden = 8;
    c.incremental.epochs = 5;
    c.failure_step = 800;
    c.failed_link = Some(56);
    c.inspected_link = Some(42);
    c.reseed(5);
    c
}

#[test]
fn event_replay_matches_live_loads() {
    let cfg = small();
    let net = cfg.network().unwrap();
    let mut sim = Simulation::new(net.topo.clone(), net.traffic.clone(), cfg.sim.clone(), cfg.sim_seed()).unwrap();
    let mut live = Vec::new();
    while sim.current_step() < 400 {
        if sim.current_step() == 300 {
            sim.inject_failure(300, LinkId(56)).unwrap();
        }
        sim.run_step().unwrap();
        live.push(sim.link_loads().to_vec());
    }
    let replay = all_link_loads(&net.topo, sim.events(), 400);
    for (pos, series) in replay.iter().enumerate() {
        for (t, v) in series.iter().enumerate() {
            assert!((v - live[t][pos]).abs() < 1e-6, "link pos {pos} step {t}: {v} vs {}", live[t][pos]);
        }
    }
    let failed_pos = net.topo.link_position(LinkId(56)).unwrap();
    assert!(live[300..].iter().all(|row| row[failed_pos] == 0.0));
}

#[test]
fn scenario_is_deterministic_and_persists_artifacts() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_scenario(&cfg, Some(a.path())).unwrap();
    let rb = run_scenario(&cfg, Some(b.path())).unwrap();
    let name = cfg.scenario_name();
    for file in ["report.json", "curves.csv", "tconv.csv", "predictions.csv", "inspected_load.csv", "config.toml"] {
        let x = std::fs::read(a.path().join(&name).join(file)).unwrap();
        let y = std::fs::read(b.path().join(&name).join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
    assert_eq!(ra.report, rb.report);

    let ckpt = Checkpoint::load(a.path().join(&name).join("checkpoints/lnn.json")).unwrap();
    match ckpt {
        Checkpoint::Ltc(m) => assert_eq!(m.cell().params(), ra.lnn.cell().params()),
        other => panic!("wrong checkpoint kind {other:?}"),
    }
    let saved = ScenarioConfig::from_path(a.path().join(&name).join("config.toml")).unwrap();
    assert_eq!(saved, cfg);
}

#[test]
fn refits_counted_over_the_horizon() {
    let cfg = small();
    let run = run_scenario(&cfg, None).unwrap();
    let refits: Vec<_> = run.report.approaches.iter().map(|a| a.refits_in_horizon).collect();
    assert_eq!(refits, vec![None, Some(10), Some(2)]);
    for a in &run.report.approaches {
        assert_eq!(a.cum_rmse.len(), cfg.horizon + 1);
        assert_eq!(a.tconv.len(), 2);
    }
    assert_eq!(run.series.len(), cfg.traffic.steps as usize);
    assert!(run.predictions.values().all(|p| p.len() == 300));
}

#[test]
fn snapshot_continuation_matches_fresh_run() {
    let cfg = small();
    let net = cfg.network().unwrap();
    let (sim, pre) = simulate_to_failure(&cfg, &net).unwrap();
    let from_snapshot = run_scenario_on(&cfg, &net, Some((&sim, &pre)), None).unwrap();
    let fresh = run_scenario(&cfg, None).unwrap();
    assert_eq!(from_snapshot.report, fresh.report);
}

#[test]
fn horizon_shorter_than_run_is_config_error() {
    let mut cfg = small();
    cfg.horizon = 3;
    cfg.tconv = vec![TConvConfig { th: 10.0, x: 5 }];
    let err = run_scenario(&cfg, None).unwrap_err();
    let HarnessError::Stage { stage, source } = err else { panic!("{err}") };
    assert_eq!(stage, "config");
    assert!(matches!(*source, HarnessError::Config(_)));
}

#[test]
fn same_failed_and_inspected_rejected() {
    let mut cfg = small();
    cfg.inspected_link = cfg.failed_link;
    assert!(run_scenario(&cfg, None).is_err());
}

#[test]
fn single_scenario_suite() {
    let mut cfg = small();
    cfg.suite.highly = 0;
    cfg.suite.moderately = 1;
    let net = cfg.network().unwrap();
    let suite = scenario_suite(&cfg, &net, None).unwrap();
    assert_eq!(suite.len(), 1);
    let s = &suite[0];
    assert_ne!(s.failed_link, s.inspected_link);
    s.failure_pair(&net.topo).unwrap();
    assert_eq!(scenario_suite(&cfg, &net, None).unwrap(), suite);
}

#[test]
fn impossible_mix_on_two_nodes_exhausts_budget() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pair.toml");
    std::fs::write(
        &path,
        r#"
[[nodes]]
id = 0
name = "a"
population_weight = 1.0

[[nodes]]
id = 1
name = "b"
population_weight = 1.0

[[links]]
id = 0
src = 0
dst = 1
length_km = 100.0

[[links]]
id = 1
src = 1
dst = 0
length_km = 100.0
"#,
    )
    .unwrap();
    let mut cfg = small();
    cfg.topology = Some(path);
    cfg.dc_nodes = Some(vec![0, 1]);
    cfg.traffic.total_load_tbps = 0.1;
    cfg.sim.k_paths = 2;
    let net = cfg.network().unwrap();
    assert_eq!(Arc::strong_count(&net.topo), 1);
    let err = scenario_suite(&cfg, &net, None).unwrap_err();
    assert!(matches!(err, HarnessError::SearchBudget { .. }), "{err}");
}
