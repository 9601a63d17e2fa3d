use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::{incremental_name, Network, ScenarioConfig};
use super::{HarnessError, StageExt};
use crate::eon::{SimError, SimStats, Simulation};
use crate::forecast::{Checkpoint, LtcModel, MlpModel};
use crate::metrics::{
    classify_impact, cumulative_curves, mape, tconv, write_curves_csv, write_tconv_csv, ApproachResult, EvalReport,
    TConvEntry,
};

/// Carried load of every link at the end of each simulated step; rows are
/// steps, columns link positions.
pub type SimTrace = Vec<Vec<f64>>;

/// Runs `sim` up to (not including) step `until`, appending one row of link
/// loads per step.
pub fn record_loads(sim: &mut Simulation, until: u32, trace: &mut SimTrace) -> Result<(), SimError> {
    while sim.current_step() < until {
        sim.run_step()?;
        trace.push(sim.link_loads().to_vec());
    }
    Ok(())
}

/// Fresh simulation run up to the configured failure step.
pub fn simulate_to_failure(cfg: &ScenarioConfig, net: &Network) -> Result<(Simulation, SimTrace), HarnessError> {
    let mut sim =
        Simulation::new(net.topo.clone(), net.traffic.clone(), cfg.sim.clone(), cfg.sim_seed())?.without_event_log();
    let mut trace = Vec::with_capacity(cfg.traffic.steps as usize);
    record_loads(&mut sim, cfg.failure_step, &mut trace)?;
    Ok((sim, trace))
}

/// Everything a scenario run produced.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: EvalReport,
    /// Inspected-link load for every step.
    pub series: Vec<f64>,
    /// One-step forecasts per approach, starting at `train_steps`.
    pub predictions: BTreeMap<String, Vec<f64>>,
    pub stats: SimStats,
    pub lnn: LtcModel,
    pub incremental: Vec<MlpModel>,
}

/// Full pipeline from a config: generate, simulate, fail, forecast, evaluate.
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<ScenarioRun, HarnessError> {
    cfg.validate().stage("config")?;
    let net = cfg.network().stage("generate")?;
    run_scenario_on(cfg, &net, None, out)
}

/// Like [`run_scenario`] but on a prepared network, optionally continuing
/// from a snapshot taken at the failure step (with its pre-failure trace).
pub fn run_scenario_on(
    cfg: &ScenarioConfig,
    net: &Network,
    base: Option<(&Simulation, &SimTrace)>,
    out: Option<&Path>,
) -> Result<ScenarioRun, HarnessError> {
    let (failed, inspected) = cfg.failure_pair(&net.topo).stage("config")?;
    let pos = net.topo.link_position(inspected).stage("config")?;

    let owned;
    let (mut sim, pre) = match base {
        Some((s, t)) => (s.clone(), t),
        None => {
            owned = simulate_to_failure(cfg, net).stage("simulate")?;
            (owned.0, &owned.1)
        }
    };
    if sim.current_step() != cfg.failure_step || pre.len() != cfg.failure_step as usize {
        return Err(HarnessError::Config("snapshot is not at the failure step".into())).stage("simulate");
    }
    sim.inject_failure(cfg.failure_step, failed).stage("failure")?;
    let mut post = Vec::with_capacity((cfg.traffic.steps - cfg.failure_step) as usize);
    record_loads(&mut sim, cfg.traffic.steps, &mut post).stage("simulate")?;
    let series: Vec<f64> = pre.iter().chain(post.iter()).map(|row| row[pos]).collect();

    let fc = &cfg.forecaster;
    let mut lnn = LtcModel::train(&series, fc).stage("train-lnn")?;
    let mut incremental = cfg
        .retrain_windows
        .iter()
        .map(|&w| MlpModel::initial_fit(&series, fc, &cfg.incremental, w))
        .collect::<Result<Vec<_>, _>>()
        .stage("train-incremental")?;

    let names = cfg.approach_names();
    let mut preds: Vec<Vec<f64>> = vec![Vec::with_capacity(series.len() - fc.train_steps); names.len()];
    let mut hashers: Vec<Sha256> = vec![Sha256::new(); names.len()];
    let feed = |h: &mut Sha256, window: &[f64], actual: f64| {
        for v in window.iter().chain(std::iter::once(&actual)) {
            h.update(v.to_le_bytes());
        }
    };
    for t in fc.train_steps..series.len() {
        let window = &series[t - fc.p..t];
        let actual = series[t];
        feed(&mut hashers[0], window, actual);
        preds[0].push(lnn.predict_online(window).stage("stream")?);
        for (k, m) in incremental.iter_mut().enumerate() {
            feed(&mut hashers[k + 1], window, actual);
            preds[k + 1].push(m.predict_then_buffer(window, actual).stage("stream")?);
        }
    }
    let digests: Vec<String> = hashers.into_iter().map(|h| hex::encode(h.finalize())).collect();
    if digests.iter().any(|d| *d != digests[0]) {
        return Err(HarnessError::StreamMismatch);
    }

    let f = cfg.failure_step as usize;
    let offset = f - fc.train_steps;
    let actual_post = &series[f..];
    let actual_warm = &series[fc.train_steps..f];
    let mut approaches = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let pred_post = &preds[k][offset..];
        let (cum_rmse, cum_mape) = cumulative_curves(pred_post, actual_post, cfg.horizon, cfg.eps).stage("evaluate")?;
        let mut entries = Vec::with_capacity(cfg.tconv.len());
        for c in &cfg.tconv {
            entries.push(TConvEntry {
                th: c.th,
                x: c.x,
                tconv: tconv(pred_post, actual_post, *c, cfg.eps).stage("evaluate")?,
            });
        }
        let pre_failure_mape = mape(&preds[k][..offset], actual_warm, cfg.eps).stage("evaluate")?;
        // deployment sample s (1-based) forecasts step train_steps + s - 1
        let refits_in_horizon = (k > 0).then(|| {
            let lo = offset as u64;
            let hi = (offset + cfg.horizon) as u64;
            incremental[k - 1].refit_samples().iter().filter(|&&s| s > lo && s <= hi).count()
        });
        approaches.push(ApproachResult {
            approach: name.clone(),
            cum_rmse,
            cum_mape,
            tconv: entries,
            pre_failure_mape,
            refits_in_horizon,
        });
    }

    let impact = classify_impact(&series, f, cfg.eps).stage("evaluate")?;
    let report = EvalReport {
        scenario: cfg.scenario_name(),
        failed_link: failed.0,
        inspected_link: inspected.0,
        failure_step: cfg.failure_step,
        horizon: cfg.horizon,
        impact,
        stream_hash: digests[0].clone(),
        approaches,
    };
    let predictions: BTreeMap<String, Vec<f64>> = names.iter().cloned().zip(preds).collect();
    let run = ScenarioRun { report, series, predictions, stats: sim.stats().clone(), lnn, incremental };
    if let Some(dir) = out {
        write_scenario_artifacts(cfg, &run, dir).stage("persist")?;
    }
    Ok(run)
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(path, e))
}

/// Writes the per-scenario artifacts under `root/<scenario name>/`.
fn write_scenario_artifacts(cfg: &ScenarioConfig, run: &ScenarioRun, root: &Path) -> Result<(), HarnessError> {
    let dir = root.join(&run.report.scenario);
    let ckpt = dir.join("checkpoints");
    fs::create_dir_all(&ckpt).map_err(|e| HarnessError::io(&ckpt, e))?;

    write_file(&dir.join("config.toml"), |w| w.write_all(cfg.to_toml_string().as_bytes()))?;
    let json = serde_json::to_string_pretty(&run.report).expect("report serializes");
    write_file(&dir.join("report.json"), |w| w.write_all(json.as_bytes()))?;
    write_file(&dir.join("curves.csv"), |w| write_curves_csv(&run.report.approaches, w))?;
    write_file(&dir.join("tconv.csv"), |w| write_tconv_csv(&run.report, w))?;
    write_file(&dir.join("inspected_load.csv"), |w| {
        writeln!(w, "step,gbps")?;
        for (t, v) in run.series.iter().enumerate() {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    })?;
    let names: Vec<&String> = run.predictions.keys().collect();
    let start = cfg.forecaster.train_steps;
    write_file(&dir.join("predictions.csv"), |w| {
        let mut header = String::from("step,actual");
        for n in &names {
            write!(header, ",{n}").expect("string write");
        }
        writeln!(w, "{header}")?;
        for i in 0..run.series.len() - start {
            write!(w, "{},{}", start + i, run.series[start + i])?;
            for n in &names {
                write!(w, ",{}", run.predictions[*n][i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    Checkpoint::Ltc(run.lnn.clone()).save(ckpt.join("lnn.json"))?;
    for m in &run.incremental {
        let name = incremental_name(m.retrain_window()).to_lowercase();
        Checkpoint::Mlp(m.clone()).save(ckpt.join(format!("{name}.json")))?;
    }
    Ok(())
}
