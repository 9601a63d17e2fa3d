use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use linkdrift_core::eon::{all_link_loads, write_event_log_csv, write_link_loads_csv, Simulation};
use linkdrift_core::forecast::{Checkpoint, LtcModel, MlpModel};
use linkdrift_core::harness::{
    calibrate_load, emit_report, incremental_name, read_reports, run_scenario, run_suite, ScenarioConfig,
};
use linkdrift_core::traffic::{generate_pair_series, write_pair_series_csv};
use linkdrift_core::LinkId;

#[derive(Parser)]
#[command(
    name = "linkdrift",
    version,
    about = "Link-load forecasting under failure-induced drift in elastic optical networks"
)]
struct Cli {
    /// Scenario config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; rederives the traffic, simulation and forecaster seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "linkdrift-out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct LinkPair {
    /// Failed link id (overrides the config).
    #[arg(long)]
    failed: Option<u32>,
    /// Inspected link id (overrides the config).
    #[arg(long)]
    inspected: Option<u32>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search the largest load with no blocking and full restoration.
    Calibrate {
        /// Write the config with the calibrated load to this path.
        #[arg(long)]
        write_config: Option<PathBuf>,
    },
    /// Write per-pair offered traffic series.
    GenTraffic,
    /// Simulate the network, failing `--failed` at the failure step if given.
    Simulate {
        #[arg(long)]
        failed: Option<u32>,
    },
    /// Train the forecasters on an inspected-link series and save checkpoints.
    Train {
        #[command(flatten)]
        links: LinkPair,
        /// Read the series from a `step,gbps` CSV instead of simulating.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Run one failure scenario end to end.
    Evaluate {
        #[command(flatten)]
        links: LinkPair,
    },
    /// Search and run the scenario suite, then emit the aggregate report.
    Suite,
    /// Rebuild the aggregate report from saved scenario reports.
    Report {
        /// Directory holding scenario reports (defaults to `--out`).
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::from_path(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.reseed(s);
    }
    Ok(cfg)
}

fn apply_links(cfg: &mut ScenarioConfig, links: &LinkPair) {
    if links.failed.is_some() {
        cfg.failed_link = links.failed;
    }
    if links.inspected.is_some() {
        cfg.inspected_link = links.inspected;
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let Some((_, v)) = line.split_once(',') else { bail!("{}:{}: expected step,gbps", path.display(), n + 1) };
        out.push(v.trim().parse().with_context(|| format!("{}:{}", path.display(), n + 1))?);
    }
    Ok(out)
}

fn simulate(cfg: &ScenarioConfig, failed: Option<u32>, out: &Path) -> Result<()> {
    let net = cfg.network()?;
    let mut sim = Simulation::new(net.topo.clone(), net.traffic.clone(), cfg.sim.clone(), cfg.sim_seed())?;
    if let Some(f) = failed {
        net.topo.link(LinkId(f))?;
    }
    let steps = cfg.traffic.steps;
    while sim.current_step() < steps {
        if let Some(f) = failed.filter(|_| sim.current_step() == cfg.failure_step) {
            sim.inject_failure(cfg.failure_step, LinkId(f))?;
        }
        sim.run_step()?;
    }
    write_event_log_csv(sim.events(), create(&out.join("events.csv"))?)?;
    let loads = all_link_loads(&net.topo, sim.events(), steps);
    write_link_loads_csv(&net.topo, &loads, create(&out.join("link_loads.csv"))?)?;
    let s = sim.stats();
    println!("{s:?}");
    Ok(())
}

fn inspected_series(cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    let net = cfg.network()?;
    let (failed, inspected) = cfg.failure_pair(&net.topo)?;
    let pos = net.topo.link_position(inspected)?;
    let mut sim =
        Simulation::new(net.topo.clone(), net.traffic.clone(), cfg.sim.clone(), cfg.sim_seed())?.without_event_log();
    let mut series = Vec::with_capacity(cfg.traffic.steps as usize);
    while sim.current_step() < cfg.traffic.steps {
        if sim.current_step() == cfg.failure_step {
            sim.inject_failure(cfg.failure_step, failed)?;
        }
        sim.run_step()?;
        series.push(sim.link_loads()[pos]);
    }
    Ok(series)
}

fn train(cfg: &ScenarioConfig, series: Option<&Path>, out: &Path) -> Result<()> {
    let values = match series {
        Some(p) => read_series(p)?,
        None => inspected_series(cfg)?,
    };
    let dir = out.join("checkpoints");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let lnn = LtcModel::train(&values, &cfg.forecaster)?;
    if let Some(r) = lnn.report() {
        println!("LNN: {} epochs, final mse {:.6}", r.epochs, r.final_mse);
    }
    Checkpoint::Ltc(lnn).save(dir.join("lnn.json"))?;
    for &w in &cfg.retrain_windows {
        let m = MlpModel::initial_fit(&values, &cfg.forecaster, &cfg.incremental, w)?;
        let name = incremental_name(w);
        println!("{name}: fitted");
        Checkpoint::Mlp(m).save(dir.join(format!("{}.json", name.to_lowercase())))?;
    }
    Ok(())
}

fn print_report(r: &linkdrift_core::metrics::EvalReport) {
    println!(
        "{}: failed {} inspected {} {} (change {:.3})",
        r.scenario, r.failed_link, r.inspected_link, r.impact.class, r.impact.relative_change
    );
    for a in &r.approaches {
        let tc: Vec<String> = a.tconv.iter().map(|e| format!("th{}={}", e.th, e.tconv)).collect();
        println!(
            "  {:<16} rmse@0 {:>10.3} rmse@{} {:>10.3} warm mape {:>6.2}% {}",
            a.approach,
            a.cum_rmse[0],
            r.horizon,
            a.cum_rmse[r.horizon],
            a.pre_failure_mape,
            tc.join(" ")
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match &cli.cmd {
        Cmd::Calibrate { write_config } => {
            let topo = std::sync::Arc::new(cfg.load_topology()?);
            let r = calibrate_load(&cfg, &topo)?;
            fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = create(&out.join("calibration.json"))?;
            serde_json::to_writer_pretty(&mut w, &r)?;
            w.flush()?;
            println!("load_tbps = {}", r.load_tbps);
            if let Some(p) = write_config {
                cfg.traffic.total_load_tbps = r.load_tbps;
                create(p)?.write_all(cfg.to_toml_string().as_bytes())?;
            }
        }
        Cmd::GenTraffic => {
            let topo = cfg.load_topology()?;
            let series = generate_pair_series(&topo, &cfg.traffic)?;
            let mut w = create(&out.join("pair_series.csv"))?;
            write_pair_series_csv(&mut w, &series)?;
            w.flush()?;
            println!("{} pairs x {} steps", series.len(), cfg.traffic.steps);
        }
        Cmd::Simulate { failed } => {
            if failed.is_some() {
                cfg.failed_link = *failed;
            }
            simulate(&cfg, cfg.failed_link, out)?;
        }
        Cmd::Train { links, series } => {
            apply_links(&mut cfg, links);
            train(&cfg, series.as_deref(), out)?;
        }
        Cmd::Evaluate { links } => {
            apply_links(&mut cfg, links);
            let run = run_scenario(&cfg, Some(out))?;
            print_report(&run.report);
        }
        Cmd::Suite => {
            let runs = run_suite(&cfg, Some(out))?;
            for r in &runs {
                print_report(&r.report);
            }
        }
        Cmd::Report { from } => {
            let reports = read_reports(from.as_deref().unwrap_or(out))?;
            emit_report(&reports, &out.join("report"))?;
            println!("{} scenario reports", reports.len());
        }
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
