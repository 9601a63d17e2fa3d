//! Per-link carried load reconstructed from the event log.

use std::io::Write;

use super::sim::SimEvent;
use crate::topology::{LinkId, Topology, TopologyError};
use crate::traffic::TrafficSeries;

/// Carried load on `link` at the end of each step in `0..horizon`, replayed
/// from `events` (which must be in step order).
pub fn link_load_series(
    topo: &Topology,
    events: &[SimEvent],
    link: LinkId,
    horizon: u32,
) -> Result<TrafficSeries, TopologyError> {
    topo.link(link)?;
    let mut values = vec![0.0; horizon as usize];
    let mut load = 0.0;
    let mut it = events.iter().peekable();
    for (step, v) in values.iter_mut().enumerate() {
        while let Some(ev) = it.next_if(|e| e.step as usize <= step) {
            if ev.links.contains(&link) {
                load += ev.kind.load_sign() * ev.bitrate_gbps;
            }
        }
        *v = load;
    }
    Ok(TrafficSeries { entity: format!("link:{link}"), values })
}

/// Every link's series at once, indexed by link position.
pub fn all_link_loads(topo: &Topology, events: &[SimEvent], horizon: u32) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; horizon as usize]; topo.link_count()];
    let mut load = vec![0.0; topo.link_count()];
    let mut it = events.iter().peekable();
    for step in 0..horizon as usize {
        while let Some(ev) = it.next_if(|e| e.step as usize <= step) {
            let sign = ev.kind.load_sign();
            for l in &ev.links {
                if let Ok(pos) = topo.link_position(*l) {
                    load[pos] += sign * ev.bitrate_gbps;
                }
            }
        }
        for (pos, series) in out.iter_mut().enumerate() {
            series[step] = load[pos];
        }
    }
    out
}

/// CSV with columns `link,step,gbps`.
pub fn write_link_loads_csv<W: Write>(topo: &Topology, loads: &[Vec<f64>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "link,step,gbps")?;
    for (link, series) in topo.links().iter().zip(loads) {
        for (step, v) in series.iter().enumerate() {
            writeln!(w, "{},{},{}", link.id, step, v)?;
        }
    }
    Ok(())
}

/// CSV with columns `step,kind,demand,bitrate_gbps,links` (links joined by `;`).
pub fn write_event_log_csv<W: Write>(events: &[SimEvent], mut w: W) -> std::io::Result<()> {
    writeln!(w, "step,kind,demand,bitrate_gbps,links")?;
    for ev in events {
        let links: Vec<String> = ev.links.iter().map(|l| l.to_string()).collect();
        writeln!(w, "{},{},{},{},{}", ev.step, ev.kind.as_str(), ev.demand, ev.bitrate_gbps, links.join(";"))?;
    }
    Ok(())
}
