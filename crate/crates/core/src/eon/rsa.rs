//! Routing, modulation and spectrum assignment for a single demand.

use serde::{Deserialize, Serialize};

use super::modulation::ModulationFormat;
use super::spectrum::{SliceRange, SpectrumBitmap, CHANNEL_SLICES};
use crate::topology::{CandidatePath, Topology};
use crate::traffic::{Demand, DemandId};

/// Path, format and spectrum assigned to a demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lightpath {
    pub demand: DemandId,
    pub path: CandidatePath,
    pub modulation: ModulationFormat,
    pub channels: Vec<SliceRange>,
    pub regenerators: u32,
    pub expiry: u32,
}

impl Lightpath {
    /// Transceiver capacity of all channels together, Gbps.
    pub fn capacity_gbps(&self) -> f64 {
        self.channels.len() as f64 * self.modulation.bitrate_gbps()
    }
}

/// One (path, format) combination considered by the distance-adaptive rule.
#[derive(Debug, Clone, Copy)]
struct Option_ {
    path: usize,
    modulation: ModulationFormat,
    regenerators: u32,
    channels: usize,
}

/// Chooses a lightpath for `demand` among `candidates`, all of which must
/// avoid failed links.
///
/// Options are ranked by fewest regenerators, then highest transceiver
/// bitrate, then shortest path, then candidate order. The first option whose
/// channels all fit (first-fit, lowest starting slice, same slices on every
/// link of the path) wins. `None` means the demand is blocked.
///
/// `grid` is indexed by link position in `topo`. Nothing is written to it.
pub fn select_lightpath(
    topo: &Topology,
    grid: &[SpectrumBitmap],
    demand: &Demand,
    candidates: &[CandidatePath],
) -> Option<Lightpath> {
    let mut options: Vec<Option_> = candidates
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            ModulationFormat::ALL.into_iter().map(move |m| Option_ {
                path: i,
                modulation: m,
                regenerators: m.regenerators(p.length_km),
                channels: m.channels_for(demand.bitrate_gbps),
            })
        })
        .collect();
    options.sort_by(|a, b| {
        a.regenerators
            .cmp(&b.regenerators)
            .then(b.modulation.bitrate_gbps().total_cmp(&a.modulation.bitrate_gbps()))
            .then(candidates[a.path].length_km.total_cmp(&candidates[b.path].length_km))
            .then(a.path.cmp(&b.path))
    });

    let slices = grid.first().map_or(0, SpectrumBitmap::slices);
    let mut combined_cache: Vec<Option<SpectrumBitmap>> = vec![None; candidates.len()];
    for opt in options {
        let path = &candidates[opt.path];
        let combined = combined_cache[opt.path].get_or_insert_with(|| {
            SpectrumBitmap::union(
                slices,
                path.links.iter().map(|l| &grid[topo.link_position(*l).expect("candidate link exists")]),
            )
        });
        let mut scratch = combined.clone();
        let mut channels = Vec::with_capacity(opt.channels);
        for _ in 0..opt.channels {
            match scratch.first_fit(CHANNEL_SLICES) {
                Some(start) => {
                    let r = SliceRange { start, width: CHANNEL_SLICES };
                    scratch.occupy(r);
                    channels.push(r);
                }
                None => break,
            }
        }
        if channels.len() == opt.channels {
            return Some(Lightpath {
                demand: demand.id,
                path: path.clone(),
                modulation: opt.modulation,
                channels,
                regenerators: opt.regenerators,
                expiry: demand.arrival + demand.holding_steps,
            });
        }
    }
    None
}
