//! Flex-grid elastic optical network: spectrum, modulation, lightpath
//! selection and the dynamic simulation with failures.

pub mod load;
pub mod modulation;
pub mod rsa;
pub mod sim;
pub mod spectrum;

pub use load::{all_link_loads, link_load_series, write_event_log_csv, write_link_loads_csv};
pub use modulation::ModulationFormat;
pub use rsa::{select_lightpath, Lightpath};
pub use sim::{EventKind, InvariantViolation, SimConfig, SimError, SimEvent, SimStats, Simulation};
pub use spectrum::{SliceRange, SpectrumBitmap, CHANNEL_SLICES, SLICE_WIDTH_GHZ};
