// negated float comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eon;
pub mod forecast;
pub mod harness;
pub mod metrics;
pub mod seed;
pub mod topology;
pub mod traffic;

pub use topology::{CandidatePath, Link, LinkId, Node, NodeId, Topology, TopologyError};
pub use traffic::{Demand, DemandId, TrafficModel, TrafficModelConfig, TrafficSeries};
