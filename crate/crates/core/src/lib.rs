//! Stealthy attack synthesis and simulation on a lateral vehicle model.
// Negated float comparisons are how NaN gets rejected in the validators.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod detection;
pub mod export;
pub mod numerics;
pub mod scenario;
pub mod sim;
pub mod vehicle;

pub use numerics::{State, TimeGrid};
pub use sim::{simulate, simulate_with, ChannelTaps, SimOptions, Trace, TraceRecord, Waveform};
pub use vehicle::{build_state_space, output_map, Inputs, LateralModel, OutputConfig, OutputMap, SaturationLimits, VehicleParams};
