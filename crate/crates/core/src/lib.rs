//! Channel profile monitoring (CPM) for mission-critical machine-type
//! communication.
//!
//! Alice authenticates each packet by comparing the OFDM channel estimate
//! taken from its Schmidl-Cox preamble with the estimate of the last
//! accepted packet: a small mean square error means the packet travelled
//! the same (legitimate) channel. This crate simulates the Bob and Eve
//! links, runs the receiver and detector, and aggregates drop rates.
//!
//! - [`channel`]: tapped-delay-line Rayleigh links with temporal and spatial correlation.
//! - [`ofdm`]: framing, synchronisation, CFO and channel estimation.
//! - [`detector`]: error metrics, threshold calibration and the accept/drop rule.
//! - [`harness`]: calibration, scenario runs and parameter sweeps.
//! - [`config`], [`trace`], [`iq`]: scenario files, CSV traces and IQ dumps.
//! - [`mic`]: payload overhead of message integrity codes.

pub mod channel;
pub mod config;
pub mod detector;
pub mod harness;
pub mod iq;
pub mod mic;
pub mod ofdm;
pub mod trace;

pub use channel::{
    apply_channel, bessel_j0, make_linked_pair, spatial_correlation, ChannelRealization, FadingLink, LinkParams,
    SpatialGeometry,
};
pub use config::{parse_config, AttackSchedule, ConfigError, Override, ScenarioConfig, SweepAxis};
pub use detector::{
    calibrate_threshold, mse, pcc, DetectorState, ErrorRecord, ReferenceSet, Truth, UpdatePolicy, Verdict,
};
pub use harness::{run_calibration, run_scenario, sweep, RunReport};
pub use mic::mic_overhead;
pub use ofdm::{ChannelSnapshot, OfdmFrame, OfdmNumerology};
