//! Simulation of local CSI exchange by continuous power modulation in a
//! `K`-pair interference network.
//!
//! During a `K^2`-slot exploration phase, transmitters take turns; the active
//! one sets its power to a linear combination of its local channel gains.
//! Every receiver feeds back a quantized RSSI to its own transmitter, which
//! inverts the known modulation to recover everyone's local CSI. The
//! recovered global CSI then drives team best-response power control.
//!
//! Modules:
//! - [`channel`]: network parameters, bounded Rayleigh gains, local CSI.
//! - [`feedback`]: RS power, dB quantizer, lossy label channel.
//! - [`exchange`]: schedule, modulation matrices, linear estimator.
//! - [`power`]: SINR, sum-rate, water-filling, team BRD, IWFA.
//! - [`harness`]: Monte-Carlo scenarios, ESNR, CSV output.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod exchange;
pub mod feedback;
pub mod harness;
pub mod power;

pub use channel::{
    from_db, gain_bounds, mean_gain, perturb_local_csi, sample_channel, to_db, ChannelMatrix,
    GainTensor, LinkStats, LocalCsi, NetworkConfig,
};
pub use error::{Error, Result};
pub use exchange::{
    estimate_remote_csi, exploration_power, run_exchange, run_exchange_with, CsiEstimate,
    ExchangeSetup, ExplorationSchedule, ModulationMatrix, SlotTrace,
};
pub use feedback::{
    corrupt_label, observe, rs_power, FeedbackChannel, FeedbackObservation, Quantizer,
    QuantizerReference,
};
pub use harness::{emit_csv, esnr, run_scenario, MetricsRecord, Scenario, Scheme};
pub use power::{
    distributed_team_brd, iwfa, sinr, sum_rate, team_brd, water_fill, BrdSettings, Dynamics,
    PowerProfile, WaterFilling,
};
