//! The virtual RF plane: a gNB-side TCP server and UE-side clients that
//! exchange one IQ frame per slot in each direction.
//!
//! Placement of the channel convolution is the mode switch:
//!
//! * [`Mode::Vanilla`] — convolution at the receiving node. UEs convolve
//!   their downlink; the gNB convolves every uplink stream serially before
//!   aggregation, which is the classic single-core bottleneck.
//! * [`Mode::Optimized`] — UE-localized convolution in both directions.
//!   Per-UE work runs in parallel inside each UE; the gNB only sums.
//!
//! Uplink aggregation is the element-wise complex sum over UEs in ascending
//! UE-id order. A missing uplink frame is replaced with zeros after the
//! timeout budget and counted, never awaited indefinitely.

mod clock;
mod gnb;
mod io;
pub mod pin;
mod ue;
mod wire;

pub use clock::SlotClock;
pub use gnb::{run_gnb, EchoStats, GnbHandle, GnbReport};
pub use io::{CaptureSink, NullSink, PowerSink, PrngSource, SlotSink, SlotSource, ZeroSource};
pub use pin::{pin_current_thread, PinningMap};
pub use ue::{run_ue, UeConfig, UeHandle, UeReport};
pub use wire::{WireBody, WireError, WireMessage, HEADER_LEN, WIRE_MAGIC, WIRE_VERSION};

use crate::chan_model::{ChanModelError, CirTrace};
use crate::conv_engine::ConvError;
use crate::link_telemetry::McsTable;
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

/// Convolution placement for a session; fixed for the session lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vanilla,
    Optimized,
}

impl Mode {
    pub(crate) fn to_wire(self) -> u8 {
        match self {
            Mode::Vanilla => 0,
            Mode::Optimized => 1,
        }
    }

    pub(crate) fn from_wire(v: u8) -> Option<Self> {
        match v {
            0 => Some(Mode::Vanilla),
            1 => Some(Mode::Optimized),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Vanilla => write!(f, "vanilla"),
            Mode::Optimized => write!(f, "optimized"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" => Ok(Mode::Vanilla),
            "optimized" => Ok(Mode::Optimized),
            other => Err(format!("unknown mode `{other}` (vanilla|optimized)")),
        }
    }
}

/// Everything a session needs beyond its endpoints.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub mode: Mode,
    pub samples_per_slot: u32,
    pub slot_duration: Duration,
    /// Sparse tap budget; 0 convolves the full tap vector.
    pub sparse_n: u32,
    /// Per-UE replay channels, keyed by UE id. The key set defines which
    /// UEs the session expects.
    pub ue_traces: BTreeMap<u32, Arc<CirTrace>>,
    /// AWGN power added after convolution; 0 disables noise.
    pub noise_power: f64,
    /// Mean transmit power assumed by the SNR bookkeeping.
    pub signal_power: f64,
    pub session_seed: u64,
    /// Session length in slots.
    pub num_slots: u64,
    /// How long the gNB waits for a slot's uplink frames before
    /// substituting zeros.
    pub uplink_timeout: Duration,
    /// Offered downstream load per UE for the link-telemetry queue.
    pub offered_load_bps: f64,
    pub mcs_table: McsTable,
    pub pinning: Option<PinningMap>,
    /// Self-injected echo probe cadence in slots.
    pub echo_probe_every: Option<u64>,
    /// How long the gNB waits for all expected UEs to join.
    pub accept_timeout: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Optimized,
            samples_per_slot: 1920,
            slot_duration: Duration::from_millis(1),
            sparse_n: 0,
            ue_traces: BTreeMap::new(),
            noise_power: 0.0,
            signal_power: 1.0,
            session_seed: 1,
            num_slots: 1000,
            uplink_timeout: Duration::from_millis(50),
            offered_load_bps: 5_000_000.0,
            mcs_table: McsTable::nr_like_default(),
            pinning: None,
            echo_probe_every: None,
            accept_timeout: Duration::from_secs(10),
        }
    }
}

impl SessionConfig {
    /// Offered bits added to a UE's queue each slot.
    pub fn offered_bits_per_slot(&self) -> u64 {
        (self.offered_load_bps * self.slot_duration.as_secs_f64()).round() as u64
    }

    pub(crate) fn validate(&self) -> Result<(), FronthaulError> {
        if self.ue_traces.is_empty() {
            return Err(FronthaulError::InvalidConfig(
                "session needs at least one UE trace".into(),
            ));
        }
        if self.num_slots == 0 {
            return Err(FronthaulError::InvalidConfig("num_slots must be > 0".into()));
        }
        if self.slot_duration.is_zero() {
            return Err(FronthaulError::InvalidConfig(
                "slot duration must be > 0".into(),
            ));
        }
        for (ue, trace) in &self.ue_traces {
            if trace.num_bins() > self.samples_per_slot {
                return Err(FronthaulError::InvalidConfig(format!(
                    "UE {ue}: {} channel taps exceed {} samples per slot",
                    trace.num_bins(),
                    self.samples_per_slot
                )));
            }
        }
        Ok(())
    }
}

/// Fronthaul session errors.
#[derive(Debug, thiserror::Error)]
pub enum FronthaulError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("handshake rejected: {reason}")]
    HandshakeRejected { reason: String },
    #[error("connection to UE {ue_id} lost")]
    ConnectionLost { ue_id: u32 },
    #[error("uplink frame for slot {slot} from UE {ue_id} missed the deadline budget")]
    UeTimeout { slot: u64, ue_id: u32 },
    #[error("echo timed out with {outstanding} probes outstanding")]
    EchoTimeout { outstanding: usize },
    #[error("core {core} is not available (host has {available})")]
    InvalidCore { core: usize, available: usize },
    #[error("session failure: {0}")]
    SessionFailure(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Chan(#[from] ChanModelError),
    #[error(transparent)]
    Conv(#[from] ConvError),
}
