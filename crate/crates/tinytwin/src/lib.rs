//! tinytwin — a CPU-native virtual RF plane for cellular experimentation.
//!
//! A gNB-side server and any number of UE-side clients exchange slots of
//! baseband IQ samples over TCP. Each UE's signal path is shaped by a
//! replayable, time-varying multi-tap channel impulse response (CIR) trace,
//! applied as a streaming FIR convolution at 1 ms resolution. Two placements
//! of the convolution work are supported:
//!
//! * **vanilla** — the receiving node convolves: UEs convolve downlink, the
//!   gNB convolves every uplink stream serially before aggregating them.
//! * **optimized** — each UE convolves both directions locally, so the
//!   per-UE work runs in parallel and the gNB only sums uplink frames.
//!
//! The crate is organized around that pipeline:
//!
//! * [`chan_model`] — CIR traces, delay grids, and the CIRT trace file format.
//! * [`trace_gen`] — synthesizing traces: Jakes/Rayleigh fading over a power
//!   delay profile, periodic-SNR sweeps, and import of external CIR data.
//! * [`conv_engine`] — slot-streamed full and sparse (top-n tap) convolution
//!   with cross-slot state carryover, channel SNR, and AWGN.
//! * [`fronthaul`] — the wire protocol, gNB server, UE client, slot clock,
//!   CPU pinning, and the in-band echo-RTT probe.
//! * [`link_telemetry`] — SNR → MCS → transport-block outcome link
//!   abstraction plus a Prometheus-style `/metrics` endpoint.
//! * [`bench`] — slot compute-time benchmark sweeps and report emission.
//! * [`cli`] — the `tinytwin` command line entry points.
//!
//! Each major capability has a runnable demo under `examples/`:
//!
//! ```text
//! cargo run --example generate_traces       # synthesize and inspect CIRT files
//! cargo run --example jakes_fading          # fading autocorrelation vs J0
//! cargo run --example streaming_convolution # full vs sparse slot convolution
//! cargo run --example end_to_end_session    # gNB + 2 UEs over loopback TCP
//! cargo run --example vanilla_vs_optimized  # slot-timing comparison
//! cargo run --example link_adaptation       # SNR/MCS/throughput/drop dynamics
//! cargo run --example metrics_endpoint      # /metrics exposition
//! cargo run --example replay_external_csv   # import a CSV path list
//! ```

pub mod bench;
pub mod chan_model;
pub mod cli;
pub mod conv_engine;
pub mod fronthaul;
pub mod link_telemetry;
pub mod trace_gen;
mod util;

pub use chan_model::{CirTrace, DelayGrid, PdpProfile, SparseTaps};
pub use conv_engine::{ConvState, Direction, IqFrame};
pub use fronthaul::{Mode, SessionConfig};
