//! The UE side of the RF plane: a slot-slaved client that applies its own
//! channel to the signal path.
//!
//! On every downlink frame the UE convolves the received IQ with its trace
//! step (`slot mod T`), delivers the shaped slot to the application sink,
//! pulls the next uplink payload from the application source, and answers:
//! convolved in optimized mode, raw in vanilla mode (the gNB convolves it
//! there). Downlink and uplink keep independent convolution states.
//!
//! Echo probes are reflected with the uplink two slots after the probe's
//! arrival slot, mimicking the decode -> application -> next-grant
//! turnaround of a real stack; round trips therefore span two slot
//! boundaries even on loopback.

use super::io::{SlotSink, SlotSource};
use super::wire::{WireBody, WireError, WireMessage};
use super::{FronthaulError, Mode};
use crate::chan_model::CirTrace;
use crate::conv_engine::{
    add_awgn, convolve_full, convolve_sparse, select_top_n, ConvState, Direction, IqFrame,
};
use num_complex::Complex32;
use std::collections::VecDeque;
use std::io::{BufWriter, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Echo responses wait this many slots after the probe's arrival slot.
const ECHO_TURNAROUND_SLOTS: u64 = 2;

/// UE endpoint configuration; session parameters (frame size, mode, noise,
/// seed) come from the gNB in the handshake.
#[derive(Debug, Clone)]
pub struct UeConfig {
    pub ue_id: u32,
    pub connect_addr: String,
    pub trace: Arc<CirTrace>,
    /// Cores to pin this UE's worker to; empty leaves the scheduler alone.
    pub pin_cores: Vec<usize>,
    /// Budget for reaching the gNB (connect retries included).
    pub connect_timeout: Duration,
}

impl Default for UeConfig {
    fn default() -> Self {
        Self {
            ue_id: 0,
            connect_addr: "127.0.0.1:5600".into(),
            trace: Arc::new(identity_trace()),
            pin_cores: Vec::new(),
            connect_timeout: Duration::from_secs(5),
        }
    }
}

fn identity_trace() -> CirTrace {
    CirTrace::new(
        crate::chan_model::DelayGrid::from_sample_rate(1.92e6, 1).expect("valid grid"),
        crate::chan_model::DEFAULT_TIME_STEP,
        vec![Complex32::new(1.0, 0.0)],
        0.0,
        "identity".into(),
    )
    .expect("identity trace is valid")
}

/// Session outcome seen from the UE.
#[derive(Debug, Clone)]
pub struct UeReport {
    pub ue_id: u32,
    pub slots_processed: u64,
    pub last_slot: Option<u64>,
    pub echoes_reflected: u64,
}

/// Handle to a running UE session.
pub struct UeHandle {
    ue_id: u32,
    stream: TcpStream,
    thread: Option<std::thread::JoinHandle<Result<UeReport, FronthaulError>>>,
}

impl UeHandle {
    pub fn ue_id(&self) -> u32 {
        self.ue_id
    }

    /// Force the session down; the worker sees a read error and exits.
    pub fn stop(&self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }

    pub fn wait(mut self) -> Result<UeReport, FronthaulError> {
        let thread = self.thread.take().expect("wait called once");
        thread
            .join()
            .map_err(|_| FronthaulError::SessionFailure("UE thread panicked".into()))?
    }
}

impl Drop for UeHandle {
    fn drop(&mut self) {
        if let Some(t) = self.thread.take() {
            let _ = self.stream.shutdown(Shutdown::Both);
            let _ = t.join();
        }
    }
}

struct SessionParams {
    samples_per_slot: usize,
    mode: Mode,
    sparse_n: u32,
    noise_power: f64,
    session_seed: u64,
}

fn connect_with_retry(addr: &str, timeout: Duration) -> Result<TcpStream, FronthaulError> {
    let deadline = Instant::now() + timeout;
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) => {
                if Instant::now() > deadline {
                    return Err(FronthaulError::SessionFailure(format!(
                        "cannot reach gNB at {addr}: {e}"
                    )));
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        }
    }
}

/// Connect to the gNB, complete the handshake, and run the UE loop in a
/// background thread. Handshake failures surface here, before the handle
/// exists, so a partially started scenario can abort cleanly.
pub fn run_ue(
    cfg: UeConfig,
    dl_sink: Box<dyn SlotSink>,
    ul_source: Box<dyn SlotSource>,
) -> Result<UeHandle, FronthaulError> {
    let stream = connect_with_retry(&cfg.connect_addr, cfg.connect_timeout)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;

    let mut writer = stream.try_clone()?;
    WireMessage::new(cfg.ue_id, 0, WireBody::Hello).write_to(&mut writer)?;
    let mut reader = stream.try_clone()?;
    let ack = match WireMessage::read_from(&mut reader) {
        Ok(msg) => msg,
        Err(WireError::ShortRead { .. }) => {
            return Err(FronthaulError::HandshakeRejected {
                reason: "gNB closed the connection during the handshake".into(),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let params = match ack.body {
        WireBody::HelloAck {
            samples_per_slot,
            mode,
            sparse_n,
            noise_power,
            session_seed,
        } => SessionParams {
            samples_per_slot: samples_per_slot as usize,
            mode,
            sparse_n,
            noise_power,
            session_seed,
        },
        other => {
            return Err(FronthaulError::HandshakeRejected {
                reason: format!("expected HELLO_ACK, got type {}", other.msg_type()),
            })
        }
    };
    if u32::try_from(params.samples_per_slot).unwrap_or(0) < cfg.trace.num_bins() {
        return Err(FronthaulError::InvalidConfig(format!(
            "UE {}: {} channel taps exceed {} samples per slot",
            cfg.ue_id,
            cfg.trace.num_bins(),
            params.samples_per_slot
        )));
    }
    stream.set_read_timeout(None)?;

    let handle_stream = stream.try_clone()?;
    let ue_id = cfg.ue_id;
    let thread = std::thread::Builder::new()
        .name(format!("tinytwin-ue-{ue_id}"))
        .spawn(move || ue_loop(cfg, params, stream, dl_sink, ul_source))?;
    Ok(UeHandle {
        ue_id,
        stream: handle_stream,
        thread: Some(thread),
    })
}

struct QueuedEcho {
    probe_id: u64,
    sent_nanos: u64,
    payload: Vec<u8>,
    respond_at: u64,
}

fn ue_loop(
    cfg: UeConfig,
    params: SessionParams,
    stream: TcpStream,
    mut dl_sink: Box<dyn SlotSink>,
    mut ul_source: Box<dyn SlotSource>,
) -> Result<UeReport, FronthaulError> {
    super::pin::pin_current_thread(&cfg.pin_cores)?;

    let mut reader = stream.try_clone()?;
    let mut writer = BufWriter::with_capacity(64 * 1024, stream);
    let num_taps = cfg.trace.num_bins() as usize;
    let mut dl_state = ConvState::new(num_taps);
    let mut ul_state = ConvState::new(num_taps);
    let mut ul_buf = vec![Complex32::new(0.0, 0.0); params.samples_per_slot];
    let mut echo_queue: VecDeque<QueuedEcho> = VecDeque::new();
    let mut report = UeReport {
        ue_id: cfg.ue_id,
        slots_processed: 0,
        last_slot: None,
        echoes_reflected: 0,
    };

    loop {
        let msg = match WireMessage::read_from(&mut reader) {
            Ok(m) => m,
            Err(WireError::ShortRead { .. }) => {
                return Err(FronthaulError::ConnectionLost { ue_id: cfg.ue_id })
            }
            Err(WireError::Io(_)) => {
                return Err(FronthaulError::ConnectionLost { ue_id: cfg.ue_id })
            }
            Err(e) => return Err(e.into()),
        };
        match msg.body {
            WireBody::IqDl { samples } => {
                let slot = msg.slot_index;
                if report.last_slot.is_some_and(|last| slot <= last) {
                    log::warn!(
                        "UE {}: non-increasing downlink slot {slot}; dropped",
                        cfg.ue_id
                    );
                    continue;
                }
                if samples.len() != params.samples_per_slot {
                    return Err(FronthaulError::SessionFailure(format!(
                        "UE {}: downlink frame of {} samples (expected {})",
                        cfg.ue_id,
                        samples.len(),
                        params.samples_per_slot
                    )));
                }

                let taps = cfg.trace.taps_at_slot(slot);
                let dl_frame = IqFrame::new(slot, cfg.ue_id, Direction::Downlink, samples);
                let shaped = apply_channel(&dl_frame, taps, params.sparse_n, &mut dl_state)?;
                let shaped = if params.noise_power > 0.0 {
                    add_awgn(&shaped, params.noise_power, params.session_seed)
                } else {
                    shaped
                };
                dl_sink.consume(slot, &shaped.samples);

                ul_source.fill(slot, &mut ul_buf);
                let ul_frame =
                    IqFrame::new(slot, cfg.ue_id, Direction::Uplink, ul_buf.clone());
                let outgoing = if params.mode == Mode::Optimized {
                    let convolved =
                        apply_channel(&ul_frame, taps, params.sparse_n, &mut ul_state)?;
                    if params.noise_power > 0.0 {
                        add_awgn(&convolved, params.noise_power, params.session_seed)
                    } else {
                        convolved
                    }
                } else {
                    ul_frame
                };
                WireMessage::new(
                    cfg.ue_id,
                    slot,
                    WireBody::IqUl {
                        samples: outgoing.samples,
                    },
                )
                .write_to(&mut writer)?;
                while echo_queue
                    .front()
                    .is_some_and(|e| e.respond_at <= slot)
                {
                    let e = echo_queue.pop_front().expect("checked front");
                    WireMessage::new(
                        cfg.ue_id,
                        slot,
                        WireBody::EchoResp {
                            probe_id: e.probe_id,
                            sent_nanos: e.sent_nanos,
                            payload: e.payload,
                        },
                    )
                    .write_to(&mut writer)?;
                    report.echoes_reflected += 1;
                }
                writer.flush()?;

                report.last_slot = Some(slot);
                report.slots_processed += 1;
            }
            WireBody::EchoReq {
                probe_id,
                sent_nanos,
                payload,
            } => {
                let arrival = report.last_slot.unwrap_or(0);
                echo_queue.push_back(QueuedEcho {
                    probe_id,
                    sent_nanos,
                    payload,
                    respond_at: arrival + ECHO_TURNAROUND_SLOTS,
                });
            }
            WireBody::TimeSync {
                epoch_unix_nanos,
                slot_duration_ns,
            } => {
                log::debug!(
                    "UE {}: slot clock epoch {epoch_unix_nanos} ns, slot {slot_duration_ns} ns",
                    cfg.ue_id
                );
            }
            WireBody::Bye => break,
            other => {
                log::debug!("UE {}: ignoring unexpected {}", cfg.ue_id, other.msg_type());
            }
        }
    }
    let _ = WireMessage::new(cfg.ue_id, report.last_slot.unwrap_or(0), WireBody::Bye)
        .write_to(&mut writer);
    let _ = writer.flush();
    Ok(report)
}

fn apply_channel(
    frame: &IqFrame,
    taps: &[Complex32],
    sparse_n: u32,
    state: &mut ConvState,
) -> Result<IqFrame, FronthaulError> {
    Ok(if sparse_n > 0 {
        let sparse = select_top_n(taps, sparse_n as usize);
        convolve_sparse(frame, &sparse, state)?
    } else {
        convolve_full(frame, taps, state)?
    })
}
