//! The gNB side of the RF plane: accepts UE connections, paces the slot
//! loop, collects and aggregates uplink, and owns per-UE link telemetry.
//!
//! Slot cycle (slot `s`):
//!
//! 1. at the slot boundary, broadcast one downlink IQ frame per UE, plus
//!    any queued echo probes;
//! 2. collect one uplink frame per UE, up to the uplink timeout budget —
//!    missing frames are substituted with zeros and counted;
//! 3. in vanilla mode, convolve each raw uplink with that UE's channel,
//!    serially, in ascending UE order;
//! 4. aggregate `y_agg[k] = sum_u y_u[k]` in ascending UE order and hand
//!    the sum to the uplink sink;
//! 5. update link telemetry and the slot-compute histogram, then sleep to
//!    the next boundary.
//!
//! The measured compute span covers steps 1-5; pacing sleep is excluded.

use super::clock::SlotClock;
use super::io::{SlotSink, SlotSource};
use super::wire::{WireBody, WireMessage};
use super::{FronthaulError, Mode, SessionConfig};
use crate::bench::SlotTimingRecord;
use crate::conv_engine::{
    add_awgn, channel_snr_db, convolve_full, convolve_sparse, select_top_n, ConvState, Direction,
    IqFrame,
};
use crate::link_telemetry::{LinkSim, LinkState, MetricsRegistry, UeMetrics};
use num_complex::Complex32;
use std::collections::{BTreeMap, HashMap};
use std::io::BufWriter;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

/// Echo probes older than this many slots fail the command.
const ECHO_EXPIRY_SLOTS: u64 = 256;

/// SNR reported when the session runs without noise.
const NOISELESS_SNR_DB: f64 = 300.0;

/// Session outcome seen from the gNB.
#[derive(Debug, Clone)]
pub struct GnbReport {
    pub slots_run: u64,
    pub timing: Vec<SlotTimingRecord>,
    /// Uplink frames that missed the deadline budget.
    pub ue_timeouts: u64,
    pub per_ue_timeouts: BTreeMap<u32, u64>,
    /// Frames that arrived after their slot was already closed.
    pub stale_frames: u64,
    pub connection_losses: u64,
    /// Final link-telemetry state per UE.
    pub link_states: BTreeMap<u32, LinkState>,
    /// Round trips of the self-injected probe stream.
    pub echo_rtts: Vec<Duration>,
}

impl GnbReport {
    pub fn overrun_fraction(&self) -> f64 {
        if self.timing.is_empty() {
            return 0.0;
        }
        self.timing.iter().filter(|r| r.overrun).count() as f64 / self.timing.len() as f64
    }

    pub fn compute_durations(&self) -> Vec<Duration> {
        self.timing.iter().map(|r| r.compute).collect()
    }
}

/// Echo round-trip statistics helper.
#[derive(Debug, Clone, Copy)]
pub struct EchoStats {
    pub count: usize,
    pub min: Duration,
    pub median: Duration,
    pub max: Duration,
}

impl EchoStats {
    pub fn from_rtts(rtts: &[Duration]) -> Option<Self> {
        if rtts.is_empty() {
            return None;
        }
        let mut sorted = rtts.to_vec();
        sorted.sort_unstable();
        Some(Self {
            count: sorted.len(),
            min: sorted[0],
            median: sorted[(sorted.len() - 1) / 2],
            max: sorted[sorted.len() - 1],
        })
    }
}

struct EchoCommand {
    payload: Vec<u8>,
    count: usize,
    reply: mpsc::Sender<Result<Vec<Duration>, FronthaulError>>,
}

/// Handle to a running gNB session.
pub struct GnbHandle {
    local_addr: SocketAddr,
    thread: Option<std::thread::JoinHandle<Result<GnbReport, FronthaulError>>>,
    shutdown: Arc<AtomicBool>,
    echo_tx: mpsc::Sender<EchoCommand>,
    registry: Arc<MetricsRegistry>,
}

impl GnbHandle {
    /// Bound listening address (resolves port 0).
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn registry(&self) -> Arc<MetricsRegistry> {
        self.registry.clone()
    }

    /// Ask the session to stop after the current slot.
    pub fn request_stop(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }

    /// Inject `count` echo probes (one per slot) into the downlink stream
    /// and wait for the reflected round trips.
    pub fn echo_rtt(&self, payload: &[u8], count: usize) -> Result<Vec<Duration>, FronthaulError> {
        let (reply, rx) = mpsc::channel();
        self.echo_tx
            .send(EchoCommand {
                payload: payload.to_vec(),
                count,
                reply,
            })
            .map_err(|_| FronthaulError::SessionFailure("session is not running".into()))?;
        rx.recv()
            .map_err(|_| FronthaulError::SessionFailure("session ended before echo completed".into()))?
    }

    /// Block until the session finishes and return its report.
    pub fn wait(mut self) -> Result<GnbReport, FronthaulError> {
        let thread = self.thread.take().expect("wait called once");
        thread
            .join()
            .map_err(|_| FronthaulError::SessionFailure("gNB thread panicked".into()))?
    }
}

impl Drop for GnbHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Start a gNB session listening on `listen_addr`.
///
/// The session accepts the UEs named by `cfg.ue_traces`, then runs
/// `cfg.num_slots` slots. `dl_source` feeds the broadcast downlink;
/// `ul_sink` receives the per-slot uplink aggregate.
pub fn run_gnb(
    cfg: SessionConfig,
    listen_addr: &str,
    dl_source: Box<dyn SlotSource>,
    ul_sink: Box<dyn SlotSink>,
    registry: Option<Arc<MetricsRegistry>>,
) -> Result<GnbHandle, FronthaulError> {
    cfg.validate()?;
    if let Some(p) = &cfg.pinning {
        p.validate()?;
    }
    let listener = TcpListener::bind(listen_addr)?;
    let local_addr = listener.local_addr()?;
    let registry = registry.unwrap_or_default();
    let shutdown = Arc::new(AtomicBool::new(false));
    let (echo_tx, echo_rx) = mpsc::channel();

    let thread_registry = registry.clone();
    let thread_shutdown = shutdown.clone();
    let thread = std::thread::Builder::new()
        .name("tinytwin-gnb".into())
        .spawn(move || {
            session(
                cfg,
                listener,
                dl_source,
                ul_sink,
                thread_registry,
                thread_shutdown,
                echo_rx,
            )
        })?;
    Ok(GnbHandle {
        local_addr,
        thread: Some(thread),
        shutdown,
        echo_tx,
        registry,
    })
}

enum GnbEvent {
    Uplink {
        ue_id: u32,
        slot: u64,
        samples: Vec<Complex32>,
    },
    EchoResp {
        probe_id: u64,
        sent_nanos: u64,
        payload: Vec<u8>,
    },
    Gone {
        ue_id: u32,
    },
}

struct UePort {
    writer: BufWriter<TcpStream>,
    stream: TcpStream,
    reader: Option<std::thread::JoinHandle<()>>,
    live: bool,
}

struct ActiveEcho {
    payload: Vec<u8>,
    remaining: usize,
    outstanding: usize,
    results: Vec<Duration>,
    last_sent_slot: u64,
    /// None for the self-injected probe stream.
    reply: Option<mpsc::Sender<Result<Vec<Duration>, FronthaulError>>>,
}

fn accept_ues(
    cfg: &SessionConfig,
    listener: TcpListener,
) -> Result<BTreeMap<u32, TcpStream>, FronthaulError> {
    listener.set_nonblocking(true)?;
    let mut pending: Vec<u32> = cfg.ue_traces.keys().copied().collect();
    let mut streams = BTreeMap::new();
    let deadline = Instant::now() + cfg.accept_timeout;
    while !pending.is_empty() {
        if Instant::now() > deadline {
            return Err(FronthaulError::SessionFailure(format!(
                "timed out waiting for UEs {pending:?} to join"
            )));
        }
        match listener.accept() {
            Ok((stream, peer)) => {
                stream.set_nonblocking(false)?;
                stream.set_nodelay(true)?;
                stream.set_read_timeout(Some(Duration::from_secs(2)))?;
                match handshake(cfg, &stream, &pending) {
                    Ok(ue_id) => {
                        log::info!("UE {ue_id} joined from {peer}");
                        pending.retain(|&u| u != ue_id);
                        stream.set_read_timeout(None)?;
                        streams.insert(ue_id, stream);
                    }
                    Err(e) => {
                        log::warn!("rejected connection from {peer}: {e}");
                        let _ = stream.shutdown(Shutdown::Both);
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(streams)
}

fn handshake(
    cfg: &SessionConfig,
    stream: &TcpStream,
    pending: &[u32],
) -> Result<u32, FronthaulError> {
    let mut reader = stream.try_clone()?;
    let hello = WireMessage::read_from(&mut reader)?;
    let ue_id = hello.ue_id;
    if hello.body != WireBody::Hello {
        return Err(FronthaulError::HandshakeRejected {
            reason: format!("expected HELLO, got type {}", hello.body.msg_type()),
        });
    }
    if !pending.contains(&ue_id) {
        return Err(FronthaulError::HandshakeRejected {
            reason: format!("UE {ue_id} is not expected by this session"),
        });
    }
    let mut writer = stream.try_clone()?;
    WireMessage::new(
        ue_id,
        0,
        WireBody::HelloAck {
            samples_per_slot: cfg.samples_per_slot,
            mode: cfg.mode,
            sparse_n: cfg.sparse_n,
            noise_power: cfg.noise_power,
            session_seed: cfg.session_seed,
        },
    )
    .write_to(&mut writer)?;
    Ok(ue_id)
}

fn spawn_reader(
    ue_id: u32,
    stream: TcpStream,
    tx: mpsc::Sender<GnbEvent>,
) -> std::thread::JoinHandle<()> {
    std::thread::Builder::new()
        .name(format!("tinytwin-gnb-rx-{ue_id}"))
        .spawn(move || {
            let mut stream = stream;
            loop {
                match WireMessage::read_from(&mut stream) {
                    Ok(msg) => match msg.body {
                        WireBody::IqUl { samples } => {
                            if tx
                                .send(GnbEvent::Uplink {
                                    ue_id,
                                    slot: msg.slot_index,
                                    samples,
                                })
                                .is_err()
                            {
                                break;
                            }
                        }
                        WireBody::EchoResp {
                            probe_id,
                            sent_nanos,
                            payload,
                        } => {
                            if tx
                                .send(GnbEvent::EchoResp {
                                    probe_id,
                                    sent_nanos,
                                    payload,
                                })
                                .is_err()
                            {
                                break;
                            }
                        }
                        WireBody::Bye => {
                            let _ = tx.send(GnbEvent::Gone { ue_id });
                            break;
                        }
                        other => {
                            log::debug!("UE {ue_id}: ignoring unexpected {}", other.msg_type());
                        }
                    },
                    Err(_) => {
                        let _ = tx.send(GnbEvent::Gone { ue_id });
                        break;
                    }
                }
            }
        })
        .expect("spawn reader thread")
}

#[allow(clippy::too_many_lines)]
fn session(
    cfg: SessionConfig,
    listener: TcpListener,
    mut dl_source: Box<dyn SlotSource>,
    mut ul_sink: Box<dyn SlotSink>,
    registry: Arc<MetricsRegistry>,
    shutdown: Arc<AtomicBool>,
    echo_rx: mpsc::Receiver<EchoCommand>,
) -> Result<GnbReport, FronthaulError> {
    if let Some(p) = &cfg.pinning {
        super::pin::pin_current_thread(&p.gnb)?;
    }

    let streams = accept_ues(&cfg, listener)?;
    let (event_tx, event_rx) = mpsc::channel();
    let mut ports: BTreeMap<u32, UePort> = BTreeMap::new();
    for (ue_id, stream) in streams {
        let reader_stream = stream.try_clone()?;
        let writer = BufWriter::with_capacity(64 * 1024, stream.try_clone()?);
        ports.insert(
            ue_id,
            UePort {
                writer,
                stream,
                reader: Some(spawn_reader(ue_id, reader_stream, event_tx.clone())),
                live: true,
            },
        );
    }
    drop(event_tx);

    // Per-UE session state. gnb-side uplink conv state exists only in
    // vanilla mode; telemetry runs in both.
    let sps = cfg.samples_per_slot as usize;
    let offered_bits = cfg.offered_bits_per_slot();
    let mut ul_states: BTreeMap<u32, ConvState> = BTreeMap::new();
    let mut links: BTreeMap<u32, LinkSim> = BTreeMap::new();
    let mut gauges: BTreeMap<u32, Arc<UeMetrics>> = BTreeMap::new();
    for (&ue_id, trace) in &cfg.ue_traces {
        if cfg.mode == Mode::Vanilla {
            ul_states.insert(ue_id, ConvState::new(trace.num_bins() as usize));
        }
        links.insert(
            ue_id,
            LinkSim::new(
                ue_id,
                cfg.mcs_table.clone(),
                offered_bits,
                cfg.session_seed,
            ),
        );
        gauges.insert(ue_id, registry.register_ue(ue_id));
    }
    let echo_target = *cfg.ue_traces.keys().next().expect("validated non-empty");

    let clock = SlotClock::start(cfg.slot_duration);
    let time_sync = WireBody::TimeSync {
        epoch_unix_nanos: clock.epoch_unix_nanos(),
        slot_duration_ns: cfg.slot_duration.as_nanos() as u64,
    };
    for (&ue_id, port) in &mut ports {
        WireMessage::new(ue_id, 0, time_sync.clone()).write_to(&mut port.writer)?;
        use std::io::Write;
        port.writer.flush()?;
    }

    let mut report = GnbReport {
        slots_run: 0,
        timing: Vec::with_capacity(cfg.num_slots.min(1 << 22) as usize),
        ue_timeouts: 0,
        per_ue_timeouts: cfg.ue_traces.keys().map(|&u| (u, 0)).collect(),
        stale_frames: 0,
        connection_losses: 0,
        link_states: BTreeMap::new(),
        echo_rtts: Vec::new(),
    };

    let mut dl_buf = vec![Complex32::new(0.0, 0.0); sps];
    let mut commands: HashMap<u64, ActiveEcho> = HashMap::new();
    let mut next_command_id: u64 = 0;
    let mut outstanding: HashMap<u64, u64> = HashMap::new(); // probe -> command
    let mut next_probe_id: u64 = 0;
    if cfg.echo_probe_every.is_some() {
        commands.insert(
            next_command_id,
            ActiveEcho {
                payload: b"probe".to_vec(),
                remaining: 0, // refilled each cadence slot
                outstanding: 0,
                results: Vec::new(),
                last_sent_slot: 0,
                reply: None,
            },
        );
        next_command_id += 1;
    }

    'slots: for slot in 0..cfg.num_slots {
        clock.wait_for_slot(slot);
        if shutdown.load(Ordering::SeqCst) {
            break 'slots;
        }
        let t0 = Instant::now();

        // pick up new echo commands
        while let Ok(cmd) = echo_rx.try_recv() {
            commands.insert(
                next_command_id,
                ActiveEcho {
                    payload: cmd.payload,
                    remaining: cmd.count,
                    outstanding: 0,
                    results: Vec::new(),
                    last_sent_slot: slot,
                    reply: Some(cmd.reply),
                },
            );
            next_command_id += 1;
        }
        if let Some(every) = cfg.echo_probe_every {
            if slot % every.max(1) == 0 {
                if let Some(stream) = commands.get_mut(&0) {
                    stream.remaining += 1;
                }
            }
        }

        // 1. downlink broadcast
        dl_source.fill(slot, &mut dl_buf);
        let mut io_lost: Vec<u32> = Vec::new();
        for (&ue_id, port) in &mut ports {
            if !port.live {
                continue;
            }
            let msg = WireMessage::new(
                ue_id,
                slot,
                WireBody::IqDl {
                    samples: dl_buf.clone(),
                },
            );
            if msg.write_to(&mut port.writer).is_err() {
                io_lost.push(ue_id);
            }
        }
        // echo probes ride after the downlink frames
        if let Some(port) = ports.get_mut(&echo_target) {
            if port.live {
                // at most one probe per command per slot keeps the downlink
                // stream close to the real cadence
                for (&cmd_id, cmd) in commands.iter_mut() {
                    if cmd.remaining == 0 {
                        continue;
                    }
                    cmd.remaining -= 1;
                    cmd.outstanding += 1;
                    cmd.last_sent_slot = slot;
                    let probe_id = next_probe_id;
                    next_probe_id += 1;
                    outstanding.insert(probe_id, cmd_id);
                    let msg = WireMessage::new(
                        echo_target,
                        slot,
                        WireBody::EchoReq {
                            probe_id,
                            sent_nanos: clock.now_nanos(),
                            payload: cmd.payload.clone(),
                        },
                    );
                    if msg.write_to(&mut port.writer).is_err() {
                        io_lost.push(echo_target);
                        break;
                    }
                }
            }
        }
        for port in ports.values_mut() {
            if port.live {
                use std::io::Write;
                if port.writer.flush().is_err() {
                    // reader will observe the broken socket and report Gone
                }
            }
        }
        for ue_id in io_lost {
            if let Some(port) = ports.get_mut(&ue_id) {
                if port.live {
                    port.live = false;
                    report.connection_losses += 1;
                    log::warn!("UE {ue_id}: downlink write failed; substituting zeros");
                }
            }
        }

        // 2. uplink collection
        let live_count = ports.values().filter(|p| p.live).count();
        let mut got: BTreeMap<u32, Vec<Complex32>> = BTreeMap::new();
        let deadline = t0 + cfg.uplink_timeout;
        while got.len() < live_count {
            let now = Instant::now();
            let Some(budget) = deadline.checked_duration_since(now) else {
                break;
            };
            match event_rx.recv_timeout(budget) {
                Ok(GnbEvent::Uplink { ue_id, slot: fs, samples }) => {
                    if fs == slot {
                        if samples.len() == sps {
                            got.insert(ue_id, samples);
                        } else {
                            log::warn!(
                                "UE {ue_id}: uplink frame of {} samples (expected {sps}); dropped",
                                samples.len()
                            );
                        }
                    } else {
                        report.stale_frames += 1;
                    }
                }
                Ok(GnbEvent::EchoResp {
                    probe_id,
                    sent_nanos,
                    payload,
                }) => {
                    resolve_echo(
                        &clock,
                        &mut commands,
                        &mut outstanding,
                        &mut report,
                        probe_id,
                        sent_nanos,
                        &payload,
                    );
                }
                Ok(GnbEvent::Gone { ue_id }) => {
                    if let Some(port) = ports.get_mut(&ue_id) {
                        if port.live {
                            port.live = false;
                            report.connection_losses += 1;
                            log::warn!("UE {ue_id}: connection lost; substituting zeros");
                        }
                    }
                    break;
                }
                Err(mpsc::RecvTimeoutError::Timeout) => break,
                Err(mpsc::RecvTimeoutError::Disconnected) => break 'slots,
            }
        }
        for (&ue_id, port) in &ports {
            if port.live && !got.contains_key(&ue_id) {
                report.ue_timeouts += 1;
                *report.per_ue_timeouts.entry(ue_id).or_insert(0) += 1;
                log::debug!("slot {slot}: uplink frame from UE {ue_id} missed the budget");
            }
        }

        // 3+4. convolution placement and aggregation, ascending UE order
        let mut agg = vec![Complex32::new(0.0, 0.0); sps];
        for (&ue_id, trace) in &cfg.ue_traces {
            let samples = got
                .remove(&ue_id)
                .unwrap_or_else(|| vec![Complex32::new(0.0, 0.0); sps]);
            let frame = IqFrame::new(slot, ue_id, Direction::Uplink, samples);
            let shaped = if cfg.mode == Mode::Vanilla {
                let state = ul_states.get_mut(&ue_id).expect("vanilla state exists");
                let taps = trace.taps_at_slot(slot);
                let convolved = if cfg.sparse_n > 0 {
                    let sparse = select_top_n(taps, cfg.sparse_n as usize);
                    convolve_sparse(&frame, &sparse, state)?
                } else {
                    convolve_full(&frame, taps, state)?
                };
                if cfg.noise_power > 0.0 {
                    add_awgn(&convolved, cfg.noise_power, cfg.session_seed)
                } else {
                    convolved
                }
            } else {
                frame
            };
            for (a, s) in agg.iter_mut().zip(&shaped.samples) {
                *a += s;
            }
        }
        ul_sink.consume(slot, &agg);

        // 5. telemetry
        for (&ue_id, trace) in &cfg.ue_traces {
            let snr_db = if cfg.noise_power > 0.0 {
                channel_snr_db(
                    trace.taps_at_slot(slot),
                    cfg.signal_power,
                    cfg.noise_power,
                )?
            } else {
                NOISELESS_SNR_DB
            };
            let link = links.get_mut(&ue_id).expect("link exists");
            let state = link.step(slot, snr_db);
            gauges[&ue_id].update_from_link(state);
        }

        let compute = t0.elapsed();
        report
            .timing
            .push(SlotTimingRecord::new(slot, compute, cfg.slot_duration));
        registry.observe_slot_compute(compute);
        report.slots_run += 1;

        expire_echoes(slot, &mut commands, &mut outstanding);
    }

    // drain any last in-flight echo responses before closing
    let grace = Instant::now() + Duration::from_millis(20);
    while let Some(budget) = grace.checked_duration_since(Instant::now()) {
        match event_rx.recv_timeout(budget) {
            Ok(GnbEvent::EchoResp {
                probe_id,
                sent_nanos,
                payload,
            }) => resolve_echo(
                &clock,
                &mut commands,
                &mut outstanding,
                &mut report,
                probe_id,
                sent_nanos,
                &payload,
            ),
            Ok(_) => {}
            Err(_) => break,
        }
    }
    for (_, cmd) in commands.drain() {
        finish_echo(cmd, &mut report);
    }

    for (&ue_id, port) in &mut ports {
        let _ = WireMessage::new(ue_id, report.slots_run, WireBody::Bye)
            .write_to(&mut port.writer);
        use std::io::Write;
        let _ = port.writer.flush();
    }
    for port in ports.values_mut() {
        let _ = port.stream.shutdown(Shutdown::Both);
        if let Some(r) = port.reader.take() {
            let _ = r.join();
        }
    }

    for (ue_id, link) in links {
        report.link_states.insert(ue_id, link.state);
    }
    Ok(report)
}

fn resolve_echo(
    clock: &SlotClock,
    commands: &mut HashMap<u64, ActiveEcho>,
    outstanding: &mut HashMap<u64, u64>,
    report: &mut GnbReport,
    probe_id: u64,
    sent_nanos: u64,
    payload: &[u8],
) {
    let Some(cmd_id) = outstanding.remove(&probe_id) else {
        log::debug!("echo response for unknown probe {probe_id}");
        return;
    };
    let rtt = Duration::from_nanos(clock.now_nanos().saturating_sub(sent_nanos));
    let finished = {
        let Some(cmd) = commands.get_mut(&cmd_id) else {
            return;
        };
        if cmd.payload != payload {
            log::warn!("echo probe {probe_id} came back with a mangled payload");
        }
        cmd.outstanding -= 1;
        cmd.results.push(rtt);
        cmd.reply.is_some() && cmd.remaining == 0 && cmd.outstanding == 0
    };
    if finished {
        if let Some(cmd) = commands.remove(&cmd_id) {
            finish_echo(cmd, report);
        }
    }
}

fn expire_echoes(
    slot: u64,
    commands: &mut HashMap<u64, ActiveEcho>,
    outstanding: &mut HashMap<u64, u64>,
) {
    let expired: Vec<u64> = commands
        .iter()
        .filter(|(_, c)| {
            c.reply.is_some()
                && c.outstanding > 0
                && slot > c.last_sent_slot + ECHO_EXPIRY_SLOTS
        })
        .map(|(&id, _)| id)
        .collect();
    for id in expired {
        if let Some(cmd) = commands.remove(&id) {
            outstanding.retain(|_, &mut c| c != id);
            if let Some(reply) = cmd.reply {
                let _ = reply.send(Err(FronthaulError::EchoTimeout {
                    outstanding: cmd.outstanding,
                }));
            }
        }
    }
}

fn finish_echo(cmd: ActiveEcho, report: &mut GnbReport) {
    match cmd.reply {
        Some(reply) => {
            let result = if cmd.remaining == 0 && cmd.outstanding == 0 {
                Ok(cmd.results)
            } else {
                Err(FronthaulError::EchoTimeout {
                    outstanding: cmd.outstanding + cmd.remaining,
                })
            };
            let _ = reply.send(result);
        }
        None => report.echo_rtts.extend(cmd.results),
    }
}
