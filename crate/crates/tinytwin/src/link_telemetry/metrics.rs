//! Metrics registry and plain-text exposition endpoint.
//!
//! Counters and gauges update through atomics so every worker can write
//! concurrently; the endpoint renders a consistent snapshot on each scrape.
//! Output follows the text exposition format (version 0.0.4): `# HELP` /
//! `# TYPE` comments, `name{labels} value` samples, histogram `_bucket` /
//! `_sum` / `_count` series.

use super::{LinkState, TelemetryError};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

/// Slot compute-time histogram bucket bounds, seconds.
pub const SLOT_COMPUTE_BUCKETS: [f64; 6] = [0.0005, 0.001, 0.002, 0.004, 0.008, 0.016];

/// Per-UE gauges and counters.
#[derive(Debug, Default)]
pub struct UeMetrics {
    snr_db_bits: AtomicU64,
    mcs: AtomicU64,
    buffer_bits: AtomicU64,
    bits_delivered: AtomicU64,
    drops: AtomicU64,
}

impl UeMetrics {
    pub fn update_from_link(&self, s: &LinkState) {
        self.snr_db_bits.store(s.snr_db.to_bits(), Ordering::Relaxed);
        self.mcs.store(u64::from(s.mcs), Ordering::Relaxed);
        self.buffer_bits.store(s.buffer_bits, Ordering::Relaxed);
        self.bits_delivered.store(s.bits_delivered, Ordering::Relaxed);
        self.drops.store(s.drops, Ordering::Relaxed);
    }

    pub fn snr_db(&self) -> f64 {
        f64::from_bits(self.snr_db_bits.load(Ordering::Relaxed))
    }

    pub fn drops(&self) -> u64 {
        self.drops.load(Ordering::Relaxed)
    }

    pub fn bits_delivered(&self) -> u64 {
        self.bits_delivered.load(Ordering::Relaxed)
    }
}

#[derive(Debug)]
struct Histogram {
    // one count per bound plus the +Inf bucket
    counts: [AtomicU64; SLOT_COMPUTE_BUCKETS.len() + 1],
    sum_nanos: AtomicU64,
    total: AtomicU64,
}

impl Histogram {
    fn new() -> Self {
        Self {
            counts: Default::default(),
            sum_nanos: AtomicU64::new(0),
            total: AtomicU64::new(0),
        }
    }

    fn observe(&self, d: Duration) {
        let secs = d.as_secs_f64();
        let idx = SLOT_COMPUTE_BUCKETS
            .iter()
            .position(|&b| secs <= b)
            .unwrap_or(SLOT_COMPUTE_BUCKETS.len());
        self.counts[idx].fetch_add(1, Ordering::Relaxed);
        self.sum_nanos
            .fetch_add(d.as_nanos() as u64, Ordering::Relaxed);
        self.total.fetch_add(1, Ordering::Relaxed);
    }
}

/// Shared registry of everything the twin exposes on `/metrics`.
#[derive(Debug)]
pub struct MetricsRegistry {
    ues: RwLock<BTreeMap<u32, Arc<UeMetrics>>>,
    slot_compute: Histogram,
}

impl Default for MetricsRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl MetricsRegistry {
    pub fn new() -> Self {
        Self {
            ues: RwLock::new(BTreeMap::new()),
            slot_compute: Histogram::new(),
        }
    }

    pub fn register_ue(&self, ue_id: u32) -> Arc<UeMetrics> {
        let mut map = self.ues.write().expect("registry lock");
        map.entry(ue_id).or_default().clone()
    }

    pub fn ue(&self, ue_id: u32) -> Option<Arc<UeMetrics>> {
        self.ues.read().expect("registry lock").get(&ue_id).cloned()
    }

    pub fn observe_slot_compute(&self, d: Duration) {
        self.slot_compute.observe(d);
    }

    pub fn slot_compute_count(&self) -> u64 {
        self.slot_compute.total.load(Ordering::Relaxed)
    }

    /// Render the text exposition snapshot.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(2048);
        let ues = self.ues.read().expect("registry lock");

        let mut gauge = |name: &str, help: &str, get: &dyn Fn(&UeMetrics) -> f64| {
            out.push_str(&format!("# HELP {name} {help}\n# TYPE {name} gauge\n"));
            for (id, m) in ues.iter() {
                out.push_str(&format!("{name}{{ue=\"{id}\"}} {}\n", get(m)));
            }
        };
        gauge("tinytwin_ue_snr_db", "Channel SNR of the current slot.", &|m| {
            m.snr_db()
        });
        gauge("tinytwin_ue_mcs", "Selected MCS of the current slot.", &|m| {
            m.mcs.load(Ordering::Relaxed) as f64
        });
        gauge(
            "tinytwin_ue_buffer_bits",
            "Offered load waiting in the downstream queue.",
            &|m| m.buffer_bits.load(Ordering::Relaxed) as f64,
        );

        let mut counter = |name: &str, help: &str, get: &dyn Fn(&UeMetrics) -> u64| {
            out.push_str(&format!("# HELP {name} {help}\n# TYPE {name} counter\n"));
            for (id, m) in ues.iter() {
                out.push_str(&format!("{name}{{ue=\"{id}\"}} {}\n", get(m)));
            }
        };
        counter(
            "tinytwin_ue_bits_delivered_total",
            "Bits delivered by successful transport blocks.",
            &|m| m.bits_delivered.load(Ordering::Relaxed),
        );
        counter(
            "tinytwin_ue_drops_total",
            "Failed transport blocks.",
            &|m| m.drops.load(Ordering::Relaxed),
        );

        out.push_str(
            "# HELP tinytwin_slot_compute_seconds Wall-clock compute span per slot.\n\
             # TYPE tinytwin_slot_compute_seconds histogram\n",
        );
        let mut cumulative = 0u64;
        for (i, bound) in SLOT_COMPUTE_BUCKETS.iter().enumerate() {
            cumulative += self.slot_compute.counts[i].load(Ordering::Relaxed);
            out.push_str(&format!(
                "tinytwin_slot_compute_seconds_bucket{{le=\"{bound}\"}} {cumulative}\n"
            ));
        }
        cumulative += self.slot_compute.counts[SLOT_COMPUTE_BUCKETS.len()].load(Ordering::Relaxed);
        out.push_str(&format!(
            "tinytwin_slot_compute_seconds_bucket{{le=\"+Inf\"}} {cumulative}\n"
        ));
        out.push_str(&format!(
            "tinytwin_slot_compute_seconds_sum {}\n",
            self.slot_compute.sum_nanos.load(Ordering::Relaxed) as f64 * 1e-9
        ));
        out.push_str(&format!(
            "tinytwin_slot_compute_seconds_count {}\n",
            self.slot_compute.total.load(Ordering::Relaxed)
        ));
        out
    }
}

/// Handle to a running exposition endpoint.
#[derive(Debug)]
pub struct MetricsServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MetricsServer {
    /// Actual bound address (useful with port 0).
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) {
        self.shutdown_and_join();
    }

    fn shutdown_and_join(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MetricsServer {
    fn drop(&mut self) {
        self.shutdown_and_join();
    }
}

/// Serve `GET /metrics` with the registry's snapshot in the background.
pub fn serve_metrics<A: ToSocketAddrs + std::fmt::Display>(
    registry: Arc<MetricsRegistry>,
    addr: A,
) -> Result<MetricsServer, TelemetryError> {
    let listener = TcpListener::bind(&addr).map_err(|source| TelemetryError::BindFailure {
        addr: addr.to_string(),
        source,
    })?;
    let local = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    let thread = std::thread::Builder::new()
        .name("tinytwin-metrics".into())
        .spawn(move || {
            while !flag.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let _ = handle_scrape(stream, &registry);
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(20));
                    }
                    Err(_) => break,
                }
            }
        })?;
    log::info!("metrics endpoint listening on http://{local}/metrics");
    Ok(MetricsServer {
        addr: local,
        shutdown,
        thread: Some(thread),
    })
}

fn handle_scrape(mut stream: TcpStream, registry: &MetricsRegistry) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_millis(500)))?;
    stream.set_nodelay(true)?;
    let mut buf = [0u8; 4096];
    let mut head = Vec::new();
    loop {
        let n = stream.read(&mut buf)?;
        if n == 0 {
            break;
        }
        head.extend_from_slice(&buf[..n]);
        if head.windows(4).any(|w| w == b"\r\n\r\n") || head.len() > 16 * 1024 {
            break;
        }
    }
    let request = String::from_utf8_lossy(&head);
    let path = request
        .lines()
        .next()
        .and_then(|line| line.split_whitespace().nth(1))
        .unwrap_or("");
    let (status, body) = if path == "/metrics" {
        ("200 OK", registry.render())
    } else {
        ("404 Not Found", "not found\n".to_owned())
    };
    let response = format!(
        "HTTP/1.1 {status}\r\nContent-Type: text/plain; version=0.0.4; charset=utf-8\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}
