//! Minimal link-adaptation abstraction and its observables.
//!
//! The chain per UE per slot is: channel SNR -> MCS (static threshold
//! table) -> transport-block outcome -> throughput / drop / buffer counters.
//! It is deliberately small — a single scalar queue per UE, no HARQ, no
//! scheduler — but reproduces the qualitative closed-loop dynamics: MCS
//! follows SNR, and when SNR falls below what even the lowest MCS can
//! decode, transport blocks fail, throughput collapses and drops surge.
//!
//! The MCS table ships as an editable JSON config (`profiles/mcs_default.json`);
//! [`McsTable::nr_like_default`] is the same table compiled in.

mod metrics;

pub use metrics::{serve_metrics, MetricsRegistry, MetricsServer, UeMetrics, SLOT_COMPUTE_BUCKETS};

use crate::util::hash01;
use serde::{Deserialize, Serialize};

/// Link-telemetry errors.
#[derive(Debug, thiserror::Error)]
pub enum TelemetryError {
    #[error("cannot bind metrics endpoint {addr}: {source}")]
    BindFailure {
        addr: String,
        source: std::io::Error,
    },
    #[error("invalid MCS table: {0}")]
    InvalidTable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("table parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One modulation-and-coding scheme choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsRow {
    /// Lowest SNR (dB) at which this MCS decodes; closed lower bound.
    pub snr_threshold_db: f64,
    pub mcs: u8,
    /// Transport-block size granted per slot at this MCS.
    pub bits_per_slot: u64,
}

/// Ordered SNR -> MCS mapping; thresholds and grants strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsTable {
    pub rows: Vec<McsRow>,
}

impl McsTable {
    pub fn new(rows: Vec<McsRow>) -> Result<Self, TelemetryError> {
        if rows.is_empty() {
            return Err(TelemetryError::InvalidTable("no rows".into()));
        }
        for w in rows.windows(2) {
            if w[0].snr_threshold_db >= w[1].snr_threshold_db {
                return Err(TelemetryError::InvalidTable(
                    "thresholds must be strictly increasing".into(),
                ));
            }
            if w[0].bits_per_slot >= w[1].bits_per_slot {
                return Err(TelemetryError::InvalidTable(
                    "bits_per_slot must be strictly increasing".into(),
                ));
            }
            if w[0].mcs >= w[1].mcs {
                return Err(TelemetryError::InvalidTable(
                    "mcs indices must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self { rows })
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self, TelemetryError> {
        let raw = std::fs::read_to_string(path)?;
        let rows: Vec<McsRow> = serde_json::from_str(&raw)?;
        Self::new(rows)
    }

    /// 28 rows from -4 dB in 1 dB steps with an NR-shaped grant ladder.
    pub fn nr_like_default() -> Self {
        const EFF: [f64; 28] = [
            0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.6953, 1.9141, 2.1602, 2.4063,
            2.5703, 2.7305, 3.0293, 3.3223, 3.6094, 3.9023, 4.2129, 4.5234, 4.8164, 5.1152,
            5.3320, 5.5547, 5.8906, 6.2266, 6.5703, 6.9141, 7.1602, 7.4063,
        ];
        let rows = EFF
            .iter()
            .enumerate()
            .map(|(i, eff)| McsRow {
                snr_threshold_db: -4.0 + i as f64,
                mcs: i as u8,
                bits_per_slot: (eff * 1000.0).round() as u64,
            })
            .collect();
        Self::new(rows).expect("default table is valid")
    }

    pub fn row_for_mcs(&self, mcs: u8) -> Option<&McsRow> {
        self.rows.iter().find(|r| r.mcs == mcs)
    }

    pub fn max_mcs(&self) -> u8 {
        self.rows.last().expect("table is non-empty").mcs
    }
}

/// Highest MCS whose threshold is at or below `snr_db`; the lowest MCS when
/// the SNR is below every threshold.
pub fn select_mcs(snr_db: f64, table: &McsTable) -> u8 {
    let mut chosen = table.rows[0].mcs;
    for row in &table.rows {
        if snr_db >= row.snr_threshold_db {
            chosen = row.mcs;
        } else {
            break;
        }
    }
    chosen
}

/// Transport-block outcome policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TbPolicy {
    /// Success iff `snr >= threshold(mcs) - margin`; no randomness.
    DeterministicCliff,
    /// Failure probability `sigmoid((threshold - snr) / scale)`.
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TbModel {
    pub policy: TbPolicy,
    pub margin_db: f64,
    pub sigmoid_scale_db: f64,
}

impl Default for TbModel {
    fn default() -> Self {
        Self {
            policy: TbPolicy::DeterministicCliff,
            margin_db: 0.0,
            sigmoid_scale_db: 0.5,
        }
    }
}

/// Decide one transport block. Deterministic for a fixed
/// `(seed, slot, ue)` in either policy.
pub fn tb_outcome(
    snr_db: f64,
    mcs: u8,
    table: &McsTable,
    model: &TbModel,
    seed: u64,
    slot: u64,
    ue: u32,
) -> bool {
    let row = table
        .row_for_mcs(mcs)
        .unwrap_or_else(|| panic!("mcs {mcs} is not in the table"));
    match model.policy {
        TbPolicy::DeterministicCliff => snr_db >= row.snr_threshold_db - model.margin_db,
        TbPolicy::Stochastic => {
            let x = (row.snr_threshold_db - snr_db) / model.sigmoid_scale_db;
            let p_fail = 1.0 / (1.0 + (-x).exp());
            hash01(seed, slot, u64::from(ue), 0x7462) >= p_fail
        }
    }
}

/// Per-UE link observables: the current slot's SNR/MCS/outcome plus
/// cumulative counters. All counters are monotone non-decreasing and obey
/// `offered_bits_total == bits_delivered + buffer_bits + lost_bits` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkState {
    pub ue_id: u32,
    pub slot_index: u64,
    pub snr_db: f64,
    pub mcs: u8,
    pub tb_success: bool,
    pub bits_delivered: u64,
    pub drops: u64,
    /// Offered load not yet delivered or forfeited.
    pub buffer_bits: u64,
    pub offered_bits_total: u64,
    /// Bits forfeited by failed transport blocks.
    pub lost_bits: u64,
}

impl LinkState {
    pub fn new(ue_id: u32) -> Self {
        Self {
            ue_id,
            slot_index: 0,
            snr_db: 0.0,
            mcs: 0,
            tb_success: true,
            bits_delivered: 0,
            drops: 0,
            buffer_bits: 0,
            offered_bits_total: 0,
            lost_bits: 0,
        }
    }
}

/// Apply one slot's offered load and transport-block outcome.
///
/// The buffer grows by the offered bits first; a transport block is only
/// spent when data is pending. On success the grant drains the buffer into
/// `bits_delivered`; on failure the grant is forfeited into `lost_bits` and
/// the drop counter ticks.
pub fn update_link(state: &mut LinkState, tb_success: bool, grant_bits: u64, offered_bits: u64) {
    state.offered_bits_total += offered_bits;
    state.buffer_bits += offered_bits;
    if state.buffer_bits == 0 {
        state.tb_success = true;
        return;
    }
    let moved = state.buffer_bits.min(grant_bits);
    if tb_success {
        state.bits_delivered += moved;
    } else {
        state.lost_bits += moved;
        state.drops += 1;
    }
    state.buffer_bits -= moved;
    state.tb_success = tb_success;
}

/// Drives one UE's link loop: SNR in, updated [`LinkState`] out.
#[derive(Debug, Clone)]
pub struct LinkSim {
    pub state: LinkState,
    pub table: McsTable,
    pub model: TbModel,
    pub offered_bits_per_slot: u64,
    pub seed: u64,
}

impl LinkSim {
    pub fn new(ue_id: u32, table: McsTable, offered_bits_per_slot: u64, seed: u64) -> Self {
        Self {
            state: LinkState::new(ue_id),
            table,
            model: TbModel::default(),
            offered_bits_per_slot,
            seed,
        }
    }

    /// Advance one slot under the given channel SNR.
    pub fn step(&mut self, slot: u64, snr_db: f64) -> &LinkState {
        let mcs = select_mcs(snr_db, &self.table);
        let success = tb_outcome(
            snr_db,
            mcs,
            &self.table,
            &self.model,
            self.seed,
            slot,
            self.state.ue_id,
        );
        let grant = self
            .table
            .row_for_mcs(mcs)
            .expect("selected mcs is in the table")
            .bits_per_slot;
        update_link(&mut self.state, success, grant, self.offered_bits_per_slot);
        self.state.slot_index = slot;
        self.state.snr_db = snr_db;
        self.state.mcs = mcs;
        &self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_shape() {
        let t = McsTable::nr_like_default();
        assert_eq!(t.rows.len(), 28);
        assert_eq!(t.rows[0].snr_threshold_db, -4.0);
        assert_eq!(t.rows[27].snr_threshold_db, 23.0);
        assert_eq!(t.max_mcs(), 27);
    }

    #[test]
    fn select_mcs_floor_ceiling_and_boundary() {
        let t = McsTable::nr_like_default();
        assert_eq!(select_mcs(-40.0, &t), 0);
        assert_eq!(select_mcs(500.0, &t), 27);
        // closed lower bound: exactly at a threshold selects that row
        assert_eq!(select_mcs(-4.0, &t), 0);
        assert_eq!(select_mcs(0.0, &t), 4);
        assert_eq!(select_mcs(0.5, &t), 4);
        assert_eq!(select_mcs(1.0, &t), 5);
    }

    #[test]
    fn select_mcs_is_monotone_in_snr() {
        let t = McsTable::nr_like_default();
        let mut prev = 0;
        let mut snr = -10.0;
        while snr < 30.0 {
            let m = select_mcs(snr, &t);
            assert!(m >= prev, "mcs fell from {prev} to {m} at {snr} dB");
            prev = m;
            snr += 0.037;
        }
    }

    #[test]
    fn table_validation_rejects_non_monotone_rows() {
        let rows = vec![
            McsRow { snr_threshold_db: 0.0, mcs: 0, bits_per_slot: 100 },
            McsRow { snr_threshold_db: 0.0, mcs: 1, bits_per_slot: 200 },
        ];
        assert!(McsTable::new(rows).is_err());
        let rows = vec![
            McsRow { snr_threshold_db: 0.0, mcs: 0, bits_per_slot: 200 },
            McsRow { snr_threshold_db: 1.0, mcs: 1, bits_per_slot: 100 },
        ];
        assert!(McsTable::new(rows).is_err());
    }

    #[test]
    fn cliff_outcome_examples() {
        let t = McsTable::nr_like_default();
        let m = TbModel::default();
        // far above threshold succeeds
        assert!(tb_outcome(30.0, 10, &t, &m, 1, 0, 0));
        // 10 dB below threshold fails
        let thr = t.row_for_mcs(10).unwrap().snr_threshold_db;
        assert!(!tb_outcome(thr - 10.0, 10, &t, &m, 1, 0, 0));
        // boundary is a success (closed bound, zero margin)
        assert!(tb_outcome(thr, 10, &t, &m, 1, 0, 0));
        assert!(!tb_outcome(thr - 1e-9, 10, &t, &m, 1, 0, 0));
    }

    #[test]
    fn stochastic_outcome_is_seed_deterministic_and_snr_shaped() {
        let t = McsTable::nr_like_default();
        let m = TbModel {
            policy: TbPolicy::Stochastic,
            ..TbModel::default()
        };
        let thr = t.row_for_mcs(5).unwrap().snr_threshold_db;
        for slot in 0..64 {
            assert_eq!(
                tb_outcome(thr, 5, &t, &m, 9, slot, 2),
                tb_outcome(thr, 5, &t, &m, 9, slot, 2)
            );
        }
        let fail_rate = |snr: f64| -> f64 {
            let fails = (0..4000)
                .filter(|&slot| !tb_outcome(snr, 5, &t, &m, 9, slot, 2))
                .count();
            fails as f64 / 4000.0
        };
        // ~50% at the threshold, ~0 far above, ~1 far below
        assert!((fail_rate(thr) - 0.5).abs() < 0.05);
        assert!(fail_rate(thr + 5.0) < 0.01);
        assert!(fail_rate(thr - 5.0) > 0.99);
    }

    #[test]
    fn zero_offered_load_keeps_counters_static() {
        let mut s = LinkState::new(1);
        for _ in 0..100 {
            update_link(&mut s, false, 1000, 0);
        }
        assert_eq!(s.bits_delivered, 0);
        assert_eq!(s.drops, 0);
        assert_eq!(s.buffer_bits, 0);
        assert_eq!(s.lost_bits, 0);
    }

    #[test]
    fn buffer_drains_every_slot_when_capacity_exceeds_offer() {
        let mut s = LinkState::new(0);
        for _ in 0..50 {
            update_link(&mut s, true, 5000, 3000);
            assert_eq!(s.buffer_bits, 0);
        }
        assert_eq!(s.bits_delivered, 150_000);
    }

    #[test]
    fn counter_conservation_is_exact() {
        let t = McsTable::nr_like_default();
        let mut sim = LinkSim::new(3, t, 2000, 77);
        sim.model.policy = TbPolicy::Stochastic;
        for slot in 0..10_000u64 {
            // sweep through good and bad SNR
            let snr = 15.0 * (slot as f64 / 400.0).sin();
            let s = sim.step(slot, snr);
            assert_eq!(
                s.offered_bits_total,
                s.bits_delivered + s.buffer_bits + s.lost_bits,
                "slot {slot}"
            );
        }
        assert!(sim.state.drops > 0, "sweep should produce failures");
    }

    #[test]
    fn snr_dip_grows_buffer_then_recovery_drains_it() {
        // scalar queue oracle: replay the same offered/served schedule
        let t = McsTable::nr_like_default();
        let mut sim = LinkSim::new(0, t.clone(), 5000, 5);
        let snr_at = |slot: u64| if (2000..3000).contains(&slot) { -20.0 } else { 25.0 };

        let mut oracle_buffer: u64 = 0;
        let mut peak_buffer = 0u64;
        for slot in 0..6000u64 {
            let snr = snr_at(slot);
            let s = *sim.step(slot, snr);

            let mcs = select_mcs(snr, &t);
            let grant = t.row_for_mcs(mcs).unwrap().bits_per_slot;
            let served = if snr >= t.row_for_mcs(mcs).unwrap().snr_threshold_db {
                grant
            } else {
                grant // forfeited on failure, still leaves the queue
            };
            oracle_buffer = (oracle_buffer + 5000).saturating_sub(served);
            assert_eq!(s.buffer_bits, oracle_buffer, "slot {slot}");
            peak_buffer = peak_buffer.max(s.buffer_bits);

            if slot == 1999 {
                assert_eq!(s.buffer_bits, 0, "buffer empty before the dip");
            }
        }
        assert!(peak_buffer > 1_000_000, "dip should back up the buffer");
        assert_eq!(sim.state.buffer_bits, 0, "buffer drains after recovery");
        assert!(sim.state.drops >= 1000, "dip slots all fail");
    }

    #[test]
    fn json_round_trip_of_default_table() {
        let t = McsTable::nr_like_default();
        let json = serde_json::to_string(&t.rows).unwrap();
        let back = McsTable::new(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn default_table_matches_shipped_json() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("profiles/mcs_default.json");
        let shipped = McsTable::from_json_file(&path).unwrap();
        assert_eq!(shipped, McsTable::nr_like_default());
    }
}
