//! The slot clock: the gNB is the timing master, UEs are slot-slaved.

use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

/// Monotonic slot pacing anchored at a session epoch.
///
/// Slot `s` nominally starts at `epoch + s * slot_duration`. When the loop
/// falls behind, the next slot starts immediately — indices only ever
/// advance, they are never skipped or replayed.
#[derive(Debug, Clone)]
pub struct SlotClock {
    epoch: Instant,
    epoch_unix_nanos: u64,
    slot_duration: Duration,
}

impl SlotClock {
    /// Start the clock now.
    pub fn start(slot_duration: Duration) -> Self {
        let epoch_unix_nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        Self {
            epoch: Instant::now(),
            epoch_unix_nanos,
            slot_duration,
        }
    }

    pub fn slot_duration(&self) -> Duration {
        self.slot_duration
    }

    pub fn epoch_unix_nanos(&self) -> u64 {
        self.epoch_unix_nanos
    }

    /// Nanoseconds since the session epoch.
    pub fn now_nanos(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    /// Nominal start of a slot.
    pub fn slot_start(&self, slot: u64) -> Instant {
        self.epoch + self.slot_duration * slot as u32
    }

    /// Sleep until the nominal start of `slot`; returns immediately when
    /// the loop is already past it.
    pub fn wait_for_slot(&self, slot: u64) {
        let target = self.slot_start(slot);
        let now = Instant::now();
        if let Some(remaining) = target.checked_duration_since(now) {
            std::thread::sleep(remaining);
        }
    }
}
