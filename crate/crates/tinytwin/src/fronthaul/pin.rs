//! CPU pinning for low-jitter slot processing.
//!
//! Dedicating cores to the hot workers (two per UE group by default) cuts
//! scheduler migrations and cache contention. On hosts without affinity
//! support pinning degrades to a logged no-op.

use super::FronthaulError;
use std::collections::BTreeMap;

/// Worker -> core assignment for one session.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PinningMap {
    /// Cores for the gNB slot loop and its socket readers.
    pub gnb: Vec<usize>,
    /// Cores per UE worker group.
    pub per_ue: BTreeMap<u32, Vec<usize>>,
}

impl PinningMap {
    /// Default assignment: cores 0-1 for the gNB, then two fresh cores per
    /// UE in ascending id order. `None` when the host is too small for it.
    pub fn two_cores_per_ue(ue_ids: &[u32]) -> Option<Self> {
        let available = available_cores();
        let needed = 2 + 2 * ue_ids.len();
        if available < needed {
            return None;
        }
        let mut per_ue = BTreeMap::new();
        for (i, &ue) in ue_ids.iter().enumerate() {
            per_ue.insert(ue, vec![2 + 2 * i, 3 + 2 * i]);
        }
        Some(Self {
            gnb: vec![0, 1],
            per_ue,
        })
    }

    /// Every core named by the map, for validation.
    pub fn all_cores(&self) -> impl Iterator<Item = usize> + '_ {
        self.gnb
            .iter()
            .copied()
            .chain(self.per_ue.values().flatten().copied())
    }

    pub fn validate(&self) -> Result<(), FronthaulError> {
        let available = available_cores();
        for core in self.all_cores() {
            if core >= available {
                return Err(FronthaulError::InvalidCore { core, available });
            }
        }
        Ok(())
    }
}

/// Logical cores visible to this process.
pub fn available_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Bind the calling thread to the given cores for the session.
///
/// An empty list leaves placement to the scheduler. Invalid core ids are
/// rejected; on non-Linux hosts this warns and does nothing.
pub fn pin_current_thread(cores: &[usize]) -> Result<(), FronthaulError> {
    if cores.is_empty() {
        return Ok(());
    }
    let available = available_cores();
    for &core in cores {
        if core >= available {
            return Err(FronthaulError::InvalidCore { core, available });
        }
    }
    imp::pin(cores)
}

/// Cores the calling thread is currently bound to (best effort).
pub fn current_affinity() -> Option<Vec<usize>> {
    imp::affinity()
}

#[cfg(target_os = "linux")]
mod imp {
    use super::FronthaulError;

    pub fn pin(cores: &[usize]) -> Result<(), FronthaulError> {
        unsafe {
            let mut set: libc::cpu_set_t = std::mem::zeroed();
            libc::CPU_ZERO(&mut set);
            for &core in cores {
                libc::CPU_SET(core, &mut set);
            }
            // pid 0 binds the calling thread
            if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
                return Err(FronthaulError::Io(std::io::Error::last_os_error()));
            }
        }
        Ok(())
    }

    pub fn affinity() -> Option<Vec<usize>> {
        unsafe {
            let mut set: libc::cpu_set_t = std::mem::zeroed();
            if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
                return None;
            }
            Some(
                (0..libc::CPU_SETSIZE as usize)
                    .filter(|&c| libc::CPU_ISSET(c, &set))
                    .collect(),
            )
        }
    }
}

#[cfg(not(target_os = "linux"))]
mod imp {
    use super::FronthaulError;

    pub fn pin(_cores: &[usize]) -> Result<(), FronthaulError> {
        log::warn!("CPU pinning is not supported on this host; leaving scheduler defaults");
        Ok(())
    }

    pub fn affinity() -> Option<Vec<usize>> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_pin_list_is_a_no_op() {
        assert!(pin_current_thread(&[]).is_ok());
    }

    #[test]
    fn out_of_range_core_is_rejected() {
        let available = available_cores();
        match pin_current_thread(&[available + 10]) {
            Err(FronthaulError::InvalidCore { core, .. }) => {
                assert_eq!(core, available + 10);
            }
            other => panic!("expected InvalidCore, got {other:?}"),
        }
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn pinning_is_visible_through_os_introspection() {
        let prior = current_affinity();
        std::thread::spawn(|| {
            pin_current_thread(&[0]).unwrap();
            let cores = current_affinity().expect("affinity readable");
            assert_eq!(cores, vec![0]);
        })
        .join()
        .unwrap();
        // the spawning thread keeps its own affinity
        assert_eq!(current_affinity(), prior);
    }

    #[test]
    fn default_map_needs_two_cores_per_ue() {
        let ids = vec![0, 1, 2];
        match PinningMap::two_cores_per_ue(&ids) {
            Some(map) => {
                assert_eq!(map.gnb, vec![0, 1]);
                assert_eq!(map.per_ue[&0], vec![2, 3]);
                assert_eq!(map.per_ue[&2], vec![6, 7]);
                assert!(available_cores() >= 8);
                map.validate().unwrap();
            }
            None => assert!(available_cores() < 8),
        }
    }
}
