//! Declarative scenario files: one document describing a whole run.
//!
//! Scenarios are TOML (JSON also accepted for generated configs):
//!
//! ```toml
//! mode = "optimized"            # or "vanilla"
//! samples_per_slot = 1920
//! slot_duration_ms = 1.0
//! duration_s = 5.0
//! noise_power = 0.0
//! offered_load_bps = 5000000.0
//! seed = 1
//! gnb_addr = "127.0.0.1:5600"
//! sparse_n = 0                  # 0 = full convolution
//! # metrics_addr = "127.0.0.1:9590"
//! # pinning = true              # two cores per UE when the host allows
//! # separate_processes = true   # one OS process per UE
//!
//! [[ue]]
//! id = 0
//! trace = "traces/uma5.cirt"
//!
//! [[ue]]
//! id = 1
//! trace = "traces/periodic.cirt"
//! # pin_cores = [4, 5]
//! ```
//!
//! Validation happens fully before anything launches: unknown modes,
//! duplicate UE ids, or missing trace files abort with exit code 2.

use crate::chan_model::{load_trace, CirTrace};
use crate::fronthaul::{Mode, PinningMap, SessionConfig};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeEntry {
    pub id: u32,
    pub trace: PathBuf,
    #[serde(default)]
    pub pin_cores: Vec<usize>,
}

fn default_spslot() -> u32 {
    1920
}

fn default_slot_ms() -> f64 {
    1.0
}

fn default_duration_s() -> f64 {
    5.0
}

fn default_offered() -> f64 {
    5_000_000.0
}

fn default_seed() -> u64 {
    1
}

fn default_gnb_addr() -> String {
    "127.0.0.1:5600".into()
}

/// A parsed scenario document.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    #[serde(default = "default_spslot")]
    pub samples_per_slot: u32,
    #[serde(default = "default_slot_ms")]
    pub slot_duration_ms: f64,
    #[serde(default = "default_duration_s")]
    pub duration_s: f64,
    #[serde(default)]
    pub noise_power: f64,
    #[serde(default = "default_offered")]
    pub offered_load_bps: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_gnb_addr")]
    pub gnb_addr: String,
    #[serde(default)]
    pub sparse_n: u32,
    #[serde(default)]
    pub metrics_addr: Option<String>,
    #[serde(default)]
    pub pinning: bool,
    #[serde(default)]
    pub separate_processes: bool,
    #[serde(default)]
    pub mcs_table: Option<PathBuf>,
    pub ue: Vec<UeEntry>,
}

/// A scenario with every referenced file loaded and checked.
pub struct LoadedScenario {
    pub scenario: ScenarioConfig,
    pub session: SessionConfig,
    /// Trace paths as resolved, for spawning separate UE processes.
    pub trace_paths: BTreeMap<u32, PathBuf>,
    pub ue_pins: BTreeMap<u32, Vec<usize>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("trace {path} for UE {ue}: {source}")]
    Trace {
        ue: u32,
        path: PathBuf,
        source: crate::chan_model::ChanModelError,
    },
    #[error("MCS table {path}: {source}")]
    McsTable {
        path: PathBuf,
        source: crate::link_telemetry::TelemetryError,
    },
}

impl ScenarioConfig {
    /// Parse a scenario document; the format follows the file extension
    /// (`.json` is JSON, everything else TOML).
    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
            path: path.to_owned(),
            source,
        })?;
        let parse_err = |reason: String| ScenarioError::Parse {
            path: path.to_owned(),
            reason,
        };
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&raw).map_err(|e| parse_err(e.to_string()))
        } else {
            toml::from_str(&raw).map_err(|e| parse_err(e.to_string()))
        }
    }

    pub fn slot_duration(&self) -> Duration {
        Duration::from_secs_f64(self.slot_duration_ms / 1e3)
    }

    pub fn num_slots(&self) -> u64 {
        ((self.duration_s * 1e3 / self.slot_duration_ms).round() as u64).max(1)
    }

    /// Validate and load every referenced file. Trace paths resolve
    /// relative to `base_dir` (normally the scenario file's directory).
    pub fn load(self, base_dir: &Path) -> Result<LoadedScenario, ScenarioError> {
        if self.ue.is_empty() {
            return Err(ScenarioError::Invalid("scenario names no UEs".into()));
        }
        if !(self.slot_duration_ms > 0.0 && self.slot_duration_ms.is_finite()) {
            return Err(ScenarioError::Invalid(format!(
                "slot_duration_ms must be positive, got {}",
                self.slot_duration_ms
            )));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(ScenarioError::Invalid(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for ue in &self.ue {
            if !seen.insert(ue.id) {
                return Err(ScenarioError::Invalid(format!("duplicate UE id {}", ue.id)));
            }
        }

        let mut ue_traces: BTreeMap<u32, Arc<CirTrace>> = BTreeMap::new();
        let mut trace_paths = BTreeMap::new();
        let mut ue_pins = BTreeMap::new();
        for ue in &self.ue {
            let path = if ue.trace.is_absolute() {
                ue.trace.clone()
            } else {
                base_dir.join(&ue.trace)
            };
            let trace = load_trace(&path).map_err(|source| ScenarioError::Trace {
                ue: ue.id,
                path: path.clone(),
                source,
            })?;
            ue_traces.insert(ue.id, Arc::new(trace));
            trace_paths.insert(ue.id, path);
            ue_pins.insert(ue.id, ue.pin_cores.clone());
        }

        let mcs_table = match &self.mcs_table {
            Some(rel) => {
                let path = if rel.is_absolute() {
                    rel.clone()
                } else {
                    base_dir.join(rel)
                };
                crate::link_telemetry::McsTable::from_json_file(&path).map_err(|source| {
                    ScenarioError::McsTable {
                        path: path.clone(),
                        source,
                    }
                })?
            }
            None => crate::link_telemetry::McsTable::nr_like_default(),
        };

        let pinning = if self.pinning {
            let explicit: BTreeMap<u32, Vec<usize>> = ue_pins
                .iter()
                .filter(|(_, v)| !v.is_empty())
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            if explicit.len() == ue_pins.len() {
                Some(PinningMap {
                    gnb: vec![0, 1],
                    per_ue: explicit,
                })
            } else {
                let ids: Vec<u32> = ue_traces.keys().copied().collect();
                let map = PinningMap::two_cores_per_ue(&ids);
                if map.is_none() {
                    log::warn!(
                        "pinning requested but the host is too small for two cores per UE; \
                         running unpinned"
                    );
                }
                map
            }
        } else {
            None
        };

        let session = SessionConfig {
            mode: self.mode,
            samples_per_slot: self.samples_per_slot,
            slot_duration: self.slot_duration(),
            sparse_n: self.sparse_n,
            ue_traces,
            noise_power: self.noise_power,
            signal_power: 1.0,
            session_seed: self.seed,
            num_slots: self.num_slots(),
            offered_load_bps: self.offered_load_bps,
            mcs_table,
            pinning,
            ..SessionConfig::default()
        };
        session
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(LoadedScenario {
            ue_pins,
            trace_paths,
            session,
            scenario: self,
        })
    }
}
