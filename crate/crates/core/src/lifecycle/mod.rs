//! Key validity, cyclic update reminders, standby rollover and algorithm
//! updates.

mod record;
mod schedule;

use thiserror::Error;

use crate::container::{ArchiveEntry, EntryType};
use crate::cryptosuite::{AlgorithmSuite, RegistryError, SuiteId, SuiteRegistry};

pub use record::{
    validity_check, KeyKind, KeyRecord, KeyState, KeyStore, Usability, Window, KEYSTORE_MAGIC,
};
pub use schedule::{
    horizon, tick_reminders, Reminder, ScheduleEntry, Severity, UpdateSchedule, DEFAULT_ASM_PERIOD,
    DEFAULT_OSM_PERIOD,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LifecycleError {
    #[error("ASM record {0} needs a validity window")]
    MissingWindow(String),
    #[error("record {0} has an inverted validity window")]
    InvertedWindow(String),
    #[error("record {0} cannot start in state {1}")]
    IllegalInitialState(String, KeyState),
    #[error("record {key_id}: {from} -> {to} is not allowed")]
    IllegalTransition {
        key_id: String,
        from: KeyState,
        to: KeyState,
    },
    #[error("record {0} already exists")]
    DuplicateKey(String),
    #[error("infrastructure {0} already has a standby key")]
    StandbyExists(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("unrecoverable compromise of {0}: no standby key")]
    UnrecoverableCompromise(String),
    #[error("expected exactly one ALGORITHM_UPDATE entry, found {0}")]
    UpdateEntryCount(usize),
    #[error("algorithm update does not parse: {0}")]
    UpdateParse(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RolloverReport {
    pub infrastructure_id: String,
    pub tick: u64,
    pub destroyed: Vec<String>,
    pub promoted: String,
}

impl RolloverReport {
    /// `tick|infra|event|detail` lines.
    pub fn audit_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .destroyed
            .iter()
            .map(|k| format!("{}|{}|KEY_DESTROYED|{k}", self.tick, self.infrastructure_id))
            .collect();
        out.push(format!(
            "{}|{}|KEY_PROMOTED|{}",
            self.tick, self.infrastructure_id, self.promoted
        ));
        out
    }
}

/// Destroys the infrastructure's active keys and promotes its standby.
/// Without a standby nothing changes and the compromise is reported as
/// unrecoverable.
pub fn emergency_rollover(
    store: &mut KeyStore,
    infrastructure_id: &str,
    now: u64,
) -> Result<RolloverReport, LifecycleError> {
    let standby = store
        .standby_for(infrastructure_id)
        .map(|r| r.key_id.clone())
        .ok_or_else(|| LifecycleError::UnrecoverableCompromise(infrastructure_id.to_string()))?;
    let active: Vec<String> = store
        .active_for(infrastructure_id)
        .map(|r| r.key_id.clone())
        .collect();
    for id in &active {
        store
            .get_mut(id)
            .expect("listed above")
            .transition(KeyState::Destroyed)?;
    }
    store
        .get_mut(&standby)
        .expect("listed above")
        .transition(KeyState::Active)?;
    Ok(RolloverReport {
        infrastructure_id: infrastructure_id.to_string(),
        tick: now,
        destroyed: active,
        promoted: standby,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationReport {
    pub suite_id: SuiteId,
    pub previously_active: SuiteId,
}

/// Registers the suite carried by the single ALGORITHM_UPDATE entry and
/// stages it. It becomes active at the next [`key_boundary`].
pub fn apply_algorithm_update(
    registry: &mut SuiteRegistry,
    entries: &[ArchiveEntry],
) -> Result<ActivationReport, LifecycleError> {
    let updates: Vec<&ArchiveEntry> = entries
        .iter()
        .filter(|e| e.entry_type == EntryType::AlgorithmUpdate)
        .collect();
    let [update] = updates.as_slice() else {
        return Err(LifecycleError::UpdateEntryCount(updates.len()));
    };
    let suite = AlgorithmSuite::decode(&update.content)
        .map_err(|e| LifecycleError::UpdateParse(e.to_string()))?;
    suite
        .validate()
        .map_err(|e| LifecycleError::UpdateParse(e.to_string()))?;
    let id = suite.suite_id;
    registry.register(suite)?;
    registry.stage_activation(id)?;
    Ok(ActivationReport {
        suite_id: id,
        previously_active: registry.active_id(),
    })
}

/// A key-update boundary: any staged suite becomes active here.
pub fn key_boundary(registry: &mut SuiteRegistry) -> Option<SuiteId> {
    registry.activate_pending()
}
