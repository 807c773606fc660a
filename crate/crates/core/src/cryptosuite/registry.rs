use std::collections::BTreeMap;

use thiserror::Error;

use super::suite::{AlgorithmSuite, SuiteId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("{0} is already registered with different parameters")]
    Conflict(SuiteId),
    #[error("{0} is not registered")]
    NotFound(SuiteId),
}

/// Registered suites plus the one currently used for new key material.
///
/// Entries are only ever added; a suite's parameters never change once
/// registered. A suite may be staged for activation and switched in later by
/// [`activate_pending`](Self::activate_pending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteRegistry {
    suites: BTreeMap<SuiteId, AlgorithmSuite>,
    active_id: SuiteId,
    pending: Option<SuiteId>,
}

impl SuiteRegistry {
    pub fn new(initial: AlgorithmSuite) -> Self {
        let active_id = initial.suite_id;
        let mut suites = BTreeMap::new();
        suites.insert(active_id, initial);
        SuiteRegistry {
            suites,
            active_id,
            pending: None,
        }
    }

    /// Adds `suite`. Re-registering an identical suite is a no-op.
    pub fn register(&mut self, suite: AlgorithmSuite) -> Result<(), RegistryError> {
        match self.suites.get(&suite.suite_id) {
            Some(existing) if *existing == suite => Ok(()),
            Some(_) => Err(RegistryError::Conflict(suite.suite_id)),
            None => {
                self.suites.insert(suite.suite_id, suite);
                Ok(())
            }
        }
    }

    pub fn lookup(&self, id: SuiteId) -> Result<&AlgorithmSuite, RegistryError> {
        self.suites.get(&id).ok_or(RegistryError::NotFound(id))
    }

    pub fn active(&self) -> &AlgorithmSuite {
        &self.suites[&self.active_id]
    }

    pub fn active_id(&self) -> SuiteId {
        self.active_id
    }

    pub fn pending(&self) -> Option<SuiteId> {
        self.pending
    }

    pub fn ids(&self) -> impl Iterator<Item = SuiteId> + '_ {
        self.suites.keys().copied()
    }

    pub fn stage_activation(&mut self, id: SuiteId) -> Result<(), RegistryError> {
        self.lookup(id)?;
        self.pending = Some(id);
        Ok(())
    }

    /// Switches to the staged suite, if any. Returns the newly active id.
    pub fn activate_pending(&mut self) -> Option<SuiteId> {
        let id = self.pending.take()?;
        self.active_id = id;
        Some(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cryptosuite::suite::{generate_suite_with, toy_suite, SuiteOptions};

    #[test]
    fn register_lookup_conflict() {
        let toy = toy_suite();
        let mut reg = SuiteRegistry::new(toy.clone());
        assert_eq!(reg.lookup(SuiteId(1)).unwrap(), &toy);
        reg.register(toy.clone()).unwrap();

        let other = generate_suite_with(&SuiteOptions::new(32, [1; 32]))
            .unwrap()
            .0;
        assert_eq!(other.suite_id, SuiteId(1));
        assert_eq!(
            reg.register(other),
            Err(RegistryError::Conflict(SuiteId(1)))
        );
        assert_eq!(
            reg.lookup(SuiteId(9)),
            Err(RegistryError::NotFound(SuiteId(9)))
        );
        assert_eq!(reg.lookup(SuiteId(1)).unwrap(), &toy);
    }

    #[test]
    fn staged_activation() {
        let mut reg = SuiteRegistry::new(toy_suite());
        let two = generate_suite_with(&SuiteOptions::new(32, [2; 32]).suite_id(2))
            .unwrap()
            .0;
        reg.register(two).unwrap();
        reg.stage_activation(SuiteId(2)).unwrap();
        assert_eq!(reg.active_id(), SuiteId(1));
        assert_eq!(reg.activate_pending(), Some(SuiteId(2)));
        assert_eq!(reg.active_id(), SuiteId(2));
        assert_eq!(reg.activate_pending(), None);
        assert!(reg.stage_activation(SuiteId(7)).is_err());
    }
}
