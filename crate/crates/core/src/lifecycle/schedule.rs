use std::collections::BTreeMap;
use std::fmt;

use super::record::KeyKind;
use super::LifecycleError;

pub const DEFAULT_ASM_PERIOD: u64 = 10_000;
pub const DEFAULT_OSM_PERIOD: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub kind: KeyKind,
    pub period: u64,
    pub next_due: u64,
}

/// Cyclic update periods per infrastructure.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateSchedule {
    entries: BTreeMap<String, ScheduleEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Upcoming,
    Overdue,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Upcoming => "UPCOMING",
            Severity::Overdue => "OVERDUE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reminder {
    pub infrastructure_id: String,
    pub due: u64,
    pub severity: Severity,
}

impl UpdateSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an infrastructure whose first update is due one period after
    /// `start`. Rejects any schedule where some ASM period is not strictly
    /// longer than every OSM period.
    pub fn add(
        &mut self,
        infrastructure_id: impl Into<String>,
        kind: KeyKind,
        period: u64,
        start: u64,
    ) -> Result<(), LifecycleError> {
        if period == 0 || kind == KeyKind::Session {
            return Err(LifecycleError::InvalidSchedule(
                "periods are positive and only ASM/OSM infrastructures are scheduled".into(),
            ));
        }
        let entry = ScheduleEntry {
            kind,
            period,
            next_due: start.saturating_add(period),
        };
        let mut next = self.entries.clone();
        next.insert(infrastructure_id.into(), entry);
        let max_osm = next
            .values()
            .filter(|e| e.kind == KeyKind::Osm)
            .map(|e| e.period)
            .max();
        let min_asm = next
            .values()
            .filter(|e| e.kind == KeyKind::Asm)
            .map(|e| e.period)
            .min();
        if let (Some(osm), Some(asm)) = (max_osm, min_asm) {
            if asm <= osm {
                return Err(LifecycleError::InvalidSchedule(format!(
                    "ASM period {asm} must exceed OSM period {osm}"
                )));
            }
        }
        self.entries = next;
        Ok(())
    }

    pub fn get(&self, infrastructure_id: &str) -> Option<&ScheduleEntry> {
        self.entries.get(infrastructure_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &ScheduleEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Records an update at `now`; the next one is due a period later.
    pub fn mark_updated(&mut self, infrastructure_id: &str, now: u64) -> bool {
        match self.entries.get_mut(infrastructure_id) {
            Some(e) => {
                e.next_due = now.saturating_add(e.period);
                true
            }
            None => false,
        }
    }
}

/// Warning horizon: a tenth of the period, at least one tick.
pub fn horizon(period: u64) -> u64 {
    (period / 10).max(1)
}

pub fn tick_reminders(schedule: &UpdateSchedule, now: u64) -> Vec<Reminder> {
    schedule
        .entries
        .iter()
        .filter(|(_, e)| e.next_due.saturating_sub(now) <= horizon(e.period))
        .map(|(id, e)| Reminder {
            infrastructure_id: id.clone(),
            due: e.next_due,
            severity: if now > e.next_due {
                Severity::Overdue
            } else {
                Severity::Upcoming
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule() -> UpdateSchedule {
        let mut s = UpdateSchedule::new();
        s.add("admin", KeyKind::Asm, DEFAULT_ASM_PERIOD, 0).unwrap();
        s.add("net", KeyKind::Osm, DEFAULT_OSM_PERIOD, 0).unwrap();
        s
    }

    #[test]
    fn examples() {
        let s = schedule();
        let r = tick_reminders(&s, 99);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].severity, Severity::Upcoming);
        assert_eq!(tick_reminders(&s, 105)[0].severity, Severity::Overdue);
        assert!(tick_reminders(&s, 10).is_empty());
        assert_eq!(tick_reminders(&s, 100)[0].severity, Severity::Upcoming);
    }

    #[test]
    fn asm_must_outlast_osm() {
        let mut s = schedule();
        assert!(s.add("admin2", KeyKind::Asm, 100, 0).is_err());
        assert!(s.add("net2", KeyKind::Osm, 10_000, 0).is_err());
        assert!(s.get("admin2").is_none());
    }

    #[test]
    fn monotone_in_now() {
        let s = schedule();
        let mut last: Vec<(String, Severity)> = Vec::new();
        for now in 0..12_000 {
            let cur: Vec<_> = tick_reminders(&s, now)
                .into_iter()
                .map(|r| (r.infrastructure_id, r.severity))
                .collect();
            for (id, sev) in &last {
                let now_sev = cur.iter().find(|(i, _)| i == id).map(|(_, s)| *s);
                assert!(
                    now_sev.is_some_and(|s| s >= *sev),
                    "{id} regressed at {now}"
                );
            }
            last = cur;
        }
    }

    #[test]
    fn mark_updated_moves_due() {
        let mut s = schedule();
        assert!(s.mark_updated("net", 105));
        assert!(tick_reminders(&s, 105).is_empty());
        assert!(!s.mark_updated("nope", 1));
    }
}
