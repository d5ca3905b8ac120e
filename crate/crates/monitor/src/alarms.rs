//! Recent alarms and their acknowledgment state.

use std::collections::VecDeque;

use serde::Serialize;

use crate::messages::AlarmEvent;

pub const DEFAULT_CAPACITY: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlarmRecord {
    #[serde(flatten)]
    pub event: AlarmEvent,
    pub acknowledged: bool,
    pub acknowledged_at: Option<String>,
}

/// Keeps the most recent `capacity` alarms; older ones are forgotten and
/// can no longer be acknowledged.
#[derive(Debug, Clone)]
pub struct AlarmRegistry {
    capacity: usize,
    entries: VecDeque<AlarmRecord>,
}

impl AlarmRegistry {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: VecDeque::new(),
        }
    }

    pub fn push(&mut self, event: AlarmEvent) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(AlarmRecord {
            event,
            acknowledged: false,
            acknowledged_at: None,
        });
    }

    /// Marks an alarm acknowledged. Acknowledging twice keeps the first
    /// timestamp. `None` for an unknown id.
    pub fn ack(&mut self, id: u64, now: &str) -> Option<AlarmRecord> {
        let rec = self.entries.iter_mut().find(|r| r.event.id == id)?;
        if !rec.acknowledged {
            rec.acknowledged = true;
            rec.acknowledged_at = Some(now.to_owned());
        }
        Some(rec.clone())
    }

    /// Newest first.
    pub fn list(&self) -> Vec<AlarmRecord> {
        self.entries.iter().rev().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
