//! Per-row scoring and the consecutive-hit alarm rule.

use std::sync::Arc;
use std::time::Duration;

use ocae_core::{DetectorBundle, SensorFrame, Verdict};
use serde::Serialize;

use crate::messages::{AlarmEvent, Reading};

pub const DEFAULT_ALARM_N: u32 = 2;
pub const DEFAULT_INTERVAL: Duration = Duration::from_secs(2);

/// Consecutive-anomaly counter.
///
/// Fires once when the streak reaches `alarm_n`, stays quiet while the
/// streak keeps growing, and re-arms when a normal verdict resets it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Debouncer {
    pub alarm_n: u32,
    pub streak: u32,
}

impl Debouncer {
    pub fn new(alarm_n: u32) -> Self {
        assert!(alarm_n >= 1, "alarm_n must be at least 1");
        Self { alarm_n, streak: 0 }
    }

    /// Feeds one verdict; returns true when an alarm fires.
    pub fn observe(&mut self, anomaly: bool) -> bool {
        if anomaly {
            self.streak = self.streak.saturating_add(1);
            self.streak == self.alarm_n
        } else {
            self.streak = 0;
            false
        }
    }
}

/// Reference count for the rule above: runs of at least `alarm_n`
/// consecutive anomalies.
pub fn count_alarm_runs(verdicts: &[bool], alarm_n: u32) -> usize {
    verdicts
        .split(|a| !a)
        .filter(|run| run.len() >= alarm_n as usize)
        .count()
}

#[derive(Debug, Clone)]
pub struct MonitorState {
    pub last_row: u64,
    pub debounce: Debouncer,
    pub interval: Duration,
    pub bundle: Arc<DetectorBundle>,
    pub rows_scored: u64,
    pub rows_skipped: u64,
    pub alarms_fired: u64,
}

/// Result of scoring one frame. `verdict` is `None` for a skipped frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub verdict: Option<Verdict>,
    pub reading: Option<Reading>,
    pub alarm: Option<AlarmEvent>,
}

impl MonitorState {
    pub fn new(bundle: Arc<DetectorBundle>, alarm_n: u32, interval: Duration) -> Self {
        Self {
            last_row: 0,
            debounce: Debouncer::new(alarm_n),
            interval,
            bundle,
            rows_scored: 0,
            rows_skipped: 0,
            alarms_fired: 0,
        }
    }

    pub fn streak(&self) -> u32 {
        self.debounce.streak
    }

    /// Scores one frame and applies the alarm rule. A frame that cannot be
    /// scored is skipped and leaves the streak as it was.
    pub fn step(&mut self, frame: &SensorFrame) -> Step {
        let verdict = match self.bundle.verdict(frame) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("row seq {} skipped: {e}", frame.seq);
                self.rows_skipped += 1;
                return Step {
                    verdict: None,
                    reading: None,
                    alarm: None,
                };
            }
        };
        self.rows_scored += 1;
        let fired = self.debounce.observe(verdict.is_anomaly);
        let model_id = &self.bundle.model_id;
        let alarm = fired.then(|| {
            self.alarms_fired += 1;
            AlarmEvent {
                id: self.alarms_fired,
                ts: frame.timestamp.clone(),
                seq: frame.seq,
                score: verdict.score,
                threshold: self.bundle.threshold.value,
                streak: self.debounce.streak,
                model_id: model_id.clone(),
            }
        });
        let reading = Reading {
            ts: frame.timestamp.clone(),
            seq: frame.seq,
            channels: frame.channels,
            score: verdict.score,
            anomaly: verdict.is_anomaly,
            model_id: model_id.clone(),
        };
        Step {
            verdict: Some(verdict),
            reading: Some(reading),
            alarm,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            model_id: self.bundle.model_id.clone(),
            threshold: self.bundle.threshold.value,
            last_row: self.last_row,
            streak: self.debounce.streak,
            alarm_n: self.debounce.alarm_n,
            interval_s: self.interval.as_secs_f64(),
            rows_scored: self.rows_scored,
            rows_skipped: self.rows_skipped,
            alarms_fired: self.alarms_fired,
        }
    }
}

/// The state reported by `GET /state` and written on shutdown.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Snapshot {
    pub model_id: String,
    pub threshold: f64,
    pub last_row: u64,
    pub streak: u32,
    pub alarm_n: u32,
    pub interval_s: f64,
    pub rows_scored: u64,
    pub rows_skipped: u64,
    pub alarms_fired: u64,
}
