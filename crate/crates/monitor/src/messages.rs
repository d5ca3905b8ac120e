//! JSON messages pushed to stream subscribers.

use serde::{Deserialize, Serialize};

use crate::retrain::JobState;

/// One scored row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub ts: String,
    pub seq: u64,
    pub channels: [f64; 7],
    pub score: f64,
    pub anomaly: bool,
    pub model_id: String,
}

/// A debounced alarm: `streak` consecutive rows scored above `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub id: u64,
    pub ts: String,
    pub seq: u64,
    pub score: f64,
    pub threshold: f64,
    pub streak: u32,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainUpdate {
    pub job_id: u64,
    pub state: JobState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamMessage {
    Reading(Reading),
    Alarm(AlarmEvent),
    Retrain(RetrainUpdate),
}

impl StreamMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stream messages serialize")
    }

    /// The message followed by `\n`.
    pub fn to_line(&self) -> String {
        let mut s = self.to_json();
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_shapes() {
        let r = StreamMessage::Reading(Reading {
            ts: "2025-01-01T00:00:00.000Z".into(),
            seq: 3,
            channels: [7.0, 25.0, 1500.0, 22.0, 45.0, 450.0, 300.0],
            score: 0.01,
            anomaly: false,
            model_id: "ab".into(),
        });
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["type"], "reading");
        assert_eq!(v["channels"].as_array().unwrap().len(), 7);
        assert_eq!(v["anomaly"], false);

        let u = StreamMessage::Retrain(RetrainUpdate {
            job_id: 1,
            state: JobState::Tuning,
        });
        assert_eq!(u.to_json(), r#"{"type":"retrain","job_id":1,"state":"tuning"}"#);
        assert!(u.to_line().ends_with("}\n"));

        let a = StreamMessage::Alarm(AlarmEvent {
            id: 4,
            ts: "t".into(),
            seq: 9,
            score: 0.5,
            threshold: 0.1,
            streak: 2,
            model_id: "ab".into(),
        });
        let back: StreamMessage = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }
}
